//! Monte Carlo ensembles over full eigenvalue solves: how often the first
//! eigenmode sits on the boundary, in a corner, or carries several peaks.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::landscape::{extend_subregion, landscape_of, valley_partition};
use crate::operator::{assemble, Boundary, BoundaryCondition, DiscreteOperator};
use crate::partition::SubregionPartition;
use crate::potential::{sample_potential, zero_components, DistributionSpec, GridSpec, PotentialField};
use crate::rng;
use crate::solver::{cluster_envelope, smallest_eigenpairs, EigenPair, SolverOptions};

/// Amplitude above which a mode counts as present at a site.
pub const LOCALIZATION_THRESHOLD: f64 = 0.5;

/// Largest tolerated fraction of failed trials.
pub const MAX_FAILURE_RATE: f64 = 0.01;

/// Eigenpairs computed per trial for the multimodal predicate, so that a
/// near-degenerate cluster around the first eigenvalue is captured.
const MULTIMODAL_PAIRS: usize = 4;

const LANDSCAPE_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PredicateKind {
    Boundary,
    Corner,
    Multimodal,
}

impl PredicateKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Boundary => "boundary",
            Self::Corner => "corner",
            Self::Multimodal => "multimodal",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "boundary" => Ok(Self::Boundary),
            "corner" => Ok(Self::Corner),
            "multimodal" => Ok(Self::Multimodal),
            other => Err(Error::Parameter(format!("unknown predicate '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub grid: GridSpec,
    pub dist: DistributionSpec,
    pub k: f64,
    pub bc: BoundaryCondition,
    pub n_trials: usize,
    pub seed: u64,
    pub predicate: PredicateKind,
    /// 1-based index of the eigenpair tested.
    pub eigen_index: usize,
    pub threshold: f64,
}

impl ExperimentSpec {
    pub fn new(grid: GridSpec, dist: DistributionSpec, k: f64, bc: BoundaryCondition, n_trials: usize, seed: u64, predicate: PredicateKind) -> Self {
        Self {
            grid,
            dist,
            k,
            bc,
            n_trials,
            seed,
            predicate,
            eigen_index: 1,
            threshold: LOCALIZATION_THRESHOLD,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.dist.validate()?;
        self.bc.validate()?;
        if self.n_trials == 0 {
            return Err(Error::Parameter("an experiment needs at least one trial".into()));
        }
        if self.eigen_index == 0 {
            return Err(Error::Parameter("eigen_index is 1-based".into()));
        }
        if !(self.k >= 0.0 && self.k.is_finite()) {
            return Err(Error::Parameter(format!("K must be finite and nonnegative, got {}", self.k)));
        }
        if self.predicate == PredicateKind::Corner && self.grid.dim != 2 {
            return Err(Error::Unsupported("the corner predicate needs a 2D grid".into()));
        }
        Ok(())
    }

    /// Canonical one-line description, also the input of `hash`.
    pub fn describe(&self) -> String {
        format!(
            "dim={} N={} r={} dist={} K={} bc={} trials={} seed={} predicate={} index={} threshold={}",
            self.grid.dim,
            self.grid.cells_per_side,
            self.grid.nodes_per_cell,
            self.dist,
            self.k,
            self.bc.name(),
            self.n_trials,
            self.seed,
            self.predicate.name(),
            self.eigen_index,
            self.threshold
        )
    }

    /// 64-bit FNV-1a hash of `describe()`, as hex.
    pub fn hash(&self) -> String {
        let h = self
            .describe()
            .bytes()
            .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3));
        format!("{h:016x}")
    }
}

/// `max{|u|}` over the domain boundary exceeds `threshold` (strictly).
pub fn is_boundary_localized(u: &[f64], grid: &GridSpec, threshold: f64) -> bool {
    let [nx, ny] = grid.node_shape();
    let on_boundary = |i: usize| {
        let (ix, iy) = (i % nx, i / nx);
        ix == 0 || ix + 1 == nx || (grid.dim == 2 && (iy == 0 || iy + 1 == ny))
    };
    (0..nx * ny).filter(|&i| on_boundary(i)).any(|i| u[i].abs() > threshold)
}

/// `max{|u|}` over the four corners exceeds `threshold` (strictly).
pub fn is_corner_localized(u: &[f64], grid: &GridSpec, threshold: f64) -> Result<bool> {
    if grid.dim != 2 {
        return Err(Error::Unsupported("corners exist only in 2D".into()));
    }
    let n = grid.nodes_per_axis();
    Ok([0, n - 1, n * (n - 1), n * n - 1].iter().any(|&i| u[i].abs() > threshold))
}

/// At least two regions of `partition` contain a site where `|u|` exceeds
/// `threshold`.
pub fn is_multimodal(u: &[f64], partition: &SubregionPartition, threshold: f64) -> Result<bool> {
    if partition.is_empty() {
        return Err(Error::Usage("multimodality needs a nonempty partition".into()));
    }
    let mut seen = vec![false; partition.len()];
    for (i, v) in u.iter().enumerate() {
        if v.abs() > threshold {
            if let Some(r) = partition.label(i) {
                seen[r] = true;
            }
        }
    }
    Ok(seen.iter().filter(|&&s| s).count() >= 2)
}

/// Wilson score interval at normal quantile `z`.
pub fn wilson_interval(hits: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = hits as f64 / n;
    let z2 = z * z;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = z / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// 97.5% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbabilityEstimate {
    pub p_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// Trials that completed.
    pub n_trials: usize,
    pub n_hits: usize,
    pub failures: usize,
}

impl ProbabilityEstimate {
    pub fn from_counts(hits: usize, completed: usize, failures: usize) -> Self {
        let (ci_lo, ci_hi) = wilson_interval(hits, completed, Z95);
        Self {
            p_hat: if completed == 0 { 0.0 } else { hits as f64 / completed as f64 },
            ci_lo,
            ci_hi,
            n_trials: completed,
            n_hits: hits,
            failures,
        }
    }

    pub fn contains(&self, p: f64) -> bool {
        (self.ci_lo..=self.ci_hi).contains(&p)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub lambda1: Option<f64>,
    pub hit: bool,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentResult {
    pub spec: ExperimentSpec,
    pub records: Vec<TrialRecord>,
    pub estimate: ProbabilityEstimate,
}

/// Predicate of one potential sample.
pub fn evaluate_field(field: &PotentialField, spec: &ExperimentSpec) -> Result<(f64, bool)> {
    let op = assemble(field, spec.k, spec.bc)?;
    evaluate_operator(&op, spec)
}

fn evaluate_operator(op: &DiscreteOperator, spec: &ExperimentSpec) -> Result<(f64, bool)> {
    let idx = spec.eigen_index - 1;
    let wanted = match spec.predicate {
        PredicateKind::Multimodal => (idx + MULTIMODAL_PAIRS).min(op.n_active()),
        _ => idx + 1,
    };
    let pairs = smallest_eigenpairs(op, wanted, SolverOptions::default())?;
    let pair: &EigenPair = &pairs[idx];
    let hit = match spec.predicate {
        PredicateKind::Boundary => is_boundary_localized(&pair.u, &spec.grid, spec.threshold),
        PredicateKind::Corner => is_corner_localized(&pair.u, &spec.grid, spec.threshold)?,
        PredicateKind::Multimodal => {
            let envelope = cluster_envelope(&pairs, idx);
            let partition = valley_partition(&landscape_of(op, LANDSCAPE_TOL)?)?;
            is_multimodal(&envelope, &partition, spec.threshold)?
        }
    };
    Ok((pairs[0].lambda, hit))
}

/// Runs every trial of `spec`; trial `i` uses potential seed `seed ^ i`.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    let records: Vec<TrialRecord> = (0..spec.n_trials)
        .into_par_iter()
        .map(|i| {
            let seed = rng::trial_seed(spec.seed, i as u64);
            let outcome = sample_potential(spec.grid, spec.dist, seed).and_then(|f| evaluate_field(&f, spec));
            match outcome {
                Ok((lambda, hit)) => TrialRecord {
                    trial: i,
                    seed,
                    lambda1: Some(lambda),
                    hit,
                    error: None,
                },
                Err(e) => TrialRecord {
                    trial: i,
                    seed,
                    lambda1: None,
                    hit: false,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    let failures = records.iter().filter(|r| r.error.is_some()).count();
    if failures as f64 > MAX_FAILURE_RATE * spec.n_trials as f64 {
        let first = records.iter().find_map(|r| r.error.clone()).unwrap_or_default();
        return Err(Error::ExperimentAborted {
            failures,
            trials: spec.n_trials,
            detail: first,
        });
    }
    let hits = records.iter().filter(|r| r.hit).count();
    let estimate = ProbabilityEstimate::from_counts(hits, spec.n_trials - failures, failures);
    Ok(ExperimentResult {
        spec: *spec,
        records,
        estimate,
    })
}

pub fn estimate_probability(spec: &ExperimentSpec) -> Result<ProbabilityEstimate> {
    run_experiment(spec).map(|r| r.estimate)
}

/// Whether the longest extended zero component of a 1D lattice touches a
/// reflecting end and is strictly longer than every interior one. This
/// is the lattice counterpart of the run-length boundary event.
pub fn longest_extended_zero_run_on_boundary(field: &PotentialField, boundary: Boundary) -> Result<bool> {
    if field.dim() != 1 {
        return Err(Error::Unsupported("run statistics are one-dimensional".into()));
    }
    let comps = zero_components(field)?;
    let (mut best_boundary, mut best_interior) = (0.0f64, 0.0f64);
    for r in &comps.regions {
        let ext = extend_subregion(r, &comps, boundary);
        if ext.factor > 1 {
            best_boundary = best_boundary.max(ext.measure);
        } else {
            best_interior = best_interior.max(ext.measure);
        }
    }
    // measures are multiples of the cell width; compare with a margin
    let cell = 1.0 / field.n() as f64;
    Ok(best_boundary > best_interior + 0.5 * cell)
}

/// Frequency of `longest_extended_zero_run_on_boundary` over the same
/// potentials `run_experiment(spec)` would draw.
pub fn lattice_boundary_frequency(spec: &ExperimentSpec) -> Result<ProbabilityEstimate> {
    spec.validate()?;
    let boundary = Boundary::from(BoundaryCondition::Neumann);
    let hits: Vec<bool> = (0..spec.n_trials)
        .into_par_iter()
        .map(|i| {
            let f = sample_potential(spec.grid, spec.dist, rng::trial_seed(spec.seed, i as u64))?;
            longest_extended_zero_run_on_boundary(&f, boundary)
        })
        .collect::<Result<_>>()?;
    Ok(ProbabilityEstimate::from_counts(hits.iter().filter(|&&h| h).count(), spec.n_trials, 0))
}

/// Mean of every potential in the distribution study.
pub const STUDY_MEAN: f64 = 0.5;

/// Distribution family with mean `STUDY_MEAN` and standard deviation
/// `std`. The two-valued family stands in for Bernoulli (it is Bernoulli
/// with p = 1/2 at `std = mean`). `None` when the family cannot reach that
/// standard deviation with nonnegative values.
pub fn study_distribution(family: &str, std: f64) -> Result<Option<DistributionSpec>> {
    let mean = STUDY_MEAN;
    let d = match family {
        "bernoulli" => DistributionSpec::TwoPoint { mean, std },
        "normal" => DistributionSpec::Normal { mean, std },
        "gamma" => DistributionSpec::Gamma { mean, std },
        "uniform" => match DistributionSpec::uniform_from_moments(mean, std) {
            Ok(d) => d,
            Err(_) => return Ok(None),
        },
        other => return Err(Error::Parameter(format!("unknown distribution family '{other}'"))),
    };
    d.validate()?;
    Ok(Some(d))
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudyRow {
    pub dim: usize,
    pub family: String,
    pub std: f64,
    pub h: f64,
    pub p_b: ProbabilityEstimate,
    /// Corner probability (2D only).
    pub p_c: Option<ProbabilityEstimate>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudyPlan {
    pub families: Vec<String>,
    pub stds: Vec<f64>,
    pub hs: Vec<f64>,
    pub dims: Vec<usize>,
    pub k: f64,
    pub n_trials: usize,
    pub seed: u64,
}

impl StudyPlan {
    /// Families, deviations `μ, μ/√3, μ/3` and `K = 10⁴` of the reference
    /// study.
    pub fn reference(hs: Vec<f64>, dims: Vec<usize>, n_trials: usize, seed: u64) -> Self {
        Self {
            families: ["bernoulli", "normal", "gamma", "uniform"].map(String::from).to_vec(),
            stds: vec![STUDY_MEAN, STUDY_MEAN / 3f64.sqrt(), STUDY_MEAN / 3.0],
            hs,
            dims,
            k: 1e4,
            n_trials,
            seed,
        }
    }
}

/// Lattice size of the study: `N = 50` in 1D and `15` in 2D.
pub fn study_cells(dim: usize) -> usize {
    if dim == 1 {
        50
    } else {
        15
    }
}

/// Boundary (and corner) probabilities over every family, deviation, `h`
/// and dimension of `plan`. Combinations a family cannot realize are
/// skipped. All rows sharing a dimension draw their randomness from the
/// same seeds.
pub fn distribution_study(plan: &StudyPlan) -> Result<Vec<StudyRow>> {
    let mut rows = Vec::new();
    for &dim in &plan.dims {
        let grid = GridSpec::with_default_resolution(dim, study_cells(dim))?;
        for family in &plan.families {
            for &std in &plan.stds {
                let Some(dist) = study_distribution(family, std)? else {
                    continue;
                };
                for &h in &plan.hs {
                    let bc = BoundaryCondition::Robin { h };
                    let spec = ExperimentSpec::new(grid, dist, plan.k, bc, plan.n_trials, plan.seed, PredicateKind::Boundary);
                    let (p_b, p_c) = boundary_and_corner(&spec)?;
                    rows.push(StudyRow {
                        dim,
                        family: family.clone(),
                        std,
                        h,
                        p_b,
                        p_c,
                    });
                }
            }
        }
    }
    Ok(rows)
}

/// Boundary and (in 2D) corner frequencies from one eigensolve per trial.
fn boundary_and_corner(spec: &ExperimentSpec) -> Result<(ProbabilityEstimate, Option<ProbabilityEstimate>)> {
    spec.validate()?;
    let two_d = spec.grid.dim == 2;
    let outcomes: Vec<Result<(bool, bool)>> = (0..spec.n_trials)
        .into_par_iter()
        .map(|i| {
            let f = sample_potential(spec.grid, spec.dist, rng::trial_seed(spec.seed, i as u64))?;
            let op = assemble(&f, spec.k, spec.bc)?;
            let pair = smallest_eigenpairs(&op, 1, SolverOptions::default())?.remove(0);
            let b = is_boundary_localized(&pair.u, &spec.grid, spec.threshold);
            let c = two_d && is_corner_localized(&pair.u, &spec.grid, spec.threshold)?;
            Ok((b, c))
        })
        .collect();
    let failures = outcomes.iter().filter(|o| o.is_err()).count();
    if failures as f64 > MAX_FAILURE_RATE * spec.n_trials as f64 {
        let detail = outcomes.iter().find_map(|o| o.as_ref().err().map(|e| e.to_string())).unwrap_or_default();
        return Err(Error::ExperimentAborted {
            failures,
            trials: spec.n_trials,
            detail,
        });
    }
    let ok: Vec<(bool, bool)> = outcomes.into_iter().flatten().collect();
    let b = ProbabilityEstimate::from_counts(ok.iter().filter(|o| o.0).count(), ok.len(), failures);
    let c = two_d.then(|| ProbabilityEstimate::from_counts(ok.iter().filter(|o| o.1).count(), ok.len(), failures));
    Ok((b, c))
}

/// Per-trial CSV: `trial, seed, lambda1, predicate, failure`.
pub fn write_trials_csv<W: Write>(out: W, result: &ExperimentResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["trial", "seed", "lambda1", "predicate", "failure"])?;
    for r in &result.records {
        w.write_record([
            r.trial.to_string(),
            r.seed.to_string(),
            r.lambda1.map(|l| l.to_string()).unwrap_or_default(),
            (r.hit as u8).to_string(),
            (r.error.is_some() as u8).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Summary CSV: `spec_hash, p_hat, ci_lo, ci_hi, hits, trials, failures`.
pub fn write_summary_csv<W: Write>(out: W, result: &ExperimentResult) -> Result<()> {
    let e = &result.estimate;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["spec_hash", "p_hat", "ci_lo", "ci_hi", "hits", "trials", "failures"])?;
    w.write_record([
        result.spec.hash(),
        e.p_hat.to_string(),
        e.ci_lo.to_string(),
        e.ci_hi.to_string(),
        e.n_hits.to_string(),
        e.n_trials.to_string(),
        e.failures.to_string(),
    ])?;
    w.flush()?;
    Ok(())
}

/// CSV of a distribution study.
pub fn write_study_csv<W: Write>(out: W, rows: &[StudyRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["dim", "dist", "std", "h", "p_b", "p_b_lo", "p_b_hi", "p_c", "p_c_lo", "p_c_hi"])?;
    for r in rows {
        let mut fields = vec![
            r.dim.to_string(),
            r.family.clone(),
            r.std.to_string(),
            r.h.to_string(),
            r.p_b.p_hat.to_string(),
            r.p_b.ci_lo.to_string(),
            r.p_b.ci_hi.to_string(),
        ];
        match r.p_c {
            Some(c) => fields.extend([c.p_hat.to_string(), c.ci_lo.to_string(), c.ci_hi.to_string()]),
            None => fields.extend([String::new(), String::new(), String::new()]),
        }
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}

/// Human-readable one-line summary of an estimate.
pub fn format_estimate(e: &ProbabilityEstimate) -> String {
    format!(
        "{:.4} [{:.4}, {:.4}] ({} / {}, {} failed)",
        e.p_hat, e.ci_lo, e.ci_hi, e.n_hits, e.n_trials, e.failures
    )
}
