//! Run-length model of a 1D Bernoulli lattice.
//!
//! With `P(V = 1) = p` and `q = 1 - p`, the zero runs `X_1, ..., X_M` are
//! taken as independent geometric variables, `P(X = n) = q^{n-1} p`, with
//! `M = round(N p q)` runs. A zero run touching a reflecting end of the
//! interval counts double (its mirror image). The closed forms below give
//! the probability that the longest extended run touches the boundary
//! (`P_b`) and that the longest run is not unique under Dirichlet (`P_D`)
//! and Neumann (`P_N`) conditions.

use rand::Rng;
use rand_distr::{Distribution, Geometric};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng;

/// Series terms beyond `n_max` have `q^{n_max} < SERIES_EPS`.
pub const SERIES_EPS: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MRounding {
    Nearest,
    Floor,
    Ceil,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunModel {
    pub p: f64,
    pub q: f64,
    pub n: usize,
    pub m: usize,
}

impl RunModel {
    /// `M = round(N p q)`, ties to even.
    pub fn new(p: f64, n: usize) -> Result<Self> {
        Self::with_rounding(p, n, MRounding::Nearest)
    }

    pub fn with_rounding(p: f64, n: usize, rounding: MRounding) -> Result<Self> {
        check_p(p)?;
        let npq = n as f64 * p * (1.0 - p);
        let m = match rounding {
            MRounding::Nearest => npq.round_ties_even(),
            MRounding::Floor => npq.floor(),
            MRounding::Ceil => npq.ceil(),
        } as usize;
        Self::with_m(p, m).map(|mut model| {
            model.n = n;
            model
        })
    }

    /// Model with an explicit number of runs.
    pub fn with_m(p: f64, m: usize) -> Result<Self> {
        check_p(p)?;
        if m == 0 {
            return Err(Error::Parameter("the run model needs M >= 1".into()));
        }
        Ok(Self { p, q: 1.0 - p, n: 0, m })
    }

    /// Truncation index with `q^{n_max} < SERIES_EPS`.
    pub fn n_max(&self) -> usize {
        (SERIES_EPS.ln() / self.q.ln()).ceil() as usize + 1
    }

    /// Bound on the neglected tail of each geometric-weighted series.
    pub fn tail_bound(&self) -> f64 {
        self.q.powi(self.n_max() as i32) / self.p
    }

    fn geom(&self, n: usize) -> f64 {
        self.q.powi(n as i32 - 1) * self.p
    }

    /// `P(X < n) = 1 - q^{n-1}`.
    fn below(&self, n: usize) -> f64 {
        1.0 - self.q.powi(n as i32 - 1)
    }

    /// `P(2 X < n) = 1 - q^{floor((n-1)/2)}`.
    fn double_below(&self, n: usize) -> f64 {
        1.0 - self.q.powi(((n - 1) / 2) as i32)
    }

    fn series(&self, term: impl Fn(usize) -> f64) -> f64 {
        (1..=self.n_max()).map(term).sum()
    }
}

fn check_p(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!("run model needs 0 < p < 1, got {p}")))
    }
}

fn need_m(model: &RunModel, min: usize, what: &str) -> Result<()> {
    if model.m < min {
        return Err(Error::Unsupported(format!("{what} needs M >= {min}, got M = {}", model.m)));
    }
    Ok(())
}

/// Boundary sub-case probabilities `(p1, p2)` for `V(0) = V(1) = 0` and
/// `V(0) = 0, V(1) = 1` (the mirrored case equals `p2`).
pub fn boundary_subcases(model: &RunModel) -> Result<(f64, f64)> {
    need_m(model, 2, "the boundary probability")?;
    let mi = model.m as i32;
    let nm = model.n_max();
    let mut p1 = 0.0;
    for a in 1..=nm {
        for b in 1..=nm {
            let longest = a.max(b);
            p1 += (1.0 - model.q.powi(2 * longest as i32 - 1)).powi(mi - 2) * model.geom(a) * model.geom(b);
        }
    }
    let p2 = model.series(|n| (1.0 - model.q.powi(2 * n as i32 - 1)).powi(mi - 1) * model.geom(n));
    Ok((p1, p2))
}

/// `P_b`: probability that the longest extended zero run touches the
/// boundary under a reflecting condition.
pub fn analytic_boundary_prob(model: &RunModel) -> Result<f64> {
    let (p1, p2) = boundary_subcases(model)?;
    let (p, q) = (model.p, model.q);
    Ok(q * q * p1 + 2.0 * p * q * p2)
}

/// `P_D`: probability that the longest zero run is not unique.
pub fn analytic_multimodal_dirichlet(model: &RunModel) -> Result<f64> {
    let mi = model.m as i32;
    let s = model.series(|n| model.below(n).powi(mi - 1) * model.geom(n));
    Ok((1.0 - model.m as f64 * s).max(0.0))
}

/// Unimodal sub-case probabilities `[p1, p2, p3, p4]` for boundary values
/// `(0,0), (0,1), (1,0), (1,1)`.
pub fn neumann_subcases(model: &RunModel) -> Result<[f64; 4]> {
    need_m(model, 3, "the Neumann multimodal probability")?;
    let mi = model.m as i32;
    let mf = model.m as f64;
    let p1 = (mf - 2.0)
        * model.series(|n| model.double_below(n).powi(2) * model.below(n).powi(mi - 3) * model.geom(n))
        + 2.0 * model.series(|n| (1.0 - model.q.powi(2 * n as i32 - 1)).powi(mi - 2) * model.below(n) * model.geom(n));
    let p2 = (mf - 1.0) * model.series(|n| model.double_below(n) * model.below(n).powi(mi - 2) * model.geom(n))
        + model.series(|n| (1.0 - model.q.powi(2 * n as i32 - 1)).powi(mi - 1) * model.geom(n));
    let p4 = 1.0 - analytic_multimodal_dirichlet(model)?;
    Ok([p1, p2, p2, p4])
}

/// `P_N` evaluated term by term in its expanded five-term form.
pub fn analytic_multimodal_neumann(model: &RunModel) -> Result<f64> {
    need_m(model, 3, "the Neumann multimodal probability")?;
    let (p, q) = (model.p, model.q);
    let mi = model.m as i32;
    let mf = model.m as f64;
    let t1 = q * q * (mf - 2.0)
        * model.series(|n| model.double_below(n).powi(2) * model.below(n).powi(mi - 3) * model.geom(n));
    let t2 = 2.0 * q * q
        * model.series(|n| (1.0 - q.powi(2 * n as i32 - 1)).powi(mi - 2) * model.below(n) * model.geom(n));
    let t3 = 2.0 * p * q * (mf - 1.0)
        * model.series(|n| model.double_below(n) * model.below(n).powi(mi - 2) * model.geom(n));
    let t4 = 2.0 * p * q * model.series(|n| (1.0 - q.powi(2 * n as i32 - 1)).powi(mi - 1) * model.geom(n));
    let t5 = p * p * mf * model.series(|n| model.below(n).powi(mi - 1) * model.geom(n));
    Ok((1.0 - t1 - t2 - t3 - t4 - t5).clamp(0.0, 1.0))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunConfig {
    /// Potential values in the first and last cell.
    pub v0: u8,
    pub v1: u8,
    pub lengths: Vec<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunFlags {
    pub longest_extended_on_boundary: bool,
    pub unique_longest_plain: bool,
    pub unique_longest_extended: bool,
}

impl RunConfig {
    /// Lengths with zero runs at a zero-valued end doubled.
    pub fn extended_lengths(&self) -> Vec<u64> {
        let mut ext = self.lengths.clone();
        let last = ext.len() - 1;
        if self.v0 == 0 {
            ext[0] *= 2;
        }
        if self.v1 == 0 {
            ext[last] *= 2;
        }
        ext
    }

    pub fn flags(&self) -> RunFlags {
        let ext = self.extended_lengths();
        let last = ext.len() - 1;
        let on_boundary = |i: usize| (i == 0 && self.v0 == 0) || (i == last && self.v1 == 0);
        let (mut best_boundary, mut best_interior) = (0, 0);
        for (i, &l) in ext.iter().enumerate() {
            if on_boundary(i) {
                best_boundary = best_boundary.max(l);
            } else {
                best_interior = best_interior.max(l);
            }
        }
        RunFlags {
            longest_extended_on_boundary: best_boundary > best_interior,
            unique_longest_plain: unique_max(&self.lengths),
            unique_longest_extended: unique_max(&ext),
        }
    }
}

fn unique_max(v: &[u64]) -> bool {
    let top = v.iter().copied().max().unwrap_or(0);
    v.iter().filter(|&&x| x == top).count() == 1
}

pub fn sample_run_config<R: Rng + ?Sized>(model: &RunModel, rng: &mut R) -> RunConfig {
    let geom = Geometric::new(model.p).expect("p validated by RunModel");
    let lengths = (0..model.m).map(|_| 1 + geom.sample(rng)).collect();
    let mut end_value = || if rng.random_bool(model.q) { 0 } else { 1 };
    let v0 = end_value();
    let v1 = end_value();
    RunConfig { v0, v1, lengths }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleEstimate {
    pub samples: u64,
    pub p_b: f64,
    pub p_d: f64,
    pub p_n: f64,
}

impl OracleEstimate {
    /// Binomial standard error of a frequency estimate.
    pub fn std_error(&self, p_hat: f64) -> f64 {
        (p_hat * (1.0 - p_hat) / self.samples as f64).sqrt()
    }
}

/// Frequencies of the three events over `samples` run configurations;
/// sample `i` draws from stream `i` of `seed`.
pub fn oracle_estimates(model: &RunModel, samples: u64, seed: u64) -> OracleEstimate {
    let counts = (0..samples)
        .into_par_iter()
        .map(|i| {
            let f = sample_run_config(model, &mut rng::stream(seed, i)).flags();
            [
                f.longest_extended_on_boundary as u64,
                (!f.unique_longest_plain) as u64,
                (!f.unique_longest_extended) as u64,
            ]
        })
        .reduce(|| [0; 3], |a, b| [a[0] + b[0], a[1] + b[1], a[2] + b[2]]);
    let s = samples as f64;
    OracleEstimate {
        samples,
        p_b: counts[0] as f64 / s,
        p_d: counts[1] as f64 / s,
        p_n: counts[2] as f64 / s,
    }
}
