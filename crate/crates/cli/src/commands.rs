use anderson_core::bifurcation::{log_grid, scaling_study, solve_critical, sweep_kc, write_scaling_csv, write_sweep_csv};
use anderson_core::experiments::{
    distribution_study, run_experiment, write_study_csv, write_summary_csv, write_trials_csv, ExperimentSpec,
    PredicateKind, StudyPlan,
};
use anderson_core::landscape::{check_fm_inequality, compute_landscape, landscape_of, landscape_peaks, node_cell, valley_partition, Landscape};
use anderson_core::operator::{assemble, BoundaryCondition};
use anderson_core::potential::{run_decomposition, sample_potential, DistributionSpec, PotentialField};
use anderson_core::runstats::{analytic_boundary_prob, analytic_multimodal_dirichlet, analytic_multimodal_neumann, RunModel};
use anderson_core::solver::{smallest_eigenpairs, SolverOptions};
use anderson_core::stochastic::{estimate_landscape_mc, PathConfig};
use anderson_core::Error;
use clap::ValueEnum;

use crate::config::{Config, ConfigError};
use crate::output::{csv_text, grid_text, label_text, num, Artifacts};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Potential,
    Solve,
    Landscape,
    Valleys,
    BoundaryProb,
    MultimodalProb,
    DistStudy,
    FkCheck,
    Bifurcation,
    Scaling,
}

impl Command {
    pub fn name(&self) -> String {
        self.to_possible_value().expect("no skipped variants").get_name().to_string()
    }
}

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Numerical(String),
    Io(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Numerical(_) => 3,
            Failure::Io(_) => 1,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "config error: {m}"),
            Failure::Numerical(m) => write!(f, "numerical failure: {m}"),
            Failure::Io(m) => write!(f, "output error: {m}"),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.0)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Parameter(_) | Error::Unsupported(_) | Error::Usage(_) | Error::Constraint { .. } | Error::Parse(_) => {
                Failure::Config(e.to_string())
            }
            Error::Io(m) => Failure::Io(m),
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

type Outcome = Result<Artifacts, Failure>;

pub fn run(cmd: Command, cfg: &Config) -> Outcome {
    match cmd {
        Command::Potential => potential(cfg),
        Command::Solve => solve(cfg),
        Command::Landscape => landscape(cfg),
        Command::Valleys => valleys(cfg),
        Command::BoundaryProb => ensemble(cfg, PredicateKind::Boundary),
        Command::MultimodalProb => ensemble(cfg, PredicateKind::Multimodal),
        Command::DistStudy => dist_study(cfg),
        Command::FkCheck => fk_check(cfg),
        Command::Bifurcation => bifurcation(cfg),
        Command::Scaling => scaling(cfg),
    }
}

fn field(cfg: &Config) -> Result<PotentialField, Failure> {
    match &cfg.potential.file {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Config(format!("cannot read potential {}: {e}", path.display())))?;
            Ok(PotentialField::from_text(&text)?)
        }
        None => Ok(sample_potential(cfg.grid()?, cfg.distribution()?, cfg.seed)?),
    }
}

fn landscape_for(cfg: &Config, f: &PotentialField) -> Result<Landscape, Failure> {
    Ok(compute_landscape(f, cfg.operator.k, cfg.boundary()?, cfg.solve.landscape_tol)?)
}

fn potential(cfg: &Config) -> Outcome {
    let f = field(cfg)?;
    let mut a = Artifacts::default();
    a.add("potential.txt", f.to_text());
    if f.dim() == 1 && f.is_bernoulli() {
        let rows: Vec<Vec<String>> = run_decomposition(&f)?
            .iter()
            .map(|(v, len)| vec![v.to_string(), len.to_string()])
            .collect();
        a.add("runs.csv", csv_text(&["value", "length"], &rows));
    }
    Ok(a)
}

fn solve(cfg: &Config) -> Outcome {
    let f = field(cfg)?;
    let op = assemble(&f, cfg.operator.k, cfg.boundary()?)?;
    let opts = SolverOptions {
        tol: cfg.solve.tol,
        ..SolverOptions::default()
    };
    let pairs = smallest_eigenpairs(&op, cfg.solve.eigenpairs, opts)?;
    let ls = landscape_of(&op, cfg.solve.landscape_tol)?;
    let shape = ls.mesh.shape();
    let mut a = Artifacts::default();
    let mut rows = Vec::new();
    for (j, p) in pairs.iter().enumerate() {
        // normalization puts +1 at the first entry of largest magnitude
        let node = p.u.iter().position(|&v| v == 1.0).unwrap_or(0);
        rows.push(vec![
            (j + 1).to_string(),
            num(p.lambda),
            node.to_string(),
            node_cell(&f, node).to_string(),
            num(p.residual),
            num(check_fm_inequality(p, &ls)?),
        ]);
        a.add(format!("mode_{}.txt", j + 1), grid_text(&p.u, shape));
    }
    a.add(
        "eigenpairs.csv",
        csv_text(&["j", "lambda", "argmax_node", "argmax_cell", "residual", "fm_violation"], &rows),
    );
    a.add("landscape.txt", grid_text(&ls.w, shape));
    Ok(a)
}

fn landscape(cfg: &Config) -> Outcome {
    let f = field(cfg)?;
    let ls = landscape_for(cfg, &f)?;
    let mut a = Artifacts::default();
    a.add("landscape.txt", grid_text(&ls.w, ls.mesh.shape()));
    let rows: Vec<Vec<String>> = landscape_peaks(&ls)
        .into_iter()
        .map(|n| vec![n.to_string(), node_cell(&f, n).to_string(), num(ls.w[n])])
        .collect();
    a.add("peaks.csv", csv_text(&["node", "cell", "w"], &rows));
    Ok(a)
}

fn valleys(cfg: &Config) -> Outcome {
    let f = field(cfg)?;
    let ls = landscape_for(cfg, &f)?;
    let part = valley_partition(&ls)?;
    let mut a = Artifacts::default();
    a.add("landscape.txt", grid_text(&ls.w, ls.mesh.shape()));
    a.add("valleys.txt", label_text(&part.labels, part.shape));
    let rows: Vec<Vec<String>> = part
        .regions
        .iter()
        .map(|r| {
            vec![
                r.id.to_string(),
                r.len().to_string(),
                num(r.measure),
                r.touches_boundary().to_string(),
                r.touches_corner.to_string(),
            ]
        })
        .collect();
    a.add("regions.csv", csv_text(&["region", "sites", "measure", "touches_boundary", "touches_corner"], &rows));
    Ok(a)
}

fn ensemble(cfg: &Config, predicate: PredicateKind) -> Outcome {
    if cfg.potential.file.is_some() {
        return Err(Failure::Config("ensembles sample their own potentials; remove [potential] file".into()));
    }
    let grid = cfg.grid()?;
    let dist = cfg.distribution()?;
    let bc = cfg.boundary()?;
    let mut spec = ExperimentSpec::new(grid, dist, cfg.operator.k, bc, cfg.trials, cfg.seed, predicate);
    spec.threshold = cfg.experiment.threshold;
    spec.eigen_index = cfg.experiment.eigen_index;
    let result = run_experiment(&spec)?;
    let mut a = Artifacts::default();
    let mut buf = Vec::new();
    write_trials_csv(&mut buf, &result)?;
    a.add("trials.csv", buf);
    let mut buf = Vec::new();
    write_summary_csv(&mut buf, &result)?;
    a.add("summary.csv", buf);
    if let (1, DistributionSpec::Bernoulli { p }) = (grid.dim, dist) {
        let model = RunModel::new(p, grid.cells_per_side)?;
        let analytic = match (predicate, bc) {
            (PredicateKind::Boundary, _) => Some(("P_b", analytic_boundary_prob(&model)?)),
            (PredicateKind::Multimodal, BoundaryCondition::Dirichlet) => Some(("P_D", analytic_multimodal_dirichlet(&model)?)),
            (PredicateKind::Multimodal, BoundaryCondition::Neumann) => Some(("P_N", analytic_multimodal_neumann(&model)?)),
            _ => None,
        };
        if let Some((name, v)) = analytic {
            let inside = result.estimate.contains(v);
            a.add(
                "analytic.csv",
                csv_text(&["quantity", "analytic", "within_ci"], &[vec![name.into(), num(v), inside.to_string()]]),
            );
        }
    }
    Ok(a)
}

fn dist_study(cfg: &Config) -> Outcome {
    let s = &cfg.study;
    let plan = StudyPlan {
        families: s.families.clone(),
        stds: s.stds.clone(),
        hs: s.hs.clone(),
        dims: s.dims.clone(),
        k: s.k,
        n_trials: cfg.trials,
        seed: cfg.seed,
    };
    let rows = distribution_study(&plan)?;
    let mut buf = Vec::new();
    write_study_csv(&mut buf, &rows)?;
    let mut a = Artifacts::default();
    a.add("study.csv", buf);
    Ok(a)
}

/// Linear (1D) or bilinear (2D) interpolation of node values on the unit
/// interval or square.
fn interpolate(ls: &Landscape, x: &[f64]) -> f64 {
    let [nx, ny] = ls.mesh.shape();
    let locate = |c: f64, n: usize| {
        let s = c.clamp(0.0, 1.0) * (n - 1) as f64;
        let i = (s as usize).min(n - 2);
        (i, s - i as f64)
    };
    let (ix, tx) = locate(x[0], nx);
    if ls.dim() == 1 {
        return ls.w[ix] * (1.0 - tx) + ls.w[ix + 1] * tx;
    }
    let (iy, ty) = locate(x[1], ny);
    let at = |i: usize, j: usize| ls.w[j * nx + i];
    (at(ix, iy) * (1.0 - tx) + at(ix + 1, iy) * tx) * (1.0 - ty) + (at(ix, iy + 1) * (1.0 - tx) + at(ix + 1, iy + 1) * tx) * ty
}

fn fk_check(cfg: &Config) -> Outcome {
    let f = field(cfg)?;
    let bc = cfg.boundary()?;
    let ls = landscape_for(cfg, &f)?;
    let path = PathConfig {
        dt: cfg.fk.dt,
        dt_min: cfg.fk.dt_min,
        t_max: cfg.fk.t_max,
        n_paths: cfg.fk.paths,
        seed: cfg.seed,
    };
    let mut rows = Vec::new();
    for probe in &cfg.fk.probes {
        if probe.len() != f.dim() || probe.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Failure::Config(format!("[fk] probe {probe:?} is not a point of the {}D unit domain", f.dim())));
        }
        let e = estimate_landscape_mc(probe, &f, cfg.operator.k, bc, &path)?;
        let fd = interpolate(&ls, probe);
        let z = if e.std_error > 0.0 { (e.mean - fd) / e.std_error } else { 0.0 };
        let coords: Vec<String> = probe.iter().map(|c| c.to_string()).collect();
        rows.push(vec![coords.join(" "), num(e.mean), num(e.std_error), num(fd), format!("{z:.3}")]);
    }
    let mut a = Artifacts::default();
    a.add("fk.csv", csv_text(&["probe", "mc_mean", "mc_std_error", "fd", "z"], &rows));
    Ok(a)
}

fn bifurcation(cfg: &Config) -> Outcome {
    let p = cfg.toy()?;
    let s = &cfg.sweep;
    if !(s.k_min > 0.0 && s.k_min < s.k_max && s.points >= 2) {
        return Err(Failure::Config("[sweep] needs 0 < k_min < k_max and at least 2 points".into()));
    }
    let crit = solve_critical(&p)?;
    let sweep = sweep_kc(&p, &log_grid(s.k_min, s.k_max, s.points), s.spacing)?;
    let mut a = Artifacts::default();
    let mut buf = Vec::new();
    write_sweep_csv(&mut buf, &sweep.points)?;
    a.add("sweep.csv", buf);
    let gap = (crit.k_c - sweep.k_c) / sweep.k_c;
    a.add(
        "critical.csv",
        csv_text(
            &["K_c_analytic", "lambda_c", "K_c_sweep", "relative_gap"],
            &[vec![num(crit.k_c), num(crit.lambda_c), num(sweep.k_c), num(gap)]],
        ),
    );
    Ok(a)
}

fn scaling(cfg: &Config) -> Outcome {
    let base = cfg.base_ratios()?;
    let mut a = Artifacts::default();
    let mut fits = Vec::new();
    for axis in cfg.axes()? {
        let fit = scaling_study(base, axis, cfg.scaling.points, cfg.seed)?;
        let mut buf = Vec::new();
        write_scaling_csv(&mut buf, &fit)?;
        a.add(format!("scaling_{}.csv", axis.name()), buf);
        fits.push(vec![
            axis.name().to_string(),
            if axis.is_log() { "log" } else { "linear" }.to_string(),
            num(fit.slope),
            num(fit.intercept),
            num(fit.r2),
            fit.points.len().to_string(),
            fit.skipped.len().to_string(),
        ]);
    }
    a.add("fits.csv", csv_text(&["axis", "abscissa", "slope", "intercept", "r2", "points", "skipped"], &fits));
    Ok(a)
}
