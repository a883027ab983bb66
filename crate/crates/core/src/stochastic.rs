//! Feynman–Kac estimator for the landscape.
//!
//! Paths follow `dX = √2 dB + ν dF` in the unit interval or square, where
//! `F` is the boundary local time (the Skorokhod push along the inward
//! normal `ν`). Then
//!
//! `w(x) = E ∫₀^∞ Y_t dt`, `Y_t = exp(-∫ h dF - ∫ K V(X_s) ds)`
//!
//! solves `-Δw + K V w = 1` with `∂w/∂n + h w = 0`; absorbing the path at the
//! boundary gives the Dirichlet problem instead.
//!
//! Each axis is reflected at its nearest wall by the exact half-line
//! Skorokhod map of the Brownian bridge across the step: the bridge minimum
//! is sampled, the push is its negative part, and a Dirichlet path dies when
//! the minimum reaches the wall. The time step shrinks near jumps of `V` so
//! that a step rarely straddles one.

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::operator::BoundaryCondition;
use crate::potential::PotentialField;
use crate::rng;

/// Weight below which a path is stopped.
pub const WEIGHT_CUTOFF: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathConfig {
    /// Largest time step.
    pub dt: f64,
    /// Smallest time step, used right at a jump of the potential.
    pub dt_min: f64,
    /// Horizon for paths whose weight never decays.
    pub t_max: f64,
    pub n_paths: usize,
    pub seed: u64,
}

impl Default for PathConfig {
    fn default() -> Self {
        Self {
            dt: 1e-4,
            dt_min: 1e-8,
            t_max: 10.0,
            n_paths: 10_000,
            seed: 0,
        }
    }
}

impl PathConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.dt > 0.0
            && self.dt_min > 0.0
            && self.dt_min <= self.dt
            && self.t_max > 0.0
            && self.t_max.is_finite()
            && self.n_paths >= 2;
        if ok {
            Ok(())
        } else {
            Err(Error::Parameter(format!("invalid path configuration {self:?}")))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeynmanKacEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
    /// Bound on the bias from stopping paths at `WEIGHT_CUTOFF` or `t_max`.
    pub truncation_bound: f64,
}

/// A sampled reflecting path.
#[derive(Clone, Debug, PartialEq)]
pub struct ReflectingPath {
    pub times: Vec<f64>,
    pub points: Vec<[f64; 2]>,
    /// Local-time increment of each step; `local_time[i]` belongs to the
    /// step ending at `points[i + 1]`.
    pub local_time: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Wall {
    Reflecting,
    Absorbing,
}

/// One axis step of length `sigma * xi` from `x ∈ [0,1]`. Returns the new
/// coordinate and the push, or `None` if an absorbing wall was reached.
fn axis_step<R: Rng + ?Sized>(x: f64, sigma: f64, wall: Wall, rng: &mut R) -> Option<(f64, f64)> {
    let xi: f64 = rng.sample(StandardNormal);
    let e: f64 = rng.sample(Exp1);
    let upper = x > 0.5;
    let y = if upper { 1.0 - x } else { x };
    let z = y + if upper { -sigma * xi } else { sigma * xi };
    let bridge_min = 0.5 * (y + z - ((z - y).powi(2) + 2.0 * sigma * sigma * e).sqrt());
    let push = (-bridge_min).max(0.0);
    if wall == Wall::Absorbing && push > 0.0 {
        return None;
    }
    let mut y_new = z + push;
    if y_new > 1.0 {
        y_new = (2.0 - y_new).max(0.0);
    }
    Some((if upper { 1.0 - y_new } else { y_new }, push))
}

fn check_point(x: &[f64], dim: usize) -> Result<[f64; 2]> {
    if x.len() != dim || !(1..=2).contains(&dim) {
        return Err(Error::Domain(format!("expected a point with {dim} coordinates, got {}", x.len())));
    }
    if x.iter().any(|c| !(0.0..=1.0).contains(c)) {
        return Err(Error::Domain(format!("point {x:?} lies outside the unit domain")));
    }
    let mut p = [0.0; 2];
    p[..dim].copy_from_slice(x);
    Ok(p)
}

/// Reflecting path on the unit interval (`dim = 1`) or square with a fixed
/// step `cfg.dt` up to `cfg.t_max`. Stream `index` of `cfg.seed` drives it.
pub fn simulate_reflecting_path(dim: usize, x0: &[f64], cfg: &PathConfig, index: u64) -> Result<ReflectingPath> {
    cfg.validate()?;
    let mut x = check_point(x0, dim)?;
    let mut rng = rng::stream(cfg.seed, index);
    let sigma = (2.0 * cfg.dt).sqrt();
    let steps = (cfg.t_max / cfg.dt).round() as usize;
    let mut path = ReflectingPath {
        times: vec![0.0],
        points: vec![x],
        local_time: Vec::with_capacity(steps),
    };
    for step in 1..=steps {
        let mut dl = 0.0;
        for c in x.iter_mut().take(dim) {
            let (y, push) = axis_step(*c, sigma, Wall::Reflecting, &mut rng).expect("reflecting walls never absorb");
            *c = y;
            dl += push;
        }
        path.times.push(step as f64 * cfg.dt);
        path.points.push(x);
        path.local_time.push(dl);
    }
    Ok(path)
}

/// Potential lookup plus the distance to the nearest jump of `V`.
struct PotentialProbe<'a> {
    field: &'a PotentialField,
    n: usize,
    cell: f64,
}

/// Cells searched on each side when measuring the distance to a jump.
const JUMP_WINDOW: isize = 3;

impl<'a> PotentialProbe<'a> {
    fn new(field: &'a PotentialField) -> Self {
        let n = field.n();
        Self {
            field,
            n,
            cell: 1.0 / n as f64,
        }
    }

    fn index(&self, c: f64) -> usize {
        ((c * self.n as f64) as usize).min(self.n - 1)
    }

    fn value(&self, x: &[f64; 2]) -> f64 {
        let iy = if self.field.dim() == 2 { self.index(x[1]) } else { 0 };
        self.field.cell(self.index(x[0]), iy)
    }

    /// Distance from `x` to the nearest cell carrying a different value,
    /// capped at the search window.
    fn jump_distance(&self, x: &[f64; 2]) -> f64 {
        let dim = self.field.dim();
        let ix = self.index(x[0]) as isize;
        let iy = if dim == 2 { self.index(x[1]) as isize } else { 0 };
        let here = self.field.cell(ix as usize, iy as usize);
        let axis_gap = |c: f64, i: isize| {
            let lo = i as f64 * self.cell;
            (lo - c).max(c - lo - self.cell).max(0.0)
        };
        let n = self.n as isize;
        let ys = if dim == 2 { (iy - JUMP_WINDOW).max(0)..=(iy + JUMP_WINDOW).min(n - 1) } else { 0..=0 };
        let mut best = JUMP_WINDOW as f64 * self.cell;
        for jy in ys {
            let gy = if dim == 2 { axis_gap(x[1], jy) } else { 0.0 };
            if gy >= best {
                continue;
            }
            for jx in (ix - JUMP_WINDOW).max(0)..=(ix + JUMP_WINDOW).min(n - 1) {
                if self.field.cell(jx as usize, jy as usize) != here {
                    let gx = axis_gap(x[0], jx);
                    best = best.min((gx * gx + gy * gy).sqrt());
                }
            }
        }
        best
    }
}

/// Steps per standard deviation of the increment kept between a point and
/// the nearest jump of `V`.
const JUMP_CLEARANCE: f64 = 4.0;

/// Largest log-weight error tolerated from one step across a jump.
const STRADDLE_LOG_WEIGHT: f64 = 0.01;

/// `∫₀^T Y_t dt` along one path.
fn path_integral(x0: [f64; 2], probe: &PotentialProbe, k: f64, bc: BoundaryCondition, cfg: &PathConfig, index: u64) -> f64 {
    let dim = probe.field.dim();
    let mut rng = rng::stream(cfg.seed, index);
    let (wall, h) = match bc {
        BoundaryCondition::Dirichlet => (Wall::Absorbing, 0.0),
        BoundaryCondition::Neumann => (Wall::Reflecting, 0.0),
        BoundaryCondition::Robin { h } => (Wall::Reflecting, h),
        BoundaryCondition::Periodic => unreachable!("rejected by the caller"),
    };
    // a step straddling a jump misassigns at most K·max(V)·dt of log-weight
    let v_max = probe.field.cell_values.iter().fold(0.0f64, |a, &b| a.max(b));
    let dt_floor = (STRADDLE_LOG_WEIGHT / (k * v_max)).clamp(cfg.dt_min, cfg.dt);
    let mut x = x0;
    let mut v = probe.value(&x);
    let (mut t, mut log_y, mut total) = (0.0, 0.0f64, 0.0);
    while t < cfg.t_max {
        let gap = probe.jump_distance(&x);
        let dt = (0.5 * (gap / JUMP_CLEARANCE).powi(2)).clamp(dt_floor, cfg.dt).min(cfg.t_max - t);
        let sigma = (2.0 * dt).sqrt();
        let mut dl = 0.0;
        let mut alive = true;
        let mut next = x;
        for c in next.iter_mut().take(dim) {
            match axis_step(*c, sigma, wall, &mut rng) {
                Some((y, push)) => {
                    *c = y;
                    dl += push;
                }
                None => alive = false,
            }
        }
        let v_next = if alive { probe.value(&next) } else { v };
        let a = k * dt * 0.5 * (v + v_next);
        let step = if a > 1e-12 { dt * (-a).exp_m1() / -a } else { dt * (1.0 - 0.5 * a) };
        let y = log_y.exp();
        if !alive {
            // the exit time within the step is not resolved; count half
            total += 0.5 * y * step;
            break;
        }
        total += y * step;
        log_y -= a + h * dl;
        t += dt;
        x = next;
        v = v_next;
        if log_y < WEIGHT_CUTOFF.ln() {
            break;
        }
    }
    total
}

/// Monte Carlo estimate of the landscape at `x`.
pub fn estimate_landscape_mc(
    x: &[f64],
    field: &PotentialField,
    k: f64,
    bc: BoundaryCondition,
    cfg: &PathConfig,
) -> Result<FeynmanKacEstimate> {
    cfg.validate()?;
    bc.validate()?;
    if bc == BoundaryCondition::Periodic {
        return Err(Error::Unsupported("the path estimator has no periodic mode".into()));
    }
    if !(k >= 0.0 && k.is_finite()) {
        return Err(Error::Parameter(format!("K must be finite and nonnegative, got {k}")));
    }
    let x0 = check_point(x, field.dim())?;
    let probe = PotentialProbe::new(field);
    let values: Vec<f64> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|i| path_integral(x0, &probe, k, bc, cfg, i))
        .collect();
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(FeynmanKacEstimate {
        mean,
        std_error: (var / n).sqrt(),
        n_paths: cfg.n_paths,
        truncation_bound: WEIGHT_CUTOFF * cfg.t_max,
    })
}

/// CSV rows `(probe, mean, std_error)`.
pub fn write_estimates_csv<W: std::io::Write>(
    out: W,
    probes: &[Vec<f64>],
    estimates: &[FeynmanKacEstimate],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["probe", "mean", "std_error"])?;
    for (p, e) in probes.iter().zip(estimates) {
        let coords: Vec<String> = p.iter().map(|c| c.to_string()).collect();
        w.write_record([coords.join(" "), e.mean.to_string(), e.std_error.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_line_push_is_exact_for_large_steps() {
        // a reflected step from the wall has the law of |N(0, σ²)|
        let mut rng = rng::seeded(1);
        let n = 200_000;
        let mean: f64 = (0..n).map(|_| axis_step(0.0, 0.01, Wall::Reflecting, &mut rng).unwrap().0).sum::<f64>() / n as f64;
        let exact = 0.01 * (2.0 / std::f64::consts::PI).sqrt();
        assert!((mean / exact - 1.0).abs() < 0.01, "{mean} vs {exact}");
    }

    #[test]
    fn absorption_probability_matches_bridge() {
        // from x, P(hit 0 within the step) = 2 P(N(0,σ²) < -x)
        let mut rng = rng::seeded(2);
        let n = 200_000;
        let killed = (0..n).filter(|_| axis_step(0.01, 0.01, Wall::Absorbing, &mut rng).is_none()).count();
        let exact = 2.0 * 0.158_655_253_931_457_05;
        assert!((killed as f64 / n as f64 - exact).abs() < 0.005);
    }
}
