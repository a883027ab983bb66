//! Two-well toy model on the periodic unit interval: the subsystem
//! eigenvalue equations `D1`, `D2`, the disorder strength `K_c` at which the
//! first eigenmode moves from the right well to the left one, a
//! finite-difference sweep of the same transition, and the dependence of
//! `K_c` on the well geometry.

use std::f64::consts::PI;
use std::io::Write;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::operator::{assemble_mesh, Boundary, BoundaryCondition, DiscreteOperator, LineMesh, Mesh};
use crate::rng;
use crate::solver::{smallest_eigenpairs, SolverOptions};

/// Tolerance on `L1 + 2 L2 + 2 L3 + L4 = 1`.
const SUM_TOL: f64 = 1e-12;

/// Relative half-width of the neighbourhood around a `tan`/`cot` pole in
/// which `D1`/`D2` are not evaluated.
pub const POLE_WIDTH: f64 = 1e-8;

/// Subintervals of the λ scan for the first root.
const SCAN_INTERVALS: usize = 200;

/// Relative bracket width at which root bisection in λ stops.
const ROOT_RTOL: f64 = 1e-12;

/// K range searched by `solve_critical`.
pub const K_SEARCH: (f64, f64) = (10.0, 1e8);
const K_SEARCH_PER_DECADE: usize = 20;

/// Relative bracket width at which bisection in K stops.
const K_RTOL: f64 = 1e-10;

/// Mesh spacing of the finite-difference toy model.
pub const TOY_SPACING: f64 = 1.0 / 2000.0;

/// Bisection steps refining the F = 0.5 bracket of a sweep.
const SWEEP_REFINE_STEPS: usize = 30;

/// Well lengths of the toy potential. `V` is `1, 0, 1, 0, 1, 0, 1` on
/// pieces of length `L2/2, L1, L2, L3, L4, L3, L2/2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ToyModelParams {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    pub l4: f64,
}

impl ToyModelParams {
    /// Checks all five geometric constraints.
    pub fn new(l1: f64, l2: f64, l3: f64, l4: f64) -> Result<Self> {
        let p = Self::unchecked(l1, l2, l3, l4)?;
        p.check_constraints()?;
        Ok(p)
    }

    /// Only positivity and unit total length are enforced; the well
    /// ordering constraints may fail.
    pub fn unchecked(l1: f64, l2: f64, l3: f64, l4: f64) -> Result<Self> {
        if [l1, l2, l3, l4].iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return Err(Error::Parameter(format!(
                "toy lengths must be positive, got L1={l1} L2={l2} L3={l3} L4={l4}"
            )));
        }
        let p = Self { l1, l2, l3, l4 };
        let total = p.total();
        if (total - 1.0).abs() > SUM_TOL {
            return Err(Error::Constraint {
                index: "v",
                detail: format!("L1 + 2 L2 + 2 L3 + L4 = {total}, not 1"),
            });
        }
        Ok(p)
    }

    /// `L2` fixed by the unit total length.
    pub fn from_wells(l1: f64, l3: f64, l4: f64) -> Result<Self> {
        Self::new(l1, (1.0 - l1 - 2.0 * l3 - l4) / 2.0, l3, l4)
    }

    /// `L1 = 1/12, L2 = 2/5, L3 = 1/20, L4 = 1/60`.
    pub fn reference() -> Self {
        Self {
            l1: 1.0 / 12.0,
            l2: 0.4,
            l3: 0.05,
            l4: 1.0 / 60.0,
        }
    }

    fn total(&self) -> f64 {
        self.l1 + 2.0 * self.l2 + 2.0 * self.l3 + self.l4
    }

    pub fn check_constraints(&self) -> Result<()> {
        let Self { l1, l2, l3, l4 } = *self;
        let checks: [(bool, &'static str, String); 5] = [
            (l1 > l3, "i", format!("left well L1 = {l1} must be longer than L3 = {l3}")),
            (l1 < 2.0 * l3, "ii", format!("L1 = {l1} must be shorter than 2 L3 = {}", 2.0 * l3)),
            (l4 < l3 / 2.0, "iii", format!("barrier L4 = {l4} must be shorter than L3 / 2 = {}", l3 / 2.0)),
            (
                l2 > l1 + 2.0 * l3 + l4,
                "iv",
                format!("well separation L2 = {l2} must exceed L1 + 2 L3 + L4 = {}", l1 + 2.0 * l3 + l4),
            ),
            (
                (self.total() - 1.0).abs() <= SUM_TOL,
                "v",
                format!("L1 + 2 L2 + 2 L3 + L4 = {}, not 1", self.total()),
            ),
        ];
        match checks.into_iter().find(|c| !c.0) {
            Some((_, index, detail)) => Err(Error::Constraint { index, detail }),
            None => Ok(()),
        }
    }

    pub fn t0(&self) -> f64 {
        self.l1 / 2.0
    }

    pub fn t1(&self) -> f64 {
        self.l4 / 2.0
    }

    pub fn t2(&self) -> f64 {
        self.l4 / 2.0 + self.l3
    }

    pub fn t3(&self) -> f64 {
        0.5
    }

    /// `x1..x6`.
    pub fn breakpoints(&self) -> [f64; 6] {
        let mut x = [0.0; 6];
        let mut acc = 0.0;
        for (xi, len) in x.iter_mut().zip([self.l2 / 2.0, self.l1, self.l2, self.l3, self.l4, self.l3]) {
            acc += len;
            *xi = acc;
        }
        x
    }

    /// Left well `[x1, x2]`.
    pub fn w1(&self) -> [f64; 2] {
        let x = self.breakpoints();
        [x[0], x[1]]
    }

    /// Right well `[x3, x5]`, including its barrier.
    pub fn w2(&self) -> [f64; 2] {
        let x = self.breakpoints();
        [x[2], x[4]]
    }

    /// `(length, V)` pieces of the full potential.
    pub fn pieces(&self) -> Vec<(f64, f64)> {
        let x = self.breakpoints();
        vec![
            (x[0], 1.0),
            (self.l1, 0.0),
            (self.l2, 1.0),
            (self.l3, 0.0),
            (self.l4, 1.0),
            (self.l3, 0.0),
            (1.0 - x[5], 1.0),
        ]
    }

    pub fn ratios(&self) -> ShapeRatios {
        let wells = self.l1 + 2.0 * self.l3 + self.l4;
        ShapeRatios {
            p1: wells / self.total(),
            p2: self.l1 / wells,
            p3: self.l4 / (2.0 * self.l3 + self.l4),
        }
    }
}

/// `P1`: both wells relative to the interval; `P2`: left well relative to
/// both wells; `P3`: barrier relative to the right well.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShapeRatios {
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
}

impl ShapeRatios {
    pub fn new(p1: f64, p2: f64, p3: f64) -> Result<Self> {
        if [p1, p2, p3].iter().any(|p| !(*p > 0.0 && *p < 1.0)) {
            return Err(Error::Parameter(format!("shape ratios must lie in (0, 1), got {p1}, {p2}, {p3}")));
        }
        Ok(Self { p1, p2, p3 })
    }

    /// `P1 = 0.25, P2 = 0.4, P3 = 0.1`.
    pub fn reference() -> Self {
        Self {
            p1: 0.25,
            p2: 0.4,
            p3: 0.1,
        }
    }

    pub fn get(&self, axis: RatioAxis) -> f64 {
        match axis {
            RatioAxis::P1 => self.p1,
            RatioAxis::P2 => self.p2,
            RatioAxis::P3 => self.p3,
        }
    }

    pub fn with(&self, axis: RatioAxis, value: f64) -> Result<Self> {
        let mut r = *self;
        match axis {
            RatioAxis::P1 => r.p1 = value,
            RatioAxis::P2 => r.p2 = value,
            RatioAxis::P3 => r.p3 = value,
        }
        Self::new(r.p1, r.p2, r.p3)
    }

    /// The unique lengths with these ratios: `W = P1`, `L1 = P2 W`,
    /// `R = W - L1`, `L4 = P3 R`, `L3 = (R - L4) / 2`, `L2 = (1 - W) / 2`.
    pub fn to_params(&self) -> Result<ToyModelParams> {
        let w = self.p1;
        let l1 = self.p2 * w;
        let r = w - l1;
        let l4 = self.p3 * r;
        let l3 = (r - l4) / 2.0;
        ToyModelParams::new(l1, (1.0 - w) / 2.0, l3, l4)
    }
}

fn alpha_beta(k: f64, lambda: f64) -> Result<(f64, f64)> {
    if !(lambda > 0.0 && lambda < k) {
        return Err(Error::Domain(format!("lambda = {lambda} must lie in (0, K = {k})")));
    }
    Ok((lambda.sqrt(), (k - lambda).sqrt()))
}

/// Whether `phase` is within `POLE_WIDTH` (relative) of `(j + offset) π`
/// for some `j` with a positive pole.
fn near_pole(phase: f64, offset: f64) -> bool {
    let pole = ((phase / PI - offset).round() + offset) * PI;
    pole > 0.0 && (phase - pole).abs() <= POLE_WIDTH * pole
}

/// `α tan(α t0) - β tanh(β (1/2 - t0))`; zero at the eigenvalues of the
/// left-well subsystem.
pub fn eval_d1(k: f64, lambda: f64, p: &ToyModelParams) -> Result<f64> {
    let (a, b) = alpha_beta(k, lambda)?;
    let phase = a * p.t0();
    if near_pole(phase, 0.5) {
        return Err(Error::NearPole { which: 1, lambda });
    }
    Ok(a * phase.tan() - b * (b * (0.5 - p.t0())).tanh())
}

/// `D2` with every exponential rescaled by `e^{-2β(t1 + t3)}`, so no
/// exponent is positive.
pub fn eval_d2(k: f64, lambda: f64, p: &ToyModelParams) -> Result<f64> {
    let (a, b) = alpha_beta(k, lambda)?;
    let (t1, t2, t3) = (p.t1(), p.t2(), p.t3());
    let phase = a * (t2 - t1);
    if near_pole(phase, 0.0) {
        return Err(Error::NearPole { which: 2, lambda });
    }
    let e = (2.0 * b * (t2 - t1 - t3)).exp();
    let den = 1.0 - e;
    let first = (a * a - b * b) * (e + 1.0) / den;
    let second = (a * a + b * b) * ((-2.0 * b * t1).exp() + (2.0 * b * (t2 - t3)).exp()) / den;
    // cot(α (t1 - t2)) = -cot(phase)
    Ok(first + second - 2.0 * a * b / phase.tan())
}

/// `D2` as written with raw exponentials; overflows for large `K`.
pub fn eval_d2_raw(k: f64, lambda: f64, p: &ToyModelParams) -> Result<f64> {
    let (a, b) = alpha_beta(k, lambda)?;
    let (t1, t2, t3) = (p.t1(), p.t2(), p.t3());
    let phase = a * (t1 - t2);
    if near_pole(-phase, 0.0) {
        return Err(Error::NearPole { which: 2, lambda });
    }
    let ex = |s: f64| (2.0 * b * s).exp();
    let den = ex(t1 + t3) - ex(t2);
    Ok((a * a - b * b) * (ex(t2) + ex(t1 + t3)) / den
        + (a * a + b * b) * (ex(t3) + ex(t1 + t2)) / den
        + 2.0 * a * b / phase.tan())
}

fn eval_d(which: u8, k: f64, lambda: f64, p: &ToyModelParams) -> Result<f64> {
    match which {
        1 => eval_d1(k, lambda, p),
        2 => eval_d2(k, lambda, p),
        _ => Err(Error::Usage(format!("subsystem index must be 1 or 2, got {which}"))),
    }
}

/// First pole in λ of `D_which`.
fn first_pole(which: u8, p: &ToyModelParams) -> f64 {
    if which == 1 {
        (PI / (2.0 * p.t0())).powi(2)
    } else {
        (PI / p.l3).powi(2)
    }
}

/// Smallest root of `D_which(K, ·)` in `(0, K)`. The ground state lies
/// below the Dirichlet eigenvalue of the well, which is also the first
/// pole of `D_which`, so the scan stops just short of it and never meets a
/// pole. A root closer to the pole than `POLE_WIDTH` is returned as the
/// scan end.
pub fn first_subsystem_eigenvalue(k: f64, p: &ToyModelParams, which: u8) -> Result<f64> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::Parameter(format!("K must be positive, got {k}")));
    }
    if which != 1 && which != 2 {
        return Err(Error::Usage(format!("subsystem index must be 1 or 2, got {which}")));
    }
    let pole = first_pole(which, p) * (1.0 - 2.0 * POLE_WIDTH);
    let pole_limited = pole < k;
    let hi = if pole_limited { pole } else { k * (1.0 - 1e-12) };
    let d = |l: f64| eval_d(which, k, l, p);
    let mut prev = (hi * 1e-9, d(hi * 1e-9)?);
    for i in 1..=SCAN_INTERVALS {
        let l = hi * i as f64 / SCAN_INTERVALS as f64;
        let v = d(l)?;
        if v == 0.0 {
            return Ok(l);
        }
        if v.signum() != prev.1.signum() {
            return bisect_root(&d, prev.0, prev.1, l);
        }
        prev = (l, v);
    }
    if pole_limited && prev.1 < 0.0 {
        return Ok(hi);
    }
    Err(Error::NoRoot { which, k })
}

fn bisect_root(d: &impl Fn(f64) -> Result<f64>, mut lo: f64, v_lo: f64, mut hi: f64) -> Result<f64> {
    let s_lo = v_lo.signum();
    while hi - lo > ROOT_RTOL * lo {
        let mid = 0.5 * (lo + hi);
        let v = d(mid)?;
        if v == 0.0 {
            return Ok(mid);
        }
        if v.signum() == s_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `|D(λ)| / (|∂D/∂λ| λ)`: the relative λ error implied by a residual.
pub fn scaled_residual(which: u8, k: f64, lambda: f64, p: &ToyModelParams) -> Result<f64> {
    let h = lambda * 1e-6;
    let slope = (eval_d(which, k, lambda + h, p)? - eval_d(which, k, lambda - h, p)?) / (2.0 * h);
    Ok(eval_d(which, k, lambda, p)?.abs() / (slope.abs() * lambda))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CriticalPoint {
    pub k_c: f64,
    pub lambda_c: f64,
}

impl CriticalPoint {
    /// Scaled residuals of `D1` and `D2` at `(K_c, λ_c)`.
    pub fn residuals(&self, p: &ToyModelParams) -> Result<[f64; 2]> {
        Ok([
            scaled_residual(1, self.k_c, self.lambda_c, p)?,
            scaled_residual(2, self.k_c, self.lambda_c, p)?,
        ])
    }
}

/// `K` where the first eigenvalues of both subsystems coincide: first
/// sign change of `λ1(K) - λ2(K)` on a log grid over `K_SEARCH`, bisected
/// to relative `1e-10`.
pub fn solve_critical(p: &ToyModelParams) -> Result<CriticalPoint> {
    let gap = |k: f64| -> Result<(f64, f64, f64)> {
        let a = first_subsystem_eigenvalue(k, p, 1)?;
        let b = first_subsystem_eigenvalue(k, p, 2)?;
        Ok((a - b, a, b))
    };
    let (lo, hi) = K_SEARCH;
    let n = (K_SEARCH_PER_DECADE as f64 * (hi / lo).log10()).round() as usize;
    let mut prev: Option<(f64, f64)> = None;
    for i in 0..=n {
        let k = lo * (hi / lo).powf(i as f64 / n as f64);
        let (g, a, b) = gap(k)?;
        if g == 0.0 {
            return Ok(CriticalPoint {
                k_c: k,
                lambda_c: 0.5 * (a + b),
            });
        }
        if let Some((k0, g0)) = prev {
            if g0.signum() != g.signum() {
                let (mut klo, mut khi) = (k0, k);
                while khi - klo > K_RTOL * klo {
                    let mid = (klo * khi).sqrt();
                    let (gm, _, _) = gap(mid)?;
                    if gm.signum() == g0.signum() {
                        klo = mid;
                    } else {
                        khi = mid;
                    }
                }
                let k_c = (klo * khi).sqrt();
                let (_, a, b) = gap(k_c)?;
                return Ok(CriticalPoint {
                    k_c,
                    lambda_c: 0.5 * (a + b),
                });
            }
        }
        prev = Some((k, g));
    }
    Err(Error::NoBifurcation { k_lo: lo, k_hi: hi })
}

/// Mesh of the full toy potential with breakpoints as nodes.
pub fn build_toy_potential(p: &ToyModelParams, max_spacing: f64) -> Result<LineMesh> {
    p.check_constraints()?;
    LineMesh::from_pieces(&p.pieces(), max_spacing)
}

/// Periodic operator `-u'' + K V u` on a toy mesh.
pub fn toy_operator(mesh: &LineMesh, k: f64) -> Result<DiscreteOperator> {
    assemble_mesh(Mesh::Line(mesh.clone()), k, Boundary::Periodic, None)
}

/// Equivalent forms of a one-well subsystem.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SubsystemForm {
    /// The other well filled in, periodic on `(0, 1)`.
    Periodic,
    /// Well moved to the centre, periodic on `(0, 1)`.
    Shifted,
    /// Left half of the shifted form, Neumann on `(0, 1/2)`.
    Half,
}

/// `(length, V)` pieces of subsystem `which` in the given form. The
/// shifted forms carry a node at `x = 1/2`.
pub fn subsystem_pieces(p: &ToyModelParams, which: u8, form: SubsystemForm) -> Result<Vec<(f64, f64)>> {
    let x = p.breakpoints();
    let pieces = match (which, form) {
        (1, SubsystemForm::Periodic) => vec![(x[0], 1.0), (p.l1, 0.0), (1.0 - x[1], 1.0)],
        (2, SubsystemForm::Periodic) => vec![
            (x[2], 1.0),
            (p.l3, 0.0),
            (p.l4, 1.0),
            (p.l3, 0.0),
            (1.0 - x[5], 1.0),
        ],
        (1, _) => {
            let outer = (1.0 - p.l1) / 2.0;
            vec![(outer, 1.0), (p.l1 / 2.0, 0.0), (p.l1 / 2.0, 0.0), (outer, 1.0)]
        }
        (2, _) => {
            let outer = (1.0 - p.l4 - 2.0 * p.l3) / 2.0;
            vec![
                (outer, 1.0),
                (p.l3, 0.0),
                (p.l4 / 2.0, 1.0),
                (p.l4 / 2.0, 1.0),
                (p.l3, 0.0),
                (outer, 1.0),
            ]
        }
        _ => return Err(Error::Usage(format!("subsystem index must be 1 or 2, got {which}"))),
    };
    Ok(match form {
        SubsystemForm::Half => pieces[..pieces.len() / 2].to_vec(),
        _ => pieces,
    })
}

/// First finite-difference eigenvalue of a subsystem.
pub fn fd_subsystem_eigenvalue(p: &ToyModelParams, which: u8, k: f64, form: SubsystemForm, max_spacing: f64) -> Result<f64> {
    let mesh = LineMesh::from_pieces(&subsystem_pieces(p, which, form)?, max_spacing)?;
    let boundary = match form {
        SubsystemForm::Half => Boundary::from(BoundaryCondition::Neumann),
        _ => Boundary::Periodic,
    };
    let op = assemble_mesh(Mesh::Line(mesh), k, boundary, None)?;
    Ok(smallest_eigenpairs(&op, 1, SolverOptions::default())?[0].lambda)
}

fn max_in(u: &[f64], mesh: &LineMesh, [a, b]: [f64; 2]) -> f64 {
    let eps = 1e-12;
    mesh.nodes
        .iter()
        .zip(u)
        .filter(|(x, _)| **x >= a - eps && **x <= b + eps)
        .map(|(_, v)| v.abs())
        .fold(0.0, f64::max)
}

/// `max_{W1}|u| / (max_{W1}|u| + max_{W2}|u|)` for a mode on `mesh`.
pub fn relative_height(u: &[f64], mesh: &LineMesh, p: &ToyModelParams) -> Result<f64> {
    if u.len() != mesh.n_nodes() {
        return Err(Error::Usage(format!("mode has {} entries for {} nodes", u.len(), mesh.n_nodes())));
    }
    let left = max_in(u, mesh, p.w1());
    let right = max_in(u, mesh, p.w2());
    if left + right == 0.0 {
        return Err(Error::Degenerate("mode vanishes on both wells".into()));
    }
    Ok(left / (left + right))
}

/// Well (1 or 2) holding the global maximum of `|u|`, if either does.
pub fn argmax_well(u: &[f64], mesh: &LineMesh, p: &ToyModelParams) -> Option<u8> {
    let (i, _) = u
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))?;
    let x = mesh.nodes[i];
    let inside = |[a, b]: [f64; 2]| x >= a - 1e-12 && x <= b + 1e-12;
    if inside(p.w1()) {
        Some(1)
    } else if inside(p.w2()) {
        Some(2)
    } else {
        None
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepPoint {
    pub k: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    /// Relative height of the left peak of the first mode.
    pub f: f64,
}

/// First two eigenvalues and `F` of the toy model at one `K`.
pub fn sweep_point(p: &ToyModelParams, mesh: &LineMesh, k: f64) -> Result<SweepPoint> {
    let op = toy_operator(mesh, k)?;
    let pairs = smallest_eigenpairs(&op, 2, SolverOptions::default())?;
    Ok(SweepPoint {
        k,
        lambda1: pairs[0].lambda,
        lambda2: pairs[1].lambda,
        f: relative_height(&pairs[0].u, mesh, p)?,
    })
}

/// `n` logarithmic points from `lo` to `hi`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect()
}

/// 60 logarithmic points over `[1e2, 1e6]`.
pub fn default_k_grid() -> Vec<f64> {
    log_grid(1e2, 1e6, 60)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sweep {
    pub points: Vec<SweepPoint>,
    /// Refined bracket around the crossing.
    pub bracket: [SweepPoint; 2],
    pub k_c: f64,
}

/// `K` where `F` of the first finite-difference mode crosses 0.5: the
/// first crossing on `k_grid`, refined by bisection in `log K`, then
/// linear interpolation of `F` across the final bracket.
pub fn sweep_kc(p: &ToyModelParams, k_grid: &[f64], max_spacing: f64) -> Result<Sweep> {
    let mesh = build_toy_potential(p, max_spacing)?;
    let points = k_grid
        .par_iter()
        .map(|&k| sweep_point(p, &mesh, k))
        .collect::<Result<Vec<_>>>()?;
    let side = |s: &SweepPoint| s.f >= 0.5;
    let i = points.windows(2).position(|w| side(&w[0]) != side(&w[1])).ok_or(Error::NoCrossing)?;
    let (mut lo, mut hi) = (points[i], points[i + 1]);
    for _ in 0..SWEEP_REFINE_STEPS {
        let mid = sweep_point(p, &mesh, (lo.k * hi.k).sqrt())?;
        if side(&mid) == side(&lo) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = (0.5 - lo.f) / (hi.f - lo.f);
    Ok(Sweep {
        points,
        bracket: [lo, hi],
        k_c: lo.k + t * (hi.k - lo.k),
    })
}

/// Random geometries: `L3 ~ U[0.03, 0.055]`, `L1 ~ U[1.3, 1.7] L3`,
/// `L4 ~ U[0.2, 0.4] L3`, `L2` from the unit length.
pub fn random_toy_params(count: usize, seed: u64) -> Result<Vec<ToyModelParams>> {
    let mut r = rng::seeded(seed);
    (0..count)
        .map(|_| {
            let l3 = r.random_range(0.03..=0.055);
            let l1 = r.random_range(1.3..=1.7) * l3;
            let l4 = r.random_range(0.2..=0.4) * l3;
            ToyModelParams::from_wells(l1, l3, l4)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RatioAxis {
    P1,
    P2,
    P3,
}

impl RatioAxis {
    pub fn name(&self) -> &'static str {
        match self {
            Self::P1 => "P1",
            Self::P2 => "P2",
            Self::P3 => "P3",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name.to_ascii_uppercase().as_str() {
            "P1" => Ok(Self::P1),
            "P2" => Ok(Self::P2),
            "P3" => Ok(Self::P3),
            _ => Err(Error::Parameter(format!("unknown ratio axis '{name}'"))),
        }
    }

    /// Whether the axis is sampled and regressed in `log P`.
    pub fn is_log(&self) -> bool {
        *self != Self::P2
    }

    /// Sampling window, in `log10 P` for log axes.
    pub fn window(&self) -> (f64, f64) {
        match self {
            Self::P1 => (-0.7, -0.5),
            Self::P2 => (0.38, 0.42),
            Self::P3 => (-1.1, -0.9),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalingPoint {
    pub ratio: f64,
    pub k_c: f64,
    pub lambda_c: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalingFit {
    pub axis: RatioAxis,
    pub points: Vec<ScalingPoint>,
    /// Sampled ratios whose geometry broke a constraint.
    pub skipped: Vec<(f64, String)>,
    /// Slope of `ln K_c` against `ln P` (log axes) or `P`.
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Least-squares line `y = slope x + intercept` and its `R²`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Degenerate(format!("fit needs >= 2 paired points, got {} and {}", x.len(), y.len())));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Degenerate("fit abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok((slope, my - slope * mx, r2))
}

/// `K_c` at `n_points` ratios drawn uniformly from the axis window (the
/// other two held at `base`), and the regression of `ln K_c`.
pub fn scaling_study(base: ShapeRatios, axis: RatioAxis, n_points: usize, seed: u64) -> Result<ScalingFit> {
    let mut r = rng::seeded(seed);
    let (lo, hi) = axis.window();
    let ratios: Vec<f64> = (0..n_points)
        .map(|_| {
            let s = r.random_range(lo..=hi);
            if axis.is_log() {
                10f64.powf(s)
            } else {
                s
            }
        })
        .collect();
    let outcomes: Vec<Result<std::result::Result<ScalingPoint, (f64, String)>>> = ratios
        .par_iter()
        .map(|&ratio| {
            let params = match base.with(axis, ratio).and_then(|s| s.to_params()) {
                Ok(p) => p,
                Err(e @ (Error::Constraint { .. } | Error::Parameter(_))) => return Ok(Err((ratio, e.to_string()))),
                Err(e) => return Err(e),
            };
            let c = solve_critical(&params)?;
            Ok(Ok(ScalingPoint {
                ratio,
                k_c: c.k_c,
                lambda_c: c.lambda_c,
            }))
        })
        .collect();
    let mut points = Vec::new();
    let mut skipped = Vec::new();
    for o in outcomes {
        match o? {
            Ok(pt) => points.push(pt),
            Err(s) => skipped.push(s),
        }
    }
    let x: Vec<f64> = points.iter().map(|pt| if axis.is_log() { pt.ratio.ln() } else { pt.ratio }).collect();
    let y: Vec<f64> = points.iter().map(|pt| pt.k_c.ln()).collect();
    let (slope, intercept, r2) = linear_fit(&x, &y)?;
    Ok(ScalingFit {
        axis,
        points,
        skipped,
        slope,
        intercept,
        r2,
    })
}

/// `K, lambda1, lambda2, F` per sweep point.
pub fn write_sweep_csv<W: Write>(out: W, points: &[SweepPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["K", "lambda1", "lambda2", "F"])?;
    for s in points {
        w.write_record([s.k, s.lambda1, s.lambda2, s.f].map(|v| format!("{v:.12e}")))?;
    }
    w.flush()?;
    Ok(())
}

/// `P, K_c, lambda_c` per scaling point.
pub fn write_scaling_csv<W: Write>(out: W, fit: &ScalingFit) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([fit.axis.name(), "K_c", "lambda_c"])?;
    for s in &fit.points {
        w.write_record([s.ratio, s.k_c, s.lambda_c].map(|v| format!("{v:.12e}")))?;
    }
    w.flush()?;
    Ok(())
}
