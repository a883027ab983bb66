//! Discrete Hamiltonian `-Δ + K V` on lines and squares.
//!
//! The discretization is vertex-centered: every mesh node owns a control
//! volume (half the adjacent segments in 1D, a quarter of each adjacent
//! square in 2D). This gives a symmetric stiffness matrix `S` and a
//! diagonal lumped mass `M`, and the finite-difference operator is
//! `H = M⁻¹ S`. On a uniform mesh `H` is the usual 3/5-point stencil with
//! the potential at a node averaged over the cells touching it; at a
//! Neumann side the row equals the mirror (ghost-node) stencil, so mirror
//! reflections of a Neumann problem reproduce it exactly.
//!
//! Node vectors always cover every mesh node. Dirichlet and pinned nodes
//! are eliminated from `S` and read as zero.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::io::Write;

use crate::error::{Error, Result};
use crate::potential::{GridSpec, PotentialField};
use crate::sparse::CsrMatrix;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BoundaryCondition {
    Dirichlet,
    Neumann,
    /// `∂u/∂n + h u = 0` with constant `h >= 0`.
    Robin { h: f64 },
    /// 1D only.
    Periodic,
}

impl BoundaryCondition {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Robin { h } if !(h >= 0.0 && h.is_finite()) => {
                Err(Error::Parameter(format!("robin h must be finite and >= 0, got {h}")))
            }
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Self::Dirichlet => "dirichlet".into(),
            Self::Neumann => "neumann".into(),
            Self::Robin { h } => format!("robin({h})"),
            Self::Periodic => "periodic".into(),
        }
    }
}

/// Condition on one side of the domain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SideCondition {
    Dirichlet,
    Neumann,
    Robin(f64),
}

/// Boundary treatment, possibly different per side (`x_lo, x_hi, y_lo,
/// y_hi`; the `y` entries are ignored in 1D).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Boundary {
    Periodic,
    Sides([SideCondition; 4]),
}

impl From<BoundaryCondition> for Boundary {
    fn from(bc: BoundaryCondition) -> Self {
        let side = match bc {
            BoundaryCondition::Dirichlet => SideCondition::Dirichlet,
            BoundaryCondition::Neumann => SideCondition::Neumann,
            BoundaryCondition::Robin { h } => SideCondition::Robin(h),
            BoundaryCondition::Periodic => return Boundary::Periodic,
        };
        Boundary::Sides([side; 4])
    }
}

impl Boundary {
    /// The uniform condition this boundary represents, if any.
    pub fn uniform(&self, dim: usize) -> Option<BoundaryCondition> {
        match self {
            Boundary::Periodic => Some(BoundaryCondition::Periodic),
            Boundary::Sides(s) => {
                let used = &s[..2 * dim];
                if used.iter().any(|x| *x != used[0]) {
                    return None;
                }
                Some(match used[0] {
                    SideCondition::Dirichlet => BoundaryCondition::Dirichlet,
                    SideCondition::Neumann => BoundaryCondition::Neumann,
                    SideCondition::Robin(h) => BoundaryCondition::Robin { h },
                })
            }
        }
    }
}

/// Nodes of a (possibly non-uniform) 1D mesh with a constant potential on
/// each segment.
#[derive(Clone, Debug, PartialEq)]
pub struct LineMesh {
    pub nodes: Vec<f64>,
    pub segment_potential: Vec<f64>,
}

impl LineMesh {
    pub fn new(nodes: Vec<f64>, segment_potential: Vec<f64>) -> Result<Self> {
        if nodes.len() < 3 || segment_potential.len() + 1 != nodes.len() {
            return Err(Error::Parameter(format!(
                "line mesh needs >= 3 nodes and one potential per segment ({} nodes, {} values)",
                nodes.len(),
                segment_potential.len()
            )));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Parameter("line mesh nodes must increase strictly".into()));
        }
        Ok(Self {
            nodes,
            segment_potential,
        })
    }

    /// `n` equal segments on `[0, length]`, potential sampled at segment
    /// midpoints.
    pub fn uniform(n: usize, length: f64, potential: impl Fn(f64) -> f64) -> Result<Self> {
        let h = length / n as f64;
        let nodes = (0..=n).map(|i| i as f64 * h).collect();
        let pot = (0..n).map(|i| potential((i as f64 + 0.5) * h)).collect();
        Self::new(nodes, pot)
    }

    /// Consecutive pieces `(length, value)` starting at 0, each split into
    /// equal segments no longer than `max_spacing`. Piece ends are nodes.
    pub fn from_pieces(pieces: &[(f64, f64)], max_spacing: f64) -> Result<Self> {
        let mut nodes = vec![0.0];
        let mut pot = Vec::new();
        let mut x0 = 0.0;
        for &(len, v) in pieces {
            if !(len > 0.0) {
                return Err(Error::Parameter(format!("piece length {len} must be positive")));
            }
            let m = (len / max_spacing).ceil().max(1.0) as usize;
            for j in 1..=m {
                nodes.push(if j == m { x0 + len } else { x0 + len * j as f64 / m as f64 });
                pot.push(v);
            }
            x0 += len;
        }
        Self::new(nodes, pot)
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn length(&self) -> f64 {
        self.nodes[self.nodes.len() - 1] - self.nodes[0]
    }
}

/// Uniform square mesh on `[0, 1]²` with `n` nodes per axis and a constant
/// potential on each of the `(n-1)²` mesh squares.
#[derive(Clone, Debug, PartialEq)]
pub struct SquareMesh {
    pub n: usize,
    pub spacing: f64,
    pub cell_potential: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Mesh {
    Line(LineMesh),
    Square(SquareMesh),
}

impl Mesh {
    /// The finite-difference mesh of a lattice potential: `r` mesh
    /// intervals per potential cell per axis.
    pub fn from_field(field: &PotentialField) -> Self {
        let g = field.grid;
        let r = g.nodes_per_cell;
        let n = g.nodes_per_axis();
        let h = g.spacing();
        match g.dim {
            1 => Mesh::Line(LineMesh {
                nodes: (0..n).map(|i| i as f64 * h).collect(),
                segment_potential: (0..n - 1).map(|i| field.cell_values[i / r]).collect(),
            }),
            _ => {
                let m = n - 1;
                let cell_potential = (0..m * m).map(|c| field.cell((c % m) / r, (c / m) / r)).collect();
                Mesh::Square(SquareMesh {
                    n,
                    spacing: h,
                    cell_potential,
                })
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Mesh::Line(_) => 1,
            Mesh::Square(_) => 2,
        }
    }

    /// Node grid shape `[nx, ny]`.
    pub fn shape(&self) -> [usize; 2] {
        match self {
            Mesh::Line(l) => [l.n_nodes(), 1],
            Mesh::Square(s) => [s.n, s.n],
        }
    }

    pub fn n_nodes(&self) -> usize {
        let [a, b] = self.shape();
        a * b
    }

    pub fn coords(&self, node: usize) -> [f64; 2] {
        match self {
            Mesh::Line(l) => [l.nodes[node], 0.0],
            Mesh::Square(s) => [(node % s.n) as f64 * s.spacing, (node / s.n) as f64 * s.spacing],
        }
    }

    /// Sides `x_lo, x_hi, y_lo, y_hi` that a node lies on.
    pub fn node_sides(&self, node: usize) -> [bool; 4] {
        let [nx, ny] = self.shape();
        let (ix, iy) = (node % nx, node / nx);
        let two_d = self.dim() == 2;
        [ix == 0, ix + 1 == nx, two_d && iy == 0, two_d && iy + 1 == ny]
    }

    pub fn boundary_nodes(&self) -> Vec<usize> {
        (0..self.n_nodes())
            .filter(|&i| self.node_sides(i).iter().any(|&s| s))
            .collect()
    }

    /// Control-volume measure of every node (no boundary condition
    /// applied).
    pub fn node_measure(&self) -> Vec<f64> {
        match self {
            Mesh::Line(l) => {
                let mut m = vec![0.0; l.n_nodes()];
                for (e, w) in l.nodes.windows(2).enumerate() {
                    m[e] += (w[1] - w[0]) / 2.0;
                    m[e + 1] += (w[1] - w[0]) / 2.0;
                }
                m
            }
            Mesh::Square(s) => {
                let q = s.spacing * s.spacing / 4.0;
                let mut m = vec![0.0; s.n * s.n];
                for c in 0..(s.n - 1).pow(2) {
                    for node in square_corners(s.n, c) {
                        m[node] += q;
                    }
                }
                m
            }
        }
    }
}

fn square_corners(n: usize, cell: usize) -> [usize; 4] {
    let m = n - 1;
    let a = (cell / m) * n + cell % m;
    [a, a + 1, a + n, a + n + 1]
}

#[derive(Clone, Debug)]
pub struct DiscreteOperator {
    pub mesh: Mesh,
    pub k: f64,
    pub boundary: Boundary,
    /// Lattice the mesh was built from, if any.
    pub grid: Option<GridSpec>,
    stiffness: CsrMatrix,
    mass: Vec<f64>,
    active: Vec<usize>,
    node_to_active: Vec<Option<usize>>,
    fingerprint: u64,
}

/// Assembles `-Δ + K V` for a lattice potential under a uniform boundary
/// condition.
pub fn assemble(field: &PotentialField, k: f64, bc: BoundaryCondition) -> Result<DiscreteOperator> {
    bc.validate()?;
    let mut op = assemble_mesh(Mesh::from_field(field), k, bc.into(), None)?;
    op.grid = Some(field.grid);
    Ok(op)
}

/// General assembly: any mesh, per-side conditions, and optional extra
/// nodes pinned to zero (interior Dirichlet constraints).
pub fn assemble_mesh(mesh: Mesh, k: f64, boundary: Boundary, pinned: Option<&[bool]>) -> Result<DiscreteOperator> {
    if !(k >= 0.0 && k.is_finite()) {
        return Err(Error::Parameter(format!("K must be finite and >= 0, got {k}")));
    }
    if let Boundary::Sides(sides) = boundary {
        for s in sides {
            if let SideCondition::Robin(h) = s {
                BoundaryCondition::Robin { h }.validate()?;
            }
        }
    }
    if boundary == Boundary::Periodic && mesh.dim() != 1 {
        return Err(Error::Unsupported("periodic boundary is only available in 1D".into()));
    }
    let n = mesh.n_nodes();
    if let Some(p) = pinned {
        if p.len() != n {
            return Err(Error::Usage(format!("pinned mask has {} entries for {n} nodes", p.len())));
        }
    }

    // Map nodes to unknowns. Periodic meshes identify the last node with
    // the first.
    let mut is_pinned: Vec<bool> = pinned.map_or_else(|| vec![false; n], |p| p.to_vec());
    if let Boundary::Sides(sides) = boundary {
        for (node, flag) in is_pinned.iter_mut().enumerate() {
            let on = mesh.node_sides(node);
            if (0..4).any(|s| on[s] && sides[s] == SideCondition::Dirichlet) {
                *flag = true;
            }
        }
    }
    let mut node_to_active = vec![None; n];
    let mut active = Vec::new();
    let periodic_last = (boundary == Boundary::Periodic).then(|| n - 1);
    for node in 0..n {
        if is_pinned[node] || Some(node) == periodic_last {
            continue;
        }
        node_to_active[node] = Some(active.len());
        active.push(node);
    }
    if let Some(last) = periodic_last {
        node_to_active[last] = if is_pinned[last] { None } else { node_to_active[0] };
    }
    if active.is_empty() {
        return Err(Error::Parameter("every node is pinned".into()));
    }

    let na = active.len();
    let mut t: Vec<(usize, usize, f64)> = Vec::new();
    let mut mass = vec![0.0; na];
    let couple = |a: usize, b: usize, w: f64, t: &mut Vec<(usize, usize, f64)>| {
        let (ia, ib) = (node_to_active[a], node_to_active[b]);
        if let Some(i) = ia {
            t.push((i, i, w));
        }
        if let Some(j) = ib {
            t.push((j, j, w));
        }
        if let (Some(i), Some(j)) = (ia, ib) {
            t.push((i, j, -w));
            t.push((j, i, -w));
        }
    };
    let add_diag = |node: usize, value: f64, t: &mut Vec<(usize, usize, f64)>, mass: &mut [f64], m: f64| {
        if let Some(i) = node_to_active[node] {
            t.push((i, i, value));
            mass[i] += m;
        }
    };
    let robin = |side: usize| match boundary {
        Boundary::Sides(s) => match s[side] {
            SideCondition::Robin(h) => h,
            _ => 0.0,
        },
        Boundary::Periodic => 0.0,
    };

    match &mesh {
        Mesh::Line(l) => {
            for (e, w) in l.nodes.windows(2).enumerate() {
                let h = w[1] - w[0];
                couple(e, e + 1, 1.0 / h, &mut t);
                let half = h / 2.0;
                let kv = k * l.segment_potential[e] * half;
                add_diag(e, kv, &mut t, &mut mass, half);
                add_diag(e + 1, kv, &mut t, &mut mass, half);
            }
            add_diag(0, robin(0), &mut t, &mut mass, 0.0);
            add_diag(n - 1, robin(1), &mut t, &mut mass, 0.0);
        }
        Mesh::Square(s) => {
            let q = s.spacing * s.spacing / 4.0;
            for (c, &v) in s.cell_potential.iter().enumerate() {
                let [a, b, cc, d] = square_corners(s.n, c);
                for (x, y) in [(a, b), (cc, d), (a, cc), (b, d)] {
                    couple(x, y, 0.5, &mut t);
                }
                for node in [a, b, cc, d] {
                    add_diag(node, k * v * q, &mut t, &mut mass, q);
                }
            }
            let half_edge = s.spacing / 2.0;
            for i in 0..s.n - 1 {
                let edges = [
                    (0, i * s.n, (i + 1) * s.n),
                    (1, i * s.n + s.n - 1, (i + 1) * s.n + s.n - 1),
                    (2, i, i + 1),
                    (3, (s.n - 1) * s.n + i, (s.n - 1) * s.n + i + 1),
                ];
                for (side, x, y) in edges {
                    let hr = robin(side) * half_edge;
                    if hr != 0.0 {
                        add_diag(x, hr, &mut t, &mut mass, 0.0);
                        add_diag(y, hr, &mut t, &mut mass, 0.0);
                    }
                }
            }
        }
    }

    let stiffness = CsrMatrix::from_triplets(na, t);
    let mut hasher = DefaultHasher::new();
    k.to_bits().hash(&mut hasher);
    format!("{boundary:?}").hash(&mut hasher);
    node_to_active.hash(&mut hasher);
    for m in &mass {
        m.to_bits().hash(&mut hasher);
    }
    for (i, j, v) in stiffness.triplets() {
        (i, j, v.to_bits()).hash(&mut hasher);
    }
    Ok(DiscreteOperator {
        mesh,
        k,
        boundary,
        grid: None,
        stiffness,
        mass,
        active,
        node_to_active,
        fingerprint: hasher.finish(),
    })
}

impl DiscreteOperator {
    pub fn dim(&self) -> usize {
        self.mesh.dim()
    }

    pub fn n_nodes(&self) -> usize {
        self.node_to_active.len()
    }

    /// Number of unknowns.
    pub fn n_active(&self) -> usize {
        self.active.len()
    }

    /// Symmetric stiffness matrix `S` over the unknowns.
    pub fn stiffness(&self) -> &CsrMatrix {
        &self.stiffness
    }

    /// Lumped mass (control-volume measure) per unknown.
    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// Representative node of each unknown.
    pub fn active_nodes(&self) -> &[usize] {
        &self.active
    }

    pub fn node_index(&self, node: usize) -> Option<usize> {
        self.node_to_active[node]
    }

    /// Identifies the assembled matrix; equal for identical inputs.
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn bc(&self) -> Option<BoundaryCondition> {
        self.boundary.uniform(self.dim())
    }

    pub fn coords(&self, node: usize) -> [f64; 2] {
        self.mesh.coords(node)
    }

    pub fn to_active(&self, full: &[f64]) -> Vec<f64> {
        self.active.iter().map(|&n| full[n]).collect()
    }

    pub fn to_full(&self, x: &[f64]) -> Vec<f64> {
        self.node_to_active.iter().map(|a| a.map_or(0.0, |i| x[i])).collect()
    }

    /// Finite-difference action `H x = M⁻¹ S x` on unknowns.
    pub fn apply_active(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.stiffness.mul(x);
        for (yi, m) in y.iter_mut().zip(&self.mass) {
            *yi /= m;
        }
        y
    }

    /// Finite-difference action on a full node vector; eliminated nodes
    /// map to zero.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        self.to_full(&self.apply_active(&self.to_active(u)))
    }

    /// Dense copy of the symmetric form `M^{-1/2} S M^{-1/2}`, which has
    /// the same spectrum as `H`.
    pub fn symmetric_dense(&self) -> Vec<Vec<f64>> {
        let n = self.n_active();
        let s: Vec<f64> = self.mass.iter().map(|m| 1.0 / m.sqrt()).collect();
        let mut d = vec![vec![0.0; n]; n];
        for (i, j, v) in self.stiffness.triplets() {
            d[i][j] = v * s[i] * s[j];
        }
        d
    }

    /// `row col value` triplets of `S` followed by `mass index value` lines.
    pub fn write_triplets<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# stiffness {} x {}", self.n_active(), self.n_active())?;
        for (i, j, v) in self.stiffness.triplets() {
            writeln!(w, "{i} {j} {v:e}")?;
        }
        writeln!(w, "# lumped mass")?;
        for (i, m) in self.mass.iter().enumerate() {
            writeln!(w, "mass {i} {m:e}")?;
        }
        Ok(())
    }
}
