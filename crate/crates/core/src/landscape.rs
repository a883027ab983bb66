//! Localization landscape `w` solving `(-Δ + K V) w = 1`, its valley
//! partition, the Filoche-Mayboroda bound `|u| <= |λ| w`, and extended
//! subregions of zero-potential components.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::operator::{assemble, assemble_mesh, Boundary, BoundaryCondition, DiscreteOperator, Mesh, SideCondition};
use crate::partition::{site_neighbours, Region, SiteKind, SubregionPartition};
use crate::potential::PotentialField;
use crate::solver::{smallest_eigenpairs, EigenPair, LinearSolver, SolverOptions};

#[derive(Clone, Debug)]
pub struct Landscape {
    pub w: Vec<f64>,
    pub k: f64,
    pub boundary: Boundary,
    pub mesh: Mesh,
    /// Fingerprint of the operator `w` was computed with.
    pub fingerprint: u64,
}

impl Landscape {
    pub fn dim(&self) -> usize {
        self.mesh.dim()
    }

    pub fn max(&self) -> f64 {
        self.w.iter().copied().fold(f64::MIN, f64::max)
    }
}

pub fn compute_landscape(field: &PotentialField, k: f64, bc: BoundaryCondition, tol: f64) -> Result<Landscape> {
    landscape_of(&assemble(field, k, bc)?, tol)
}

/// Landscape of an assembled operator.
pub fn landscape_of(op: &DiscreteOperator, tol: f64) -> Result<Landscape> {
    let ones = vec![1.0; op.n_nodes()];
    let w = LinearSolver::new(op)?.solve(&ones, tol)?;
    let top = w.iter().copied().fold(0.0f64, f64::max);
    if let Some((i, v)) = w.iter().enumerate().find(|(_, v)| **v < -tol * top.max(1e-300)) {
        return Err(Error::Domain(format!("landscape is negative ({v:e}) at node {i}")));
    }
    Ok(Landscape {
        w,
        k: op.k,
        boundary: op.boundary,
        mesh: op.mesh.clone(),
        fingerprint: op.fingerprint(),
    })
}

/// Landscape values rounded to a relative resolution of `1e-12` of the
/// maximum. Differences below that are rounding noise (for example the
/// flat `1/K` level deep inside a `V = 1` block) and must not create
/// spurious extrema.
fn quantized(w: &[f64]) -> Vec<i64> {
    let top = w.iter().copied().fold(0.0f64, |a, v| a.max(v.abs()));
    if top == 0.0 {
        return vec![0; w.len()];
    }
    let q = top * 1e-12;
    w.iter().map(|v| (v / q).round() as i64).collect()
}

/// Partition of the mesh nodes by valley lines of `w`.
///
/// 1D: the line is cut at every strict interior local minimum (the middle
/// node of a minimal plateau); the cut node joins the neighbour side with
/// larger `w`. 2D: watershed by flooding from the regional maxima, highest
/// `w` first, ties by node index; every node joins the labeled neighbour
/// of largest `w`, so ridge nodes go to the higher side.
pub fn valley_partition(ls: &Landscape) -> Result<SubregionPartition> {
    let shape = ls.mesh.shape();
    let w = quantized(&ls.w);
    let labels = match ls.dim() {
        1 => valley_labels_1d(&w),
        _ => watershed_labels(&w, shape),
    };
    let measure = ls.mesh.node_measure();
    SubregionPartition::from_labels(SiteKind::Node, ls.dim(), shape, false, labels, |i| measure[i])
}

fn valley_labels_1d(w: &[i64]) -> Vec<Option<usize>> {
    let n = w.len();
    let mut labels = vec![Some(0); n];
    let mut label = 0;
    let mut i = 0;
    let mut pending_from = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && w[j + 1] == w[i] {
            j += 1;
        }
        if i > 0 && j + 1 < n && w[i - 1] > w[i] && w[j + 1] > w[i] {
            let cut = (i + j) / 2;
            let cut_left = w[cut - 1] >= w[cut + 1];
            let (left_end, right_start) = if cut_left { (cut + 1, cut + 1) } else { (cut, cut) };
            for l in labels.iter_mut().take(left_end).skip(pending_from) {
                *l = Some(label);
            }
            label += 1;
            pending_from = right_start;
        }
        i = j + 1;
    }
    for l in labels.iter_mut().skip(pending_from) {
        *l = Some(label);
    }
    labels
}

fn watershed_labels(w: &[i64], shape: [usize; 2]) -> Vec<Option<usize>> {
    let n = w.len();
    let nbrs = |i: usize| site_neighbours(shape, 2, false, i);
    let mut labels: Vec<Option<usize>> = vec![None; n];

    for (label, plateau) in regional_maxima(w, shape, 2).into_iter().enumerate() {
        for s in plateau {
            labels[s] = Some(label);
        }
    }

    let mut queued = labels.iter().map(|l| l.is_some()).collect::<Vec<_>>();
    let mut heap = BinaryHeap::new();
    for i in 0..n {
        if labels[i].is_some() {
            for nb in nbrs(i) {
                if !queued[nb] {
                    queued[nb] = true;
                    heap.push((w[nb], Reverse(nb)));
                }
            }
        }
    }
    while let Some((_, Reverse(i))) = heap.pop() {
        let mut best: Option<(i64, Reverse<usize>, usize)> = None;
        for nb in nbrs(i) {
            if let Some(l) = labels[nb] {
                let key = (w[nb], Reverse(nb), l);
                if best.is_none_or(|b| (key.0, key.1) > (b.0, b.1)) {
                    best = Some(key);
                }
            }
        }
        labels[i] = best.map(|b| b.2);
        for nb in nbrs(i) {
            if !queued[nb] {
                queued[nb] = true;
                heap.push((w[nb], Reverse(nb)));
            }
        }
    }
    labels
}

/// Equal-valued connected plateaus with no higher neighbour, in order of
/// their smallest node.
fn regional_maxima(w: &[i64], shape: [usize; 2], dim: usize) -> Vec<Vec<usize>> {
    let mut seen = vec![false; w.len()];
    let mut out = Vec::new();
    for start in 0..w.len() {
        if seen[start] {
            continue;
        }
        let mut plateau = vec![start];
        seen[start] = true;
        let mut is_max = true;
        let mut k = 0;
        while k < plateau.len() {
            let s = plateau[k];
            for nb in site_neighbours(shape, dim, false, s) {
                if w[nb] > w[s] {
                    is_max = false;
                } else if w[nb] == w[s] && !seen[nb] {
                    seen[nb] = true;
                    plateau.push(nb);
                }
            }
            k += 1;
        }
        if is_max {
            out.push(plateau);
        }
    }
    out
}

/// Nodes at regional maxima of `w` (the smallest index of each plateau).
pub fn landscape_peaks(ls: &Landscape) -> Vec<usize> {
    regional_maxima(&quantized(&ls.w), ls.mesh.shape(), ls.dim())
        .into_iter()
        .map(|p| p[0])
        .collect()
}

/// `max_x (|u(x)| - |λ| w(x))`; non-positive when the bound holds.
pub fn check_fm_inequality(pair: &EigenPair, ls: &Landscape) -> Result<f64> {
    if pair.fingerprint != ls.fingerprint || pair.u.len() != ls.w.len() {
        return Err(Error::Usage("eigenpair and landscape come from different operators".into()));
    }
    Ok(pair
        .u
        .iter()
        .zip(&ls.w)
        .map(|(u, w)| u.abs() - pair.lambda.abs() * w)
        .fold(f64::MIN, f64::max))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExtendedSubregion {
    pub region: usize,
    /// 1, 2 or 4: one doubling per axis along which the region meets a
    /// reflecting (Neumann or Robin) side.
    pub factor: u32,
    pub measure: f64,
}

fn reflecting(side: SideCondition) -> bool {
    matches!(side, SideCondition::Neumann | SideCondition::Robin(_))
}

/// Mirror extension of a region across the reflecting sides it touches.
pub fn extend_subregion(region: &Region, partition: &SubregionPartition, boundary: Boundary) -> ExtendedSubregion {
    let factor = match boundary {
        Boundary::Periodic => 1,
        Boundary::Sides(sides) => (0..partition.dim)
            .filter(|&axis| (0..2).any(|s| region.touches[2 * axis + s] && reflecting(sides[2 * axis + s])))
            .fold(1, |f, _| f * 2),
    };
    ExtendedSubregion {
        region: region.id,
        factor,
        measure: factor as f64 * region.measure,
    }
}

/// Dirichlet eigenvalue `(π / (f L))²` of an extended 1D region.
pub fn extended_eigenvalue_1d(ext: &ExtendedSubregion) -> f64 {
    (std::f64::consts::PI / ext.measure).powi(2)
}

/// First eigenvalue of `-Δ` on the closure of a set of potential cells,
/// with `u = 0` where the set borders other cells and the domain's own
/// condition on the outer boundary. Under a reflecting outer condition this
/// equals the Dirichlet eigenvalue of the mirror-extended region.
pub fn local_eigenvalue(field: &PotentialField, cells: &[usize], bc: BoundaryCondition) -> Result<f64> {
    let g = field.grid;
    let r = g.nodes_per_cell;
    let n = g.nodes_per_axis();
    let nc = g.cells_per_side;
    let mut in_set = vec![false; g.n_cells()];
    for &c in cells {
        in_set[c] = true;
    }
    let n_nodes = g.n_nodes();
    let mut pinned = vec![false; n_nodes];
    for (node, pin) in pinned.iter_mut().enumerate() {
        let (ix, iy) = (node % n, node / n);
        // cells touching this node
        let span = |i: usize| {
            let lo = if i % r == 0 && i > 0 { i / r - 1 } else { (i / r).min(nc - 1) };
            let hi = (i / r).min(nc - 1);
            lo..=hi
        };
        let ys = if g.dim == 2 { span(iy) } else { 0..=0 };
        for cy in ys {
            for cx in span(ix) {
                if !in_set[cy * nc + cx] {
                    *pin = true;
                }
            }
        }
    }
    let op = assemble_mesh(Mesh::from_field(field), 0.0, bc.into(), Some(&pinned))?;
    Ok(smallest_eigenpairs(&op, 1, SolverOptions::default())?[0].lambda)
}

/// `w` at the probe nodes for each `K`.
pub fn limit_sweep(field: &PotentialField, bc: BoundaryCondition, ks: &[f64], probes: &[usize], tol: f64) -> Result<Vec<Vec<f64>>> {
    ks.iter()
        .map(|&k| {
            let ls = compute_landscape(field, k, bc, tol)?;
            Ok(probes.iter().map(|&p| ls.w[p]).collect())
        })
        .collect()
}

/// Mesh nodes at the centres of `V = value` cells (`r` even) or the node
/// just below the centre.
pub fn cell_center_nodes(field: &PotentialField, value: f64) -> Vec<usize> {
    let g = field.grid;
    let (r, n, nc) = (g.nodes_per_cell, g.nodes_per_axis(), g.cells_per_side);
    (0..g.n_cells())
        .filter(|&c| field.cell_values[c] == value)
        .map(|c| {
            let (cx, cy) = (c % nc, c / nc);
            let ix = cx * r + r / 2;
            if g.dim == 2 {
                (cy * r + r / 2) * n + ix
            } else {
                ix
            }
        })
        .collect()
}

/// Potential cell containing a mesh node (the lower/left cell for nodes on
/// a cell interface).
pub fn node_cell(field: &PotentialField, node: usize) -> usize {
    let g = field.grid;
    let (r, n, nc) = (g.nodes_per_cell, g.nodes_per_axis(), g.cells_per_side);
    let cx = ((node % n) / r).min(nc - 1);
    if g.dim == 2 {
        let cy = ((node / n) / r).min(nc - 1);
        cy * nc + cx
    } else {
        cx
    }
}
