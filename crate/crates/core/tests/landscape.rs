use std::f64::consts::PI;

use anderson_core::landscape::{
    cell_center_nodes, check_fm_inequality, compute_landscape, extend_subregion, extended_eigenvalue_1d, landscape_of,
    landscape_peaks, limit_sweep, local_eigenvalue, node_cell, valley_partition,
};
use anderson_core::operator::{assemble, Boundary, BoundaryCondition};
use anderson_core::partition::{SiteKind, SubregionPartition};
use anderson_core::potential::{sample_potential, zero_components, DistributionSpec, GridSpec, PotentialField};
use anderson_core::solver::{smallest_eigenpairs, SolverOptions};
use anderson_core::Error;
use proptest::prelude::*;

const TOL: f64 = 1e-10;

fn bernoulli(dim: usize, n: usize, p: f64, seed: u64) -> PotentialField {
    sample_potential(GridSpec::with_default_resolution(dim, n).unwrap(), DistributionSpec::Bernoulli { p }, seed).unwrap()
}

#[test]
fn constant_landscapes() {
    let ones = PotentialField::constant(GridSpec::new(2, 8, 4).unwrap(), 1.0).unwrap();
    let ls = compute_landscape(&ones, 123.0, BoundaryCondition::Neumann, TOL).unwrap();
    assert!(ls.w.iter().all(|w| (w - 1.0 / 123.0).abs() < 1e-10));

    let zeros = PotentialField::constant(GridSpec::new(1, 25, 8).unwrap(), 0.0).unwrap();
    let ls = compute_landscape(&zeros, 1e4, BoundaryCondition::Dirichlet, TOL).unwrap();
    for (i, w) in ls.w.iter().enumerate() {
        let x = ls.mesh.coords(i)[0];
        assert!((w - x * (1.0 - x) / 2.0).abs() < 1e-4);
    }
}

#[test]
fn uniform_potential_peaks_predict_modes() {
    // 1D, N = 30, K = 8000, uniform potential, Neumann.
    for seed in [1, 2, 3] {
        let grid = GridSpec::with_default_resolution(1, 30).unwrap();
        let field = sample_potential(grid, DistributionSpec::Uniform { a: 0.0, b: 1.0 }, seed).unwrap();
        let op = assemble(&field, 8000.0, BoundaryCondition::Neumann).unwrap();
        let ls = landscape_of(&op, TOL).unwrap();
        let peak_cells: Vec<usize> = landscape_peaks(&ls).iter().map(|&n| node_cell(&field, n)).collect();
        let pairs = smallest_eigenpairs(&op, 4, SolverOptions::default()).unwrap();
        for (j, p) in pairs.iter().enumerate() {
            let arg = p.u.iter().position(|&v| v == 1.0).unwrap();
            let cell = node_cell(&field, arg);
            assert!(
                peak_cells.iter().any(|&c| c.abs_diff(cell) <= 1),
                "seed {seed} mode {j}: argmax cell {cell} not at a peak {peak_cells:?}"
            );
            assert!(check_fm_inequality(p, &ls).unwrap() <= 1e-6);
        }
    }
}

#[test]
fn fm_inequality_equality_case_and_provenance() {
    let ones = PotentialField::constant(GridSpec::new(1, 10, 8).unwrap(), 1.0).unwrap();
    let op = assemble(&ones, 50.0, BoundaryCondition::Neumann).unwrap();
    let ls = landscape_of(&op, TOL).unwrap();
    let pair = &smallest_eigenpairs(&op, 1, SolverOptions::default()).unwrap()[0];
    assert!(check_fm_inequality(pair, &ls).unwrap().abs() < 1e-10);

    let other = landscape_of(&assemble(&ones, 51.0, BoundaryCondition::Neumann).unwrap(), TOL).unwrap();
    assert!(matches!(check_fm_inequality(pair, &other), Err(Error::Usage(_))));
}

#[test]
fn fm_inequality_random_bernoulli_sweep() {
    let mut worst = f64::MIN;
    for seed in 0..100 {
        let field = bernoulli(1, 30, 0.5, seed);
        let op = assemble(&field, 8000.0, BoundaryCondition::Neumann).unwrap();
        let ls = landscape_of(&op, TOL).unwrap();
        for p in smallest_eigenpairs(&op, 4, SolverOptions::default()).unwrap() {
            worst = worst.max(check_fm_inequality(&p, &ls).unwrap());
        }
    }
    assert!(worst <= 1e-6, "{worst}");
}

#[test]
fn large_k_valleys_separate_zero_components() {
    for seed in 0..3 {
        let field = bernoulli(2, 20, 0.8, seed);
        let ls = compute_landscape(&field, 1e6, BoundaryCondition::Neumann, TOL).unwrap();
        let valleys = valley_partition(&ls).unwrap();
        let comps = zero_components(&field).unwrap();
        assert!(mixed_regions(&field, &valleys, &comps).is_empty(), "seed {seed}");
    }
}

/// Regions whose zero cells (via their centre nodes) belong to more than
/// one zero component.
fn mixed_regions(field: &PotentialField, valleys: &SubregionPartition, comps: &SubregionPartition) -> Vec<usize> {
    let centres = cell_center_nodes(field, 0.0);
    let zero_cells: Vec<usize> = (0..field.cell_values.len()).filter(|&c| field.cell_values[c] == 0.0).collect();
    let mut seen: Vec<Option<usize>> = vec![None; valleys.len()];
    let mut bad = Vec::new();
    for (&cell, &node) in zero_cells.iter().zip(&centres) {
        let region = valleys.label(node).unwrap();
        let comp = comps.label(cell).unwrap();
        match seen[region] {
            None => seen[region] = Some(comp),
            Some(c) if c != comp => bad.push(region),
            _ => {}
        }
    }
    bad
}

#[test]
fn valley_partitions_are_connected_and_deterministic() {
    let field = bernoulli(2, 12, 0.6, 4);
    let ls = compute_landscape(&field, 5e3, BoundaryCondition::Robin { h: 0.1 }, TOL).unwrap();
    let a = valley_partition(&ls).unwrap();
    let b = valley_partition(&ls).unwrap();
    assert_eq!(a, b);
    assert!(a.labels.iter().all(|l| l.is_some()));
    assert!((0..a.len()).all(|r| a.is_connected(r)));
}

#[test]
fn extension_factors() {
    // 1D: runs [0,0 | 1 | 0 | 1,1 | 0,0,0]
    let field = PotentialField::new(
        GridSpec::new(1, 9, 8).unwrap(),
        vec![0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0],
    )
    .unwrap();
    let comps = zero_components(&field).unwrap();
    let neumann = Boundary::from(BoundaryCondition::Neumann);
    let f: Vec<u32> = comps.regions.iter().map(|r| extend_subregion(r, &comps, neumann).factor).collect();
    assert_eq!(f, vec![2, 1, 2]);
    let first = extend_subregion(&comps.regions[0], &comps, neumann);
    assert!((first.measure - 2.0 * 2.0 / 9.0).abs() < 1e-14);
    let dir = Boundary::from(BoundaryCondition::Dirichlet);
    assert!(comps.regions.iter().all(|r| extend_subregion(r, &comps, dir).factor == 1));

    // 2D corner, edge and interior cells of a 3x3 lattice.
    let labels = vec![Some(0), Some(1), None, None, Some(2), None, None, None, None];
    let p = SubregionPartition::from_labels(SiteKind::Cell, 2, [3, 3], false, labels, |_| 1.0 / 9.0).unwrap();
    let f: Vec<u32> = p.regions.iter().map(|r| extend_subregion(r, &p, neumann).factor).collect();
    assert_eq!(f, vec![4, 2, 1]);
}

#[test]
fn mirror_equivalence_for_boundary_run() {
    // zero run of 4 cells touching x = 0, the rest V = 1
    let n = 20;
    let mut v = vec![1.0; n];
    v[..4].fill(0.0);
    let field = PotentialField::new(GridSpec::new(1, n, 16).unwrap(), v).unwrap();
    let comps = zero_components(&field).unwrap();
    let ext = extend_subregion(&comps.regions[0], &comps, BoundaryCondition::Neumann.into());
    let l = 4.0 / n as f64;
    let quarter_wave = (PI / (2.0 * l)).powi(2);
    let mixed = local_eigenvalue(&field, &comps.regions[0].sites, BoundaryCondition::Neumann).unwrap();
    assert!((extended_eigenvalue_1d(&ext) / quarter_wave - 1.0).abs() < 1e-12);
    assert!((mixed / quarter_wave - 1.0).abs() < 0.01, "{mixed} vs {quarter_wave}");
}

#[test]
fn limit_sweep_decreases_at_v1_probes() {
    let ones = PotentialField::constant(GridSpec::new(1, 10, 8).unwrap(), 1.0).unwrap();
    let probes = cell_center_nodes(&ones, 1.0);
    let ks = [10.0, 100.0, 1000.0];
    let sweep = limit_sweep(&ones, BoundaryCondition::Neumann, &ks, &probes, TOL).unwrap();
    for (row, k) in sweep.iter().zip(ks) {
        assert!(row.iter().all(|w| (w - 1.0 / k).abs() < 1e-12));
    }

    let field = bernoulli(1, 100, 0.5, 17);
    let probes = cell_center_nodes(&field, 1.0);
    let sweep = limit_sweep(&field, BoundaryCondition::Neumann, &[1e3, 1e6], &probes, TOL).unwrap();
    assert!(sweep[1].iter().zip(&sweep[0]).all(|(hi, lo)| hi < lo));

    let op = assemble(&field, 1e6, BoundaryCondition::Neumann).unwrap();
    let u = &smallest_eigenpairs(&op, 1, SolverOptions::default()).unwrap()[0].u;
    assert!(probes.iter().all(|&p| u[p].abs() < 0.05));
}

#[test]
fn ground_state_sits_in_lowest_extended_component() {
    for seed in 0..12 {
        let field = bernoulli(1, 50, 0.5, 100 + seed);
        let comps = zero_components(&field).unwrap();
        let bc = BoundaryCondition::Neumann;
        let mut local: Vec<(f64, usize)> = comps
            .regions
            .iter()
            .map(|r| (extended_eigenvalue_1d(&extend_subregion(r, &comps, bc.into())), r.id))
            .collect();
        local.sort_by(|a, b| a.0.total_cmp(&b.0));
        let lowest = local[0];
        if local[1].0 <= lowest.0 * (1.0 + 1e-9) {
            // two equally long extended runs: the ground state is
            // near-degenerate and may sit in either
            continue;
        }
        let op = assemble(&field, 1e6, bc).unwrap();
        let u = &smallest_eigenpairs(&op, 1, SolverOptions::default()).unwrap()[0].u;
        let arg = u.iter().position(|&v| v == 1.0).unwrap();
        assert_eq!(comps.label(node_cell(&field, arg)), Some(lowest.1), "seed {seed}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn watershed_is_deterministic(seed in any::<u64>(), k in 10.0f64..1e5) {
        let field = bernoulli(2, 8, 0.5, seed);
        let ls = compute_landscape(&field, k, BoundaryCondition::Neumann, TOL).unwrap();
        let a = valley_partition(&ls).unwrap();
        let b = valley_partition(&ls.clone()).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.labels.iter().all(|l| l.is_some()));
    }

    #[test]
    fn landscape_is_positive(seed in any::<u64>(), k in 1.0f64..1e6) {
        let field = bernoulli(1, 20, 0.5, seed);
        let ls = compute_landscape(&field, k, BoundaryCondition::Robin { h: 1.0 }, TOL).unwrap();
        prop_assert!(ls.w.iter().all(|&w| w > 0.0));
    }
}
