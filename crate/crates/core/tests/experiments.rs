use anderson_core::experiments::{
    distribution_study, estimate_probability, is_boundary_localized, is_corner_localized, is_multimodal,
    lattice_boundary_frequency, run_experiment, study_distribution, wilson_interval, write_summary_csv,
    write_trials_csv, ExperimentSpec, PredicateKind, ProbabilityEstimate, StudyPlan, Z95,
};
use anderson_core::operator::BoundaryCondition;
use anderson_core::partition::{SiteKind, SubregionPartition};
use anderson_core::potential::{DistributionSpec, GridSpec};
use anderson_core::Error;
use proptest::prelude::*;

const HALF: DistributionSpec = DistributionSpec::Bernoulli { p: 0.5 };

fn line_grid() -> GridSpec {
    GridSpec::with_default_resolution(1, 50).unwrap()
}

fn boundary_spec(k: f64, h: f64, n_trials: usize, seed: u64) -> ExperimentSpec {
    ExperimentSpec::new(line_grid(), HALF, k, BoundaryCondition::Robin { h }, n_trials, seed, PredicateKind::Boundary)
}

fn line_partition(labels: &[Option<usize>]) -> SubregionPartition {
    SubregionPartition::from_labels(SiteKind::Node, 1, [labels.len(), 1], false, labels.to_vec(), |_| 1.0).unwrap()
}

/// Two-standard-error slack for the difference of two frequencies at `n`
/// trials each.
fn slack(a: f64, b: f64, n: usize) -> f64 {
    2.0 * ((a * (1.0 - a) + b * (1.0 - b)) / n as f64).sqrt()
}

#[test]
fn boundary_predicate_examples() {
    let g = GridSpec::new(1, 4, 2).unwrap();
    let n = g.n_nodes();
    assert!(is_boundary_localized(&vec![1.0; n], &g, 0.5));
    let mut bump = vec![0.0; n];
    bump[n / 2] = 1.0;
    assert!(!is_boundary_localized(&bump, &g, 0.5));
    bump[0] = 0.5;
    assert!(!is_boundary_localized(&bump, &g, 0.5));
    bump[n - 1] = -0.51;
    assert!(is_boundary_localized(&bump, &g, 0.5));
}

#[test]
fn boundary_predicate_sees_every_edge_in_2d() {
    let g = GridSpec::new(2, 4, 2).unwrap();
    let m = g.nodes_per_axis();
    for (ix, iy) in [(3, 0), (0, 5), (m - 1, 2), (4, m - 1)] {
        let mut u = vec![0.0; m * m];
        u[m * m / 2] = 1.0;
        u[iy * m + ix] = 0.7;
        assert!(is_boundary_localized(&u, &g, 0.5), "({ix}, {iy})");
    }
}

#[test]
fn corner_predicate_examples() {
    let g = GridSpec::new(2, 4, 2).unwrap();
    let m = g.nodes_per_axis();
    assert!(is_corner_localized(&vec![1.0; m * m], &g, 0.5).unwrap());
    let mut u = vec![1.0; m * m];
    for c in [0, m - 1, m * (m - 1), m * m - 1] {
        u[c] = 0.0;
    }
    assert!(!is_corner_localized(&u, &g, 0.5).unwrap());
    u[m - 1] = 0.5;
    assert!(!is_corner_localized(&u, &g, 0.5).unwrap());
    assert!(matches!(
        is_corner_localized(&[1.0; 9], &GridSpec::new(1, 4, 2).unwrap(), 0.5),
        Err(Error::Unsupported(_))
    ));
}

#[test]
fn multimodal_predicate_examples() {
    let p = line_partition(&[Some(0), Some(0), Some(1), Some(1), Some(2), Some(2)]);
    assert!(!is_multimodal(&[1.0, 0.05, 0.09, 0.0, 0.02, 0.0], &p, 0.5).unwrap());
    assert!(is_multimodal(&[1.0, 0.05, 0.0, 0.0, 0.0, 0.9], &p, 0.5).unwrap());
    // two peaks in one region are one mode
    assert!(!is_multimodal(&[1.0, 0.9, 0.0, 0.0, 0.0, 0.0], &p, 0.5).unwrap());
    // unlabelled sites never count
    let gaps = line_partition(&[Some(0), None, None, Some(1)]);
    assert!(!is_multimodal(&[1.0, 0.9, 0.8, 0.1], &gaps, 0.5).unwrap());
    let empty = line_partition(&[None, None, None]);
    assert!(matches!(is_multimodal(&[1.0, 1.0, 1.0], &empty, 0.5), Err(Error::Usage(_))));
}

#[test]
fn wilson_interval_brackets_and_shrinks() {
    assert_eq!(wilson_interval(0, 0, Z95), (0.0, 1.0));
    let (lo, hi) = wilson_interval(0, 200, Z95);
    assert_eq!(lo, 0.0);
    assert!(hi > 0.0 && hi < 0.02);
    let (lo, hi) = wilson_interval(200, 200, Z95);
    assert!(lo > 0.98 && hi == 1.0);
    let narrow = wilson_interval(250, 1000, Z95);
    let wide = wilson_interval(25, 100, Z95);
    assert!(narrow.1 - narrow.0 < wide.1 - wide.0);
}

#[test]
fn dirichlet_boundary_never_hits() {
    let spec = ExperimentSpec::new(line_grid(), HALF, 1e4, BoundaryCondition::Dirichlet, 50, 4, PredicateKind::Boundary);
    let est = estimate_probability(&spec).unwrap();
    assert_eq!((est.n_hits, est.failures, est.n_trials), (0, 0, 50));
    assert_eq!(est.ci_lo, 0.0);
}

#[test]
fn constant_potential_neumann_always_hits() {
    let spec = ExperimentSpec::new(
        GridSpec::new(1, 10, 4).unwrap(),
        DistributionSpec::Bernoulli { p: 1.0 },
        50.0,
        BoundaryCondition::Neumann,
        5,
        0,
        PredicateKind::Boundary,
    );
    assert_eq!(estimate_probability(&spec).unwrap().n_hits, 5);
}

#[test]
fn ensembles_are_deterministic() {
    let spec = boundary_spec(1e4, 0.01, 40, 77);
    let a = run_experiment(&spec).unwrap();
    let b = run_experiment(&spec).unwrap();
    assert_eq!(a, b);
    assert!(a.records.iter().enumerate().all(|(i, r)| r.trial == i && r.seed == 77 ^ i as u64));
    let other = run_experiment(&boundary_spec(1e4, 0.01, 40, 78)).unwrap();
    assert_ne!(
        a.records.iter().map(|r| r.lambda1).collect::<Vec<_>>(),
        other.records.iter().map(|r| r.lambda1).collect::<Vec<_>>()
    );
}

#[test]
fn invalid_specs_are_rejected() {
    let mut spec = boundary_spec(1e4, 0.01, 0, 0);
    assert!(matches!(run_experiment(&spec), Err(Error::Parameter(_))));
    spec.n_trials = 5;
    spec.predicate = PredicateKind::Corner;
    assert!(matches!(run_experiment(&spec), Err(Error::Unsupported(_))));
    spec.predicate = PredicateKind::Boundary;
    spec.eigen_index = 0;
    assert!(run_experiment(&spec).is_err());
    assert!(PredicateKind::from_name("sideways").is_err());
    for kind in [PredicateKind::Boundary, PredicateKind::Corner, PredicateKind::Multimodal] {
        assert_eq!(PredicateKind::from_name(kind.name()).unwrap(), kind);
    }
}

#[test]
fn failures_are_excluded_from_the_estimate() {
    let e = ProbabilityEstimate::from_counts(30, 99, 1);
    assert_eq!(e.n_trials, 99);
    assert!((e.p_hat - 30.0 / 99.0).abs() < 1e-15);
    assert!(e.contains(e.p_hat));
}

#[test]
fn boundary_probability_falls_with_h() {
    let n = 200;
    let ps: Vec<f64> = [0.001, 0.01, 0.1, 1.0]
        .iter()
        .map(|&h| estimate_probability(&boundary_spec(1e4, h, n, 11)).unwrap().p_hat)
        .collect();
    for w in ps.windows(2) {
        assert!(w[1] <= w[0] + slack(w[0], w[1], n), "{ps:?}");
    }
    assert!(ps[3] < ps[0], "{ps:?}");
}

#[test]
fn boundary_probability_falls_with_k() {
    let n = 200;
    let ps: Vec<f64> = [1e2, 1e3, 1e4]
        .iter()
        .map(|&k| estimate_probability(&boundary_spec(k, 0.01, n, 12)).unwrap().p_hat)
        .collect();
    for w in ps.windows(2) {
        assert!(w[1] <= w[0] + slack(w[0], w[1], n), "{ps:?}");
    }
    assert!(ps[2] < ps[0], "{ps:?}");
}

#[test]
fn lattice_statistic_tracks_pde_frequency() {
    let spec = boundary_spec(5e4, 0.01, 400, 21);
    let pde = estimate_probability(&spec).unwrap();
    let lattice = lattice_boundary_frequency(&spec).unwrap();
    assert!((pde.p_hat - lattice.p_hat).abs() <= 0.05, "{pde:?} {lattice:?}");
}

#[test]
fn multimodal_hits_shrink_with_threshold() {
    let mut spec = ExperimentSpec::new(line_grid(), HALF, 3e6, BoundaryCondition::Dirichlet, 60, 5, PredicateKind::Multimodal);
    let mut runs = Vec::new();
    for thr in [0.4, 0.5, 0.6] {
        spec.threshold = thr;
        runs.push(run_experiment(&spec).unwrap());
    }
    for pair in runs.windows(2) {
        for (lo, hi) in pair[0].records.iter().zip(&pair[1].records) {
            assert!(lo.hit || !hi.hit, "trial {}", lo.trial);
        }
    }
    let hits: Vec<usize> = runs.iter().map(|r| r.estimate.n_hits).collect();
    assert!(hits[1] > 0, "{hits:?}");
}

#[test]
fn distribution_study_shapes_and_limits() {
    let plan = StudyPlan::reference(vec![0.01, 1e3], vec![1], 60, 3);
    let rows = distribution_study(&plan).unwrap();
    // uniform cannot reach std = mean with nonnegative values
    assert_eq!(rows.len(), (4 * 3 - 1) * 2);
    assert!(study_distribution("uniform", 0.5).unwrap().is_none());
    assert!(study_distribution("cauchy", 0.5).is_err());
    for r in &rows {
        assert!(r.p_c.is_none());
        if r.h < 1.0 {
            assert!(r.p_b.p_hat > 0.0, "{r:?}");
        } else {
            assert!(r.p_b.p_hat < 0.05, "{r:?}");
        }
    }
}

#[test]
fn csv_outputs_have_one_row_per_trial() {
    let result = run_experiment(&boundary_spec(1e4, 0.01, 7, 1)).unwrap();
    let mut trials = Vec::new();
    write_trials_csv(&mut trials, &result).unwrap();
    let text = String::from_utf8(trials).unwrap();
    assert_eq!(text.lines().count(), 8);
    let mut summary = Vec::new();
    write_summary_csv(&mut summary, &result).unwrap();
    let text = String::from_utf8(summary).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.contains(&result.spec.hash()));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn wilson_interval_is_inside_unit_interval(n in 1usize..5000, frac in 0.0f64..=1.0) {
        let hits = (frac * n as f64).round() as usize;
        let (lo, hi) = wilson_interval(hits, n, Z95);
        let p = hits as f64 / n as f64;
        prop_assert!(0.0 <= lo && lo <= p && p <= hi && hi <= 1.0);
    }

    #[test]
    fn spec_hash_tracks_description(seed in any::<u64>(), trials in 1usize..10_000) {
        let a = boundary_spec(1e4, 0.01, trials, seed);
        let mut b = a;
        prop_assert_eq!(a.hash(), b.hash());
        b.seed = seed.wrapping_add(1);
        prop_assert_ne!(a.hash(), b.hash());
    }
}
