use gbmfix::algebra::{AlgebraElement, OrderMode, POSITIVITY_TOL};
use gbmfix::bmetric::{
    squared_distance_plane, verify_axioms, BMetricSpace, GridFunctionMetric, RealDomain, ScalarPowerMetric,
};
use proptest::collection::vec;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn real_triples(n: usize, seed: u64) -> Vec<(f64, f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            (
                rng.gen_range(-10.0..10.0),
                rng.gen_range(-10.0..10.0),
                rng.gen_range(-10.0..10.0),
            )
        })
        .collect()
}

fn grid_triples(n: usize, m: usize, seed: u64) -> Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = || (0..m).map(|_| rng.gen_range(-5.0..5.0)).collect::<Vec<f64>>();
    (0..n).map(|_| (f(), f(), f())).collect()
}

#[test]
fn squared_distance_axioms_on_random_triples() {
    let space = squared_distance_plane(RealDomain::Real);
    let mut sample = real_triples(1000, 7);
    // Degenerate triples exercise the identity axiom.
    sample.extend([(1.5, 1.5, -2.0), (0.0, 0.0, 0.0), (-3.0, 4.0, 4.0)]);
    let report = verify_axioms(&space, &sample, 1e-9).unwrap();
    assert!(report.all_ok(), "{report:?}");
    assert_eq!(report.checked_pairs, 1003);
    assert!(report.worst_triangle_slack >= -1e-9);
}

#[test]
fn grid_metric_axioms_for_several_exponents() {
    for p in [1.0, 2.0, 3.0] {
        let space = GridFunctionMetric::new(8, p).unwrap();
        let sample = grid_triples(1000, 8, p as u64);
        let report = verify_axioms(&space, &sample, 1e-9).unwrap();
        assert!(report.all_ok(), "p = {p}: {report:?}");
    }
}

#[test]
fn squared_distance_coefficient_is_tight() {
    // With x = -1, y = 1, z = 0: |x-y|² = 4 = 4 (|x-z|² + |z-y|²) / 2.
    let space = squared_distance_plane(RealDomain::Real);
    let report = verify_axioms(&space, &[(-1.0, 1.0, 0.0)], 1e-12).unwrap();
    assert!(report.all_ok());
    let loose = ScalarPowerMetric::new(2.0, 2, RealDomain::Real)
        .unwrap()
        .with_coefficient(AlgebraElement::scalar(2, 1.5))
        .unwrap();
    let report = verify_axioms(&loose, &[(-1.0, 1.0, 0.0)], 1e-12).unwrap();
    assert!(!report.triangle_ok);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn coefficient_dominates_unit(p in 1.0..4.0f64, dim in 1usize..=4, m in 1usize..=16) {
        let s = ScalarPowerMetric::new(p, dim, RealDomain::Real).unwrap();
        let g = GridFunctionMetric::new(m, p).unwrap();
        for a in [s.coefficient(), g.coefficient()] {
            let unit = AlgebraElement::identity(a.dim());
            prop_assert!(unit.leq(a, OrderMode::Loewner, POSITIVITY_TOL).unwrap());
        }
    }

    #[test]
    fn scalar_power_gives_scalar_matrix(p in 1.0..4.0f64, dim in 1usize..=4, x in -10.0..10.0f64, y in -10.0..10.0f64) {
        let s = ScalarPowerMetric::new(p, dim, RealDomain::Real).unwrap();
        let d = s.eval_metric(&x, &y).unwrap();
        let expected = AlgebraElement::scalar(dim, (x - y).abs().powf(p));
        prop_assert_eq!(d, expected);
    }

    #[test]
    fn grid_metric_is_sup_power(
        p in 1.0..4.0f64,
        pairs in vec((-5.0..5.0f64, -5.0..5.0f64), 1..16),
    ) {
        let (f, g): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let space = GridFunctionMetric::new(f.len(), p).unwrap();
        let d = space.eval_metric(&f, &g).unwrap();
        let sup = f.iter().zip(&g).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let expected = sup.powf(p);
        prop_assert!((d.max_abs_entry() - expected).abs() <= 1e-12 * expected.max(1.0));
        prop_assert!(d.is_positive(POSITIVITY_TOL).is_positive);
    }

    #[test]
    fn non_negative_domain_rejects_negatives(x in -10.0..-1e-9f64) {
        let s = squared_distance_plane(RealDomain::NonNegative);
        prop_assert!(!s.contains(&x));
        prop_assert!(s.eval_metric(&x, &0.0).is_err());
    }
}
