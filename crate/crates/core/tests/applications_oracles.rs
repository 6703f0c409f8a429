use gbmfix::algebra::{AlgebraElement, NormMode, POSITIVITY_TOL};
use gbmfix::applications::{integral_oracle, integral_solve, stein_iterate, IntegralProblem, Kernel, SteinProblem};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Solves `X = L(X) + Q` by tabulating `L` on the matrix units `E_ij` and
/// solving the resulting `n² × n²` system with full pivoting.
fn stein_by_matrix_units(problem: &SteinProblem) -> AlgebraElement {
    let n = problem.dim();
    let mut system = DMatrix::<Complex64>::identity(n * n, n * n);
    for j in 0..n {
        for i in 0..n {
            let mut unit = DMatrix::<Complex64>::zeros(n, n);
            unit[(i, j)] = Complex64::new(1.0, 0.0);
            let image = problem.linear_part(&AlgebraElement::from_matrix(unit).unwrap());
            let col = j * n + i;
            for (row, v) in image.matrix().iter().enumerate() {
                system[(row, col)] -= *v;
            }
        }
    }
    let rhs = DVector::from_iterator(n * n, problem.q().matrix().iter().copied());
    let sol = system.full_piv_lu().solve(&rhs).expect("nonsingular for β < 1");
    AlgebraElement::from_matrix(DMatrix::from_iterator(n, n, sol.iter().copied())).unwrap()
}

fn random_hermitian(n: usize, rng: &mut ChaCha8Rng) -> AlgebraElement {
    let m = DMatrix::from_fn(n, n, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    AlgebraElement::from_matrix(m).unwrap().hermitian_part()
}

#[test]
fn stein_iteration_matches_matrix_unit_solve() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for instance in 0..20 {
        let dim = rng.gen_range(2..=6);
        let count = rng.gen_range(1..=4);
        let beta = rng.gen_range(0.1..0.49);
        let problem = SteinProblem::random(dim, count, beta, instance).unwrap();
        assert!((problem.beta() - beta).abs() < 1e-12);
        let solution = stein_iterate(&problem, None, 1e-13, 10_000).unwrap();
        let oracle = stein_by_matrix_units(&problem);
        let delta = solution.x.max_abs_diff(&oracle).unwrap();
        assert!(delta < 1e-10, "instance {instance}: delta {delta}");
        assert!(solution.residual <= 1e-13);
        assert!(oracle.is_positive(POSITIVITY_TOL).is_positive);
    }
}

#[test]
fn integral_solution_matches_closed_form() {
    // φ(t, s) = ts, g ≡ 1: x(t) = 1 + βtc with c = S1 / (1 - βS2),
    // S1 = wΣs and S2 = wΣs² over the nodes.
    let (m, beta) = (64, 0.2);
    let problem =
        IntegralProblem::from_fns(0.0, 1.0, m, 1.0, beta, |t, s| t * s, |_| 1.0, Kernel::Affine { offset: None })
            .unwrap();
    let nodes = problem.nodes();
    let w = problem.weight();
    assert_eq!(w, 1.0 / 64.0);
    let s1: f64 = w * nodes.iter().sum::<f64>();
    let s2: f64 = w * nodes.iter().map(|s| s * s).sum::<f64>();
    let c = s1 / (1.0 - beta * s2);
    let expected: Vec<f64> = nodes.iter().map(|t| 1.0 + beta * t * c).collect();

    let solution = integral_solve(&problem, None, 1e-14, 1000).unwrap();
    let iter_err = solution.x.iter().zip(&expected).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(iter_err < 1e-12, "{iter_err}");
    let dense = integral_oracle(&problem).unwrap();
    let dense_err = dense.iter().zip(&expected).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(dense_err < 1e-13, "{dense_err}");
}

#[test]
fn integral_converges_under_grid_refinement() {
    // Continuum solution: x(t) = 1 + βt · (1/2) / (1 - β/3).
    let beta = 0.2;
    let exact = |t: f64| 1.0 + beta * t * 0.5 / (1.0 - beta / 3.0);
    let mut errors = Vec::new();
    for m in [16, 32, 64, 128] {
        let problem =
            IntegralProblem::from_fns(0.0, 1.0, m, 1.0, beta, |t, s| t * s, |_| 1.0, Kernel::Affine { offset: None })
                .unwrap();
        let x = integral_solve(&problem, None, 1e-14, 1000).unwrap().x;
        let err = problem
            .nodes()
            .iter()
            .zip(&x)
            .map(|(t, v)| (v - exact(*t)).abs())
            .fold(0.0, f64::max);
        errors.push(err);
    }
    for w in errors.windows(2) {
        // First-order quadrature: halving the step roughly halves the error.
        assert!(w[1] < w[0] * 0.6, "{errors:?}");
    }
    assert!(errors[3] < 1.0 / 128.0);
}

#[test]
fn nonlinear_kernel_steps_contract() {
    let (beta, m) = (0.3, 32);
    let problem = IntegralProblem::from_fns(
        0.0,
        1.0,
        m,
        1.0,
        beta,
        |t, s| (t + s) / 2.0,
        |t| t.cos(),
        Kernel::function(move |t, s, u| beta * (t + s) / 2.0 * u.sin()),
    )
    .unwrap();
    let solution = integral_solve(&problem, None, 1e-13, 1000).unwrap();
    assert!(solution.residual < 1e-12);
    let rate = beta * problem.phi_row_bound();
    for w in solution.step_norms.windows(2) {
        assert!(w[1] <= rate * w[0] + 1e-15);
    }
}

fn stein_instance() -> impl Strategy<Value = (usize, usize, f64, u64)> {
    (1usize..=5, 0usize..=4, 0.0..0.49f64, any::<u64>())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn stein_map_contracts((dim, count, beta, seed) in stein_instance()) {
        let problem = SteinProblem::random(dim, count, beta, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let x = random_hermitian(dim, &mut rng);
        let y = random_hermitian(dim, &mut rng);
        let fx = problem.apply(&x);
        let fy = problem.apply(&y);
        let lhs = (&fx - &fy).norm(NormMode::Spectral);
        let rhs = problem.beta() * (&x - &y).norm(NormMode::Spectral);
        prop_assert!(lhs <= rhs * (1.0 + 1e-12) + 1e-15);
        prop_assert!(fx.is_hermitian(1e-12));
    }

    #[test]
    fn stein_solution_is_positive_with_shrinking_steps((dim, count, beta, seed) in stein_instance()) {
        let problem = SteinProblem::random(dim, count, beta, seed).unwrap();
        let solution = stein_iterate(&problem, None, 1e-12, 10_000).unwrap();
        prop_assert!(solution.x.is_hermitian(1e-12));
        // X = Q + (positive terms) dominates Q.
        let gap = &solution.x - problem.q();
        prop_assert!(gap.is_positive(1e-9).is_positive);
        for w in solution.step_norms.windows(2) {
            prop_assert!(w[1] <= problem.beta() * w[0] * (1.0 + 1e-9) + 1e-15);
        }
        for f in &solution.contraction_factors {
            prop_assert!(*f <= problem.beta() * (1.0 + 1e-9));
        }
    }

    #[test]
    fn integral_residuals_decrease(beta in 0.01..0.7f64, m in 2usize..40, g0 in -2.0..2.0f64) {
        let problem = IntegralProblem::from_fns(
            0.0, 1.0, m, 1.0, beta,
            |t, s| t * s,
            move |t| g0 + t,
            Kernel::Affine { offset: None },
        ).unwrap();
        let solution = integral_solve(&problem, None, 1e-13, 10_000).unwrap();
        let rate = beta * problem.phi_row_bound();
        let scale = solution.x.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        for w in solution.step_norms.windows(2) {
            prop_assert!(w[1] <= rate * w[0] + 1e-15 * scale);
        }
        prop_assert!(solution.residual <= 1e-13);
    }
}
