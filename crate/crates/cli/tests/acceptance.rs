//! Acceptance suite: one PASS/FAIL line per criterion.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use gbmfix::algebra::{AlgebraElement, NormMode, OrderMode, POSITIVITY_TOL};
use gbmfix::applications::{integral_oracle, integral_solve, stein_iterate, stein_oracle, SteinProblem};
use gbmfix::bmetric::{verify_axioms, BMetricSpace, GridFunctionMetric, RealDomain, ScalarPowerMetric};
use gbmfix::engine::{
    apriori_step_bound, cauchy_tail_bound, jungck_orbit, solve_coincidence, ContractionCertificate,
};
use gbmfix_cli::config::{FixedPointConfig, IntegralConfig, Problem, Scenario};
use gbmfix_cli::runner::{self, FixedPointSetup, RunOptions, SolveReport};
use gbmfix_cli::{bundled, OutputOptions};
use nalgebra::{Complex, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn scenario(name: &str) -> Scenario {
    bundled(name).unwrap_or_else(|| panic!("missing bundled scenario {name}"))
}

fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(format!("{name}.json"))
}

fn fixed_point_config(s: &Scenario) -> &FixedPointConfig {
    match &s.problem {
        Problem::FixedPoint(cfg) => cfg,
        other => panic!("{} is {}", s.name, other.kind()),
    }
}

fn integral_config(s: &Scenario) -> &IntegralConfig {
    match &s.problem {
        Problem::Integral(cfg) => cfg,
        other => panic!("{} is {}", s.name, other.kind()),
    }
}

fn real_setup(name: &str) -> FixedPointSetup<ScalarPowerMetric> {
    runner::real_setup(fixed_point_config(&scenario(name)), &RunOptions::default()).expect("valid setup")
}

fn solve(name: &str) -> SolveReport {
    runner::solve(&scenario(name), &RunOptions::default()).expect("scenario runs")
}

fn as_f64(v: &Option<Value>) -> Option<f64> {
    v.as_ref().and_then(Value::as_f64)
}

fn power_graph_example() -> Outcome {
    let setup = real_setup("example_3_2");
    let mut lambdas = Vec::new();
    for (mode, expected) in [(NormMode::Spectral, 0.25), (NormMode::Frobenius, 32f64.sqrt() / 8.0)] {
        let cert = setup.certify(mode).map_err(|e| e.to_string())?;
        let lambda = cert.constants.lambda.unwrap();
        ensure(cert.overall, || format!("{mode:?} certificate rejected"))?;
        ensure((lambda - expected).abs() < 1e-12, || format!("{mode:?} λ = {lambda}"))?;
        lambdas.push(lambda);
    }

    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = gbmfix_cli::cmd_solve(
        &scenario_path("example_3_2"),
        &RunOptions::default(),
        &OutputOptions::default(),
        &mut out,
        &mut err,
    );
    ensure(code == 0, || format!("solve exited with {code}"))?;
    let report: Value = serde_json::from_slice(&out).map_err(|e| e.to_string())?;
    let seeds = report["seeds"].as_array().ok_or("no seeds in report")?;
    let expected_seeds = [0.0, 1.0 / 6.0, 1.0 / (2.0 * 3f64.powi(5))];
    ensure(seeds.len() == 3, || format!("{} seeds", seeds.len()))?;
    let mut worst = 0.0f64;
    for (s, x0) in seeds.iter().zip(expected_seeds) {
        let seed = s["seed"].as_f64().unwrap();
        ensure((seed - x0).abs() < 1e-15, || format!("seed {seed}"))?;
        let u = s["common_fixed_point"].as_f64().ok_or_else(|| format!("seed {seed}: no common fixed point"))?;
        let residual = s["residual"].as_f64().unwrap();
        let iterations = s["iterations"].as_u64().unwrap();
        // Distance to 0 in the metric: |u|² · 1.
        ensure(u * u < 1e-12, || format!("seed {seed}: limit {u}"))?;
        ensure(residual < 1e-12, || format!("seed {seed}: residual {residual}"))?;
        ensure(iterations < 200, || format!("seed {seed}: {iterations} iterations"))?;
        worst = worst.max(residual);
    }
    Ok(format!("λ = {:.4} / {:.4}, worst residual {worst:.1e}", lambdas[0], lambdas[1]))
}

fn coincidence_negative_control() -> Outcome {
    let report = solve("remark_3_3");
    let s = &report.seeds[0];
    ensure(s.converged, || format!("not converged: {:?}", s.error))?;
    ensure(as_f64(&s.point_of_coincidence) == Some(1.0), || format!("u = {:?}", s.point_of_coincidence))?;
    ensure(as_f64(&s.coincidence_point) == Some(3.0), || format!("v = {:?}", s.coincidence_point))?;
    ensure(s.weakly_compatible == Some(false), || "reported weakly compatible".into())?;
    ensure(s.common_fixed_point.is_none(), || "reported a common fixed point".into())?;
    Ok("u = 1 at v = 3, not weakly compatible, no common fixed point".into())
}

fn kannan_example() -> Outcome {
    let setup = real_setup("example_3_6");
    let cert = setup.certify(NormMode::Spectral).map_err(|e| e.to_string())?;
    ensure(cert.overall, || "certificate rejected".into())?;
    let mut tight = 0;
    let mut min_above = f64::INFINITY;
    for e in &cert.edge_results {
        let (x, y) = e.edge;
        if x == y {
            continue;
        }
        let (lo, hi) = if x < y { (x, y) } else { (y, x) };
        let z = lo / (hi - lo);
        if lo == 2.0 && hi == 3.0 {
            ensure(e.slack == 0.0, || format!("slack {} on ({x}, {y})", e.slack))?;
            tight += 1;
        } else if z >= 3.0 - 1e-9 {
            ensure(e.slack > 0.0, || format!("slack {} on ({x}, {y})", e.slack))?;
            min_above = min_above.min(e.slack);
        }
    }
    ensure(tight == 2, || format!("edge (2, 3) seen {tight} times"))?;

    let report = solve("example_3_6");
    ensure(report.passed, || format!("solve: {:?}", report.expectation_failures))?;
    let u = as_f64(&report.seeds[0].common_fixed_point);
    ensure(u == Some(0.0), || format!("limit {u:?}"))?;

    let perturbed = real_setup("example_3_6_perturbed");
    let pc = perturbed.certify(NormMode::Spectral).map_err(|e| e.to_string())?;
    ensure(!pc.overall, || "B = 1/53 was certified".into())?;
    Ok(format!(
        "slack 0 at (2, 3), min slack for z ≥ 3 is {min_above:.3e}, 1/53 fails on {} edges",
        pc.failed_edges().count()
    ))
}

fn stein_oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_delta = 0.0f64;
    for seed in 0..20 {
        let dim = rng.gen_range(1..=8);
        let count = rng.gen_range(1..=5);
        let beta = rng.gen_range(0.05..=0.45);
        let problem = SteinProblem::random(dim, count, beta, seed).map_err(|e| e.to_string())?;
        ensure(problem.beta() <= 0.45 + 1e-12, || format!("Σ‖B‖² = {}", problem.beta()))?;
        let it = stein_iterate(&problem, None, 1e-13, 10_000).map_err(|e| e.to_string())?;
        let oracle = stein_oracle(&problem).map_err(|e| e.to_string())?;
        let delta = it.x.max_abs_diff(&oracle).unwrap();
        worst_delta = worst_delta.max(delta);
        ensure(delta < 1e-8, || format!("instance {seed}: delta {delta}"))?;
        ensure(it.x.hermitian_defect() <= 1e-10, || format!("instance {seed}: not Hermitian"))?;
        ensure(it.x.is_positive(POSITIVITY_TOL).is_positive, || format!("instance {seed}: not positive"))?;
        for f in &it.contraction_factors {
            ensure(*f <= problem.beta() + 1e-9, || format!("instance {seed}: factor {f} > {}", problem.beta()))?;
        }
    }
    Ok(format!("20 instances, worst delta {worst_delta:.1e}"))
}

fn integral_oracle_equivalence() -> Outcome {
    let demo = scenario("integral_demo");
    let cfg = integral_config(&demo);
    ensure(cfg.m == 64 && cfg.beta == 0.2 && cfg.p == 1.0, || "unexpected demo parameters".into())?;
    let problem = runner::integral_problem(cfg).map_err(|e| e.to_string())?;
    let picard = integral_solve(&problem, None, 1e-13, 1000).map_err(|e| e.to_string())?;
    let dense = integral_oracle(&problem).map_err(|e| e.to_string())?;
    let delta = picard.x.iter().zip(&dense).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ensure(delta < 1e-8, || format!("sup delta {delta}"))?;

    let constant = scenario("integral_constant");
    let problem = runner::integral_problem(integral_config(&constant)).map_err(|e| e.to_string())?;
    let x = integral_solve(&problem, None, 1e-13, 1000).map_err(|e| e.to_string())?.x;
    let off = x.iter().map(|v| (v - 1.25).abs()).fold(0.0, f64::max);
    ensure(off <= 1e-12, || format!("constant case off by {off}"))?;
    Ok(format!("sup delta {delta:.1e}, constant case within {off:.1e} of 1.25"))
}

fn check_orbit_bounds(
    setup: &FixedPointSetup<ScalarPowerMetric>,
    cert: &ContractionCertificate<f64>,
    x0: f64,
    rng: &mut ChaCha8Rng,
) -> Result<usize, String> {
    let mode = cert.norm_mode;
    let r = solve_coincidence(&setup.pair, &setup.space, &setup.graph, cert, &x0, &setup.solve_options)
        .map_err(|e| format!("seed {x0}: {e}"))?;
    let trace = &r.trace;
    let q = setup.space.distance(&trace.orbit[0], &trace.orbit[1]);
    for (n, step) in trace.step_norms.iter().enumerate() {
        let bound = apriori_step_bound(cert, &q, n).map_err(|e| e.to_string())?;
        ensure(trace.bound_values[n] == bound, || format!("seed {x0}: recorded bound differs at {n}"))?;
        ensure(*step <= bound, || format!("seed {x0}, n = {n}: step {step} > bound {bound}"))?;
    }
    let long = jungck_orbit(&setup.pair, &setup.space, &x0, 40, mode).map_err(|e| e.to_string())?;
    for _ in 0..10 {
        let n = rng.gen_range(0..30);
        let m = rng.gen_range(n + 1..=40);
        let actual = setup.space.distance(&long.orbit[n], &long.orbit[m]).norm(mode);
        let bound = cauchy_tail_bound(cert, &q, n, m).map_err(|e| e.to_string())?;
        ensure(actual <= bound, || format!("seed {x0}, (n, m) = ({n}, {m}): {actual} > {bound}"))?;
    }
    Ok(trace.step_norms.len() + 10)
}

fn bound_soundness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut checks = 0;
    for name in ["example_3_2", "example_3_6"] {
        let setup = real_setup(name);
        for &mode in &setup.norms {
            let cert = setup.certify(mode).map_err(|e| e.to_string())?;
            for &x0 in &setup.seeds {
                checks += check_orbit_bounds(&setup, &cert, x0, &mut rng)?;
            }
        }
    }
    Ok(format!("{checks} bound checks across both norm modes"))
}

fn complex_matrix(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<Complex<f64>> {
    DMatrix::from_fn(n, n, |_, _| Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
}

fn random_positive(n: usize, norm: f64, rng: &mut ChaCha8Rng) -> AlgebraElement {
    let c = AlgebraElement::from_matrix(complex_matrix(n, rng)).unwrap();
    let p = (&c * &c.involution()).hermitian_part() + AlgebraElement::scalar(n, 1e-3);
    p.scale(norm / p.norm(NormMode::Spectral))
}

fn unitary(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<Complex<f64>> {
    (complex_matrix(n, rng) + DMatrix::identity(n, n) * Complex::new(0.5, 0.0)).qr().q()
}

fn conjugated(u: &DMatrix<Complex<f64>>, diag: &[f64]) -> AlgebraElement {
    let d = DMatrix::from_diagonal(&DVector::from_iterator(diag.len(), diag.iter().map(|&x| Complex::new(x, 0.0))));
    AlgebraElement::from_matrix(u * d * u.adjoint()).unwrap().hermitian_part()
}

fn order_lemma_suite() -> Outcome {
    const TRIALS: usize = 1000;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let leq = |a: &AlgebraElement, b: &AlgebraElement| a.leq(b, OrderMode::Loewner, POSITIVITY_TOL).unwrap();
    for trial in 0..TRIALS {
        let n = rng.gen_range(1..=6);

        // Positive x: x ⪯ 1 exactly when ‖x‖ ≤ 1.
        let mut s: f64 = rng.gen_range(0.0..2.0);
        if (s - 1.0).abs() < 1e-6 {
            s = 0.5;
        }
        let x = random_positive(n, s, &mut rng);
        ensure(leq(&x, &AlgebraElement::identity(n)) == (s <= 1.0), || format!("item 1, trial {trial}"))?;

        // ‖a‖ < 1/2 gives ‖a(1 - a)⁻¹‖ < 1.
        let a = random_positive(n, rng.gen_range(0.0..0.4999), &mut rng);
        let t = a.resolvent_contraction().map_err(|e| e.to_string())?;
        ensure(t.norm(NormMode::Spectral) < 1.0, || format!("item 2, trial {trial}"))?;

        // Commuting positive elements have a positive product.
        let u = unitary(n, &mut rng);
        let d1: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..3.0)).collect();
        let d2: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..3.0)).collect();
        let (p, q) = (conjugated(&u, &d1), conjugated(&u, &d2));
        ensure((&p * &q).is_positive(POSITIVITY_TOL).is_positive, || format!("item 3, trial {trial}"))?;

        // 0 ⪯ c ⪯ b and λ < 1/2 give (1 - λ)⁻¹c ⪯ (1 - λ)⁻¹b.
        let c = random_positive(n, rng.gen_range(0.1..3.0), &mut rng);
        let b = &c + &random_positive(n, rng.gen_range(0.1..3.0), &mut rng);
        let lambda = rng.gen_range(0.0..0.5);
        let inv = (AlgebraElement::identity(n) - AlgebraElement::scalar(n, lambda))
            .inverse()
            .map_err(|e| e.to_string())?;
        ensure(leq(&(&inv * &c), &(&inv * &b)), || format!("item 4, trial {trial}"))?;
    }

    let a = AlgebraElement::from_rows(&[[3.0, 2.0], [2.0, 3.0]]).unwrap();
    let b = AlgebraElement::from_rows(&[[1.0, -2.0], [-2.0, 4.0]]).unwrap();
    let ab = &a * &b;
    ensure(ab == AlgebraElement::from_rows(&[[-1.0, 2.0], [-4.0, 8.0]]).unwrap(), || "wrong product".into())?;
    ensure(!ab.is_positive(POSITIVITY_TOL).is_positive, || "product reported positive".into())?;
    Ok(format!("{TRIALS} trials per item, counterexample non-positive"))
}

fn axiom_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let scalar = ScalarPowerMetric::new(2.0, 2, RealDomain::Real).map_err(|e| e.to_string())?;
    ensure(scalar.coefficient() == &AlgebraElement::scalar(2, 4.0), || "scalar coefficient".into())?;
    let triples: Vec<(f64, f64, f64)> = (0..1000)
        .map(|_| (rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0)))
        .collect();
    let report = verify_axioms(&scalar, &triples, 1e-9).map_err(|e| e.to_string())?;
    ensure(report.all_ok() && report.checked_pairs == 1000, || format!("scalar p = 2: {report:?}"))?;

    for p in [1.0, 2.0, 3.0] {
        let m = 8;
        let grid = GridFunctionMetric::new(m, p).map_err(|e| e.to_string())?;
        ensure(grid.coefficient() == &AlgebraElement::scalar(m, 2f64.powf(p)), || format!("grid p = {p} coefficient"))?;
        let mut f = || (0..m).map(|_| rng.gen_range(-5.0..5.0)).collect::<Vec<f64>>();
        let triples: Vec<_> = (0..1000).map(|_| (f(), f(), f())).collect();
        let report = verify_axioms(&grid, &triples, 1e-9).map_err(|e| e.to_string())?;
        ensure(report.all_ok(), || format!("grid p = {p}: {report:?}"))?;
    }
    Ok("scalar p = 2 and grid p ∈ {1, 2, 3}, 1000 triples each".into())
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome, Option<Duration>); 8] = [
        ("power-graph Banach example", power_graph_example, Some(Duration::from_secs(1))),
        ("coincidence without weak compatibility", coincidence_negative_control, Some(Duration::from_secs(1))),
        ("scaled-successor Kannan example", kannan_example, None),
        ("Stein oracle equivalence", stein_oracle_equivalence, Some(Duration::from_secs(10))),
        ("integral oracle equivalence", integral_oracle_equivalence, Some(Duration::from_secs(1))),
        ("a priori and tail bound soundness", bound_soundness, None),
        ("order lemma property suite", order_lemma_suite, Some(Duration::from_secs(30))),
        ("b-metric axiom suite", axiom_suite, None),
    ];
    let mut failed = 0;
    for (i, (name, run, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let result = match (result, limit) {
            (Ok(_), Some(l)) if elapsed > *l => Err(format!("took {elapsed:.2?}, limit {l:?}")),
            (r, _) => r,
        };
        match result {
            Ok(detail) => println!("PASS criterion {}: {name}: {detail} ({elapsed:.2?})", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {}: {name}: {why} ({elapsed:.2?})", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
