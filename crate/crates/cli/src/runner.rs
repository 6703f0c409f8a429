//! Turns scenarios into core objects, runs verification and solves, and
//! collects serializable reports.

use std::sync::Arc;

use gbmfix::algebra::{AlgebraElement, NormMode};
use gbmfix::applications::{
    integral_oracle, integral_solve, stein_iterate, stein_oracle, ApplicationError,
    IntegralProblem, Kernel, SteinProblem,
};
use gbmfix::bmetric::{
    verify_axioms, AxiomReport, BMetricSpace, GridFunctionMetric, MetricError, NormSquaredMetric,
    Point, RealDomain, ScalarPowerMetric, TableMetric,
};
use gbmfix::engine::{
    certify_banach, certify_kannan, solve_from_seeds, CertificateConstants, ContractionCertificate,
    ContractionFamily, EngineError, MappingPair, SolveOptions,
};
use gbmfix::graph::DirectedGraph;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::config::{
    AxiomSampleConfig, CertificateConfig, ConfigError, Expect, FamilyConfig, FixedPointConfig,
    GraphConfig, GridConfig, IntegralConfig, KernelConfig, KernelForm, MapConfig, PhiConfig,
    Problem, Scenario, SolverConfig, SpaceConfig, SteinConfig,
};

/// Command-line overrides. All randomness derives from `seed`.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub seed: u64,
}

impl RunOptions {
    fn solve_options(&self, cfg: &SolverConfig) -> Result<SolveOptions, ConfigError> {
        let tol = self.tol.unwrap_or(cfg.tol);
        let tol_accept = match (self.tol, cfg.tol_accept) {
            (None, Some(t)) => t,
            _ => 10.0 * tol,
        };
        let max_iter = self.max_iter.unwrap_or(cfg.max_iter);
        if !(tol.is_finite() && tol > 0.0 && tol_accept.is_finite() && tol_accept > 0.0) {
            return Err(ConfigError::invalid("tolerances must be positive and finite"));
        }
        if max_iter == 0 {
            return Err(ConfigError::invalid("max_iter must be ≥ 1"));
        }
        Ok(SolveOptions {
            tol,
            tol_accept,
            max_iter,
            horizon: cfg.horizon.max(1),
            require_cgf: cfg.require_cgf,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub n: usize,
    pub step_norm: f64,
    pub apriori_bound: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EdgeFailure {
    pub edge: (Value, Value),
    pub in_graph: bool,
    pub slack: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CertificateSummary {
    pub family: ContractionFamily,
    pub norm_mode: NormMode,
    pub b: AlgebraElement,
    pub constants: Option<CertificateConstants>,
    pub edges_checked: usize,
    pub edges_failed: usize,
    /// Smallest slack among constrained edges.
    pub min_slack: Option<f64>,
    pub overall: bool,
    pub notes: Vec<String>,
    /// Up to ten failing edges.
    pub failures: Vec<EdgeFailure>,
}

impl CertificateSummary {
    fn from_certificate<P: Serialize>(c: &ContractionCertificate<P>) -> Self {
        let failed: Vec<_> = c.failed_edges().collect();
        let min_slack = c.min_slack();
        Self {
            family: c.family,
            norm_mode: c.norm_mode,
            b: c.b.clone(),
            constants: Some(c.constants.clone()),
            edges_checked: c.edge_results.len(),
            edges_failed: failed.len(),
            min_slack: min_slack.is_finite().then_some(min_slack),
            overall: c.overall,
            notes: c.notes.clone(),
            failures: failed
                .iter()
                .take(10)
                .map(|e| EdgeFailure {
                    edge: (to_json(&e.edge.0), to_json(&e.edge.1)),
                    in_graph: e.in_graph,
                    slack: e.slack,
                })
                .collect(),
        }
    }

    fn rejected(family: ContractionFamily, norm_mode: NormMode, b: &AlgebraElement, why: String) -> Self {
        Self {
            family,
            norm_mode,
            b: b.clone(),
            constants: None,
            edges_checked: 0,
            edges_failed: 0,
            min_slack: None,
            overall: false,
            notes: vec![why],
            failures: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GateCheck {
    pub name: String,
    pub holds: bool,
    /// Advisory gates are reported but do not affect the verdict.
    pub advisory: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub scenario: String,
    pub kind: String,
    pub axioms: Option<AxiomReport>,
    pub certificates: Vec<CertificateSummary>,
    pub gates: Vec<GateCheck>,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SeedSummary {
    pub seed: Value,
    pub converged: bool,
    pub error: Option<String>,
    pub iterations: usize,
    pub coincidence_point: Option<Value>,
    pub point_of_coincidence: Option<Value>,
    pub residual: Option<f64>,
    pub weakly_compatible: Option<bool>,
    pub common_fixed_point: Option<Value>,
    pub orbit_in_cgf: Option<bool>,
    pub p1_observed: Option<bool>,
    #[serde(skip)]
    pub trace: Vec<TraceRow>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub scenario: String,
    pub kind: String,
    pub verify: VerifyReport,
    pub converged: bool,
    pub seeds: Vec<SeedSummary>,
    pub distinct_points: Vec<Value>,
    pub uniqueness_checked: Option<bool>,
    pub uniqueness_violation: Option<bool>,
    pub solution: Option<Value>,
    pub iterations: Option<usize>,
    pub residual: Option<f64>,
    pub oracle_delta: Option<f64>,
    pub hermitian_defect: Option<f64>,
    pub max_contraction_factor: Option<f64>,
    pub expectation_failures: Vec<String>,
    pub passed: bool,
    pub error: Option<String>,
    #[serde(skip)]
    pub trace: Vec<TraceRow>,
}

impl SolveReport {
    fn new(scenario: &str, verify: VerifyReport) -> Self {
        Self {
            scenario: scenario.to_string(),
            kind: verify.kind.clone(),
            verify,
            converged: false,
            seeds: Vec::new(),
            distinct_points: Vec::new(),
            uniqueness_checked: None,
            uniqueness_violation: None,
            solution: None,
            iterations: None,
            residual: None,
            oracle_delta: None,
            hermitian_defect: None,
            max_contraction_factor: None,
            expectation_failures: Vec::new(),
            passed: false,
            error: None,
            trace: Vec::new(),
        }
    }

    /// Per-seed traces for fixed-point problems, otherwise the single trace.
    pub fn traces(&self) -> Vec<&[TraceRow]> {
        if self.seeds.is_empty() {
            if self.trace.is_empty() {
                Vec::new()
            } else {
                vec![&self.trace]
            }
        } else {
            self.seeds.iter().map(|s| s.trace.as_slice()).collect()
        }
    }
}

/// Points that can round-trip through scenario JSON.
pub trait JsonPoint: Point + Serialize + DeserializeOwned {}
impl<T: Point + Serialize + DeserializeOwned> JsonPoint for T {}

fn to_json<P: Serialize>(p: &P) -> Value {
    serde_json::to_value(p).unwrap_or(Value::Null)
}

fn from_json<P: DeserializeOwned>(v: &Value, what: &str) -> Result<P, ConfigError> {
    serde_json::from_value(v.clone()).map_err(|e| ConfigError::invalid(format!("{what}: {e}")))
}

fn metric_config(e: MetricError) -> ConfigError {
    ConfigError::invalid(e.to_string())
}

fn application_config(e: ApplicationError) -> ConfigError {
    ConfigError::invalid(e.to_string())
}

fn finite(x: f64, what: &str) -> Result<f64, ConfigError> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(ConfigError::invalid(format!("{what} must be finite")))
    }
}

/// Everything needed to certify and solve a fixed-point scenario.
pub struct FixedPointSetup<S: BMetricSpace> {
    pub space: S,
    pub graph: DirectedGraph<S::Point>,
    pub pair: MappingPair<S::Point>,
    pub seeds: Vec<S::Point>,
    pub family: ContractionFamily,
    pub b: AlgebraElement,
    pub norms: Vec<NormMode>,
    pub edge_sample: Vec<(S::Point, S::Point)>,
    pub solve_options: SolveOptions,
    pub axiom_triples: Vec<(S::Point, S::Point, S::Point)>,
    pub axiom_tol: f64,
}

impl<S: BMetricSpace> FixedPointSetup<S>
where
    S::Point: JsonPoint,
{
    pub fn certify(&self, mode: NormMode) -> Result<ContractionCertificate<S::Point>, EngineError> {
        match self.family {
            ContractionFamily::BanachGraph => {
                certify_banach(&self.pair, &self.space, &self.graph, &self.b, &self.edge_sample, mode)
            }
            ContractionFamily::KannanGraph => {
                certify_kannan(&self.pair, &self.space, &self.graph, &self.b, &self.edge_sample, mode)
            }
        }
    }

    pub fn verify(&self, name: &str) -> Result<VerifyReport, ConfigError> {
        let axioms = verify_axioms(&self.space, &self.axiom_triples, self.axiom_tol).map_err(metric_config)?;
        let mut certificates = Vec::new();
        for &mode in &self.norms {
            certificates.push(match self.certify(mode) {
                Ok(c) => CertificateSummary::from_certificate(&c),
                Err(EngineError::PreconditionViolation(why)) => {
                    CertificateSummary::rejected(self.family, mode, &self.b, why)
                }
                Err(EngineError::Algebra(e)) => return Err(ConfigError::invalid(format!("B: {e}"))),
                Err(e) => CertificateSummary::rejected(self.family, mode, &self.b, e.to_string()),
            });
        }
        let passed = axioms.all_ok() && certificates.iter().all(|c| c.overall);
        Ok(VerifyReport {
            scenario: name.to_string(),
            kind: "fixed_point".into(),
            axioms: Some(axioms),
            certificates,
            gates: Vec::new(),
            passed,
        })
    }

    pub fn solve(&self, name: &str, expect: &Expect) -> Result<SolveReport, ConfigError> {
        let verify = self.verify(name)?;
        let mut report = SolveReport::new(name, verify);
        if !report.verify.passed {
            report.error = Some("verification failed; not solving".into());
            check_verify_expectation(expect, &mut report);
            return Ok(report);
        }
        let cert = self
            .certify(self.norms[0])
            .map_err(|e| ConfigError::invalid(e.to_string()))?;
        let opts = &self.solve_options;
        let multi = match solve_from_seeds(&self.pair, &self.space, &self.graph, &cert, &self.seeds, opts) {
            Ok(m) => m,
            Err(e) => {
                report.error = Some(e.to_string());
                return Ok(report);
            }
        };
        for (seed, outcome) in self.seeds.iter().zip(&multi.outcomes) {
            report.seeds.push(match outcome {
                Ok(r) => SeedSummary {
                    seed: to_json(seed),
                    converged: true,
                    error: None,
                    iterations: r.iterations,
                    coincidence_point: Some(to_json(&r.coincidence_point)),
                    point_of_coincidence: Some(to_json(&r.point_of_coincidence)),
                    residual: Some(r.residual),
                    weakly_compatible: Some(r.weakly_compatible),
                    common_fixed_point: r.common_fixed_point.as_ref().map(to_json),
                    orbit_in_cgf: Some(r.orbit_in_cgf),
                    p1_observed: Some(r.p1_observed),
                    trace: r
                        .trace
                        .step_norms
                        .iter()
                        .zip(&r.trace.bound_values)
                        .enumerate()
                        .map(|(n, (&step_norm, &apriori_bound))| TraceRow {
                            n,
                            step_norm,
                            apriori_bound,
                        })
                        .collect(),
                },
                Err(e) => SeedSummary {
                    seed: to_json(seed),
                    converged: false,
                    error: Some(e.to_string()),
                    iterations: 0,
                    coincidence_point: None,
                    point_of_coincidence: None,
                    residual: None,
                    weakly_compatible: None,
                    common_fixed_point: None,
                    orbit_in_cgf: None,
                    p1_observed: None,
                    trace: Vec::new(),
                },
            });
        }
        report.distinct_points = multi.distinct_points.iter().map(to_json).collect();
        report.uniqueness_checked = Some(multi.uniqueness_checked);
        report.uniqueness_violation = Some(multi.uniqueness_violation);
        report.converged = report.seeds.iter().all(|s| s.converged);
        report.passed = report.converged && !multi.uniqueness_violation;

        let tol = expect.tol.unwrap_or(opts.tol_accept);
        let mode = self.norms[0];
        let close = |a: &S::Point, b: &S::Point| {
            self.space
                .eval_metric(a, b)
                .map(|d| d.norm(mode) <= tol)
                .unwrap_or(false)
        };
        let mut failures = Vec::new();
        check_common_expectations(expect, &report, &mut failures);
        for (seed, outcome) in self.seeds.iter().zip(&multi.outcomes) {
            let Ok(r) = outcome else { continue };
            let label = format!("seed {:?}", seed);
            if let Some(v) = &expect.common_fixed_point {
                match (v, &r.common_fixed_point) {
                    (Value::Null, None) => {}
                    (Value::Null, Some(_)) => failures.push(format!("{label}: unexpected common fixed point")),
                    (_, None) => failures.push(format!("{label}: no common fixed point")),
                    (v, Some(u)) => {
                        if !close(u, &from_json(v, "expected common_fixed_point")?) {
                            failures.push(format!("{label}: common fixed point {u:?} differs from {v}"));
                        }
                    }
                }
            }
            for (expected, got, what) in [
                (&expect.point_of_coincidence, &r.point_of_coincidence, "point of coincidence"),
                (&expect.coincidence_point, &r.coincidence_point, "coincidence point"),
            ] {
                if let Some(v) = expected {
                    if !close(got, &from_json(v, what)?) {
                        failures.push(format!("{label}: {what} {got:?} differs from {v}"));
                    }
                }
            }
            if let Some(w) = expect.weakly_compatible {
                if w != r.weakly_compatible {
                    failures.push(format!("{label}: weakly_compatible = {}", r.weakly_compatible));
                }
            }
            if let Some(max) = expect.max_residual {
                if !(r.residual < max) {
                    failures.push(format!("{label}: residual {:e} ≥ {max:e}", r.residual));
                }
            }
            if let Some(max) = expect.max_iterations {
                if r.iterations >= max {
                    failures.push(format!("{label}: {} iterations ≥ {max}", r.iterations));
                }
            }
        }
        report.expectation_failures = failures;
        Ok(report)
    }
}

fn check_verify_expectation(expect: &Expect, report: &mut SolveReport) {
    if expect.verify.unwrap_or(true) {
        report.expectation_failures.push("verification failed".into());
    }
}

fn check_common_expectations(expect: &Expect, report: &SolveReport, failures: &mut Vec<String>) {
    if let Some(c) = expect.converged {
        if c != report.converged {
            failures.push(format!("converged = {}", report.converged));
        }
    }
    if let (Some(max), Some(delta)) = (expect.oracle_delta_max, report.oracle_delta) {
        if !(delta < max) {
            failures.push(format!("oracle delta {delta:e} ≥ {max:e}"));
        }
    } else if expect.oracle_delta_max.is_some() && report.converged {
        failures.push("no oracle comparison available".into());
    }
}

fn random_reals(rng: &mut ChaCha8Rng, cfg: &AxiomSampleConfig, domain: RealDomain, count: usize) -> Vec<f64> {
    let lo = match domain {
        RealDomain::Real => cfg.lo,
        RealDomain::NonNegative => cfg.lo.max(0.0),
    };
    (0..count).map(|_| rng.gen_range(lo..=cfg.hi.max(lo))).collect()
}

fn triples<P: Clone>(points: &[P]) -> Vec<(P, P, P)> {
    points
        .chunks_exact(3)
        .map(|c| (c[0].clone(), c[1].clone(), c[2].clone()))
        .collect()
}

fn check_axiom_config(cfg: &AxiomSampleConfig) -> Result<(), ConfigError> {
    if !(cfg.lo.is_finite() && cfg.hi.is_finite() && cfg.lo <= cfg.hi) {
        return Err(ConfigError::invalid("axiom sample range must be finite with lo ≤ hi"));
    }
    if cfg.random == 0 {
        return Err(ConfigError::invalid("axiom sample must be nonempty"));
    }
    if !(cfg.tol.is_finite() && cfg.tol >= 0.0) {
        return Err(ConfigError::invalid("axiom tolerance must be ≥ 0"));
    }
    Ok(())
}

fn family(cfg: &CertificateConfig) -> ContractionFamily {
    match cfg.family {
        FamilyConfig::Banach => ContractionFamily::BanachGraph,
        FamilyConfig::Kannan => ContractionFamily::KannanGraph,
    }
}

fn norms(cfg: &CertificateConfig) -> Result<Vec<NormMode>, ConfigError> {
    if cfg.norms.is_empty() {
        Err(ConfigError::invalid("certificate.norms must be nonempty"))
    } else {
        Ok(cfg.norms.clone())
    }
}

fn explicit_graph<P: JsonPoint>(edges: &[(Value, Value)], vertices: &[Value]) -> Result<DirectedGraph<P>, ConfigError> {
    let edges = edges
        .iter()
        .map(|(a, b)| Ok((from_json(a, "graph edge")?, from_json(b, "graph edge")?)))
        .collect::<Result<Vec<(P, P)>, ConfigError>>()?;
    let vertices = vertices
        .iter()
        .map(|v| from_json(v, "graph vertex"))
        .collect::<Result<Vec<P>, _>>()?;
    Ok(DirectedGraph::from_edges(edges).with_vertices(vertices))
}

type RealMap = Arc<dyn Fn(&f64) -> f64 + Send + Sync>;

fn real_map(cfg: &MapConfig, what: &str) -> Result<RealMap, ConfigError> {
    Ok(match cfg {
        MapConfig::Identity => Arc::new(|x: &f64| *x),
        MapConfig::Affine { scale, shift } => {
            let (a, b) = (finite(*scale, what)?, finite(*shift, what)?);
            Arc::new(move |x: &f64| a * x + b)
        }
        MapConfig::AffineWithException { scale, shift, at, value } => {
            let (a, b) = (finite(*scale, what)?, finite(*shift, what)?);
            let (at, value) = (finite(*at, what)?, finite(*value, what)?);
            Arc::new(move |x: &f64| if x.same_point(&at) { value } else { a * x + b })
        }
        MapConfig::Constant { value } => {
            let c: f64 = finite(from_json(value, what)?, what)?;
            Arc::new(move |_: &f64| c)
        }
        MapConfig::Table { .. } => {
            return Err(ConfigError::invalid(format!("{what}: table maps need a custom_table space")))
        }
    })
}

/// Fixed-point setup on the real line (`scalar_power` spaces).
pub fn real_setup(
    cfg: &FixedPointConfig,
    opts: &RunOptions,
) -> Result<FixedPointSetup<ScalarPowerMetric>, ConfigError> {
    let SpaceConfig::ScalarPower { p, dim, domain, coefficient } = &cfg.space else {
        return Err(ConfigError::invalid("expected a scalar_power space"));
    };
    let mut space = ScalarPowerMetric::new(*p, *dim, *domain).map_err(metric_config)?;
    if let Some(c) = coefficient {
        space = space.with_coefficient(c.build()?).map_err(metric_config)?;
    }
    let graph = match &cfg.graph {
        GraphConfig::Edges { edges, vertices } => explicit_graph(edges, vertices)?,
        GraphConfig::ZeroToPowers { base } => {
            if !(base.is_finite() && *base > 1.0) {
                return Err(ConfigError::invalid("graph base must exceed 1"));
            }
            DirectedGraph::zero_to_powers(*base)
        }
        GraphConfig::ScaledSuccessor { base, z_min } => {
            if !(base.is_finite() && *base > 1.0 && z_min.is_finite() && *z_min > 0.0) {
                return Err(ConfigError::invalid("graph needs base > 1 and z_min > 0"));
            }
            DirectedGraph::scaled_successor(*base, *z_min)
        }
        GraphConfig::Complete => DirectedGraph::complete(),
    };
    let f = real_map(&cfg.f, "f")?;
    let pair = match &cfg.g {
        MapConfig::Identity => MappingPair::with_identity(move |x: &f64| f(x)),
        MapConfig::Affine { scale, shift } => {
            let (a, b) = (finite(*scale, "g")?, finite(*shift, "g")?);
            if a == 0.0 {
                return Err(ConfigError::invalid("g must be invertible (scale ≠ 0)"));
            }
            MappingPair::affine_g(move |x: &f64| f(x), a, b)
        }
        _ => return Err(ConfigError::invalid("g must be identity or affine on the real line")),
    };
    let seeds = cfg
        .seeds
        .iter()
        .map(|v| from_json::<f64>(v, "seed").and_then(|x| finite(x, "seed")))
        .collect::<Result<Vec<_>, _>>()?;
    if seeds.is_empty() {
        return Err(ConfigError::invalid("seeds must be nonempty"));
    }
    if let Some(s) = seeds.iter().find(|s| !space.contains(s)) {
        return Err(ConfigError::invalid(format!("seed {s} outside the space")));
    }
    check_axiom_config(&cfg.axioms)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let points = random_reals(&mut rng, &cfg.axioms, *domain, 3 * cfg.axioms.random);
    let sample = &cfg.certificate.edge_sample;
    let mut edge_sample = graph.sample_edges(sample.first, sample.random, opts.seed);
    if let GraphConfig::Complete = cfg.graph {
        let extra = random_reals(&mut rng, &cfg.axioms, *domain, 2 * (sample.first + sample.random));
        edge_sample.extend(extra.chunks_exact(2).map(|c| (c[0], c[1])));
    }
    Ok(FixedPointSetup {
        b: cfg.certificate.b.build()?,
        family: family(&cfg.certificate),
        norms: norms(&cfg.certificate)?,
        solve_options: opts.solve_options(&cfg.solver)?,
        axiom_triples: triples(&points),
        axiom_tol: cfg.axioms.tol,
        space,
        graph,
        pair,
        seeds,
        edge_sample,
    })
}

/// Fixed-point setup on a finite labelled space (`custom_table`).
pub fn table_setup(cfg: &FixedPointConfig, opts: &RunOptions) -> Result<FixedPointSetup<TableMetric>, ConfigError> {
    let SpaceConfig::CustomTable { labels, table, coefficient, tol } = &cfg.space else {
        return Err(ConfigError::invalid("expected a custom_table space"));
    };
    let space = table_space(labels, table, coefficient, *tol)?;
    let graph = match &cfg.graph {
        GraphConfig::Edges { edges, vertices } => explicit_graph(edges, vertices)?,
        GraphConfig::Complete => DirectedGraph::complete(),
        _ => return Err(ConfigError::invalid("table spaces support edges or complete graphs")),
    };
    let label_map = |m: &MapConfig, what: &str| -> Result<Arc<dyn Fn(&String) -> String + Send + Sync>, ConfigError> {
        Ok(match m {
            MapConfig::Identity => Arc::new(|x: &String| x.clone()),
            MapConfig::Constant { value } => {
                let c: String = from_json(value, what)?;
                if !labels.contains(&c) {
                    return Err(ConfigError::invalid(format!("{what}: unknown label {c}")));
                }
                Arc::new(move |_: &String| c.clone())
            }
            MapConfig::Table { map } => {
                for l in labels {
                    match map.get(l) {
                        Some(img) if labels.contains(img) => {}
                        Some(img) => return Err(ConfigError::invalid(format!("{what}: unknown label {img}"))),
                        None => return Err(ConfigError::invalid(format!("{what}: no image for {l}"))),
                    }
                }
                let map = map.clone();
                Arc::new(move |x: &String| map.get(x).cloned().unwrap_or_else(|| x.clone()))
            }
            _ => return Err(ConfigError::invalid(format!("{what}: table spaces need identity, constant or table maps"))),
        })
    };
    let f = label_map(&cfg.f, "f")?;
    let pair = match &cfg.g {
        MapConfig::Identity => MappingPair::with_identity(move |x: &String| f(x)),
        other => {
            let g = label_map(other, "g")?;
            let domain = labels.clone();
            let g_inv = g.clone();
            MappingPair::new(move |x: &String| f(x), move |x: &String| g(x), move |y: &String| {
                domain.iter().find(|l| g_inv(l) == *y).cloned()
            })
        }
    };
    let seeds = cfg
        .seeds
        .iter()
        .map(|v| from_json::<String>(v, "seed"))
        .collect::<Result<Vec<_>, _>>()?;
    if seeds.is_empty() {
        return Err(ConfigError::invalid("seeds must be nonempty"));
    }
    if let Some(s) = seeds.iter().find(|s| !labels.contains(s)) {
        return Err(ConfigError::invalid(format!("unknown seed label {s}")));
    }
    let sample = &cfg.certificate.edge_sample;
    let mut edge_sample = graph.sample_edges(sample.first, sample.random, opts.seed);
    if let GraphConfig::Complete = cfg.graph {
        for a in labels {
            for b in labels {
                edge_sample.push((a.clone(), b.clone()));
            }
        }
    }
    let mut axiom_triples = Vec::new();
    for x in labels {
        for y in labels {
            for z in labels {
                axiom_triples.push((x.clone(), y.clone(), z.clone()));
            }
        }
    }
    Ok(FixedPointSetup {
        b: cfg.certificate.b.build()?,
        family: family(&cfg.certificate),
        norms: norms(&cfg.certificate)?,
        solve_options: opts.solve_options(&cfg.solver)?,
        axiom_tol: cfg.axioms.tol,
        space,
        graph,
        pair,
        seeds,
        edge_sample,
        axiom_triples,
    })
}

fn table_space(
    labels: &[String],
    table: &[Vec<crate::config::MatrixSpec>],
    coefficient: &crate::config::MatrixSpec,
    tol: f64,
) -> Result<TableMetric, ConfigError> {
    let n = labels.len();
    if table.len() != n || table.iter().any(|r| r.len() != n) {
        return Err(ConfigError::invalid(format!("distance table must be {n}×{n}")));
    }
    let table = table
        .iter()
        .map(|r| r.iter().map(|m| m.build()).collect::<Result<Vec<_>, _>>())
        .collect::<Result<Vec<_>, _>>()?;
    let coefficient = coefficient.build()?;
    if table.iter().flatten().any(|m| m.dim() != coefficient.dim()) {
        return Err(ConfigError::invalid("table entries and coefficient differ in dimension"));
    }
    TableMetric::new(labels.to_vec(), table, coefficient, tol).map_err(metric_config)
}

fn axioms_only(scenario: &Scenario, space: &SpaceConfig, cfg: &AxiomSampleConfig, opts: &RunOptions) -> Result<VerifyReport, ConfigError> {
    check_axiom_config(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let report = match space {
        SpaceConfig::ScalarPower { p, dim, domain, coefficient } => {
            let mut s = ScalarPowerMetric::new(*p, *dim, *domain).map_err(metric_config)?;
            if let Some(c) = coefficient {
                s = s.with_coefficient(c.build()?).map_err(metric_config)?;
            }
            let pts = random_reals(&mut rng, cfg, *domain, 3 * cfg.random);
            verify_axioms(&s, &triples(&pts), cfg.tol)
        }
        SpaceConfig::GridFunction { m, p } => {
            let s = GridFunctionMetric::new(*m, *p).map_err(metric_config)?;
            let pts: Vec<Vec<f64>> = (0..3 * cfg.random)
                .map(|_| random_reals(&mut rng, cfg, RealDomain::Real, *m))
                .collect();
            verify_axioms(&s, &triples(&pts), cfg.tol)
        }
        SpaceConfig::CustomTable { labels, table, coefficient, tol } => {
            // Construction already checks every triple.
            let s = table_space(labels, table, coefficient, *tol)?;
            let mut t = Vec::new();
            for x in labels {
                for y in labels {
                    for z in labels {
                        t.push((x.clone(), y.clone(), z.clone()));
                    }
                }
            }
            verify_axioms(&s, &t, cfg.tol)
        }
    }
    .map_err(metric_config)?;
    Ok(VerifyReport {
        scenario: scenario.name.clone(),
        kind: "axioms".into(),
        passed: report.all_ok(),
        axioms: Some(report),
        certificates: Vec::new(),
        gates: Vec::new(),
    })
}

pub fn stein_problem(cfg: &SteinConfig, opts: &RunOptions) -> Result<SteinProblem, ConfigError> {
    let problem = match (&cfg.random, &cfg.coefficients, &cfg.q) {
        (Some(r), None, None) => {
            if r.dim == 0 || r.dim > 64 {
                return Err(ConfigError::invalid("random stein dim must be in 1..=64"));
            }
            SteinProblem::random(r.dim, r.count, r.beta, opts.seed).map_err(application_config)?
        }
        (None, Some(bs), Some(q)) => {
            let bs = bs.iter().map(|b| b.build()).collect::<Result<Vec<_>, _>>()?;
            SteinProblem::new(bs, q.build()?).map_err(application_config)?
        }
        _ => {
            return Err(ConfigError::invalid(
                "stein problems need either `random` or both `coefficients` and `q`",
            ))
        }
    };
    if let Some(d) = cfg.dim {
        if d != problem.dim() {
            return Err(ConfigError::invalid(format!("dim {d} does not match matrices of dim {}", problem.dim())));
        }
    }
    Ok(problem)
}

fn random_hermitian(rng: &mut ChaCha8Rng, n: usize) -> AlgebraElement {
    let m = DMatrix::from_fn(n, n, |_, _| {
        nalgebra::Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    });
    AlgebraElement::from_matrix(m)
        .expect("finite entries")
        .hermitian_part()
}

fn stein_verify(name: &str, problem: &SteinProblem, opts: &RunOptions) -> Result<VerifyReport, ConfigError> {
    let beta = problem.beta();
    let gates = vec![
        GateCheck {
            name: "sum_norm_squared_below_half".into(),
            holds: problem.gate_holds(),
            advisory: false,
            detail: format!("Σ‖Bₖ‖² = {beta}"),
        },
        GateCheck {
            name: "sum_norm_fourth_below_quarter".into(),
            holds: problem.advisory_gate_holds(),
            advisory: true,
            detail: "Σ‖Bₖ‖⁴ < 1/4".into(),
        },
    ];
    // d(X, Y) = ‖X - Y‖² on M_n with B = β: the engine certifies F itself.
    let n = problem.dim();
    let space = NormSquaredMetric::new(n, AlgebraElement::identity(1)).map_err(metric_config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let pts: Vec<AlgebraElement> = (0..96).map(|_| random_hermitian(&mut rng, n)).collect();
    let axioms = verify_axioms(&space, &triples(&pts), 1e-9).map_err(metric_config)?;
    let edges: Vec<_> = pts.chunks_exact(2).map(|c| (c[0].clone(), c[1].clone())).collect();
    let f = problem.clone();
    let pair = MappingPair::with_identity(move |x: &AlgebraElement| f.apply(x));
    let b = AlgebraElement::scalar(1, beta);
    let cert = certify_banach(&pair, &space, &DirectedGraph::complete(), &b, &edges, NormMode::Spectral)
        .map_err(|e| ConfigError::invalid(e.to_string()))?;
    let certificates = vec![CertificateSummary::from_certificate(&cert)];
    let passed = axioms.all_ok() && cert.overall && gates.iter().all(|g| g.advisory || g.holds);
    Ok(VerifyReport {
        scenario: name.to_string(),
        kind: "stein".into(),
        axioms: Some(axioms),
        certificates,
        gates,
        passed,
    })
}

fn stein_solve(name: &str, cfg: &SteinConfig, expect: &Expect, opts: &RunOptions) -> Result<SolveReport, ConfigError> {
    let problem = stein_problem(cfg, opts)?;
    let solve_opts = opts.solve_options(&cfg.solver)?;
    let mut report = SolveReport::new(name, stein_verify(name, &problem, opts)?);
    if !report.verify.passed {
        report.error = Some("verification failed; not solving".into());
        check_verify_expectation(expect, &mut report);
        return Ok(report);
    }
    match stein_iterate(&problem, None, solve_opts.tol, solve_opts.max_iter) {
        Ok(sol) => {
            let q = sol.step_norms[0];
            report.trace = geometric_trace(&sol.step_norms, problem.beta(), q);
            report.converged = true;
            report.iterations = Some(sol.iterations);
            report.residual = Some(sol.residual);
            report.hermitian_defect = Some(sol.x.hermitian_defect());
            report.max_contraction_factor = sol.contraction_factors.iter().copied().reduce(f64::max);
            match stein_oracle(&problem) {
                Ok(x) => report.oracle_delta = sol.x.max_abs_diff(&x).ok(),
                Err(e) => report.error = Some(format!("oracle: {e}")),
            }
            report.solution = Some(to_json(&sol.x));
        }
        Err(e) => report.error = Some(e.to_string()),
    }
    report.passed = report.converged;
    let mut failures = Vec::new();
    check_common_expectations(expect, &report, &mut failures);
    if let (Some(max), Some(r)) = (expect.max_residual, report.residual) {
        if !(r < max) {
            failures.push(format!("residual {r:e} ≥ {max:e}"));
        }
    }
    report.expectation_failures = failures;
    Ok(report)
}

fn geometric_trace(steps: &[f64], rate: f64, q: f64) -> Vec<TraceRow> {
    steps
        .iter()
        .enumerate()
        .map(|(n, &step_norm)| TraceRow {
            n,
            step_norm,
            apriori_bound: rate.powi(n as i32) * q,
        })
        .collect()
}

pub fn integral_problem(cfg: &IntegralConfig) -> Result<IntegralProblem, ConfigError> {
    let m = cfg.m;
    if m == 0 || m > 4096 {
        return Err(ConfigError::invalid("m must be in 1..=4096"));
    }
    if !(cfg.lo.is_finite() && cfg.hi.is_finite() && cfg.lo < cfg.hi) {
        return Err(ConfigError::invalid("interval must satisfy lo < hi"));
    }
    let w = (cfg.hi - cfg.lo) / m as f64;
    let nodes: Vec<f64> = (0..m).map(|i| cfg.lo + i as f64 * w).collect();
    let table = |rows: &[Vec<f64>], what: &str| -> Result<DMatrix<f64>, ConfigError> {
        if rows.len() != m || rows.iter().any(|r| r.len() != m) {
            return Err(ConfigError::invalid(format!("{what} must be {m}×{m}")));
        }
        Ok(DMatrix::from_fn(m, m, |i, j| rows[i][j]))
    };
    let phi = match &cfg.phi {
        PhiConfig::Product => DMatrix::from_fn(m, m, |i, j| nodes[i] * nodes[j]),
        PhiConfig::Constant { value } => DMatrix::from_element(m, m, *value),
        PhiConfig::Table { values } => table(values, "phi")?,
    };
    let g = match &cfg.g {
        GridConfig::Constant { value } => vec![*value; m],
        GridConfig::Values { values } => {
            if values.len() != m {
                return Err(ConfigError::invalid(format!("g must have {m} values")));
            }
            values.clone()
        }
    };
    let kernel = match &cfg.kernel {
        KernelConfig::LinearPhi { offset } => Kernel::Affine {
            offset: offset.as_deref().map(|o| table(o, "offset")).transpose()?,
        },
        KernelConfig::Custom { form } => {
            let (beta, phi_k, lo) = (cfg.beta, phi.clone(), cfg.lo);
            let form = *form;
            // Nodes are recovered from t, s to index the tabulated φ.
            let index = move |x: f64| (((x - lo) / w).round().max(0.0) as usize).min(m - 1);
            Kernel::function(move |t, s, u| {
                let v = match form {
                    KernelForm::Sin => u.sin(),
                    KernelForm::Tanh => u.tanh(),
                    KernelForm::Zero => 0.0,
                };
                beta * phi_k[(index(t), index(s))] * v
            })
        }
    };
    IntegralProblem::new(cfg.lo, cfg.hi, cfg.p, cfg.beta, phi, g, kernel).map_err(application_config)
}

fn integral_verify(name: &str, problem: &IntegralProblem, opts: &RunOptions) -> Result<VerifyReport, ConfigError> {
    let gate = problem.check_gates();
    let gates = vec![
        GateCheck {
            name: "kernel_conditions".into(),
            holds: gate.is_ok(),
            advisory: false,
            detail: match &gate {
                Ok(()) => format!(
                    "β = {}, sup_t ∫|φ| = {}, p = {}",
                    problem.beta(),
                    problem.phi_row_bound(),
                    problem.p()
                ),
                Err(e) => e.to_string(),
            },
        },
    ];
    let m = problem.grid_size();
    let space = GridFunctionMetric::new(m, problem.p()).map_err(metric_config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let cfg = AxiomSampleConfig::default();
    let pts: Vec<Vec<f64>> = (0..3 * 64).map(|_| random_reals(&mut rng, &cfg, RealDomain::Real, m)).collect();
    let axioms = verify_axioms(&space, &triples(&pts), cfg.tol).map_err(metric_config)?;
    Ok(VerifyReport {
        scenario: name.to_string(),
        kind: "integral".into(),
        passed: axioms.all_ok() && gate.is_ok(),
        axioms: Some(axioms),
        certificates: Vec::new(),
        gates,
    })
}

fn integral_solve_report(name: &str, cfg: &IntegralConfig, expect: &Expect, opts: &RunOptions) -> Result<SolveReport, ConfigError> {
    let problem = integral_problem(cfg)?;
    let solve_opts = opts.solve_options(&cfg.solver)?;
    let mut report = SolveReport::new(name, integral_verify(name, &problem, opts)?);
    if !report.verify.passed {
        report.error = Some("verification failed; not solving".into());
        check_verify_expectation(expect, &mut report);
        return Ok(report);
    }
    let mut failures = Vec::new();
    match integral_solve(&problem, None, solve_opts.tol, solve_opts.max_iter) {
        Ok(sol) => {
            let rate = problem.beta() * problem.phi_row_bound();
            report.trace = geometric_trace(&sol.step_norms, rate, sol.step_norms[0]);
            report.converged = true;
            report.iterations = Some(sol.iterations);
            report.residual = Some(sol.residual);
            report.max_contraction_factor = sol.contraction_factors.iter().copied().reduce(f64::max);
            match integral_oracle(&problem) {
                Ok(x) => {
                    report.oracle_delta =
                        Some(x.iter().zip(&sol.x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
                }
                Err(ApplicationError::NonlinearKernel) => {}
                Err(e) => report.error = Some(format!("oracle: {e}")),
            }
            if let Some(c) = expect.solution_constant {
                let tol = expect.tol.unwrap_or(1e-12);
                if let Some(bad) = sol.x.iter().find(|v| !((*v - c).abs() <= tol)) {
                    failures.push(format!("solution entry {bad} differs from {c}"));
                }
            }
            report.solution = Some(to_json(&sol.x));
        }
        Err(e) => report.error = Some(e.to_string()),
    }
    report.passed = report.converged;
    check_common_expectations(expect, &report, &mut failures);
    if let (Some(max), Some(r)) = (expect.max_residual, report.residual) {
        if !(r < max) {
            failures.push(format!("residual {r:e} ≥ {max:e}"));
        }
    }
    report.expectation_failures = failures;
    Ok(report)
}

pub fn verify(scenario: &Scenario, opts: &RunOptions) -> Result<VerifyReport, ConfigError> {
    let name = &scenario.name;
    match &scenario.problem {
        Problem::FixedPoint(cfg) => match cfg.space {
            SpaceConfig::ScalarPower { .. } => real_setup(cfg, opts)?.verify(name),
            SpaceConfig::CustomTable { .. } => table_setup(cfg, opts)?.verify(name),
            SpaceConfig::GridFunction { .. } => Err(grid_fixed_point()),
        },
        Problem::Axioms(cfg) => axioms_only(scenario, &cfg.space, &cfg.axioms, opts),
        Problem::Stein(cfg) => stein_verify(name, &stein_problem(cfg, opts)?, opts),
        Problem::Integral(cfg) => integral_verify(name, &integral_problem(cfg)?, opts),
    }
}

fn grid_fixed_point() -> ConfigError {
    ConfigError::invalid("fixed_point scenarios need a scalar_power or custom_table space")
}

pub fn solve(scenario: &Scenario, opts: &RunOptions) -> Result<SolveReport, ConfigError> {
    let name = &scenario.name;
    let expect = &scenario.expect;
    match &scenario.problem {
        Problem::FixedPoint(cfg) => match cfg.space {
            SpaceConfig::ScalarPower { .. } => real_setup(cfg, opts)?.solve(name, expect),
            SpaceConfig::CustomTable { .. } => table_setup(cfg, opts)?.solve(name, expect),
            SpaceConfig::GridFunction { .. } => Err(grid_fixed_point()),
        },
        Problem::Axioms(_) => Err(ConfigError::invalid("axioms scenarios have nothing to solve")),
        Problem::Stein(cfg) => stein_solve(name, cfg, expect, opts),
        Problem::Integral(cfg) => integral_solve_report(name, cfg, expect, opts),
    }
}

/// Outcome of checking a scenario against its `expect` block.
#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub scenario: String,
    pub passed: bool,
    pub failures: Vec<String>,
}

pub fn check(scenario: &Scenario, opts: &RunOptions) -> Result<CheckOutcome, ConfigError> {
    let expect = &scenario.expect;
    let expect_verify = expect.verify.unwrap_or(true);
    let mut failures = Vec::new();
    let solvable = !matches!(scenario.problem, Problem::Axioms(_));
    if !expect_verify || !solvable {
        let r = verify(scenario, opts)?;
        if r.passed != expect_verify {
            failures.push(format!("verification passed = {}", r.passed));
        }
    } else {
        let r = solve(scenario, opts)?;
        if !r.verify.passed {
            failures.push("verification failed".into());
        } else if expect.converged.is_none() && !r.converged {
            failures.push(format!("did not converge: {}", r.error.clone().unwrap_or_default()));
        }
        for s in r.seeds.iter().filter(|s| !s.converged) {
            if expect.converged != Some(false) {
                failures.push(format!("seed {}: {}", s.seed, s.error.clone().unwrap_or_default()));
            }
        }
        if r.uniqueness_violation == Some(true) {
            failures.push("distinct points of coincidence joined in the graph".into());
        }
        failures.extend(r.expectation_failures.iter().filter(|f| f.as_str() != "verification failed").cloned());
    }
    Ok(CheckOutcome {
        scenario: scenario.name.clone(),
        passed: failures.is_empty(),
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario(text: &str) -> Scenario {
        Scenario::from_json(text, "test").unwrap()
    }

    #[test]
    fn table_space_fixed_point() {
        let s = scenario(
            r#"{"schema":1,"name":"tri","problem":{"kind":"fixed_point",
            "space":{"type":"custom_table","labels":["a","b","c"],
              "table":[[{"scalar":0,"dim":1},{"scalar":1,"dim":1},{"scalar":2,"dim":1}],
                       [{"scalar":1,"dim":1},{"scalar":0,"dim":1},{"scalar":1,"dim":1}],
                       [{"scalar":2,"dim":1},{"scalar":1,"dim":1},{"scalar":0,"dim":1}]],
              "coefficient":{"scalar":1,"dim":1}},
            "graph":{"type":"complete"},
            "f":{"type":"constant","value":"b"},
            "seeds":["a","c"],
            "certificate":{"family":"banach","b":{"scalar":0.5,"dim":1}}},
            "expect":{"common_fixed_point":"b"}}"#,
        );
        let r = solve(&s, &RunOptions::default()).unwrap();
        assert!(r.verify.passed, "{:?}", r.verify);
        assert!(r.passed);
        assert!(r.expectation_failures.is_empty(), "{:?}", r.expectation_failures);
        assert_eq!(r.distinct_points, vec![Value::from("b")]);
    }

    #[test]
    fn bad_references_are_config_errors() {
        let s = scenario(
            r#"{"schema":1,"name":"x","problem":{"kind":"fixed_point",
            "space":{"type":"scalar_power","p":2,"dim":2,"domain":"non_negative"},
            "graph":{"type":"complete"},"f":{"type":"identity"},"seeds":[-1.0],
            "certificate":{"family":"banach","b":{"scalar":0.1,"dim":2}}}}"#,
        );
        assert!(matches!(verify(&s, &RunOptions::default()), Err(ConfigError::Invalid(_))));
        let s = scenario(
            r#"{"schema":1,"name":"x","problem":{"kind":"fixed_point",
            "space":{"type":"scalar_power","p":2,"dim":2},
            "graph":{"type":"complete"},"f":{"type":"identity"},"seeds":[1.0],
            "certificate":{"family":"banach","b":{"scalar":0.1,"dim":3}}}}"#,
        );
        assert!(matches!(verify(&s, &RunOptions::default()), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn overrides_reach_solver() {
        let cfg = SolverConfig::default();
        let o = RunOptions {
            tol: Some(1e-6),
            max_iter: Some(7),
            seed: 0,
        };
        let s = o.solve_options(&cfg).unwrap();
        assert_eq!((s.tol, s.tol_accept, s.max_iter), (1e-6, 10.0 * 1e-6, 7));
        let bad = RunOptions {
            tol: Some(-1.0),
            ..o
        };
        assert!(bad.solve_options(&cfg).is_err());
    }
}
