//! Jungck iteration and graph-restricted contraction certificates.
//!
//! Given self-maps `f, g` with `f(X) ⊆ g(X)`, the Jungck orbit is
//! `g x_0, g x_1, ...` with `g x_n = f x_{n-1}`, where each `x_n` is chosen by a
//! user-supplied preimage selector for `g`. Two contraction families are
//! certified on sampled graph edges:
//!
//! * Banach: `d(fx, fy) ⪯ B* d(gx, gy) B` with `‖A‖ ‖B‖² < 1`.
//! * Kannan: `d(fx, fy) ⪯ B (d(fx, gx) + d(fy, gy))` with `B` central positive
//!   and `‖BA‖ < 1/2`; steps then contract by `t = B (1 - B)^{-1}`.
//!
//! A valid certificate yields geometric a priori bounds on the orbit steps and
//! on `d(g x_n, g x_m)`. Bounds use `‖B‖²` wherever `‖B²‖` would also do,
//! since `‖B²‖ ≤ ‖B‖²`.

use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::algebra::{AlgebraElement, AlgebraError, NormMode, POSITIVITY_TOL};
use crate::bmetric::{BMetricSpace, MetricError, Point};
use crate::graph::{DirectedGraph, GraphError};

/// Relative tolerance for the per-edge Loewner checks of a certificate.
pub const CERTIFICATE_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("no g-preimage for f(x) at step {step}: f(X) ⊆ g(X) violated")]
    PreimageFailure { step: usize },
    #[error("no convergence after {iterations} iterations (last step norm {last_step:e})")]
    NoConvergence { iterations: usize, last_step: f64 },
    #[error("orbit leaves C_gf within the first {horizon} steps")]
    OrbitNotInCgf { horizon: usize },
    #[error("certificate does not hold")]
    CertificateInvalid,
    #[error("bound diverges: {0}")]
    DivergentParameters(String),
    #[error("precondition violated: {0}")]
    PreconditionViolation(String),
    #[error("coincidence residual {residual:e} exceeds {tol_accept:e}")]
    ResidualTooLarge { residual: f64, tol_accept: f64 },
    #[error("invalid arguments: {0}")]
    InvalidArguments(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

type Map<P> = Arc<dyn Fn(&P) -> P + Send + Sync>;
type Preimage<P> = Arc<dyn Fn(&P) -> Option<P> + Send + Sync>;

/// Self-maps `f`, `g` and a selector solving `g(x) = y`.
#[derive(Clone)]
pub struct MappingPair<P> {
    f: Map<P>,
    g: Map<P>,
    g_preimage: Preimage<P>,
    identity_g: bool,
}

impl<P: Point> MappingPair<P> {
    /// Different selectors may produce different orbits; the engine uses
    /// whatever the selector returns.
    pub fn new(
        f: impl Fn(&P) -> P + Send + Sync + 'static,
        g: impl Fn(&P) -> P + Send + Sync + 'static,
        g_preimage: impl Fn(&P) -> Option<P> + Send + Sync + 'static,
    ) -> Self {
        Self {
            f: Arc::new(f),
            g: Arc::new(g),
            g_preimage: Arc::new(g_preimage),
            identity_g: false,
        }
    }

    /// `g = I`, for plain fixed-point problems.
    pub fn with_identity(f: impl Fn(&P) -> P + Send + Sync + 'static) -> Self {
        Self {
            f: Arc::new(f),
            g: Arc::new(|x: &P| x.clone()),
            g_preimage: Arc::new(|y: &P| Some(y.clone())),
            identity_g: true,
        }
    }

    pub fn f(&self, x: &P) -> P {
        (self.f)(x)
    }

    pub fn g(&self, x: &P) -> P {
        (self.g)(x)
    }

    pub fn g_preimage(&self, y: &P) -> Option<P> {
        (self.g_preimage)(y)
    }

    pub fn is_identity_g(&self) -> bool {
        self.identity_g
    }
}

impl MappingPair<f64> {
    /// `g(x) = scale·x + shift` with its closed-form inverse.
    pub fn affine_g(f: impl Fn(&f64) -> f64 + Send + Sync + 'static, scale: f64, shift: f64) -> Self {
        assert!(scale != 0.0 && scale.is_finite(), "affine g must be invertible");
        let mut pair = Self::new(
            f,
            move |x: &f64| scale * x + shift,
            move |y: &f64| Some((y - shift) / scale),
        );
        pair.identity_g = scale == 1.0 && shift == 0.0;
        pair
    }
}

/// The sequence `(g x_n)` with its step sizes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationTrace<P> {
    /// `g x_0, g x_1, ...`
    pub orbit: Vec<P>,
    /// `x_0, x_1, ...` as returned by the preimage selector.
    pub preimages: Vec<P>,
    /// `‖d(g x_n, g x_{n+1})‖`.
    pub step_norms: Vec<f64>,
    /// A priori bound for each step, when a certificate was available.
    pub bound_values: Vec<f64>,
    pub converged: bool,
    pub limit: Option<P>,
}

/// Computes `n_steps` Jungck steps from `x0`.
pub fn jungck_orbit<S: BMetricSpace>(
    pair: &MappingPair<S::Point>,
    space: &S,
    x0: &S::Point,
    n_steps: usize,
    mode: NormMode,
) -> Result<IterationTrace<S::Point>, EngineError> {
    if n_steps == 0 {
        return Err(EngineError::InvalidArguments("n_steps must be ≥ 1".into()));
    }
    let mut trace = IterationTrace {
        orbit: vec![pair.g(x0)],
        preimages: vec![x0.clone()],
        step_norms: Vec::with_capacity(n_steps),
        bound_values: Vec::new(),
        converged: false,
        limit: None,
    };
    for step in 1..=n_steps {
        let x_prev = &trace.preimages[step - 1];
        let next = pair.f(x_prev);
        let x_next = pair
            .g_preimage(&next)
            .ok_or(EngineError::PreimageFailure { step })?;
        let d = space.eval_metric(&trace.orbit[step - 1], &next)?;
        trace.step_norms.push(d.norm(mode));
        trace.orbit.push(next);
        trace.preimages.push(x_next);
    }
    Ok(trace)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ContractionFamily {
    /// `d(fx, fy) ⪯ B* d(gx, gy) B`, `‖A‖‖B‖² < 1`.
    BanachGraph,
    /// `d(fx, fy) ⪯ B (d(fx, gx) + d(fy, gy))`, `B ∈ A'_+`, `‖BA‖ < 1/2`.
    KannanGraph,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateConstants {
    pub a_norm: f64,
    pub b_norm: f64,
    /// `‖A‖·‖B‖²` (Banach).
    pub lambda: Option<f64>,
    /// `‖BA‖` (Kannan).
    pub ba_norm: Option<f64>,
    /// `t = B (1 - B)^{-1}` (Kannan).
    pub t: Option<AlgebraElement>,
    pub t_norm: Option<f64>,
}

/// Verdict for one sampled edge `(gx, gy)`.
///
/// Edges outside `G̃` fail with slack `-∞`. Edges whose endpoints have no
/// `g`-preimage impose no condition and hold with slack `+∞`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeCheck<P> {
    pub edge: (P, P),
    pub in_graph: bool,
    pub holds: bool,
    /// Smallest eigenvalue of `rhs - lhs`.
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContractionCertificate<P> {
    pub family: ContractionFamily,
    pub b: AlgebraElement,
    pub norm_mode: NormMode,
    pub constants: CertificateConstants,
    pub edge_results: Vec<EdgeCheck<P>>,
    pub overall: bool,
    pub notes: Vec<String>,
}

impl<P> ContractionCertificate<P> {
    pub fn failed_edges(&self) -> impl Iterator<Item = &EdgeCheck<P>> {
        self.edge_results.iter().filter(|e| !e.holds)
    }

    /// Smallest slack over edges that were actually constrained.
    pub fn min_slack(&self) -> f64 {
        self.edge_results
            .iter()
            .map(|e| e.slack)
            .filter(|s| s.is_finite())
            .fold(f64::INFINITY, f64::min)
    }
}

/// `lhs ⪯ rhs` with tolerance relative to the size of both sides.
fn loewner_check(lhs: &AlgebraElement, rhs: &AlgebraElement) -> (bool, f64) {
    let gap = rhs - lhs;
    let scale = lhs.max_abs_entry().max(rhs.max_abs_entry());
    let slack = gap.hermitian_eigenvalues()[0];
    let hermitian = gap.hermitian_defect() <= CERTIFICATE_TOL * scale;
    (hermitian && slack >= -CERTIFICATE_TOL * scale, slack)
}

fn check_edges<S: BMetricSpace>(
    pair: &MappingPair<S::Point>,
    graph: &DirectedGraph<S::Point>,
    edge_sample: &[(S::Point, S::Point)],
    inequality: impl Fn(&S::Point, &S::Point) -> Result<(AlgebraElement, AlgebraElement), MetricError>,
) -> Vec<EdgeCheck<S::Point>> {
    let sym = graph.symmetrize();
    let mut out = Vec::with_capacity(2 * edge_sample.len());
    for (u, v) in edge_sample {
        for (gx, gy) in [(u, v), (v, u)] {
            let edge = (gx.clone(), gy.clone());
            if !sym.has_edge(gx, gy) {
                out.push(EdgeCheck {
                    edge,
                    in_graph: false,
                    holds: false,
                    slack: f64::NEG_INFINITY,
                });
                continue;
            }
            let (Some(x), Some(y)) = (pair.g_preimage(gx), pair.g_preimage(gy)) else {
                out.push(EdgeCheck {
                    edge,
                    in_graph: true,
                    holds: true,
                    slack: f64::INFINITY,
                });
                continue;
            };
            let (holds, slack) = match inequality(&x, &y) {
                Ok((lhs, rhs)) => loewner_check(&lhs, &rhs),
                Err(_) => (false, f64::NEG_INFINITY),
            };
            out.push(EdgeCheck {
                edge,
                in_graph: true,
                holds,
                slack,
            });
        }
    }
    out
}

/// Certifies `d(fx, fy) ⪯ B* d(gx, gy) B` on each sampled edge (both
/// orientations, given in `g`-image coordinates) together with `‖A‖‖B‖² < 1`.
pub fn certify_banach<S: BMetricSpace>(
    pair: &MappingPair<S::Point>,
    space: &S,
    graph: &DirectedGraph<S::Point>,
    b: &AlgebraElement,
    edge_sample: &[(S::Point, S::Point)],
    mode: NormMode,
) -> Result<ContractionCertificate<S::Point>, EngineError> {
    b.check_dim(space.coefficient())?;
    let b_star = b.involution();
    let edge_results = check_edges::<S>(pair, graph, edge_sample, |x, y| {
        let lhs = space.eval_metric(&pair.f(x), &pair.f(y))?;
        let dg = space.eval_metric(&pair.g(x), &pair.g(y))?;
        Ok((lhs, &(&b_star * &dg) * b))
    });
    let a_norm = space.coefficient().norm(mode);
    let b_norm = b.norm(mode);
    let lambda = a_norm * b_norm * b_norm;
    let overall = lambda < 1.0 && edge_results.iter().all(|e| e.holds);
    Ok(ContractionCertificate {
        family: ContractionFamily::BanachGraph,
        b: b.clone(),
        norm_mode: mode,
        constants: CertificateConstants {
            a_norm,
            b_norm,
            lambda: Some(lambda),
            ba_norm: None,
            t: None,
            t_norm: None,
        },
        edge_results,
        overall,
        notes: vec!["bounds use ‖B‖² in place of ‖B²‖".into()],
    })
}

/// Certifies `d(fx, fy) ⪯ B (d(fx, gx) + d(fy, gy))` on each sampled edge.
///
/// `B` must be positive, central and satisfy `‖BA‖ < 1/2`; otherwise no
/// certificate is produced.
pub fn certify_kannan<S: BMetricSpace>(
    pair: &MappingPair<S::Point>,
    space: &S,
    graph: &DirectedGraph<S::Point>,
    b: &AlgebraElement,
    edge_sample: &[(S::Point, S::Point)],
    mode: NormMode,
) -> Result<ContractionCertificate<S::Point>, EngineError> {
    b.check_dim(space.coefficient())?;
    if !b.in_center(1e-12 * b.max_abs_entry().max(1.0)) {
        return Err(EngineError::PreconditionViolation(
            "B must commute with every element (a multiple of the unit)".into(),
        ));
    }
    if !b.is_positive(POSITIVITY_TOL).is_positive {
        return Err(EngineError::PreconditionViolation("B must be positive".into()));
    }
    let a = space.coefficient();
    let ba_norm = (b * a).norm(mode);
    if ba_norm >= 0.5 {
        return Err(EngineError::PreconditionViolation(format!(
            "‖BA‖ = {ba_norm} must be < 1/2"
        )));
    }
    let t = b.resolvent_contraction()?;
    let edge_results = check_edges::<S>(pair, graph, edge_sample, |x, y| {
        let (fx, fy) = (pair.f(x), pair.f(y));
        let lhs = space.eval_metric(&fx, &fy)?;
        let sum = &space.eval_metric(&fx, &pair.g(x))? + &space.eval_metric(&fy, &pair.g(y))?;
        Ok((lhs, b * &sum))
    });
    let overall = edge_results.iter().all(|e| e.holds);
    Ok(ContractionCertificate {
        family: ContractionFamily::KannanGraph,
        b: b.clone(),
        norm_mode: mode,
        constants: CertificateConstants {
            a_norm: a.norm(mode),
            b_norm: b.norm(mode),
            lambda: None,
            ba_norm: Some(ba_norm),
            t_norm: Some(t.norm(mode)),
            t: Some(t),
        },
        edge_results,
        overall,
        notes: Vec::new(),
    })
}

fn require_valid<P>(cert: &ContractionCertificate<P>) -> Result<(), EngineError> {
    if cert.overall {
        Ok(())
    } else {
        Err(EngineError::CertificateInvalid)
    }
}

/// Upper bound on `‖d(g x_n, g x_{n+1})‖` given `Q = d(g x_0, g x_1)`:
/// `‖B‖^{2n}‖Q‖` (Banach) or `‖t‖^n‖Q‖` (Kannan).
pub fn apriori_step_bound<P>(
    cert: &ContractionCertificate<P>,
    q: &AlgebraElement,
    n: usize,
) -> Result<f64, EngineError> {
    require_valid(cert)?;
    let q_norm = q.norm(cert.norm_mode);
    let n = i32::try_from(n).map_err(|_| EngineError::InvalidArguments("n too large".into()))?;
    Ok(match cert.family {
        ContractionFamily::BanachGraph => cert.constants.b_norm.powi(2 * n) * q_norm,
        ContractionFamily::KannanGraph => {
            cert.constants.t_norm.expect("kannan certificate carries t").powi(n) * q_norm
        }
    })
}

/// Upper bound on `‖d(g x_n, g x_m)‖` for `m > n`, from the geometric-series
/// majorant of the Cauchy estimate.
///
/// Banach: `‖A‖^{1-n}‖Q‖ Σ_{j=n}^{m-2} λ^j + ‖A‖^{-n}‖Q‖ λ^{m-1}` with
/// `λ = ‖A‖‖B‖²`. Kannan, with gap `p = m - n`:
/// `‖A‖^p ‖t‖^{n+1}‖Q‖ / (‖A‖ - ‖t‖) + ‖A‖^{p-1}‖t‖^n ‖Q‖`.
pub fn cauchy_tail_bound<P>(
    cert: &ContractionCertificate<P>,
    q: &AlgebraElement,
    n: usize,
    m: usize,
) -> Result<f64, EngineError> {
    require_valid(cert)?;
    if m <= n {
        return Err(EngineError::InvalidArguments(format!("need m > n, got n = {n}, m = {m}")));
    }
    let q_norm = q.norm(cert.norm_mode);
    let a = cert.constants.a_norm;
    let gap = (m - n) as i32;
    let n_i = n as i32;
    match cert.family {
        ContractionFamily::BanachGraph => {
            let b2 = cert.constants.b_norm * cert.constants.b_norm;
            let lambda = a * b2;
            if lambda >= 1.0 {
                return Err(EngineError::DivergentParameters(format!("‖A‖‖B‖² = {lambda} ≥ 1")));
            }
            // ‖A‖^{1-n} λ^j = ‖A‖ ‖B‖^{2n} λ^{j-n}, which avoids overflow in ‖A‖^{-n}.
            let head = b2.powi(n_i) * q_norm;
            let series: f64 = (0..gap - 1).map(|k| lambda.powi(k)).sum();
            Ok(a * head * series + head * lambda.powi(gap - 1))
        }
        ContractionFamily::KannanGraph => {
            let t = cert.constants.t_norm.expect("kannan certificate carries t");
            if t >= a {
                return Err(EngineError::DivergentParameters(format!(
                    "‖t‖ = {t} ≥ ‖A‖ = {a}"
                )));
            }
            let tn = t.powi(n_i) * q_norm;
            Ok(a.powi(gap) * t * tn / (a - t) + a.powi(gap - 1) * tn)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolveOptions {
    /// Stop once `‖d(g x_n, g x_{n+1})‖ < tol`.
    pub tol: f64,
    /// Acceptance threshold for residuals and compatibility checks.
    pub tol_accept: f64,
    pub max_iter: usize,
    /// Number of orbit steps checked for `C_gf` membership.
    pub horizon: usize,
    /// Fail with [`EngineError::OrbitNotInCgf`] instead of only reporting.
    pub require_cgf: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self::with_tol(1e-12)
    }
}

impl SolveOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            tol_accept: 10.0 * tol,
            max_iter: 1000,
            horizon: 64,
            require_cgf: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoincidenceResult<P> {
    pub seed: P,
    /// `v` with `f(v) = g(v)`.
    pub coincidence_point: P,
    /// `u = f(v) = g(v)`.
    pub point_of_coincidence: P,
    /// `‖d(f(v), g(v))‖`.
    pub residual: f64,
    pub weakly_compatible: bool,
    pub common_fixed_point: Option<P>,
    /// P2 (P4 for fixed points) holds among the points of coincidence found.
    pub uniqueness_checked: bool,
    pub orbit_in_cgf: bool,
    /// P1 observed on the computed orbit towards its limit.
    pub p1_observed: bool,
    pub iterations: usize,
    pub trace: IterationTrace<P>,
}

/// Runs the Jungck iteration to a point of coincidence and promotes it to a
/// common fixed point when `f` and `g` are weakly compatible there.
pub fn solve_coincidence<S: BMetricSpace>(
    pair: &MappingPair<S::Point>,
    space: &S,
    graph: &DirectedGraph<S::Point>,
    cert: &ContractionCertificate<S::Point>,
    x0: &S::Point,
    opts: &SolveOptions,
) -> Result<CoincidenceResult<S::Point>, EngineError> {
    require_valid(cert)?;
    if opts.max_iter == 0 {
        return Err(EngineError::InvalidArguments("max_iter must be ≥ 1".into()));
    }
    let mode = cert.norm_mode;

    let horizon = opts.horizon.max(1);
    let probe = jungck_orbit(pair, space, x0, horizon, mode)?;
    let orbit_in_cgf = graph.check_orbit_membership(&probe.orbit, horizon)?;
    if !orbit_in_cgf && opts.require_cgf {
        return Err(EngineError::OrbitNotInCgf { horizon });
    }

    let mut trace = IterationTrace {
        orbit: vec![pair.g(x0)],
        preimages: vec![x0.clone()],
        step_norms: Vec::new(),
        bound_values: Vec::new(),
        converged: false,
        limit: None,
    };
    let mut q: Option<AlgebraElement> = None;
    for n in 0..opts.max_iter {
        let next = pair.f(&trace.preimages[n]);
        let x_next = pair
            .g_preimage(&next)
            .ok_or(EngineError::PreimageFailure { step: n + 1 })?;
        let d = space.eval_metric(&trace.orbit[n], &next)?;
        let step = d.norm(mode);
        let q_ref = q.get_or_insert(d);
        trace.bound_values.push(apriori_step_bound(cert, q_ref, n)?);
        trace.step_norms.push(step);
        trace.orbit.push(next);
        trace.preimages.push(x_next);
        if step < opts.tol {
            trace.converged = true;
            break;
        }
    }
    let iterations = trace.step_norms.len();
    if !trace.converged {
        return Err(EngineError::NoConvergence {
            iterations,
            last_step: *trace.step_norms.last().expect("at least one step"),
        });
    }

    let limit = trace.orbit.last().expect("nonempty orbit").clone();
    trace.limit = Some(limit.clone());
    let v = trace.preimages.last().expect("nonempty preimages").clone();
    let (fv, gv) = (pair.f(&v), pair.g(&v));
    let residual = space.eval_metric(&fv, &gv)?.norm(mode);
    if residual > opts.tol_accept {
        return Err(EngineError::ResidualTooLarge {
            residual,
            tol_accept: opts.tol_accept,
        });
    }

    let close = |a: &S::Point, b: &S::Point| -> Result<bool, EngineError> {
        Ok(space.eval_metric(a, b)?.norm(mode) <= opts.tol_accept)
    };
    let weakly_compatible = pair.is_identity_g() || close(&pair.f(&gv), &pair.g(&fv))?;
    let u = gv;
    let common_fixed_point = if weakly_compatible
        && close(&pair.f(&u), &u)?
        && close(&pair.g(&u), &u)?
    {
        Some(u.clone())
    } else {
        None
    };
    let p1_observed = matches!(graph.check_p1_p3(&trace.orbit, &limit), Ok(Some(_)));

    Ok(CoincidenceResult {
        seed: x0.clone(),
        coincidence_point: v,
        uniqueness_checked: graph.check_p2_p4(std::slice::from_ref(&u)),
        point_of_coincidence: u,
        residual,
        weakly_compatible,
        common_fixed_point,
        orbit_in_cgf,
        p1_observed,
        iterations,
        trace,
    })
}

/// Fixed point of `f` (the case `g = I`).
pub fn solve_fixed_point<S: BMetricSpace>(
    f: impl Fn(&S::Point) -> S::Point + Send + Sync + 'static,
    space: &S,
    graph: &DirectedGraph<S::Point>,
    cert: &ContractionCertificate<S::Point>,
    x0: &S::Point,
    opts: &SolveOptions,
) -> Result<CoincidenceResult<S::Point>, EngineError> {
    solve_coincidence(&MappingPair::with_identity(f), space, graph, cert, x0, opts)
}

#[derive(Debug, Clone)]
pub struct MultiSeedReport<P> {
    pub outcomes: Vec<Result<CoincidenceResult<P>, EngineError>>,
    /// Distinct points of coincidence among successful solves.
    pub distinct_points: Vec<P>,
    /// P2 holds among [`Self::distinct_points`].
    pub uniqueness_checked: bool,
    /// Two distinct points of coincidence that P2 joins by an edge: impossible
    /// under a valid certificate, so the certificate is contradicted.
    pub uniqueness_violation: bool,
}

/// Solves from every seed and compares the resulting points of coincidence.
pub fn solve_from_seeds<S: BMetricSpace>(
    pair: &MappingPair<S::Point>,
    space: &S,
    graph: &DirectedGraph<S::Point>,
    cert: &ContractionCertificate<S::Point>,
    seeds: &[S::Point],
    opts: &SolveOptions,
) -> Result<MultiSeedReport<S::Point>, EngineError> {
    let mode = cert.norm_mode;
    let outcomes: Vec<_> = seeds
        .iter()
        .map(|x0| solve_coincidence(pair, space, graph, cert, x0, opts))
        .collect();
    let mut distinct: Vec<S::Point> = Vec::new();
    for r in outcomes.iter().flatten() {
        let u = &r.point_of_coincidence;
        let mut seen = false;
        for d in &distinct {
            if space.eval_metric(u, d)?.norm(mode) <= opts.tol_accept {
                seen = true;
                break;
            }
        }
        if !seen {
            distinct.push(u.clone());
        }
    }
    let uniqueness_checked = graph.check_p2_p4(&distinct);
    let uniqueness_violation = distinct.len() > 1 && uniqueness_checked;
    let outcomes = outcomes
        .into_iter()
        .map(|r| {
            r.map(|mut res| {
                res.uniqueness_checked = uniqueness_checked;
                res
            })
        })
        .collect();
    Ok(MultiSeedReport {
        outcomes,
        distinct_points: distinct,
        uniqueness_checked,
        uniqueness_violation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bmetric::{squared_distance_plane, RealDomain};

    fn halving() -> MappingPair<f64> {
        MappingPair::with_identity(|x: &f64| x / 2.0)
    }

    #[test]
    fn geometric_orbit() {
        let s = squared_distance_plane(RealDomain::Real);
        let t = jungck_orbit(&halving(), &s, &1.0, 4, NormMode::Spectral).unwrap();
        assert_eq!(t.orbit, vec![1.0, 0.5, 0.25, 0.125, 0.0625]);
        assert_eq!(t.step_norms, vec![0.25, 0.0625, 0.015625, 0.00390625]);
        assert!(matches!(
            jungck_orbit(&halving(), &s, &1.0, 0, NormMode::Spectral),
            Err(EngineError::InvalidArguments(_))
        ));
    }

    #[test]
    fn preimage_failure_is_reported() {
        let s = squared_distance_plane(RealDomain::Real);
        let pair = MappingPair::new(
            |x: &f64| x + 1.0,
            |x: &f64| x * x,
            |y: &f64| (*y >= 0.0).then(|| y.sqrt()),
        );
        let err = jungck_orbit(&pair, &s, &-3.0, 5, NormMode::Spectral).unwrap_err();
        assert_eq!(err, EngineError::PreimageFailure { step: 1 });
    }

    #[test]
    fn zero_b_with_constant_f() {
        let s = squared_distance_plane(RealDomain::Real);
        let pair = MappingPair::with_identity(|_: &f64| 2.0);
        let g = DirectedGraph::complete();
        let edges: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, -(i as f64) * 0.7)).collect();
        let cert = certify_banach(&pair, &s, &g, &AlgebraElement::zero(2), &edges, NormMode::Spectral)
            .unwrap();
        assert!(cert.overall);
        assert_eq!(cert.constants.lambda, Some(0.0));
    }

    #[test]
    fn edges_outside_graph_fail() {
        let s = squared_distance_plane(RealDomain::Real);
        let g = DirectedGraph::zero_to_powers(3.0);
        let b = AlgebraElement::scalar(2, 0.25);
        let cert = certify_banach(&halving(), &s, &g, &b, &[(0.0, 0.5)], NormMode::Spectral).unwrap();
        assert!(!cert.overall);
        assert!(cert.edge_results.iter().all(|e| !e.in_graph));
    }

    #[test]
    fn kannan_rejects_isometry() {
        let s = squared_distance_plane(RealDomain::Real);
        let pair = MappingPair::new(|x: &f64| *x, |x: &f64| *x, |y: &f64| Some(*y));
        let g = DirectedGraph::complete();
        let b = AlgebraElement::scalar(2, 0.1);
        let cert = certify_kannan(&pair, &s, &g, &b, &[(0.0, 1.0)], NormMode::Spectral).unwrap();
        assert!(!cert.overall);
        let loops = certify_kannan(&pair, &s, &g, &b, &[(1.0, 1.0)], NormMode::Spectral).unwrap();
        assert!(loops.overall);
    }

    #[test]
    fn kannan_preconditions() {
        let s = squared_distance_plane(RealDomain::Real);
        let g = DirectedGraph::complete();
        let pair = halving();
        for b in [
            AlgebraElement::diag(&[0.01, 0.02]),
            AlgebraElement::scalar(2, -0.01),
            AlgebraElement::scalar(2, 0.125),
        ] {
            assert!(matches!(
                certify_kannan(&pair, &s, &g, &b, &[], NormMode::Spectral),
                Err(EngineError::PreconditionViolation(_))
            ));
        }
    }

    #[test]
    fn banach_bounds_by_formula() {
        let s = squared_distance_plane(RealDomain::Real);
        let g = DirectedGraph::complete();
        let b = AlgebraElement::scalar(2, 0.25);
        let cert = certify_banach(&MappingPair::with_identity(|x: &f64| x / 4.0), &s, &g, &b, &[(0.0, 1.0)], NormMode::Spectral).unwrap();
        assert!(cert.overall);
        let q = AlgebraElement::identity(2);
        assert!((apriori_step_bound(&cert, &q, 2).unwrap() - 1.0 / 256.0).abs() < 1e-18);
        let tail = cauchy_tail_bound(&cert, &q, 3, 5).unwrap();
        let literal = 4f64.powi(-2) * 0.25f64.powi(3) + 4f64.powi(-3) * 0.25f64.powi(4);
        assert!((tail - literal).abs() < 1e-18);
        assert!((tail - 17.0 / 16384.0).abs() < 1e-18);
        assert!(matches!(
            cauchy_tail_bound(&cert, &q, 5, 5),
            Err(EngineError::InvalidArguments(_))
        ));
    }

    #[test]
    fn invalid_certificate_blocks_bounds() {
        let s = squared_distance_plane(RealDomain::Real);
        let g = DirectedGraph::complete();
        let cert = certify_banach(
            &halving(),
            &s,
            &g,
            &AlgebraElement::identity(2),
            &[(0.0, 1.0)],
            NormMode::Spectral,
        )
        .unwrap();
        assert!(!cert.overall);
        let q = AlgebraElement::identity(2);
        assert_eq!(apriori_step_bound(&cert, &q, 1), Err(EngineError::CertificateInvalid));
        assert_eq!(cauchy_tail_bound(&cert, &q, 1, 2), Err(EngineError::CertificateInvalid));
        assert_eq!(
            solve_fixed_point(|x: &f64| x / 2.0, &s, &g, &cert, &1.0, &SolveOptions::default())
                .unwrap_err(),
            EngineError::CertificateInvalid
        );
    }

    #[test]
    fn constant_map_converges_in_one_step() {
        let s = squared_distance_plane(RealDomain::Real);
        let g = DirectedGraph::complete();
        let edges = [(0.0, 1.0), (2.0, -3.0)];
        let cert = certify_banach(
            &MappingPair::with_identity(|_: &f64| 0.75),
            &s,
            &g,
            &AlgebraElement::scalar(2, 0.25),
            &edges,
            NormMode::Spectral,
        )
        .unwrap();
        let r = solve_fixed_point(|_: &f64| 0.75, &s, &g, &cert, &0.75, &SolveOptions::default())
            .unwrap();
        assert_eq!(r.iterations, 1);
        assert_eq!(r.common_fixed_point, Some(0.75));
    }

    #[test]
    fn no_convergence_is_an_error() {
        let s = squared_distance_plane(RealDomain::Real);
        let g = DirectedGraph::complete();
        let b = AlgebraElement::scalar(2, 0.4);
        let third = |x: &f64| x / 3.0;
        let cert = certify_banach(
            &MappingPair::with_identity(third),
            &s,
            &g,
            &b,
            &[(0.0, 1.0)],
            NormMode::Spectral,
        )
        .unwrap();
        let opts = SolveOptions {
            max_iter: 3,
            ..SolveOptions::default()
        };
        assert!(matches!(
            solve_fixed_point(third, &s, &g, &cert, &1.0, &opts),
            Err(EngineError::NoConvergence { iterations: 3, .. })
        ));
    }
}
