//! Algebra-valued b-metric spaces.
//!
//! A b-metric assigns to each pair of points a positive element of `M_n(C)`
//! and satisfies a relaxed triangle inequality `d(x, y) ⪯ A[d(x, z) + d(z, y)]`
//! for a coefficient `A ⪰ 1`. Spaces over infinite point sets evaluate the
//! metric lazily; [`verify_axioms`] checks the axioms on a finite sample.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{AlgebraElement, AlgebraError, NormMode, OrderMode, POSITIVITY_TOL};

/// Relative tolerance for deciding that two numeric points coincide.
pub const POINT_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("point {0} is not in the space")]
    UnknownPoint(String),
    #[error("axiom check needs at least one sample triple")]
    EmptySample,
    #[error("coefficient does not dominate the unit (A ⪰ 1 fails)")]
    CoefficientBelowUnit,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("metric table fails the b-metric axioms: {0:?}")]
    AxiomsFailed(AxiomReport),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}

/// Identity of points up to a tolerance suited to the point type.
pub trait Point: Clone + fmt::Debug + Send + Sync + 'static {
    fn same_point(&self, other: &Self) -> bool;
}

impl Point for f64 {
    fn same_point(&self, other: &Self) -> bool {
        (self - other).abs() <= POINT_TOL * self.abs().max(other.abs())
    }
}

impl Point for Vec<f64> {
    fn same_point(&self, other: &Self) -> bool {
        self.len() == other.len() && self.iter().zip(other).all(|(a, b)| a.same_point(b))
    }
}

impl Point for AlgebraElement {
    fn same_point(&self, other: &Self) -> bool {
        match self.max_abs_diff(other) {
            Ok(d) => d <= POINT_TOL * self.max_abs_entry().max(other.max_abs_entry()),
            Err(_) => false,
        }
    }
}

impl Point for String {
    fn same_point(&self, other: &Self) -> bool {
        self == other
    }
}

impl Point for usize {
    fn same_point(&self, other: &Self) -> bool {
        self == other
    }
}

pub trait BMetricSpace {
    type Point: Point;

    fn algebra_dim(&self) -> usize;

    /// The element `A` of the relaxed triangle inequality.
    fn coefficient(&self) -> &AlgebraElement;

    fn contains(&self, x: &Self::Point) -> bool;

    /// Metric value without membership checks.
    fn distance(&self, x: &Self::Point, y: &Self::Point) -> AlgebraElement;

    fn eval_metric(
        &self,
        x: &Self::Point,
        y: &Self::Point,
    ) -> Result<AlgebraElement, MetricError> {
        for p in [x, y] {
            if !self.contains(p) {
                return Err(MetricError::UnknownPoint(format!("{p:?}")));
            }
        }
        Ok(self.distance(x, y))
    }
}

fn check_coefficient(coefficient: &AlgebraElement) -> Result<(), MetricError> {
    let unit = AlgebraElement::identity(coefficient.dim());
    if unit.leq(coefficient, OrderMode::Loewner, POSITIVITY_TOL)? {
        Ok(())
    } else {
        Err(MetricError::CoefficientBelowUnit)
    }
}

fn check_exponent(p: f64) -> Result<(), MetricError> {
    if p.is_finite() && p >= 1.0 {
        Ok(())
    } else {
        Err(MetricError::InvalidParameter(format!("exponent p must be ≥ 1, got {p}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RealDomain {
    #[default]
    Real,
    NonNegative,
}

impl RealDomain {
    pub fn contains(self, x: f64) -> bool {
        x.is_finite() && (self == RealDomain::Real || x >= 0.0)
    }
}

/// `d(x, y) = |x - y|^p · 1` on a subset of the real line.
#[derive(Debug, Clone)]
pub struct ScalarPowerMetric {
    p: f64,
    domain: RealDomain,
    coefficient: AlgebraElement,
}

impl ScalarPowerMetric {
    /// Coefficient defaults to `2^p · 1`.
    pub fn new(p: f64, dim: usize, domain: RealDomain) -> Result<Self, MetricError> {
        check_exponent(p)?;
        if dim == 0 {
            return Err(MetricError::InvalidParameter("algebra dimension must be ≥ 1".into()));
        }
        Ok(Self {
            p,
            domain,
            coefficient: AlgebraElement::scalar(dim, 2f64.powf(p)),
        })
    }

    pub fn with_coefficient(mut self, coefficient: AlgebraElement) -> Result<Self, MetricError> {
        coefficient.check_dim(&self.coefficient)?;
        check_coefficient(&coefficient)?;
        self.coefficient = coefficient;
        Ok(self)
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn domain(&self) -> RealDomain {
        self.domain
    }
}

impl BMetricSpace for ScalarPowerMetric {
    type Point = f64;

    fn algebra_dim(&self) -> usize {
        self.coefficient.dim()
    }

    fn coefficient(&self) -> &AlgebraElement {
        &self.coefficient
    }

    fn contains(&self, x: &f64) -> bool {
        self.domain.contains(*x)
    }

    fn distance(&self, x: &f64, y: &f64) -> AlgebraElement {
        AlgebraElement::scalar(self.algebra_dim(), (x - y).abs().powf(self.p))
    }
}

/// Real functions sampled on `m` grid nodes, with
/// `d(f, g) = diag(|f_i - g_i|^p)`: the multiplication operator by `|f - g|^p`.
#[derive(Debug, Clone)]
pub struct GridFunctionMetric {
    p: f64,
    coefficient: AlgebraElement,
}

impl GridFunctionMetric {
    pub fn new(grid_size: usize, p: f64) -> Result<Self, MetricError> {
        check_exponent(p)?;
        if grid_size == 0 {
            return Err(MetricError::InvalidParameter("grid size must be ≥ 1".into()));
        }
        Ok(Self {
            p,
            coefficient: AlgebraElement::scalar(grid_size, 2f64.powf(p)),
        })
    }

    pub fn grid_size(&self) -> usize {
        self.coefficient.dim()
    }

    pub fn p(&self) -> f64 {
        self.p
    }
}

impl BMetricSpace for GridFunctionMetric {
    type Point = Vec<f64>;

    fn algebra_dim(&self) -> usize {
        self.grid_size()
    }

    fn coefficient(&self) -> &AlgebraElement {
        &self.coefficient
    }

    fn contains(&self, x: &Vec<f64>) -> bool {
        x.len() == self.grid_size() && x.iter().all(|v| v.is_finite())
    }

    fn distance(&self, x: &Vec<f64>, y: &Vec<f64>) -> AlgebraElement {
        let values: Vec<f64> = x
            .iter()
            .zip(y)
            .map(|(a, b)| (a - b).abs().powf(self.p))
            .collect();
        AlgebraElement::diag(&values)
    }
}

/// `d(X, Y) = ‖X - Y‖² · T` on `M_n(C)` for a fixed positive weight `T`,
/// with coefficient `4 · 1`.
#[derive(Debug, Clone)]
pub struct NormSquaredMetric {
    point_dim: usize,
    weight: AlgebraElement,
    coefficient: AlgebraElement,
}

impl NormSquaredMetric {
    pub fn new(point_dim: usize, weight: AlgebraElement) -> Result<Self, MetricError> {
        if point_dim == 0 {
            return Err(MetricError::InvalidParameter("point dimension must be ≥ 1".into()));
        }
        let report = weight.is_positive(POSITIVITY_TOL);
        if !report.is_positive {
            return Err(AlgebraError::NotPositive {
                is_hermitian: report.is_hermitian,
                min_eigenvalue: report.min_eigenvalue,
            }
            .into());
        }
        let coefficient = AlgebraElement::scalar(weight.dim(), 4.0);
        Ok(Self {
            point_dim,
            weight,
            coefficient,
        })
    }
}

impl BMetricSpace for NormSquaredMetric {
    type Point = AlgebraElement;

    fn algebra_dim(&self) -> usize {
        self.weight.dim()
    }

    fn coefficient(&self) -> &AlgebraElement {
        &self.coefficient
    }

    fn contains(&self, x: &AlgebraElement) -> bool {
        x.dim() == self.point_dim
    }

    fn distance(&self, x: &AlgebraElement, y: &AlgebraElement) -> AlgebraElement {
        let n = (x - y).norm(NormMode::Spectral);
        self.weight.scale(n * n)
    }
}

/// A finite space given by an explicit metric table over labelled points.
#[derive(Debug, Clone)]
pub struct TableMetric {
    labels: Vec<String>,
    index: HashMap<String, usize>,
    table: Vec<Vec<AlgebraElement>>,
    coefficient: AlgebraElement,
}

impl TableMetric {
    /// Validates the table against every axiom over all triples before
    /// returning the space.
    pub fn new(
        labels: Vec<String>,
        table: Vec<Vec<AlgebraElement>>,
        coefficient: AlgebraElement,
        tol: f64,
    ) -> Result<Self, MetricError> {
        let n = labels.len();
        if n == 0 {
            return Err(MetricError::InvalidParameter("table needs at least one point".into()));
        }
        let mut index = HashMap::with_capacity(n);
        for (i, l) in labels.iter().enumerate() {
            if index.insert(l.clone(), i).is_some() {
                return Err(MetricError::InvalidParameter(format!("duplicate point label {l}")));
            }
        }
        if table.len() != n || table.iter().any(|row| row.len() != n) {
            return Err(MetricError::InvalidParameter(format!(
                "metric table must be {n}x{n}"
            )));
        }
        for entry in table.iter().flatten() {
            entry.check_dim(&coefficient)?;
        }
        check_coefficient(&coefficient)?;
        let space = Self {
            labels,
            index,
            table,
            coefficient,
        };
        let mut triples = Vec::with_capacity(n * n * n);
        for x in &space.labels {
            for y in &space.labels {
                for z in &space.labels {
                    triples.push((x.clone(), y.clone(), z.clone()));
                }
            }
        }
        let report = verify_axioms(&space, &triples, tol)?;
        if !report.all_ok() {
            return Err(MetricError::AxiomsFailed(report));
        }
        Ok(space)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

impl BMetricSpace for TableMetric {
    type Point = String;

    fn algebra_dim(&self) -> usize {
        self.coefficient.dim()
    }

    fn coefficient(&self) -> &AlgebraElement {
        &self.coefficient
    }

    fn contains(&self, x: &String) -> bool {
        self.index.contains_key(x)
    }

    /// Panics on unknown labels; use [`BMetricSpace::eval_metric`] for checked access.
    fn distance(&self, x: &String, y: &String) -> AlgebraElement {
        self.table[self.index[x]][self.index[y]].clone()
    }
}

/// Result of a sampled axiom check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AxiomReport {
    /// Number of `(x, y)` pairs tested, one per sample triple.
    pub checked_pairs: usize,
    pub symmetry_ok: bool,
    /// Positivity of `d(x, y)` and `d(x, y) = 0 ⇔ x = y`.
    pub identity_ok: bool,
    pub triangle_ok: bool,
    /// Most negative eigenvalue seen in `A[d(x, z) + d(z, y)] - d(x, y)`.
    pub worst_triangle_slack: f64,
}

impl AxiomReport {
    pub fn all_ok(&self) -> bool {
        self.symmetry_ok && self.identity_ok && self.triangle_ok
    }
}

/// Checks the b-metric axioms on each sample triple `(x, y, z)`.
///
/// `tol` is the relative positivity tolerance (see [`AlgebraElement::is_positive`]).
pub fn verify_axioms<S: BMetricSpace>(
    space: &S,
    sample: &[(S::Point, S::Point, S::Point)],
    tol: f64,
) -> Result<AxiomReport, MetricError> {
    if sample.is_empty() {
        return Err(MetricError::EmptySample);
    }
    let a = space.coefficient();
    let mut report = AxiomReport {
        checked_pairs: 0,
        symmetry_ok: true,
        identity_ok: true,
        triangle_ok: true,
        worst_triangle_slack: f64::INFINITY,
    };
    for (x, y, z) in sample {
        let dxy = space.eval_metric(x, y)?;
        let dyx = space.eval_metric(y, x)?;
        let dxz = space.eval_metric(x, z)?;
        let dzy = space.eval_metric(z, y)?;
        report.checked_pairs += 1;

        let positive = dxy.is_positive(tol).is_positive;
        let is_zero = dxy.max_abs_entry() == 0.0;
        let same = x.same_point(y);
        if !positive || (same != is_zero) {
            report.identity_ok = false;
        }

        if dxy.max_abs_diff(&dyx)? > tol * dxy.max_abs_entry().max(1.0) {
            report.symmetry_ok = false;
        }

        let gap = &(a * &(&dxz + &dzy)) - &dxy;
        let check = gap.is_positive(tol);
        report.worst_triangle_slack = report.worst_triangle_slack.min(check.min_eigenvalue);
        if !check.is_positive {
            report.triangle_ok = false;
        }
    }
    Ok(report)
}

/// Checks `|x - y|^p ≤ 2^p (|x - z|^p + |z - y|^p)` on each sample `(x, y, z)`
/// with `1e-12` relative slack.
pub fn power_inequality_check(p: f64, samples: &[(f64, f64, f64)]) -> bool {
    assert!(p >= 1.0, "exponent must be ≥ 1");
    let c = 2f64.powf(p);
    samples.iter().all(|&(x, y, z)| {
        let lhs = (x - y).abs().powf(p);
        let rhs = c * ((x - z).abs().powf(p) + (z - y).abs().powf(p));
        lhs <= rhs + 1e-12 * rhs.max(lhs).max(1.0)
    })
}

/// The space used by the real-line worked examples: `|x - y|² · 1` in `M_2`
/// with coefficient `diag(4, 4)`.
pub fn squared_distance_plane(domain: RealDomain) -> ScalarPowerMetric {
    ScalarPowerMetric::new(2.0, 2, domain).expect("valid parameters")
}
