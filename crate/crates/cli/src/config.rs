//! Scenario files: JSON with a versioned `schema` field. Unknown fields are
//! rejected everywhere.

use std::collections::BTreeMap;
use std::path::Path;

use gbmfix::algebra::{AlgebraElement, NormMode};
use gbmfix::bmetric::RealDomain;
use serde::{Deserialize, Deserializer};
use serde_json::Value;
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {source}")]
    Parse {
        path: String,
        source: serde_json::Error,
    },
    #[error("unsupported schema version {0} (expected {SCHEMA_VERSION})")]
    Schema(u32),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

impl ConfigError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        ConfigError::Invalid(msg.into())
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema: u32,
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub problem: Problem,
    #[serde(default)]
    pub expect: Expect,
}

impl Scenario {
    pub fn from_json(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let scenario: Scenario = serde_json::from_str(text).map_err(|source| ConfigError::Parse {
            path: origin.to_string(),
            source,
        })?;
        if scenario.schema != SCHEMA_VERSION {
            return Err(ConfigError::Schema(scenario.schema));
        }
        Ok(scenario)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = read(path)?;
        Self::from_json(&text, &path.display().to_string())
    }
}

pub(crate) fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Problem {
    FixedPoint(FixedPointConfig),
    Axioms(AxiomsConfig),
    Stein(SteinConfig),
    Integral(IntegralConfig),
}

impl Problem {
    pub fn kind(&self) -> &'static str {
        match self {
            Problem::FixedPoint(_) => "fixed_point",
            Problem::Axioms(_) => "axioms",
            Problem::Stein(_) => "stein",
            Problem::Integral(_) => "integral",
        }
    }
}

/// A square matrix: `{"scalar": s, "dim": n}`, `{"diag": [...]}` or the full
/// `{"dim", "re", "im"}` form.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Scalar(ScalarMatrix),
    Diag(DiagMatrix),
    Full(AlgebraElement),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalarMatrix {
    pub scalar: f64,
    pub dim: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagMatrix {
    pub diag: Vec<f64>,
}

impl MatrixSpec {
    pub fn build(&self) -> Result<AlgebraElement, ConfigError> {
        let m = match self {
            MatrixSpec::Scalar(s) => {
                if s.dim == 0 {
                    return Err(ConfigError::invalid("matrix dim must be ≥ 1"));
                }
                AlgebraElement::scalar(s.dim, s.scalar)
            }
            MatrixSpec::Diag(d) => {
                if d.diag.is_empty() {
                    return Err(ConfigError::invalid("empty diagonal"));
                }
                AlgebraElement::diag(&d.diag)
            }
            MatrixSpec::Full(a) => a.clone(),
        };
        if m.max_abs_entry().is_finite() {
            Ok(m)
        } else {
            Err(ConfigError::invalid("matrix has non-finite entries"))
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpaceConfig {
    /// `d(x, y) = |x - y|^p · I_dim` on the real line or half-line.
    ScalarPower {
        p: f64,
        dim: usize,
        #[serde(default)]
        domain: RealDomain,
        #[serde(default)]
        coefficient: Option<MatrixSpec>,
    },
    /// `d(f, g) = diag(|f_i - g_i|^p)` on functions sampled at `m` nodes.
    GridFunction { m: usize, p: f64 },
    /// Finite set with an explicit distance table.
    CustomTable {
        labels: Vec<String>,
        table: Vec<Vec<MatrixSpec>>,
        coefficient: MatrixSpec,
        #[serde(default = "default_table_tol")]
        tol: f64,
    },
}

fn default_table_tol() -> f64 {
    1e-10
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphConfig {
    Edges {
        edges: Vec<(Value, Value)>,
        #[serde(default)]
        vertices: Vec<Value>,
    },
    /// Loops plus `(0, base^{-n})`.
    ZeroToPowers { base: f64 },
    /// Loops plus `(base^t z, base^t (z + 1))` for `z ≥ z_min`.
    ScaledSuccessor { base: f64, z_min: f64 },
    Complete,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum MapConfig {
    #[default]
    Identity,
    /// `x ↦ scale·x + shift`.
    Affine { scale: f64, shift: f64 },
    /// Affine except for one point.
    AffineWithException {
        scale: f64,
        shift: f64,
        at: f64,
        value: f64,
    },
    Constant { value: Value },
    /// Lookup table on labelled points.
    Table { map: BTreeMap<String, String> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyConfig {
    Banach,
    Kannan,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeSampleConfig {
    #[serde(default = "default_first")]
    pub first: usize,
    #[serde(default = "default_random")]
    pub random: usize,
}

fn default_first() -> usize {
    32
}

fn default_random() -> usize {
    32
}

impl Default for EdgeSampleConfig {
    fn default() -> Self {
        Self {
            first: default_first(),
            random: default_random(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateConfig {
    pub family: FamilyConfig,
    pub b: MatrixSpec,
    /// Every listed norm is certified; the first drives the solver.
    #[serde(default = "default_norms")]
    pub norms: Vec<NormMode>,
    #[serde(default)]
    pub edge_sample: EdgeSampleConfig,
}

fn default_norms() -> Vec<NormMode> {
    vec![NormMode::Spectral]
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub tol_accept: Option<f64>,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_true")]
    pub require_cgf: bool,
}

fn default_tol() -> f64 {
    1e-12
}

fn default_max_iter() -> usize {
    1000
}

fn default_horizon() -> usize {
    64
}

fn default_true() -> bool {
    true
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: default_tol(),
            tol_accept: None,
            max_iter: default_max_iter(),
            horizon: default_horizon(),
            require_cgf: true,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxiomSampleConfig {
    #[serde(default = "default_triples")]
    pub random: usize,
    #[serde(default = "default_lo")]
    pub lo: f64,
    #[serde(default = "default_hi")]
    pub hi: f64,
    #[serde(default = "default_axiom_tol")]
    pub tol: f64,
}

fn default_triples() -> usize {
    1000
}

fn default_lo() -> f64 {
    -10.0
}

fn default_hi() -> f64 {
    10.0
}

fn default_axiom_tol() -> f64 {
    1e-9
}

impl Default for AxiomSampleConfig {
    fn default() -> Self {
        Self {
            random: default_triples(),
            lo: default_lo(),
            hi: default_hi(),
            tol: default_axiom_tol(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedPointConfig {
    pub space: SpaceConfig,
    pub graph: GraphConfig,
    pub f: MapConfig,
    #[serde(default)]
    pub g: MapConfig,
    pub seeds: Vec<Value>,
    pub certificate: CertificateConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub axioms: AxiomSampleConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxiomsConfig {
    pub space: SpaceConfig,
    #[serde(default)]
    pub axioms: AxiomSampleConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomSteinConfig {
    pub dim: usize,
    pub count: usize,
    pub beta: f64,
}

/// Either explicit `coefficients` and `q`, or a seeded `random` instance.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SteinConfig {
    #[serde(default)]
    pub dim: Option<usize>,
    #[serde(default)]
    pub coefficients: Option<Vec<MatrixSpec>>,
    #[serde(default)]
    pub q: Option<MatrixSpec>,
    #[serde(default)]
    pub random: Option<RandomSteinConfig>,
    #[serde(default)]
    pub solver: SolverConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PhiConfig {
    /// `φ(t, s) = t·s`.
    Product,
    Constant { value: f64 },
    /// `φ(tᵢ, sⱼ)` row by row.
    Table { values: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum GridConfig {
    Constant { value: f64 },
    Values { values: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelForm {
    Sin,
    Tanh,
    Zero,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelConfig {
    /// `k = β φ(t, s) u + c(t, s)`.
    LinearPhi {
        #[serde(default)]
        offset: Option<Vec<Vec<f64>>>,
    },
    /// `k = β φ(t, s) form(u)` with a 1-Lipschitz `form`.
    Custom { form: KernelForm },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegralConfig {
    pub lo: f64,
    pub hi: f64,
    pub m: usize,
    pub p: f64,
    pub beta: f64,
    pub phi: PhiConfig,
    pub g: GridConfig,
    pub kernel: KernelConfig,
    #[serde(default)]
    pub solver: SolverConfig,
}

/// Outcomes checked by `paper-examples`. Point values are compared through
/// the scenario's metric.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expect {
    #[serde(default)]
    pub verify: Option<bool>,
    #[serde(default)]
    pub converged: Option<bool>,
    /// `null` asserts that no common fixed point exists.
    #[serde(default, deserialize_with = "present")]
    pub common_fixed_point: Option<Value>,
    #[serde(default, deserialize_with = "present")]
    pub point_of_coincidence: Option<Value>,
    #[serde(default, deserialize_with = "present")]
    pub coincidence_point: Option<Value>,
    #[serde(default)]
    pub weakly_compatible: Option<bool>,
    #[serde(default)]
    pub max_residual: Option<f64>,
    #[serde(default)]
    pub max_iterations: Option<usize>,
    #[serde(default)]
    pub oracle_delta_max: Option<f64>,
    /// Every entry of the solution equals this value (within `tol`).
    #[serde(default)]
    pub solution_constant: Option<f64>,
    #[serde(default)]
    pub tol: Option<f64>,
}

fn present<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Value>, D::Error> {
    Value::deserialize(d).map(Some)
}
