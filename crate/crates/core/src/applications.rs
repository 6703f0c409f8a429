//! Two applications of the contraction principle, each paired with a direct
//! linear-algebra oracle.
//!
//! * Stein-type equation `X = Σ Bₖ* X Bₖ + Q` on `M_n(C)`, solved by fixed-point
//!   iteration and, independently, by vectorization:
//!   `(I - Σ Bₖᵀ ⊗ Bₖ*) vec X = vec Q`.
//! * Fredholm equation `x(t) = ∫_E k(t, s, x(s)) ds + g(t)` on a uniform grid
//!   with the left-endpoint rectangle rule, solved by Picard iteration and, for
//!   affine kernels, by a dense linear solve.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::algebra::{AlgebraElement, AlgebraError, NormMode, POSITIVITY_TOL};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ApplicationError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("Q must be positive")]
    NotPositive,
    #[error("solvability gate violated: {0}")]
    GateViolation(String),
    #[error("no convergence after {iterations} iterations (last step {last_step:e})")]
    NoConvergence { iterations: usize, last_step: f64 },
    #[error("linear system is singular")]
    SingularSystem,
    #[error("kernel is not affine in the unknown")]
    NonlinearKernel,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}

/// `X = Σ Bₖ* X Bₖ + Q` with finitely many coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct SteinProblem {
    dim: usize,
    coefficients: Vec<AlgebraElement>,
    q: AlgebraElement,
    beta: f64,
}

impl SteinProblem {
    pub fn new(coefficients: Vec<AlgebraElement>, q: AlgebraElement) -> Result<Self, ApplicationError> {
        let dim = q.dim();
        if let Some(b) = coefficients.iter().find(|b| b.dim() != dim) {
            return Err(ApplicationError::DimensionMismatch(format!(
                "coefficient of dim {} with Q of dim {dim}",
                b.dim()
            )));
        }
        if !q.is_positive(POSITIVITY_TOL).is_positive {
            return Err(ApplicationError::NotPositive);
        }
        let beta = coefficients
            .iter()
            .map(|b| b.norm(NormMode::Spectral).powi(2))
            .sum();
        Ok(Self {
            dim,
            coefficients,
            q,
            beta,
        })
    }

    /// Random instance with `count` complex coefficients scaled to
    /// `Σ ‖Bₖ‖² = beta` and `Q = CC* + I/10`.
    pub fn random(dim: usize, count: usize, beta: f64, seed: u64) -> Result<Self, ApplicationError> {
        if dim == 0 {
            return Err(ApplicationError::InvalidParameter("dim must be ≥ 1".into()));
        }
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(ApplicationError::InvalidParameter(format!("beta must be ≥ 0, got {beta}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let random_matrix = |rng: &mut ChaCha8Rng| {
            DMatrix::from_fn(dim, dim, |_, _| {
                Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            })
        };
        let target = if count == 0 { 0.0 } else { (beta / count as f64).sqrt() };
        let mut coefficients = Vec::with_capacity(count);
        for _ in 0..count {
            let b = AlgebraElement::from_matrix(random_matrix(&mut rng))?;
            let norm = b.norm(NormMode::Spectral);
            coefficients.push(if norm > 0.0 { b.scale(target / norm) } else { b });
        }
        let c = AlgebraElement::from_matrix(random_matrix(&mut rng))?;
        let q = &c * &c.involution() + AlgebraElement::scalar(dim, 0.1);
        Self::new(coefficients, q.hermitian_part())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coefficients(&self) -> &[AlgebraElement] {
        &self.coefficients
    }

    pub fn q(&self) -> &AlgebraElement {
        &self.q
    }

    /// `Σ ‖Bₖ‖²`, the Lipschitz constant of the map in the spectral norm.
    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// The gate enforced by the solver.
    pub fn gate_holds(&self) -> bool {
        self.beta < 0.5
    }

    /// `Σ ‖Bₖ‖⁴ < 1/4`; recorded but not enforced, since it does not bound
    /// `β` below `1/2`.
    pub fn advisory_gate_holds(&self) -> bool {
        self.coefficients
            .iter()
            .map(|b| b.norm(NormMode::Spectral).powi(4))
            .sum::<f64>()
            < 0.25
    }

    /// `X ↦ Σ Bₖ* X Bₖ`.
    pub fn linear_part(&self, x: &AlgebraElement) -> AlgebraElement {
        self.coefficients
            .iter()
            .fold(AlgebraElement::zero(self.dim), |acc, b| {
                acc + &(&b.involution() * x) * b
            })
    }

    /// `X ↦ Σ Bₖ* X Bₖ + Q`.
    pub fn apply(&self, x: &AlgebraElement) -> AlgebraElement {
        self.linear_part(x) + self.q.clone()
    }

    /// `‖X - Σ Bₖ* X Bₖ - Q‖` (spectral).
    pub fn residual(&self, x: &AlgebraElement) -> f64 {
        (x - &self.apply(x)).norm(NormMode::Spectral)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteinSolution {
    pub x: AlgebraElement,
    pub iterations: usize,
    pub residual: f64,
    /// `‖X_{k+1} - X_k‖`.
    pub step_norms: Vec<f64>,
    /// `‖L(Δ)‖ / ‖Δ‖` for each nonzero step `Δ`, with `L` the linear part.
    pub contraction_factors: Vec<f64>,
}

/// Fixed-point iteration from `x0` (default `0`), stopping once
/// `‖X - F(X)‖ ≤ tol`.
pub fn stein_iterate(
    problem: &SteinProblem,
    x0: Option<&AlgebraElement>,
    tol: f64,
    max_iter: usize,
) -> Result<SteinSolution, ApplicationError> {
    if !problem.gate_holds() {
        return Err(ApplicationError::GateViolation(format!(
            "Σ‖Bₖ‖² = {} must be < 1/2",
            problem.beta
        )));
    }
    let mut x = match x0 {
        Some(x0) if x0.dim() != problem.dim => {
            return Err(ApplicationError::DimensionMismatch(format!(
                "X0 of dim {} for problem of dim {}",
                x0.dim(),
                problem.dim
            )))
        }
        Some(x0) => x0.clone(),
        None => AlgebraElement::zero(problem.dim),
    };
    let mut step_norms = Vec::new();
    let mut contraction_factors = Vec::new();
    for iterations in 0..=max_iter {
        let next = problem.apply(&x);
        let delta = &next - &x;
        let step = delta.norm(NormMode::Spectral);
        step_norms.push(step);
        if step <= tol {
            return Ok(SteinSolution {
                x,
                iterations,
                residual: step,
                step_norms,
                contraction_factors,
            });
        }
        if iterations == max_iter {
            break;
        }
        contraction_factors.push(problem.linear_part(&delta).norm(NormMode::Spectral) / step);
        x = next;
    }
    Err(ApplicationError::NoConvergence {
        iterations: max_iter,
        last_step: *step_norms.last().expect("at least one step"),
    })
}

/// Solves `(I - Σ Bₖᵀ ⊗ Bₖ*) vec X = vec Q` with column-stacking `vec`.
pub fn stein_oracle(problem: &SteinProblem) -> Result<AlgebraElement, ApplicationError> {
    let n = problem.dim;
    let mut system = DMatrix::<Complex64>::identity(n * n, n * n);
    for b in &problem.coefficients {
        system -= b.matrix().transpose().kronecker(&b.involution().into_matrix());
    }
    let rhs = DVector::from_column_slice(problem.q.matrix().as_slice());
    let solution = system.lu().solve(&rhs).ok_or(ApplicationError::SingularSystem)?;
    if solution.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(ApplicationError::SingularSystem);
    }
    Ok(AlgebraElement::from_matrix(DMatrix::from_column_slice(
        n,
        n,
        solution.as_slice(),
    ))?)
}

/// Integrand `k(t, s, u)`.
#[derive(Clone)]
pub enum Kernel {
    /// `β φ(t, s) u + c(t, s)`, with `c` given on the grid (zero if absent).
    Affine { offset: Option<DMatrix<f64>> },
    /// Arbitrary `(t, s, u) ↦ k`, Lipschitz in `u` by assumption.
    Function(Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kernel::Affine { offset } => f
                .debug_struct("Affine")
                .field("has_offset", &offset.is_some())
                .finish(),
            Kernel::Function(_) => f.write_str("Function(..)"),
        }
    }
}

impl Kernel {
    pub fn function(k: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Kernel::Function(Arc::new(k))
    }
}

/// `x(t) = ∫_E k(t, s, x(s)) ds + g(t)` on `m` uniform nodes `lo + i·w`,
/// `w = (hi - lo) / m`.
#[derive(Debug, Clone)]
pub struct IntegralProblem {
    lo: f64,
    hi: f64,
    p: f64,
    beta: f64,
    /// `φ(tᵢ, sⱼ)`.
    phi: DMatrix<f64>,
    g: Vec<f64>,
    kernel: Kernel,
}

impl IntegralProblem {
    pub fn new(
        lo: f64,
        hi: f64,
        p: f64,
        beta: f64,
        phi: DMatrix<f64>,
        g: Vec<f64>,
        kernel: Kernel,
    ) -> Result<Self, ApplicationError> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(ApplicationError::InvalidParameter(format!("bad interval [{lo}, {hi}]")));
        }
        if !(p.is_finite() && p >= 1.0) {
            return Err(ApplicationError::InvalidParameter(format!("p must be ≥ 1, got {p}")));
        }
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(ApplicationError::InvalidParameter(format!("beta must be ≥ 0, got {beta}")));
        }
        let m = g.len();
        if m == 0 {
            return Err(ApplicationError::InvalidParameter("empty grid".into()));
        }
        if phi.shape() != (m, m) {
            return Err(ApplicationError::DimensionMismatch(format!(
                "phi is {:?}, grid has {m} nodes",
                phi.shape()
            )));
        }
        if let Kernel::Affine { offset: Some(c) } = &kernel {
            if c.shape() != (m, m) {
                return Err(ApplicationError::DimensionMismatch(format!(
                    "offset is {:?}, grid has {m} nodes",
                    c.shape()
                )));
            }
        }
        if phi.iter().chain(g.iter()).any(|v| !v.is_finite()) {
            return Err(ApplicationError::InvalidParameter("non-finite phi or g".into()));
        }
        Ok(Self {
            lo,
            hi,
            p,
            beta,
            phi,
            g,
            kernel,
        })
    }

    /// Tabulates `φ` and `g` on the grid.
    pub fn from_fns(
        lo: f64,
        hi: f64,
        m: usize,
        p: f64,
        beta: f64,
        phi: impl Fn(f64, f64) -> f64,
        g: impl Fn(f64) -> f64,
        kernel: Kernel,
    ) -> Result<Self, ApplicationError> {
        let nodes = grid_nodes(lo, hi, m);
        let phi = DMatrix::from_fn(m, m, |i, j| phi(nodes[i], nodes[j]));
        let g = nodes.iter().map(|&t| g(t)).collect();
        Self::new(lo, hi, p, beta, phi, g, kernel)
    }

    pub fn grid_size(&self) -> usize {
        self.g.len()
    }

    pub fn weight(&self) -> f64 {
        (self.hi - self.lo) / self.grid_size() as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        grid_nodes(self.lo, self.hi, self.grid_size())
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn phi(&self) -> &DMatrix<f64> {
        &self.phi
    }

    pub fn g(&self) -> &[f64] {
        &self.g
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    fn kernel_at(&self, nodes: &[f64], i: usize, j: usize, u: f64) -> f64 {
        match &self.kernel {
            Kernel::Affine { offset } => {
                self.beta * self.phi[(i, j)] * u + offset.as_ref().map_or(0.0, |c| c[(i, j)])
            }
            Kernel::Function(k) => k(nodes[i], nodes[j], u),
        }
    }

    /// `T(x)(tᵢ) = w Σⱼ k(tᵢ, sⱼ, xⱼ) + g(tᵢ)`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let nodes = self.nodes();
        let w = self.weight();
        (0..self.grid_size())
            .map(|i| {
                let integral: f64 = x
                    .iter()
                    .enumerate()
                    .map(|(j, &u)| self.kernel_at(&nodes, i, j, u))
                    .sum();
                w * integral + self.g[i]
            })
            .collect()
    }

    /// `sup_t |x(t) - T(x)(t)|`.
    pub fn residual(&self, x: &[f64]) -> f64 {
        sup_diff(x, &self.apply(x))
    }

    /// `sup_t w Σ_s |φ(t, s)|`.
    pub fn phi_row_bound(&self) -> f64 {
        let w = self.weight();
        self.phi
            .row_iter()
            .map(|r| w * r.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Checks `β ∈ (0, 2^{-p/2})`, `sup_t ∫|φ| ≤ 1` and, for function
    /// kernels, the Lipschitz bound `|k(u) - k(v)| ≤ β|φ||u - v|` on 256
    /// random samples.
    pub fn check_gates(&self) -> Result<(), ApplicationError> {
        let beta_max = 2f64.powf(-self.p / 2.0);
        if !(self.beta > 0.0 && self.beta < beta_max) {
            return Err(ApplicationError::GateViolation(format!(
                "β = {} must lie in (0, {beta_max})",
                self.beta
            )));
        }
        let row = self.phi_row_bound();
        if row > 1.0 + 1e-9 {
            return Err(ApplicationError::GateViolation(format!(
                "sup_t ∫|φ(t, s)| ds = {row} exceeds 1"
            )));
        }
        if let Kernel::Function(_) = self.kernel {
            let nodes = self.nodes();
            let m = self.grid_size();
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            for _ in 0..256 {
                let (i, j) = (rng.gen_range(0..m), rng.gen_range(0..m));
                let (u, v): (f64, f64) = (rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0));
                let lhs = (self.kernel_at(&nodes, i, j, u) - self.kernel_at(&nodes, i, j, v)).abs();
                let rhs = self.beta * (self.phi[(i, j)] * (u - v)).abs();
                if lhs > rhs * (1.0 + 1e-9) + 1e-12 {
                    return Err(ApplicationError::GateViolation(format!(
                        "Lipschitz bound fails at t = {}, s = {}, u = {u}, v = {v}",
                        nodes[i], nodes[j]
                    )));
                }
            }
        }
        Ok(())
    }
}

fn grid_nodes(lo: f64, hi: f64, m: usize) -> Vec<f64> {
    let w = (hi - lo) / m as f64;
    (0..m).map(|i| lo + i as f64 * w).collect()
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegralSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    /// `sup|x_{n+1} - x_n|`, which is also the residual of `x_n`.
    pub step_norms: Vec<f64>,
    /// Ratios of consecutive step norms, while the earlier step exceeds `1e-6`
    /// of the solution scale (below that the ratio is rounding noise).
    pub contraction_factors: Vec<f64>,
}

/// Picard iteration from `x0` (default `g`) until the sup-norm step is below
/// `tol`.
pub fn integral_solve(
    problem: &IntegralProblem,
    x0: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> Result<IntegralSolution, ApplicationError> {
    problem.check_gates()?;
    let mut x = match x0 {
        Some(x0) if x0.len() != problem.grid_size() => {
            return Err(ApplicationError::DimensionMismatch(format!(
                "x0 has {} entries, grid has {}",
                x0.len(),
                problem.grid_size()
            )))
        }
        Some(x0) => x0.to_vec(),
        None => problem.g.clone(),
    };
    let mut step_norms: Vec<f64> = Vec::new();
    let mut contraction_factors = Vec::new();
    for iterations in 1..=max_iter {
        let next = problem.apply(&x);
        let step = sup_diff(&next, &x);
        if let Some(&prev) = step_norms.last() {
            let scale = next.iter().fold(1.0f64, |a, v| a.max(v.abs()));
            if prev > 1e-6 * scale {
                contraction_factors.push(step / prev);
            }
        }
        step_norms.push(step);
        x = next;
        if step < tol {
            let residual = problem.residual(&x);
            return Ok(IntegralSolution {
                x,
                iterations,
                residual,
                step_norms,
                contraction_factors,
            });
        }
    }
    Err(ApplicationError::NoConvergence {
        iterations: max_iter,
        last_step: *step_norms.last().unwrap_or(&f64::NAN),
    })
}

/// Solves `(I - β w Φ) x = g + w c 1` for affine kernels.
pub fn integral_oracle(problem: &IntegralProblem) -> Result<Vec<f64>, ApplicationError> {
    let Kernel::Affine { offset } = &problem.kernel else {
        return Err(ApplicationError::NonlinearKernel);
    };
    let m = problem.grid_size();
    let w = problem.weight();
    let system = DMatrix::<f64>::identity(m, m) - &problem.phi * (problem.beta * w);
    let mut rhs = DVector::from_column_slice(&problem.g);
    if let Some(c) = offset {
        for (i, r) in c.row_iter().enumerate() {
            rhs[i] += w * r.sum();
        }
    }
    let x = system.lu().solve(&rhs).ok_or(ApplicationError::SingularSystem)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(ApplicationError::SingularSystem);
    }
    Ok(x.as_slice().to_vec())
}
