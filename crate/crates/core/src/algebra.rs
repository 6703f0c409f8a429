//! The finite-dimensional C*-algebra `M_n(C)`.
//!
//! Elements are square complex matrices. The involution is the conjugate
//! transpose, the C*-norm is the largest singular value, and the positive cone
//! consists of Hermitian matrices with nonnegative spectrum. A Frobenius norm
//! and an entrywise order are also available for algebras described with those
//! structures instead.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative tolerance used for positivity decisions throughout the crate.
///
/// The absolute threshold applied to the smallest eigenvalue is
/// `POSITIVITY_TOL * max(1, ‖a‖)`.
pub const POSITIVITY_TOL: f64 = 1e-10;

/// Accuracy target for [`AlgebraElement::sqrt_positive`], relative to `‖a‖`.
pub const SQRT_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlgebraError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix must have at least one row")]
    Empty,
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("element is not positive (hermitian: {is_hermitian}, min eigenvalue {min_eigenvalue:e})")]
    NotPositive {
        is_hermitian: bool,
        min_eigenvalue: f64,
    },
    #[error("precondition violated: {0}")]
    PreconditionViolation(String),
    #[error("element is not invertible")]
    Singular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormMode {
    /// Operator norm: the largest singular value.
    #[default]
    Spectral,
    /// `(Σ |a_ij|²)^{1/2}`.
    Frobenius,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrderMode {
    /// `a ⪯ b` iff `b - a` is positive semidefinite.
    #[default]
    Loewner,
    /// `a ⪯ b` iff every entry of `a - b` is real and `≤ 0`.
    Entrywise,
}

/// Outcome of a positivity test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositivityReport {
    pub is_hermitian: bool,
    /// Smallest eigenvalue of the Hermitian part `(a + a*) / 2`.
    pub min_eigenvalue: f64,
    pub is_positive: bool,
    /// Absolute eigenvalue threshold that was applied.
    pub tolerance_used: f64,
}

/// An element of `M_n(C)`.
#[derive(Clone, PartialEq)]
pub struct AlgebraElement {
    entries: DMatrix<Complex64>,
}

impl fmt::Debug for AlgebraElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = self.dim();
        write!(f, "AlgebraElement[{n}x{n}](")?;
        for i in 0..n {
            f.write_str(if i == 0 { "[" } else { ", [" })?;
            for j in 0..n {
                if j > 0 {
                    f.write_str(", ")?;
                }
                let z = self.entries[(i, j)];
                if z.im == 0.0 {
                    write!(f, "{}", z.re)?;
                } else {
                    write!(f, "{}{:+}i", z.re, z.im)?;
                }
            }
            f.write_str("]")?;
        }
        f.write_str(")")
    }
}

impl AlgebraElement {
    pub fn from_matrix(entries: DMatrix<Complex64>) -> Result<Self, AlgebraError> {
        let (rows, cols) = entries.shape();
        if rows != cols {
            return Err(AlgebraError::NotSquare { rows, cols });
        }
        if rows == 0 {
            return Err(AlgebraError::Empty);
        }
        for j in 0..cols {
            for i in 0..rows {
                let z = entries[(i, j)];
                if !z.re.is_finite() || !z.im.is_finite() {
                    return Err(AlgebraError::NonFinite { row: i, col: j });
                }
            }
        }
        Ok(Self { entries })
    }

    pub fn from_real(entries: &DMatrix<f64>) -> Result<Self, AlgebraError> {
        Self::from_matrix(entries.map(|x| Complex64::new(x, 0.0)))
    }

    /// Builds a real element from row slices.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, AlgebraError> {
        let n = rows.len();
        if n == 0 {
            return Err(AlgebraError::Empty);
        }
        for r in rows {
            if r.as_ref().len() != n {
                return Err(AlgebraError::NotSquare {
                    rows: n,
                    cols: r.as_ref().len(),
                });
            }
        }
        Self::from_matrix(DMatrix::from_fn(n, n, |i, j| {
            Complex64::new(rows[i].as_ref()[j], 0.0)
        }))
    }

    pub fn identity(n: usize) -> Self {
        Self::scalar(n, 1.0)
    }

    pub fn zero(n: usize) -> Self {
        Self::scalar(n, 0.0)
    }

    /// `λ · 1`.
    pub fn scalar(n: usize, lambda: f64) -> Self {
        assert!(n >= 1, "algebra dimension must be positive");
        Self {
            entries: DMatrix::from_diagonal_element(n, n, Complex64::new(lambda, 0.0)),
        }
    }

    pub fn diag(values: &[f64]) -> Self {
        assert!(!values.is_empty(), "algebra dimension must be positive");
        let n = values.len();
        Self {
            entries: DMatrix::from_fn(n, n, |i, j| {
                if i == j {
                    Complex64::new(values[i], 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            }),
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.entries
    }

    pub fn entry(&self, i: usize, j: usize) -> Complex64 {
        self.entries[(i, j)]
    }

    /// The conjugate transpose `a*`.
    pub fn involution(&self) -> Self {
        Self {
            entries: self.entries.adjoint(),
        }
    }

    pub fn norm(&self, mode: NormMode) -> f64 {
        match mode {
            NormMode::Spectral => match self.diagonal() {
                Some(d) => d.iter().map(|z| z.norm()).fold(0.0, f64::max),
                None => spectral_norm(&self.entries),
            },
            NormMode::Frobenius => self
                .entries
                .iter()
                .map(|z| z.norm_sqr())
                .sum::<f64>()
                .sqrt(),
        }
    }

    /// `(a + a*) / 2`.
    pub fn hermitian_part(&self) -> Self {
        Self {
            entries: (&self.entries + self.entries.adjoint()) * Complex64::new(0.5, 0.0),
        }
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            entries: &self.entries * Complex64::new(factor, 0.0),
        }
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.entries.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64, AlgebraError> {
        self.check_dim(other)?;
        Ok(self
            .entries
            .iter()
            .zip(other.entries.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }

    /// Largest modulus of `a_ij - conj(a_ji)`.
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in i..n {
                let d = (self.entries[(i, j)] - self.entries[(j, i)].conj()).norm();
                worst = worst.max(d);
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermitian_defect() <= tol * self.max_abs_entry().max(1.0)
    }

    /// Diagonal entries, if every off-diagonal entry is exactly zero.
    fn diagonal(&self) -> Option<Vec<Complex64>> {
        let n = self.dim();
        let off_zero = (0..n).all(|j| (0..n).all(|i| i == j || self.entries[(i, j)] == Complex64::ZERO));
        off_zero.then(|| (0..n).map(|i| self.entries[(i, i)]).collect())
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn hermitian_eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = match self.diagonal() {
            Some(d) => d.iter().map(|z| z.re).collect(),
            None => self
                .hermitian_part()
                .entries
                .symmetric_eigenvalues()
                .iter()
                .copied()
                .collect(),
        };
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// Membership in the positive cone.
    ///
    /// `tol` is relative: the eigenvalue threshold is `tol * max(1, ‖a‖)` and
    /// the Hermitian check allows `tol * max(1, max|a_ij|)` deviation from `a*`.
    /// Non-Hermitian input is reported as not positive.
    pub fn is_positive(&self, tol: f64) -> PositivityReport {
        assert!(tol >= 0.0, "tolerance must be nonnegative");
        let is_hermitian = self.is_hermitian(tol);
        let min_eigenvalue = self.hermitian_eigenvalues()[0];
        let tolerance_used = tol * self.norm(NormMode::Spectral).max(1.0);
        PositivityReport {
            is_hermitian,
            min_eigenvalue,
            is_positive: is_hermitian && min_eigenvalue >= -tolerance_used,
            tolerance_used,
        }
    }

    /// `self ⪯ other` in the requested order.
    pub fn leq(&self, other: &Self, mode: OrderMode, tol: f64) -> Result<bool, AlgebraError> {
        self.check_dim(other)?;
        Ok(match mode {
            OrderMode::Loewner => (other - self).is_positive(tol).is_positive,
            OrderMode::Entrywise => self
                .entries
                .iter()
                .zip(other.entries.iter())
                .all(|(a, b)| {
                    let d = a - b;
                    d.re <= tol && d.im.abs() <= tol
                }),
        })
    }

    /// The unique positive square root, via the Hermitian eigendecomposition
    /// with negative eigenvalues clamped to zero.
    pub fn sqrt_positive(&self) -> Result<Self, AlgebraError> {
        self.require_positive()?;
        Ok(self.hermitian_functional_calculus(|x| x.max(0.0).sqrt()))
    }

    /// `t = a (1 - a)^{-1}` for positive `a` with `‖a‖ < 1/2`; then `‖t‖ < 1`.
    pub fn resolvent_contraction(&self) -> Result<Self, AlgebraError> {
        let report = self.is_positive(POSITIVITY_TOL);
        if !report.is_positive {
            return Err(AlgebraError::PreconditionViolation(format!(
                "resolvent requires a positive element (min eigenvalue {:e})",
                report.min_eigenvalue
            )));
        }
        let norm = self.norm(NormMode::Spectral);
        if norm >= 0.5 {
            return Err(AlgebraError::PreconditionViolation(format!(
                "resolvent requires ‖a‖ < 1/2, got {norm}"
            )));
        }
        let inv = (&Self::identity(self.dim()) - self).inverse()?;
        Ok(self * &inv)
    }

    /// Whether the element lies within `tol` (max entrywise) of `λ·1` with
    /// `λ = trace / n`, i.e. in the center of `M_n`.
    pub fn in_center(&self, tol: f64) -> bool {
        let n = self.dim();
        let lambda = self.entries.trace() / Complex64::new(n as f64, 0.0);
        let mut worst = 0.0_f64;
        for j in 0..n {
            for i in 0..n {
                let target = if i == j { lambda } else { Complex64::new(0.0, 0.0) };
                worst = worst.max((self.entries[(i, j)] - target).norm());
            }
        }
        worst <= tol
    }

    pub fn inverse(&self) -> Result<Self, AlgebraError> {
        self.entries
            .clone()
            .try_inverse()
            .map(|entries| Self { entries })
            .ok_or(AlgebraError::Singular)
    }

    pub fn pow(&self, k: u32) -> Self {
        let mut acc = Self::identity(self.dim());
        for _ in 0..k {
            acc = &acc * self;
        }
        acc
    }

    pub fn trace(&self) -> Complex64 {
        self.entries.trace()
    }

    pub(crate) fn check_dim(&self, other: &Self) -> Result<(), AlgebraError> {
        if self.dim() == other.dim() {
            Ok(())
        } else {
            Err(AlgebraError::DimensionMismatch {
                left: self.dim(),
                right: other.dim(),
            })
        }
    }

    fn require_positive(&self) -> Result<(), AlgebraError> {
        let report = self.is_positive(POSITIVITY_TOL);
        if report.is_positive {
            Ok(())
        } else {
            Err(AlgebraError::NotPositive {
                is_hermitian: report.is_hermitian,
                min_eigenvalue: report.min_eigenvalue,
            })
        }
    }

    fn hermitian_functional_calculus(&self, f: impl Fn(f64) -> f64) -> Self {
        let eig = self.hermitian_part().entries.symmetric_eigen();
        let v = &eig.eigenvectors;
        let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|x| Complex64::new(f(x), 0.0)));
        Self {
            entries: v * d * v.adjoint(),
        }
    }
}

fn spectral_norm(m: &DMatrix<Complex64>) -> f64 {
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

macro_rules! binop {
    ($tr:ident, $method:ident, $op:tt) => {
        impl $tr<&AlgebraElement> for &AlgebraElement {
            type Output = AlgebraElement;

            /// Panics on dimension mismatch.
            fn $method(self, rhs: &AlgebraElement) -> AlgebraElement {
                assert_eq!(self.dim(), rhs.dim(), "algebra dimension mismatch");
                AlgebraElement {
                    entries: &self.entries $op &rhs.entries,
                }
            }
        }

        impl $tr<AlgebraElement> for AlgebraElement {
            type Output = AlgebraElement;

            fn $method(self, rhs: AlgebraElement) -> AlgebraElement {
                (&self).$method(&rhs)
            }
        }
    };
}

binop!(Add, add, +);
binop!(Sub, sub, -);
binop!(Mul, mul, *);

impl Neg for &AlgebraElement {
    type Output = AlgebraElement;

    fn neg(self) -> AlgebraElement {
        AlgebraElement {
            entries: -&self.entries,
        }
    }
}

/// Wire form: `{ "dim": n, "re": [[...]], "im": [[...]] }`.
///
/// `im` may be omitted on input, meaning all imaginary parts are zero.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixRepr {
    pub dim: usize,
    pub re: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub im: Option<Vec<Vec<f64>>>,
}

impl TryFrom<MatrixRepr> for AlgebraElement {
    type Error = AlgebraError;

    fn try_from(repr: MatrixRepr) -> Result<Self, Self::Error> {
        let n = repr.dim;
        if n == 0 {
            return Err(AlgebraError::Empty);
        }
        let check = |rows: &Vec<Vec<f64>>| -> Result<(), AlgebraError> {
            if rows.len() != n {
                return Err(AlgebraError::DimensionMismatch {
                    left: n,
                    right: rows.len(),
                });
            }
            for r in rows {
                if r.len() != n {
                    return Err(AlgebraError::NotSquare {
                        rows: n,
                        cols: r.len(),
                    });
                }
            }
            Ok(())
        };
        check(&repr.re)?;
        if let Some(im) = &repr.im {
            check(im)?;
        }
        Self::from_matrix(DMatrix::from_fn(n, n, |i, j| {
            let im = repr.im.as_ref().map_or(0.0, |im| im[i][j]);
            Complex64::new(repr.re[i][j], im)
        }))
    }
}

impl From<&AlgebraElement> for MatrixRepr {
    fn from(a: &AlgebraElement) -> Self {
        let n = a.dim();
        let grid = |f: &dyn Fn(Complex64) -> f64| -> Vec<Vec<f64>> {
            (0..n)
                .map(|i| (0..n).map(|j| f(a.entries[(i, j)])).collect())
                .collect()
        };
        MatrixRepr {
            dim: n,
            re: grid(&|z| z.re),
            im: Some(grid(&|z| z.im)),
        }
    }
}

impl Serialize for AlgebraElement {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        MatrixRepr::from(self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for AlgebraElement {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = MatrixRepr::deserialize(deserializer)?;
        AlgebraElement::try_from(repr).map_err(serde::de::Error::custom)
    }
}
