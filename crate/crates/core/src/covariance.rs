//! Symmetric positive-definite covariance operators (B and R).

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::scalar::{lit, Real};

/// SPD covariance with apply, inverse-apply and symmetric square-root apply.
///
/// Dense operators keep their symmetric square root and its inverse, both
/// computed once from an eigendecomposition.
#[derive(Debug, Clone, PartialEq)]
pub enum Covariance<T: Real> {
    Diagonal(DVector<T>),
    Dense { matrix: DMatrix<T>, sqrt: DMatrix<T>, inv_sqrt: DMatrix<T> },
}

impl<T: Real> Covariance<T> {
    /// Diagonal covariance from variances; every entry must be positive.
    pub fn diagonal(variances: DVector<T>) -> Result<Self> {
        if variances.iter().any(|v| !v.is_finite() || *v <= T::zero()) {
            return Err(Error::NotPositiveDefinite("diagonal variances must be positive"));
        }
        Ok(Self::Diagonal(variances))
    }

    /// `std^2 * I` of dimension `n`.
    pub fn scaled_identity(n: usize, std: T) -> Result<Self> {
        Self::diagonal(DVector::from_element(n, std * std))
    }

    pub fn dense(matrix: DMatrix<T>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::NotPositiveDefinite("covariance matrix must be square"));
        }
        let n = matrix.nrows();
        let scale = matrix.amax().max(T::one());
        let tol = lit::<T>(1e-10) * scale;
        for i in 0..n {
            for j in 0..i {
                if (matrix[(i, j)] - matrix[(j, i)]).abs() > tol {
                    return Err(Error::NotPositiveDefinite("covariance matrix must be symmetric"));
                }
            }
        }
        let eig = matrix.clone().symmetric_eigen();
        if eig.eigenvalues.iter().any(|l| !l.is_finite() || *l <= T::zero()) {
            return Err(Error::NotPositiveDefinite("covariance has a non-positive eigenvalue"));
        }
        let q = &eig.eigenvectors;
        let root = eig.eigenvalues.map(|l| l.sqrt());
        let sqrt = q * DMatrix::from_diagonal(&root) * q.transpose();
        let inv_sqrt = q * DMatrix::from_diagonal(&root.map(|r| T::one() / r)) * q.transpose();
        Ok(Self::Dense { matrix, sqrt, inv_sqrt })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Diagonal(d) => d.len(),
            Self::Dense { matrix, .. } => matrix.nrows(),
        }
    }

    pub fn is_diagonal(&self) -> bool {
        matches!(self, Self::Diagonal(_))
    }

    /// Variances on the diagonal.
    pub fn variances(&self) -> DVector<T> {
        match self {
            Self::Diagonal(d) => d.clone(),
            Self::Dense { matrix, .. } => matrix.diagonal(),
        }
    }

    pub fn to_matrix(&self) -> DMatrix<T> {
        match self {
            Self::Diagonal(d) => DMatrix::from_diagonal(d),
            Self::Dense { matrix, .. } => matrix.clone(),
        }
    }

    /// `C v`
    pub fn apply(&self, v: &DVector<T>) -> Result<DVector<T>> {
        check_dim("covariance apply", self.dim(), v.len())?;
        Ok(match self {
            Self::Diagonal(d) => d.component_mul(v),
            Self::Dense { matrix, .. } => matrix * v,
        })
    }

    /// `C^{-1} v`
    pub fn solve(&self, v: &DVector<T>) -> Result<DVector<T>> {
        check_dim("covariance solve", self.dim(), v.len())?;
        Ok(match self {
            Self::Diagonal(d) => v.component_div(d),
            Self::Dense { inv_sqrt, .. } => inv_sqrt * (inv_sqrt * v),
        })
    }

    /// `C^{1/2} v` with the symmetric square root.
    pub fn sqrt_apply(&self, v: &DVector<T>) -> Result<DVector<T>> {
        check_dim("covariance sqrt apply", self.dim(), v.len())?;
        Ok(match self {
            Self::Diagonal(d) => d.zip_map(v, |c, x| c.sqrt() * x),
            Self::Dense { sqrt, .. } => sqrt * v,
        })
    }

    /// `C^{-1/2} v`
    pub fn inv_sqrt_apply(&self, v: &DVector<T>) -> Result<DVector<T>> {
        check_dim("covariance inverse sqrt apply", self.dim(), v.len())?;
        Ok(match self {
            Self::Diagonal(d) => v.zip_map(d, |x, c| x / c.sqrt()),
            Self::Dense { inv_sqrt, .. } => inv_sqrt * v,
        })
    }

    /// `factor * C`
    pub fn scaled(&self, factor: T) -> Result<Self> {
        if !(factor > T::zero()) || !factor.is_finite() {
            return Err(Error::InvalidParameter(format!("covariance scale factor must be positive, got {factor}")));
        }
        match self {
            Self::Diagonal(d) => Self::diagonal(d * factor),
            Self::Dense { matrix, .. } => Self::dense(matrix * factor),
        }
    }
}
