//! Observation sets and linear observation operators.

use nalgebra::{DMatrix, DVector};

use crate::covariance::Covariance;
use crate::error::{check_dim, Error, Result};
use crate::scalar::Real;

/// Observation operator `H`.
///
/// All variants are linear, so the tangent-linear operator is `H` itself.
#[derive(Debug, Clone, PartialEq)]
pub enum ObservationOperator<T: Real> {
    /// Every state component is observed.
    Identity,
    /// The listed state components are observed, in order.
    Subset { indices: Vec<usize>, state_dim: usize },
    /// Generic dense linear map (m x n).
    Linear(DMatrix<T>),
}

impl<T: Real> ObservationOperator<T> {
    pub fn subset(indices: Vec<usize>, state_dim: usize) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= state_dim) {
            return Err(Error::InvalidParameter(format!(
                "observed index {bad} out of range for state dimension {state_dim}"
            )));
        }
        Ok(Self::Subset { indices, state_dim })
    }

    /// Number of observations produced for a state of dimension `n`.
    pub fn output_dim(&self, n: usize) -> usize {
        match self {
            Self::Identity => n,
            Self::Subset { indices, .. } => indices.len(),
            Self::Linear(h) => h.nrows(),
        }
    }

    fn check_input(&self, n: usize) -> Result<()> {
        match self {
            Self::Identity => Ok(()),
            Self::Subset { state_dim, .. } => check_dim("observation operator input", *state_dim, n),
            Self::Linear(h) => check_dim("observation operator input", h.ncols(), n),
        }
    }

    /// `H x`
    pub fn apply(&self, x: &DVector<T>) -> Result<DVector<T>> {
        self.check_input(x.len())?;
        Ok(match self {
            Self::Identity => x.clone(),
            Self::Subset { indices, .. } => DVector::from_iterator(indices.len(), indices.iter().map(|&i| x[i])),
            Self::Linear(h) => h * x,
        })
    }

    /// `H^T r` for a state of dimension `n`.
    pub fn adjoint_apply(&self, r: &DVector<T>, n: usize) -> Result<DVector<T>> {
        self.check_input(n)?;
        check_dim("observation adjoint input", self.output_dim(n), r.len())?;
        Ok(match self {
            Self::Identity => r.clone(),
            Self::Subset { indices, .. } => {
                let mut out = DVector::zeros(n);
                for (k, &i) in indices.iter().enumerate() {
                    out[i] += r[k];
                }
                out
            }
            Self::Linear(h) => h.transpose() * r,
        })
    }

    /// Grid location of observation `k`, when the operator has one.
    pub fn location(&self, k: usize) -> Option<usize> {
        match self {
            Self::Identity => Some(k),
            Self::Subset { indices, .. } => indices.get(k).copied(),
            Self::Linear(_) => None,
        }
    }
}

/// Observations `y` at one time with diagonal error covariance `R`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet<T: Real> {
    pub time: T,
    pub values: DVector<T>,
    pub obs_cov: Covariance<T>,
    pub operator: ObservationOperator<T>,
}

impl<T: Real> ObservationSet<T> {
    pub fn new(time: T, values: DVector<T>, obs_cov: Covariance<T>, operator: ObservationOperator<T>) -> Result<Self> {
        if !obs_cov.is_diagonal() {
            return Err(Error::InvalidParameter("observation error covariance must be diagonal".into()));
        }
        check_dim("observation covariance", values.len(), obs_cov.dim())?;
        match &operator {
            ObservationOperator::Identity => {}
            ObservationOperator::Subset { indices, .. } => {
                check_dim("observation values", indices.len(), values.len())?
            }
            ObservationOperator::Linear(h) => check_dim("observation values", h.nrows(), values.len())?,
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("observation values"));
        }
        Ok(Self { time, values, obs_cov, operator })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Raw innovation `H(x) - y`.
    pub fn departure(&self, x: &DVector<T>) -> Result<DVector<T>> {
        let hx = self.operator.apply(x)?;
        check_dim("observation departure", self.values.len(), hx.len())?;
        Ok(hx - &self.values)
    }

    /// Same operator and time with new values and covariance.
    pub fn with_data(&self, values: DVector<T>, obs_cov: Covariance<T>) -> Result<Self> {
        Self::new(self.time, values, obs_cov, self.operator.clone())
    }
}
