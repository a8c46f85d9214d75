//! ADMM state shared by the robust 3D-Var, 4D-Var and ensemble solvers.

use nalgebra::DVector;

use crate::error::{check_dim, Error, Result};
use crate::norms::{huber_norm, huber_shrinkage, l1_shrinkage, HuberParams, ScaledInnovation, ShrinkMode};
use crate::scalar::Real;

/// Default penalty growth factor. Faster growth freezes the iteration at a
/// feasible but suboptimal point within 15 outer iterations.
pub const DEFAULT_RHO: f64 = 1.1;

/// Auxiliary variable `z`, multipliers `lambda` and penalty `mu`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState<T: Real> {
    pub z: DVector<T>,
    pub lambda: DVector<T>,
    pub mu: T,
    pub rho: T,
    pub outer_iter: usize,
}

impl<T: Real> AdmmState<T> {
    /// `z = d0`, `lambda = 0`.
    pub fn initialize(d0: DVector<T>, mu0: T, rho: T) -> Result<Self> {
        if !(mu0 > T::zero()) || !mu0.is_finite() {
            return Err(Error::InvalidParameter(format!("mu0 must be positive, got {mu0}")));
        }
        if !(rho > T::one()) || !rho.is_finite() {
            return Err(Error::InvalidParameter(format!("rho must exceed 1, got {rho}")));
        }
        let lambda = DVector::zeros(d0.len());
        Ok(Self { z: d0, lambda, mu: mu0, rho, outer_iter: 0 })
    }

    pub fn dim(&self) -> usize {
        self.z.len()
    }

    /// z-step: proximal step of the penalty at the current `mu`.
    pub fn shrink(&mut self, d: &DVector<T>, penalty: &RobustPenalty<T>) -> Result<()> {
        check_dim("ADMM innovation", self.dim(), d.len())?;
        self.z = penalty.prox(self.mu, d, &self.lambda)?;
        Ok(())
    }

    /// `lambda <- lambda - d + z`
    pub fn update_multipliers(&mut self, d: &DVector<T>) -> Result<()> {
        check_dim("ADMM innovation", self.dim(), d.len())?;
        self.lambda = &self.lambda - d + &self.z;
        Ok(())
    }

    /// `mu <- rho * mu`
    pub fn grow_penalty(&mut self) {
        self.mu *= self.rho;
        self.outer_iter += 1;
    }

    /// `||d - z||`
    pub fn residual(&self, d: &DVector<T>) -> T {
        (d - &self.z).norm()
    }
}

/// Robust observation penalty `weight * ||z||` in the L1 or Huber norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RobustPenalty<T: Real> {
    L1 { weight: T, mode: ShrinkMode },
    Huber { params: HuberParams<T>, weight: T, mode: ShrinkMode },
}

impl<T: Real> RobustPenalty<T> {
    pub fn weight(&self) -> T {
        match *self {
            RobustPenalty::L1 { weight, .. } | RobustPenalty::Huber { weight, .. } => weight,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let w = self.weight();
        if !(w > T::zero()) || !w.is_finite() {
            return Err(Error::InvalidParameter(format!("robust weight must be positive, got {w}")));
        }
        if let RobustPenalty::Huber { params, .. } = self {
            HuberParams::new(params.tau)?;
        }
        Ok(())
    }

    /// `argmin_z weight * ||z|| + mu/2 ||d - z - lambda/mu||^2`
    pub fn prox(&self, mu: T, d: &DVector<T>, lambda: &DVector<T>) -> Result<DVector<T>> {
        // scaling the penalty by w is the same as shrinking with mu / w
        // against multipliers that are also divided by w
        let w = self.weight();
        let lam = lambda / w;
        match self {
            RobustPenalty::L1 { mode, .. } => l1_shrinkage(mu / w, d, &lam, *mode),
            RobustPenalty::Huber { params, mode, .. } => huber_shrinkage(mu / w, d, &lam, params, *mode),
        }
    }

    /// `weight * ||z||`
    pub fn value(&self, z: &DVector<T>) -> T {
        match self {
            RobustPenalty::L1 { weight, .. } => *weight * z.lp_norm(1),
            RobustPenalty::Huber { params, weight, .. } => *weight * huber_norm(&ScaledInnovation(z.clone()), params),
        }
    }
}
