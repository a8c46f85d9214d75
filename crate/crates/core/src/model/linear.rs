use nalgebra::{DMatrix, DVector};

use super::Dynamics;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Linear test system `dx/dt = A x`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearDynamics<T: Real> {
    pub a: DMatrix<T>,
}

impl<T: Real> LinearDynamics<T> {
    pub fn new(a: DMatrix<T>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::InvalidParameter("linear dynamics matrix must be square".into()));
        }
        Ok(Self { a })
    }
}

impl<T: Real> Dynamics<T> for LinearDynamics<T> {
    fn dim(&self) -> usize {
        self.a.nrows()
    }

    fn rhs(&self, x: &DVector<T>) -> DVector<T> {
        &self.a * x
    }

    fn jvp(&self, _x: &DVector<T>, v: &DVector<T>) -> DVector<T> {
        &self.a * v
    }

    fn vjp(&self, _x: &DVector<T>, w: &DVector<T>) -> DVector<T> {
        self.a.tr_mul(w)
    }
}
