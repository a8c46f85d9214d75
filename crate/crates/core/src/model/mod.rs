//! Dynamical models, the fixed-step RK4 integrator and its discrete
//! tangent-linear and adjoint.

mod linear;
mod lorenz96;
mod rk4;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::scalar::Real;

pub use linear::LinearDynamics;
pub use lorenz96::{lorenz96_rhs, Lorenz96, ModelConfig};
pub use rk4::Rk4;

/// Model state `x` at a given time.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector<T: Real> {
    pub values: DVector<T>,
    pub time: T,
}

impl<T: Real> StateVector<T> {
    pub fn new(values: DVector<T>, time: T) -> Self {
        Self { values, time }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Ordered model states on the integrator's time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T: Real> {
    states: Vec<StateVector<T>>,
}

impl<T: Real> Trajectory<T> {
    pub fn new(states: Vec<StateVector<T>>) -> Result<Self> {
        let Some(first) = states.first() else {
            return Err(Error::InvalidParameter("trajectory must not be empty".into()));
        };
        let n = first.dim();
        for pair in states.windows(2) {
            if pair[1].time <= pair[0].time {
                return Err(Error::UnorderedTimes);
            }
            if pair[1].dim() != n {
                return Err(Error::DimensionMismatch {
                    context: "trajectory state",
                    expected: n,
                    found: pair[1].dim(),
                });
            }
        }
        Ok(Self { states })
    }

    pub fn states(&self) -> &[StateVector<T>] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn first(&self) -> &StateVector<T> {
        &self.states[0]
    }

    pub fn last(&self) -> &StateVector<T> {
        &self.states[self.states.len() - 1]
    }

    pub fn into_states(self) -> Vec<StateVector<T>> {
        self.states
    }
}

/// Right-hand side `dx/dt = f(x)` of an autonomous ODE with its Jacobian
/// products.
pub trait Dynamics<T: Real>: Sync {
    fn dim(&self) -> usize;

    /// `f(x)`
    fn rhs(&self, x: &DVector<T>) -> DVector<T>;

    /// `J(x) v`
    fn jvp(&self, x: &DVector<T>, v: &DVector<T>) -> DVector<T>;

    /// `J(x)^T w`
    fn vjp(&self, x: &DVector<T>, w: &DVector<T>) -> DVector<T>;
}

impl<T: Real, D: Dynamics<T> + ?Sized> Dynamics<T> for &D {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn rhs(&self, x: &DVector<T>) -> DVector<T> {
        (**self).rhs(x)
    }
    fn jvp(&self, x: &DVector<T>, v: &DVector<T>) -> DVector<T> {
        (**self).jvp(x, v)
    }
    fn vjp(&self, x: &DVector<T>, w: &DVector<T>) -> DVector<T> {
        (**self).vjp(x, w)
    }
}
