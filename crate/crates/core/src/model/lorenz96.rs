use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{Dynamics, Rk4, StateVector};
use crate::error::{check_dim, Error, Result};
use crate::scalar::{lit, Real};

/// Lorenz-96 configuration: dimension, forcing and integrator step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n: usize,
    pub forcing: f64,
    pub dt: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { n: 40, forcing: 8.0, dt: 0.005 }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 4 {
            return Err(Error::InvalidParameter(format!("Lorenz-96 needs n >= 4, got {}", self.n)));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        if !self.forcing.is_finite() {
            return Err(Error::InvalidParameter("forcing must be finite".into()));
        }
        Ok(())
    }

    /// RK4 integrator for the Lorenz-96 model described by this config.
    pub fn integrator<T: Real>(&self) -> Result<Rk4<T, Lorenz96<T>>> {
        self.validate()?;
        Rk4::new(Lorenz96 { n: self.n, forcing: lit(self.forcing) }, lit(self.dt))
    }
}

/// Lorenz-96 with cyclic boundary conditions:
/// `dx_k/dt = x_{k-1} (x_{k+1} - x_{k-2}) - x_k + F`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lorenz96<T: Real> {
    pub n: usize,
    pub forcing: T,
}

#[inline]
fn wrap(k: usize, offset: isize, n: usize) -> usize {
    (k as isize + offset).rem_euclid(n as isize) as usize
}

impl<T: Real> Dynamics<T> for Lorenz96<T> {
    fn dim(&self) -> usize {
        self.n
    }

    fn rhs(&self, x: &DVector<T>) -> DVector<T> {
        let n = self.n;
        DVector::from_fn(n, |k, _| x[wrap(k, -1, n)] * (x[wrap(k, 1, n)] - x[wrap(k, -2, n)]) - x[k] + self.forcing)
    }

    fn jvp(&self, x: &DVector<T>, v: &DVector<T>) -> DVector<T> {
        let n = self.n;
        DVector::from_fn(n, |k, _| {
            let (km2, km1, kp1) = (wrap(k, -2, n), wrap(k, -1, n), wrap(k, 1, n));
            (x[kp1] - x[km2]) * v[km1] + x[km1] * (v[kp1] - v[km2]) - v[k]
        })
    }

    fn vjp(&self, x: &DVector<T>, w: &DVector<T>) -> DVector<T> {
        let n = self.n;
        // Column j of the Jacobian has entries in rows j+1, j-1, j+2 and j.
        DVector::from_fn(n, |j, _| {
            let (jm2, jm1, jp1, jp2) = (wrap(j, -2, n), wrap(j, -1, n), wrap(j, 1, n), wrap(j, 2, n));
            (x[jp2] - x[jm1]) * w[jp1] + x[jm2] * w[jm1] - x[jp1] * w[jp2] - w[j]
        })
    }
}

/// Evaluates the Lorenz-96 tendency for `x` under `cfg`.
pub fn lorenz96_rhs<T: Real>(x: &StateVector<T>, cfg: &ModelConfig) -> Result<DVector<T>> {
    cfg.validate()?;
    check_dim("lorenz96 state", cfg.n, x.dim())?;
    Ok(Lorenz96 { n: cfg.n, forcing: lit::<T>(cfg.forcing) }.rhs(&x.values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn state(v: &[f64]) -> StateVector<f64> {
        StateVector::new(DVector::from_row_slice(v), 0.0)
    }

    #[test]
    fn fixed_point_and_zero_state() {
        let cfg = ModelConfig::default();
        let f = lorenz96_rhs(&state(&[8.0; 40]), &cfg).unwrap();
        assert!(f.amax() < 1e-14);
        let g = lorenz96_rhs(&state(&[0.0; 40]), &cfg).unwrap();
        assert!(g.iter().all(|&v| v == 8.0));
    }

    #[test]
    fn small_stencil_by_hand() {
        // n=4, F=0, x=(1,0,0,0):
        // f0 = x3 (x1 - x2) - x0 = -1
        // f1 = x0 (x2 - x3) - x1 = 0
        // f2 = x1 (x3 - x0) - x2 = 0
        // f3 = x2 (x0 - x1) - x3 = 0
        let cfg = ModelConfig { n: 4, forcing: 0.0, dt: 0.01 };
        let f = lorenz96_rhs(&state(&[1.0, 0.0, 0.0, 0.0]), &cfg).unwrap();
        assert_eq!(f.as_slice(), &[-1.0, 0.0, 0.0, 0.0]);
        // x=(1,2,3,4): f0 = 4(2-3)-1 = -5, f1 = 1(3-4)-2 = -3,
        // f2 = 2(4-1)-3 = 3, f3 = 3(1-2)-4 = -7
        let f = lorenz96_rhs(&state(&[1.0, 2.0, 3.0, 4.0]), &cfg).unwrap();
        assert_eq!(f.as_slice(), &[-5.0, -3.0, 3.0, -7.0]);
    }

    #[test]
    fn rejects_bad_dimension_and_config() {
        let cfg = ModelConfig::default();
        assert!(matches!(lorenz96_rhs(&state(&[1.0; 5]), &cfg), Err(Error::DimensionMismatch { .. })));
        let small = ModelConfig { n: 3, ..cfg };
        assert!(lorenz96_rhs(&state(&[1.0; 3]), &small).is_err());
    }

    #[test]
    fn jacobian_products_are_transposes() {
        let m = Lorenz96 { n: 7, forcing: 8.0 };
        let x = DVector::from_fn(7, |i, _| (i as f64 * 0.7).sin() * 3.0);
        let jac = DMatrix::from_columns(
            &(0..7)
                .map(|j| {
                    let mut e = DVector::zeros(7);
                    e[j] = 1.0;
                    m.jvp(&x, &e)
                })
                .collect::<Vec<_>>(),
        );
        for i in 0..7 {
            let mut e = DVector::zeros(7);
            e[i] = 1.0;
            let row = m.vjp(&x, &e);
            for j in 0..7 {
                assert!((row[j] - jac[(i, j)]).abs() < 1e-14);
            }
        }
        // Jacobian against central differences
        let h = 1e-6;
        for j in 0..7 {
            let mut e = DVector::zeros(7);
            e[j] = h;
            let fd = (m.rhs(&(&x + &e)) - m.rhs(&(&x - &e))) / (2.0 * h);
            for i in 0..7 {
                assert!((fd[i] - jac[(i, j)]).abs() < 1e-8);
            }
        }
    }
}
