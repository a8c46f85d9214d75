//! Scaled innovations, L1 and Huber penalties, their shrinkage (proximal)
//! operators, half-quadratic weights and the modified-data transforms used by
//! the ADMM and half-quadratic solvers.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::admm::AdmmState;
use crate::covariance::Covariance;
use crate::error::{check_dim, Error, Result};
use crate::model::StateVector;
use crate::observation::ObservationSet;
use crate::scalar::{lit, Real};

/// Whitened innovation `z = R^{-1/2} (H(x) - y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledInnovation<T: Real>(pub DVector<T>);

impl<T: Real> ScaledInnovation<T> {
    pub fn as_vector(&self) -> &DVector<T> {
        &self.0
    }

    pub fn into_inner(self) -> DVector<T> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Huber threshold `tau`, in standard deviations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HuberParams<T> {
    pub tau: T,
}

impl<T: Real> HuberParams<T> {
    pub fn new(tau: T) -> Result<Self> {
        if !(tau > T::zero()) {
            return Err(Error::InvalidParameter(format!("Huber tau must be positive, got {tau}")));
        }
        Ok(Self { tau })
    }
}

/// How the L1 branch of the shrinkage operators is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShrinkMode {
    /// Exact coordinate-wise proximal operator.
    #[default]
    Elementwise,
    /// Single 2-norm block shrinkage of the whole vector, with the Huber
    /// branch selected on `|d_l|` rather than on the shrunk value.
    Block,
}

/// `R^{-1/2} (H(x) - y)`
pub fn scaled_innovation<T: Real>(x: &StateVector<T>, obs: &ObservationSet<T>) -> Result<ScaledInnovation<T>> {
    scaled_departure(&x.values, obs).map(ScaledInnovation)
}

pub(crate) fn scaled_departure<T: Real>(x: &DVector<T>, obs: &ObservationSet<T>) -> Result<DVector<T>> {
    obs.obs_cov.inv_sqrt_apply(&obs.departure(x)?)
}

/// Scalar Huber penalty `g(a)`: `a^2/2` inside the threshold, `|a| - 1/2`
/// beyond it.
///
/// For `tau != 1` the two branches do not meet; at `|a| = tau` the lower of
/// the two values is taken so that the penalty is lower semicontinuous and
/// its proximal operator always has a minimizer.
pub fn huber_penalty<T: Real>(a: T, tau: T) -> T {
    let half = lit::<T>(0.5);
    let abs = a.abs();
    if abs < tau {
        a * a * half
    } else if abs > tau {
        abs - half
    } else {
        (a * a * half).min(abs - half)
    }
}

/// `sum_l g(z_l)`
pub fn huber_norm<T: Real>(z: &ScaledInnovation<T>, p: &HuberParams<T>) -> T {
    z.0.iter().fold(T::zero(), |acc, &a| acc + huber_penalty(a, p.tau))
}

fn check_mu<T: Real>(mu: T) -> Result<()> {
    if mu > T::zero() && mu.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("ADMM penalty mu must be positive, got {mu}")))
    }
}

/// `v = d - lambda / mu`
fn shifted<T: Real>(mu: T, d: &DVector<T>, lambda: &DVector<T>) -> Result<DVector<T>> {
    check_mu(mu)?;
    check_dim("shrinkage multipliers", d.len(), lambda.len())?;
    Ok(d - lambda / mu)
}

#[inline]
fn soft_threshold<T: Real>(v: T, threshold: T) -> T {
    let mag = (v.abs() - threshold).max(T::zero());
    if v < T::zero() {
        -mag
    } else {
        mag
    }
}

fn block_scale<T: Real>(v: &DVector<T>, mu: T) -> T {
    let norm = v.norm();
    if norm > T::zero() {
        (norm - T::one() / mu).max(T::zero()) / norm
    } else {
        T::zero()
    }
}

/// Solves `min_z ||z||_1 + mu/2 ||d - z - lambda/mu||^2`.
pub fn l1_shrinkage<T: Real>(mu: T, d: &DVector<T>, lambda: &DVector<T>, mode: ShrinkMode) -> Result<DVector<T>> {
    let v = shifted(mu, d, lambda)?;
    Ok(match mode {
        ShrinkMode::Elementwise => {
            let t = T::one() / mu;
            v.map(|a| soft_threshold(a, t))
        }
        ShrinkMode::Block => {
            let s = block_scale(&v, mu);
            v * s
        }
    })
}

/// Exact minimizer of `g(z) + mu/2 (v - z)^2` for the Huber penalty.
fn huber_prox_scalar<T: Real>(v: T, mu: T, tau: T) -> T {
    let half = lit::<T>(0.5);
    let objective = |z: T| huber_penalty(z, tau) + mu * half * (v - z) * (v - z);

    let quad = (mu * v / (T::one() + mu)).max(-tau).min(tau);
    let mut best = quad;
    let mut best_val = objective(quad);
    for side in [T::one(), -T::one()] {
        // linear branch on the closed half-line side * z >= tau
        let unconstrained = v - side / mu;
        let z = if unconstrained * side >= tau { unconstrained } else { side * tau };
        let val = objective(z);
        if val < best_val {
            best = z;
            best_val = val;
        }
    }
    best
}

/// Solves `min_z ||z||_hub + mu/2 ||d - z - lambda/mu||^2`.
pub fn huber_shrinkage<T: Real>(
    mu: T,
    d: &DVector<T>,
    lambda: &DVector<T>,
    p: &HuberParams<T>,
    mode: ShrinkMode,
) -> Result<DVector<T>> {
    let v = shifted(mu, d, lambda)?;
    Ok(match mode {
        ShrinkMode::Elementwise => v.map(|a| huber_prox_scalar(a, mu, p.tau)),
        ShrinkMode::Block => {
            let s = block_scale(&v, mu);
            let quad = mu / (T::one() + mu);
            DVector::from_fn(v.len(), |l, _| if d[l].abs() >= p.tau { s * v[l] } else { quad * v[l] })
        }
    })
}

/// Half-quadratic weights: `u_l = 1` for `|z_l| <= tau`, else `tau / |z_l|`.
pub fn hq_weights<T: Real>(z: &ScaledInnovation<T>, p: &HuberParams<T>) -> DVector<T> {
    z.0.map(|a| {
        let abs = a.abs();
        if abs <= p.tau {
            T::one()
        } else {
            p.tau / abs
        }
    })
}

/// ADMM modified data: `y' = y + R^{1/2} (z + lambda/mu)`, `R' = R / mu`.
pub fn modified_observations<T: Real>(obs: &ObservationSet<T>, st: &AdmmState<T>) -> Result<ObservationSet<T>> {
    modify_observations(obs, &st.z, &st.lambda, st.mu)
}

pub(crate) fn modify_observations<T: Real>(
    obs: &ObservationSet<T>,
    z: &DVector<T>,
    lambda: &DVector<T>,
    mu: T,
) -> Result<ObservationSet<T>> {
    check_mu(mu)?;
    check_dim("modified observations z", obs.dim(), z.len())?;
    check_dim("modified observations lambda", obs.dim(), lambda.len())?;
    let shift = obs.obs_cov.sqrt_apply(&(z + lambda / mu))?;
    obs.with_data(&obs.values + shift, obs.obs_cov.scaled(T::one() / mu)?)
}

/// Half-quadratic covariance `R' = R^{1/2} diag(2/u) R^{1/2}`.
pub fn hq_modified_covariance<T: Real>(r: &Covariance<T>, u: &DVector<T>) -> Result<Covariance<T>> {
    check_dim("half-quadratic weights", r.dim(), u.len())?;
    if u.iter().any(|&w| !(w > T::zero()) || !w.is_finite()) {
        return Err(Error::InvalidParameter("half-quadratic weights must be positive".into()));
    }
    let two = lit::<T>(2.0);
    match r {
        Covariance::Diagonal(var) => Covariance::diagonal(var.zip_map(u, |v, w| two * v / w)),
        Covariance::Dense { sqrt, .. } => {
            let scale = nalgebra::DMatrix::from_diagonal(&u.map(|w| two / w));
            let m = sqrt * scale * sqrt;
            Covariance::dense((&m + m.transpose()) * lit::<T>(0.5))
        }
    }
}

/// Univariate Laplace log-density `-log(2 b) - |z| / b` with scale `b`.
pub fn laplace_loglik<T: Real>(z: T, scale: T) -> Result<T> {
    if !(scale > T::zero()) {
        return Err(Error::InvalidParameter(format!("Laplace scale must be positive, got {scale}")));
    }
    Ok(-(lit::<T>(2.0) * scale).ln() - z.abs() / scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::observation::ObservationOperator;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(x)
    }

    fn tau(t: f64) -> HuberParams<f64> {
        HuberParams::new(t).unwrap()
    }

    #[test]
    fn scaled_innovation_whitens() {
        let r = Covariance::diagonal(v(&[4.0, 4.0])).unwrap();
        let obs = ObservationSet::new(0.0, v(&[0.0, 0.0]), r, ObservationOperator::Identity).unwrap();
        let x = StateVector::new(v(&[2.0, -4.0]), 0.0);
        assert_eq!(scaled_innovation(&x, &obs).unwrap().0, v(&[1.0, -2.0]));

        let r = Covariance::scaled_identity(2, 1.0).unwrap();
        let obs = ObservationSet::new(0.0, v(&[0.5, 1.0]), r, ObservationOperator::Identity).unwrap();
        let x = StateVector::new(v(&[3.0, -1.0]), 0.0);
        assert_eq!(scaled_innovation(&x, &obs).unwrap().0, v(&[2.5, -2.0]));
        let perfect = StateVector::new(v(&[0.5, 1.0]), 0.0);
        assert_eq!(scaled_innovation(&perfect, &obs).unwrap().0, v(&[0.0, 0.0]));
    }

    #[test]
    fn huber_norm_values() {
        assert_eq!(huber_norm(&ScaledInnovation(v(&[0.0, 0.0])), &tau(1.0)), 0.0);
        assert_relative_eq!(huber_norm(&ScaledInnovation(v(&[0.5, 3.0])), &tau(1.0)), 2.625);
        // continuous at the breakpoint when tau = 1
        let eps = 1e-12;
        assert!(f64::abs(huber_penalty(1.0 + eps, 1.0) - huber_penalty(1.0 - eps, 1.0)) < 1e-11);
        assert_eq!(huber_penalty(1.0, 1.0), 0.5);
        // lower value taken at the breakpoint otherwise
        assert_eq!(huber_penalty(3.0, 3.0), 2.5);
        assert_eq!(huber_penalty(-3.0, 3.0), 2.5);
    }

    #[test]
    fn l1_shrinkage_examples() {
        for mode in [ShrinkMode::Elementwise, ShrinkMode::Block] {
            assert_relative_eq!(l1_shrinkage(1.0, &v(&[3.0]), &v(&[0.0]), mode).unwrap(), v(&[2.0]));
            let z = l1_shrinkage(2.0, &v(&[1.0, -3.0]), &v(&[2.0, -6.0]), mode).unwrap();
            assert_eq!(z, v(&[0.0, 0.0]));
        }
        let d = v(&[3.0, 0.5]);
        let zero = v(&[0.0, 0.0]);
        let elem = l1_shrinkage(1.0, &d, &zero, ShrinkMode::Elementwise).unwrap();
        assert_eq!(elem, v(&[2.0, 0.0]));
        let block = l1_shrinkage(1.0, &d, &zero, ShrinkMode::Block).unwrap();
        let n = 9.25f64.sqrt();
        assert_relative_eq!(block, v(&[3.0, 0.5]) * ((n - 1.0) / n), epsilon = 1e-15);
        let obj = |z: &DVector<f64>| z.lp_norm(1) + 0.5 * (&d - z).norm_squared();
        assert!(obj(&elem) < obj(&block));
    }

    #[test]
    fn huber_shrinkage_examples() {
        let m = ShrinkMode::Elementwise;
        assert_relative_eq!(huber_shrinkage(1.0, &v(&[0.5]), &v(&[0.0]), &tau(1.0), m).unwrap(), v(&[0.25]));
        assert_eq!(huber_shrinkage(1.0, &v(&[0.0, 0.0]), &v(&[0.0, 0.0]), &tau(1.0), m).unwrap(), v(&[0.0, 0.0]));
        assert_relative_eq!(huber_shrinkage(1.0, &v(&[3.0]), &v(&[0.0]), &tau(1.0), m).unwrap(), v(&[2.0]));
        let block = huber_shrinkage(1.0, &v(&[0.0]), &v(&[0.0]), &tau(1.0), ShrinkMode::Block).unwrap();
        assert_eq!(block, v(&[0.0]));
    }

    #[test]
    fn block_huber_branches_on_innovation() {
        // d = (3, 0.5), lambda = (0, 1), mu = 2, tau = 1:
        // v = (3, 0); first entry uses the block L1 branch, second the quadratic one.
        let z = huber_shrinkage(2.0, &v(&[3.0, 0.5]), &v(&[0.0, 1.0]), &tau(1.0), ShrinkMode::Block).unwrap();
        assert_relative_eq!(z, v(&[2.5, 0.0]), epsilon = 1e-15);
    }

    #[test]
    fn shrinkage_rejects_bad_mu() {
        assert!(l1_shrinkage(0.0, &v(&[1.0]), &v(&[0.0]), ShrinkMode::Elementwise).is_err());
        assert!(huber_shrinkage(-1.0, &v(&[1.0]), &v(&[0.0]), &tau(1.0), ShrinkMode::Elementwise).is_err());
        assert!(l1_shrinkage(1.0, &v(&[1.0]), &v(&[0.0, 1.0]), ShrinkMode::Elementwise).is_err());
    }

    #[test]
    fn hq_weight_examples() {
        assert_eq!(hq_weights(&ScaledInnovation(v(&[0.0, 0.0])), &tau(1.0)), v(&[1.0, 1.0]));
        assert_eq!(hq_weights(&ScaledInnovation(v(&[0.5, -4.0])), &tau(1.0)), v(&[1.0, 0.25]));
    }

    #[test]
    fn modified_observation_examples() {
        let r = Covariance::scaled_identity(2, 1.0).unwrap();
        let obs = ObservationSet::new(0.0, v(&[1.0, -1.0]), r, ObservationOperator::Identity).unwrap();
        let st = AdmmState::initialize(v(&[0.0, 0.0]), 1.0, 1.6).unwrap();
        assert_eq!(modified_observations(&obs, &st).unwrap(), obs);

        let mut st = AdmmState::initialize(v(&[1.0, 0.0]), 2.0, 1.6).unwrap();
        st.lambda = v(&[2.0, 0.0]);
        let m = modified_observations(&obs, &st).unwrap();
        assert_eq!(m.values, v(&[3.0, -1.0]));
        assert_eq!(m.obs_cov.variances(), v(&[0.5, 0.5]));

        let st = AdmmState::initialize(v(&[0.0, 0.0]), 4.0, 1.6).unwrap();
        let obs4 = obs.with_data(obs.values.clone(), Covariance::diagonal(v(&[2.0, 8.0])).unwrap()).unwrap();
        assert_eq!(modified_observations(&obs4, &st).unwrap().obs_cov.variances(), v(&[0.5, 2.0]));
    }

    #[test]
    fn hq_covariance_examples() {
        let r = Covariance::scaled_identity(2, 1.0).unwrap();
        let doubled = hq_modified_covariance(&r, &v(&[1.0, 1.0])).unwrap();
        assert_eq!(doubled, Covariance::diagonal(v(&[2.0, 2.0])).unwrap());
        let inflated = hq_modified_covariance(&r, &v(&[1.0, 0.25])).unwrap();
        assert_eq!(inflated.variances(), v(&[2.0, 8.0]));
        assert!(inflated.is_diagonal());
        assert!(hq_modified_covariance(&r, &v(&[1.0, 0.0])).is_err());

        let dense = Covariance::dense(nalgebra::DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0])).unwrap();
        let m = hq_modified_covariance(&dense, &v(&[1.0, 1.0])).unwrap();
        assert_relative_eq!(m.to_matrix(), dense.to_matrix() * 2.0, epsilon = 1e-12);
    }

    #[test]
    fn laplace_loglik_examples() {
        assert_relative_eq!(laplace_loglik(0.0, 0.5).unwrap(), 0.0);
        assert_eq!(laplace_loglik(1.3, 2.0).unwrap(), laplace_loglik(-1.3, 2.0).unwrap());
        assert!(laplace_loglik(1.0, 0.0).is_err());
    }

    #[test]
    fn laplace_variance_is_twice_scale_squared() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Exp};
        // Laplace(b) = sign * Exp(1/b); at b = 2 the variance is 8.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let exp = Exp::new(0.5).unwrap();
        let n = 200_000;
        let mut sum = 0.0;
        let mut sq = 0.0;
        for i in 0..n {
            let e: f64 = exp.sample(&mut rng);
            let s = if i % 2 == 0 { e } else { -e };
            sum += s;
            sq += s * s;
        }
        let mean = sum / n as f64;
        let var = sq / n as f64 - mean * mean;
        assert!((var - 8.0).abs() < 0.15, "variance {var}");
        // log-density integrates to one: numerical quadrature of exp(loglik)
        let h = 1e-3;
        let mass: f64 = (-40_000..40_000).map(|k| laplace_loglik((k as f64 + 0.5) * h, 2.0).unwrap().exp() * h).sum();
        assert!((mass - 1.0).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn shrinkage_is_nonexpansive(
            a in proptest::collection::vec(-20.0f64..20.0, 5),
            b in proptest::collection::vec(-20.0f64..20.0, 5),
            mu in 0.1f64..50.0,
        ) {
            let (a, b) = (DVector::from_vec(a), DVector::from_vec(b));
            let zero = DVector::zeros(5);
            for mode in [ShrinkMode::Elementwise, ShrinkMode::Block] {
                let za = l1_shrinkage(mu, &a, &zero, mode).unwrap();
                let zb = l1_shrinkage(mu, &b, &zero, mode).unwrap();
                prop_assert!((za - zb).norm() <= (&a - &b).norm() + 1e-12);
            }
            // the Huber prox is non-expansive when the penalty is convex (tau = 1)
            let p = tau(1.0);
            let za = huber_shrinkage(mu, &a, &zero, &p, ShrinkMode::Elementwise).unwrap();
            let zb = huber_shrinkage(mu, &b, &zero, &p, ShrinkMode::Elementwise).unwrap();
            prop_assert!((za - zb).norm() <= (&a - &b).norm() + 1e-12);
        }

        #[test]
        fn huber_norm_bounded_by_half_squared_norm(
            z in proptest::collection::vec(-10.0f64..10.0, 1..8),
            t in 1.0f64..4.0,
        ) {
            let z = DVector::from_vec(z);
            let h = huber_norm(&ScaledInnovation(z.clone()), &tau(t));
            let q = 0.5 * z.norm_squared();
            prop_assert!(h <= q + 1e-12);
            let inside = z.iter().all(|a| a.abs() < t);
            if inside {
                prop_assert!((h - q).abs() < 1e-12);
            } else {
                prop_assert!(h < q);
            }
        }

        #[test]
        fn hq_weights_minimize_the_augmented_term(a in -50.0f64..50.0, t in 0.5f64..4.0) {
            // For the Huber potential phi(a) = a^2/2 (|a|<=tau), tau|a| - tau^2/2 beyond,
            // the half-quadratic weight is phi'(a)/a.
            let u = hq_weights(&ScaledInnovation(DVector::from_element(1, a)), &tau(t))[0];
            prop_assert!(u > 0.0 && u <= 1.0);
            let expected = if a.abs() <= t { 1.0 } else { t / a.abs() };
            prop_assert!((u - expected).abs() < 1e-15);
        }
    }
}
