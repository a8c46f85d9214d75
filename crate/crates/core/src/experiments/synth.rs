use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::covariance::Covariance;
use crate::error::{check_dim, Error, Result};
use crate::model::{ModelConfig, StateVector, Trajectory};
use crate::observation::{ObservationOperator, ObservationSet};
use crate::scalar::{lit, Real};

/// Times closer than this are treated as equal.
pub(crate) const TIME_TOL: f64 = 1e-6;

/// Random streams, so that e.g. good and bad observation sets share their
/// noise draws.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Stream {
    ObservationNoise = 1,
    Background = 2,
    Ensemble = 3,
}

pub(crate) fn rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream as u64);
    r
}

pub(crate) fn gaussian(rng: &mut ChaCha8Rng, n: usize, std: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| {
        let e: f64 = StandardNormal.sample(rng);
        std * e
    })
}

/// Faulty-sensor schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutlierSchedule {
    pub channels: Vec<usize>,
    /// Displacement in observation standard deviations.
    pub magnitude_sigma: f64,
    /// Outliers occur at multiples of this period; at every observation
    /// time when `None` (written `"every"` in config files).
    #[serde(with = "period_repr")]
    pub period: Option<f64>,
    /// +1 or -1.
    pub sign: f64,
}

mod period_repr {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Period(f64),
        Word(String),
    }

    pub fn serialize<S: Serializer>(p: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match p {
            Some(v) => Repr::Period(*v),
            None => Repr::Word("every".into()),
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Period(v) => Ok(Some(v)),
            Repr::Word(w) if w == "every" => Ok(None),
            Repr::Word(w) => {
                Err(serde::de::Error::custom(format!("outlier period must be a number or \"every\", got \"{w}\"")))
            }
        }
    }
}

impl Default for OutlierSchedule {
    fn default() -> Self {
        Self { channels: vec![0], magnitude_sigma: 100.0, period: Some(0.2), sign: 1.0 }
    }
}

impl OutlierSchedule {
    pub fn none() -> Self {
        Self { channels: Vec::new(), ..Self::default() }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.magnitude_sigma > 0.0) {
            return Err(Error::InvalidParameter("outlier magnitude_sigma must be positive".into()));
        }
        if let Some(p) = self.period {
            if !(p > 0.0) {
                return Err(Error::InvalidParameter("outlier period must be positive".into()));
            }
        }
        if self.sign != 1.0 && self.sign != -1.0 {
            return Err(Error::InvalidParameter("outlier sign must be 1 or -1".into()));
        }
        if let Some(&c) = self.channels.iter().find(|&&c| c >= n) {
            return Err(Error::InvalidParameter(format!("outlier channel {c} out of range for n = {n}")));
        }
        Ok(())
    }

    pub fn active_at(&self, t: f64) -> bool {
        match self.period {
            None => true,
            Some(p) => {
                let k = (t / p).round();
                k >= 1.0 && (t - k * p).abs() < TIME_TOL
            }
        }
    }
}

/// Spins up from `linspace(-2, 2, n)` for `spinup` time units, then
/// integrates the reference over `[0, window]`.
pub fn make_reference(cfg: &ModelConfig, spinup: f64, window: f64) -> Result<Trajectory<f64>> {
    let model = cfg.integrator::<f64>()?;
    let n = cfg.n;
    let start = DVector::from_fn(n, |i, _| -2.0 + 4.0 * i as f64 / (n - 1) as f64);
    let spun = model.forecast(&StateVector::new(start, 0.0), spinup)?;
    model.integrate(&StateVector::new(spun.values, 0.0), window)
}

/// Mean of `|x|` over all states and components.
pub fn time_averaged_magnitude<T: Real>(traj: &Trajectory<T>) -> T {
    let count = traj.len() * traj.first().dim();
    let sum = traj.states().iter().fold(T::zero(), |acc, s| acc + s.values.iter().fold(T::zero(), |a, v| a + v.abs()));
    sum / lit::<T>(count as f64)
}

/// Reference state at `t`, which must be a trajectory node.
pub fn state_at(traj: &Trajectory<f64>, t: f64) -> Result<&StateVector<f64>> {
    let states = traj.states();
    let idx = states.partition_point(|s| s.time < t - TIME_TOL);
    states
        .get(idx)
        .filter(|s| (s.time - t).abs() < TIME_TOL)
        .ok_or_else(|| Error::InvalidParameter(format!("time {t} is not on the reference time grid")))
}

/// `k * freq` for `k = 1, 2, ...` up to `window`.
pub fn observation_times(freq: f64, window: f64) -> Result<Vec<f64>> {
    if !(freq > 0.0) || !(window > 0.0) {
        return Err(Error::InvalidParameter("observation frequency and window must be positive".into()));
    }
    let count = (window / freq + TIME_TOL).floor() as usize;
    if (count as f64 * freq - window).abs() > TIME_TOL {
        return Err(Error::InvalidParameter(format!(
            "observation frequency {freq} does not divide the window {window}"
        )));
    }
    Ok((1..=count).map(|k| k as f64 * freq).collect())
}

/// Noisy full-state observations of the reference at every `freq` time
/// units, with outliers injected per `sched`. The noise standard deviation
/// is `noise_std_frac` times the time-averaged magnitude of the reference.
pub fn synthesize_observations(
    reference: &Trajectory<f64>,
    freq: f64,
    noise_std_frac: f64,
    sched: &OutlierSchedule,
    seed: u64,
) -> Result<Vec<ObservationSet<f64>>> {
    let n = reference.first().dim();
    sched.validate(n)?;
    if !(noise_std_frac >= 0.0) {
        return Err(Error::InvalidParameter("noise_std_frac must be non-negative".into()));
    }
    let std = noise_std_frac * time_averaged_magnitude(reference);
    let window = reference.last().time - reference.first().time;
    let t0 = reference.first().time;
    let mut noise = rng(seed, Stream::ObservationNoise);
    // unit variance when noise-free keeps R positive definite
    let obs_cov = Covariance::scaled_identity(n, if std > 0.0 { std } else { 1.0 })?;
    observation_times(freq, window)?
        .into_iter()
        .map(|dt| {
            let t = t0 + dt;
            let truth = state_at(reference, t)?;
            let mut y = &truth.values + gaussian(&mut noise, n, std);
            if sched.active_at(dt) {
                for &c in &sched.channels {
                    y[c] += sched.sign * sched.magnitude_sigma * std;
                }
            }
            ObservationSet::new(truth.time, y, obs_cov.clone(), ObservationOperator::Identity)
        })
        .collect()
}

/// `||x - x_true|| / sqrt(n)`
pub fn rmse<T: Real>(x: &StateVector<T>, x_true: &StateVector<T>) -> Result<T> {
    check_dim("rmse", x_true.dim(), x.dim())?;
    Ok((&x.values - &x_true.values).norm() / lit::<T>(x.dim() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn reference() -> Trajectory<f64> {
        make_reference(&ModelConfig::default(), 1.0, 2.0).unwrap()
    }

    #[test]
    fn reference_is_deterministic_and_bounded() {
        let a = reference();
        assert_eq!(a, reference());
        assert!(a.states().iter().all(|s| s.values.amax() < 20.0));
        let start = DVector::from_fn(40, |i, _| -2.0 + 4.0 * i as f64 / 39.0);
        assert!((&a.first().values - start).norm() > 1.0);
        assert_relative_eq!(a.last().time, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn noise_free_observations_equal_reference() {
        let r = reference();
        let obs = synthesize_observations(&r, 0.1, 0.0, &OutlierSchedule::none(), 3).unwrap();
        assert_eq!(obs.len(), 20);
        for o in &obs {
            assert_eq!(o.values, state_at(&r, o.time).unwrap().values);
        }
    }

    #[test]
    fn outliers_and_determinism() {
        let r = reference();
        let std = 0.05 * time_averaged_magnitude(&r);
        let good = synthesize_observations(&r, 0.1, 0.05, &OutlierSchedule::none(), 9).unwrap();
        let bad = synthesize_observations(&r, 0.1, 0.05, &OutlierSchedule::default(), 9).unwrap();
        assert_eq!(good, synthesize_observations(&r, 0.1, 0.05, &OutlierSchedule::none(), 9).unwrap());
        for (k, (g, b)) in good.iter().zip(&bad).enumerate() {
            let diff = &b.values - &g.values;
            if k % 2 == 1 {
                assert_relative_eq!(diff[0], 100.0 * std, max_relative = 1e-12);
                assert_eq!(diff.rows(1, 39).amax(), 0.0);
            } else {
                assert_eq!(diff.amax(), 0.0);
            }
        }
        let other = synthesize_observations(&r, 0.1, 0.05, &OutlierSchedule::none(), 10).unwrap();
        assert_ne!(good, other);
    }

    #[test]
    fn every_observation_schedule() {
        let s = OutlierSchedule { period: None, ..OutlierSchedule::default() };
        assert!(s.active_at(0.1) && s.active_at(0.3));
        let p = OutlierSchedule::default();
        assert!(!p.active_at(0.1) && p.active_at(0.2) && p.active_at(0.6000000000000001));
    }

    #[test]
    fn observation_time_grid() {
        assert_eq!(observation_times(0.1, 0.6).unwrap().len(), 6);
        assert_eq!(observation_times(0.01, 2.0).unwrap().len(), 200);
        assert!(observation_times(0.3, 1.0).is_err());
    }

    #[test]
    fn rmse_values() {
        let a = StateVector::new(DVector::from_vec(vec![3.0, 4.0]), 0.0);
        let b = StateVector::new(DVector::zeros(2), 0.0);
        assert_eq!(rmse(&a, &a).unwrap(), 0.0);
        assert_relative_eq!(rmse(&a, &b).unwrap(), 5.0 / 2f64.sqrt());
        let scale = |s: &StateVector<f64>| StateVector::new(&s.values * 2.5, 0.0);
        assert_relative_eq!(rmse(&scale(&a), &scale(&b)).unwrap(), 2.5 * rmse(&a, &b).unwrap());
        assert!(rmse(&a, &StateVector::new(DVector::zeros(3), 0.0)).is_err());
    }
}
