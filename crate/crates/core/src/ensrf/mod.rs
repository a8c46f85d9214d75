//! Ensemble square-root filter in ensemble-weight space, its robust L1 and
//! Huber variants, and the localized cycling driver.

mod letkf;
mod robust;

pub use letkf::{letkf_cycle, CycleOutput, LocalizationConfig};
pub use robust::{
    huber_enkf_analysis, l1_enkf_analysis, robust_enkf_analysis, AdmmSpread, EnsembleConfig, RobustDiagnostics,
};

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::model::StateVector;
use crate::observation::{ObservationOperator, ObservationSet};
use crate::scalar::{lit, Real};

/// Ensemble mean and raw deviations `X = [x_k - mean]` (n x n_ens).
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble<T: Real> {
    pub mean: DVector<T>,
    pub deviations: DMatrix<T>,
    pub time: T,
}

/// Coordinates in the space spanned by the ensemble deviations.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector<T: Real>(pub DVector<T>);

/// Mean weights and the weight deviation matrix `W` of an analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleWeights<T: Real> {
    pub mean: WeightVector<T>,
    pub deviations: DMatrix<T>,
}

/// Observed ensemble mean and deviations `Y` (m x n_ens).
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedEnsemble<T: Real> {
    pub mean: DVector<T>,
    pub deviations: DMatrix<T>,
}

pub fn ensemble_stats<T: Real>(members: &[StateVector<T>]) -> Result<Ensemble<T>> {
    if members.len() < 2 {
        return Err(Error::InvalidParameter(format!("an ensemble needs at least 2 members, got {}", members.len())));
    }
    let n = members[0].dim();
    let time = members[0].time;
    for m in members {
        check_dim("ensemble member", n, m.dim())?;
        if m.time != time {
            return Err(Error::InvalidParameter("ensemble members at different times".into()));
        }
    }
    let x = DMatrix::from_columns(&members.iter().map(|m| m.values.clone()).collect::<Vec<_>>());
    Ok(Ensemble::from_matrix(&x, time))
}

impl<T: Real> Ensemble<T> {
    /// From a matrix whose columns are the members.
    pub fn from_matrix(x: &DMatrix<T>, time: T) -> Self {
        let mean = x.column_sum() / lit::<T>(x.ncols() as f64);
        let mut deviations = x.clone();
        for mut c in deviations.column_iter_mut() {
            c -= &mean;
        }
        Self { mean, deviations, time }
    }

    pub fn n_ens(&self) -> usize {
        self.deviations.ncols()
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn member(&self, k: usize) -> StateVector<T> {
        StateVector::new(&self.mean + self.deviations.column(k), self.time)
    }

    pub fn members(&self) -> Vec<StateVector<T>> {
        (0..self.n_ens()).map(|k| self.member(k)).collect()
    }

    /// Sample covariance `X X^T / (n_ens - 1)`.
    pub fn covariance(&self) -> DMatrix<T> {
        &self.deviations * self.deviations.transpose() / lit::<T>((self.n_ens() - 1) as f64)
    }

    /// Root-mean-square spread over state components.
    pub fn spread(&self) -> T {
        let var = self.deviations.norm_squared() / lit::<T>(((self.n_ens() - 1) * self.dim()) as f64);
        var.sqrt()
    }

    /// Maps every member through `op`.
    pub fn observe(&self, op: &ObservationOperator<T>) -> Result<ObservedEnsemble<T>> {
        let cols = (0..self.n_ens()).map(|k| op.apply(&self.member(k).values)).collect::<Result<Vec<_>>>()?;
        let e = Ensemble::from_matrix(&DMatrix::from_columns(&cols), self.time);
        Ok(ObservedEnsemble { mean: e.mean, deviations: e.deviations })
    }

    /// `mean + X w`, deviations `X W`.
    pub fn apply_weights(&self, w: &EnsembleWeights<T>) -> Result<Self> {
        check_dim("mean weights", self.n_ens(), w.mean.0.len())?;
        check_dim("weight deviations", self.n_ens(), w.deviations.nrows())?;
        Ok(Self {
            mean: &self.mean + &self.deviations * &w.mean.0,
            deviations: &self.deviations * &w.deviations,
            time: self.time,
        })
    }

    /// Multiplies the deviations by `factor`.
    pub fn inflate(&mut self, factor: T) {
        self.deviations *= factor;
    }
}

/// Observation-space quantities of one (possibly local) analysis.
#[derive(Debug, Clone)]
pub(crate) struct ObsSpace<T: Real> {
    pub y_dev: DMatrix<T>,
    pub h_mean: DVector<T>,
    pub y: DVector<T>,
    pub r_var: DVector<T>,
}

impl<T: Real> ObsSpace<T> {
    pub fn new(ens: &Ensemble<T>, obs: &ObservationSet<T>) -> Result<Self> {
        let observed = ens.observe(&obs.operator)?;
        check_dim("observed ensemble", obs.dim(), observed.mean.len())?;
        Ok(Self {
            y_dev: observed.deviations,
            h_mean: observed.mean,
            y: obs.values.clone(),
            r_var: obs.obs_cov.variances(),
        })
    }

    pub fn n_ens(&self) -> usize {
        self.y_dev.ncols()
    }

    /// `R^{-1/2} (h_mean + Y w - y)`
    pub fn scaled_departure(&self, w: &DVector<T>) -> DVector<T> {
        (&self.h_mean + &self.y_dev * w - &self.y).zip_map(&self.r_var, |a, v| a / v.sqrt())
    }
}

/// Mean weights and symmetric square root for data `y` with variances
/// `r_var`: `S = ((N-1) I + Y^T R^-1 Y)^-1`, `w = S Y^T R^-1 (y - h_mean)`,
/// `W = sqrt(N-1) S^{1/2}`.
pub(crate) fn square_root_weights<T: Real>(
    space: &ObsSpace<T>,
    y: &DVector<T>,
    r_var: &DVector<T>,
) -> Result<EnsembleWeights<T>> {
    let n_ens = space.n_ens();
    let nm1 = lit::<T>((n_ens - 1) as f64);
    let rinv_y = DMatrix::from_fn(space.y_dev.nrows(), n_ens, |i, j| space.y_dev[(i, j)] / r_var[i]);
    let mut a = space.y_dev.tr_mul(&rinv_y);
    for i in 0..n_ens {
        a[(i, i)] += nm1;
    }
    let a = (&a + a.transpose()) * lit::<T>(0.5);
    let eig = a.symmetric_eigen();
    if eig.eigenvalues.iter().any(|&l| !(l > T::zero()) || !l.is_finite()) {
        return Err(Error::NotPositiveDefinite("ensemble-space precision"));
    }
    let q = &eig.eigenvectors;
    let inv = eig.eigenvalues.map(|l| T::one() / l);
    let root = eig.eigenvalues.map(|l| (nm1 / l).sqrt());
    let s = q * DMatrix::from_diagonal(&inv) * q.transpose();
    let w = q * DMatrix::from_diagonal(&root) * q.transpose();
    let mean = s * rinv_y.tr_mul(&(y - &space.h_mean));
    Ok(EnsembleWeights { mean: WeightVector(mean), deviations: (&w + w.transpose()) * lit::<T>(0.5) })
}

/// Standard EnSRF analysis in weight space.
pub fn ensrf_analysis<T: Real>(ens: &Ensemble<T>, obs: &ObservationSet<T>) -> Result<EnsembleWeights<T>> {
    let space = ObsSpace::new(ens, obs)?;
    square_root_weights(&space, &space.y, &space.r_var)
}

/// `S = ((N-1) I + Y^T R^-1 Y)^-1`
pub fn ensemble_precision_inverse<T: Real>(ens: &Ensemble<T>, obs: &ObservationSet<T>) -> Result<DMatrix<T>> {
    let space = ObsSpace::new(ens, obs)?;
    let n_ens = space.n_ens();
    let rinv_y = DMatrix::from_fn(space.y_dev.nrows(), n_ens, |i, j| space.y_dev[(i, j)] / space.r_var[i]);
    let mut a = space.y_dev.tr_mul(&rinv_y);
    for i in 0..n_ens {
        a[(i, i)] += lit::<T>((n_ens - 1) as f64);
    }
    a.try_inverse().ok_or(Error::NotPositiveDefinite("ensemble-space precision"))
}

/// `J(w) = (N-1) ||w||^2 + ||H(mean + X w) - y||^2_{R^-1}` and its gradient,
/// with `H` linearized through the observed deviations.
pub fn ensrf_weight_cost<T: Real>(
    w: &WeightVector<T>,
    ens: &Ensemble<T>,
    obs: &ObservationSet<T>,
) -> Result<(T, DVector<T>)> {
    check_dim("weight vector", ens.n_ens(), w.0.len())?;
    let space = ObsSpace::new(ens, obs)?;
    let nm1 = lit::<T>((ens.n_ens() - 1) as f64);
    let two = lit::<T>(2.0);
    let x = &ens.mean + &ens.deviations * &w.0;
    let r = obs.departure(&x)?;
    let rinv_r = r.zip_map(&space.r_var, |a, v| a / v);
    let cost = nm1 * w.0.norm_squared() + r.dot(&rinv_r);
    let grad = &w.0 * (two * nm1) + space.y_dev.tr_mul(&rinv_r) * two;
    Ok((cost, grad))
}
