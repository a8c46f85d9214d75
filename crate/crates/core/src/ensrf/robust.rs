use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{square_root_weights, Ensemble, EnsembleWeights, ObsSpace};
use crate::admm::{AdmmState, RobustPenalty, DEFAULT_RHO};
use crate::error::{Error, Result};
use crate::norms::{hq_weights, HuberParams, ScaledInnovation, ShrinkMode};
use crate::observation::ObservationSet;
use crate::scalar::{lit, Real};
use crate::variational::Norm;

/// Which covariance the ADMM analysis ensemble is drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdmmSpread {
    /// Square root of `((N-1) I + Y^T R^-1 Y)^-1`, as in the L2 filter.
    #[default]
    Unscaled,
    /// Square root with `R / mu` from the final iteration. The spread shrinks
    /// as `mu` grows, which makes the cycled filter diverge.
    FinalPenalty,
}

/// Settings for ensemble analyses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleConfig<T: Real> {
    pub norm: Norm,
    pub huber: HuberParams<T>,
    pub outer_iters: usize,
    pub mu0: T,
    pub rho: T,
    pub shrink_mode: ShrinkMode,
    pub robust_weight: T,
    /// Multiplicative inflation of forecast deviations.
    pub inflation: T,
    pub admm_spread: AdmmSpread,
}

impl<T: Real> EnsembleConfig<T> {
    pub fn new(norm: Norm) -> Self {
        Self {
            norm,
            huber: HuberParams { tau: T::one() },
            outer_iters: 15,
            mu0: T::one(),
            rho: lit(DEFAULT_RHO),
            shrink_mode: ShrinkMode::Elementwise,
            robust_weight: T::one(),
            inflation: T::one(),
            admm_spread: AdmmSpread::Unscaled,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.outer_iters == 0 {
            return Err(Error::InvalidParameter("outer_iters must be at least 1".into()));
        }
        if !(self.inflation > T::zero()) || !self.inflation.is_finite() {
            return Err(Error::InvalidParameter(format!("inflation must be positive, got {}", self.inflation)));
        }
        self.penalty().validate()?;
        AdmmState::initialize(DVector::<T>::zeros(0), self.mu0, self.rho)?;
        Ok(())
    }

    fn penalty(&self) -> RobustPenalty<T> {
        match self.norm {
            Norm::L1Admm => RobustPenalty::L1 { weight: self.robust_weight, mode: self.shrink_mode },
            _ => RobustPenalty::Huber { params: self.huber, weight: self.robust_weight, mode: self.shrink_mode },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustDiagnostics<T: Real> {
    /// Penalty used in the final weight solve (ADMM only).
    pub final_mu: Option<T>,
    pub constraint_residual_history: Vec<T>,
    /// Final half-quadratic weights.
    pub obs_weights: Option<DVector<T>>,
}

impl<T: Real> RobustDiagnostics<T> {
    fn empty() -> Self {
        Self { final_mu: None, constraint_residual_history: Vec::new(), obs_weights: None }
    }
}

pub(crate) fn analyze<T: Real>(
    space: &ObsSpace<T>,
    cfg: &EnsembleConfig<T>,
) -> Result<(EnsembleWeights<T>, RobustDiagnostics<T>)> {
    match cfg.norm {
        Norm::L2 => Ok((square_root_weights(space, &space.y, &space.r_var)?, RobustDiagnostics::empty())),
        Norm::L1Admm | Norm::HuberAdmm => admm(space, cfg),
        Norm::HuberHq => half_quadratic(space, cfg),
    }
}

fn admm<T: Real>(space: &ObsSpace<T>, cfg: &EnsembleConfig<T>) -> Result<(EnsembleWeights<T>, RobustDiagnostics<T>)> {
    let penalty = cfg.penalty();
    let r_sqrt = space.r_var.map(|v| v.sqrt());
    let mut st = AdmmState::initialize(space.scaled_departure(&DVector::zeros(space.n_ens())), cfg.mu0, cfg.rho)?;
    let mut diag = RobustDiagnostics::empty();
    let mut last: Option<EnsembleWeights<T>> = None;
    for _ in 0..cfg.outer_iters {
        let y_mod = &space.y + (&st.z + &st.lambda / st.mu).component_mul(&r_sqrt);
        let r_mod = &space.r_var / st.mu;
        let weights = square_root_weights(space, &y_mod, &r_mod)?;
        let d = space.scaled_departure(&weights.mean.0);
        st.shrink(&d, &penalty)?;
        diag.constraint_residual_history.push(st.residual(&d));
        st.update_multipliers(&d)?;
        diag.final_mu = Some(st.mu);
        last = Some(weights);
        st.grow_penalty();
    }
    let mut weights = last.expect("at least one outer iteration");
    if cfg.admm_spread == AdmmSpread::Unscaled {
        weights.deviations = square_root_weights(space, &space.y, &space.r_var)?.deviations;
    }
    Ok((weights, diag))
}

fn half_quadratic<T: Real>(
    space: &ObsSpace<T>,
    cfg: &EnsembleConfig<T>,
) -> Result<(EnsembleWeights<T>, RobustDiagnostics<T>)> {
    let two = lit::<T>(2.0);
    let mut w = DVector::zeros(space.n_ens());
    let mut diag = RobustDiagnostics::empty();
    let mut last = None;
    for _ in 0..cfg.outer_iters {
        let u = hq_weights(&ScaledInnovation(space.scaled_departure(&w)), &cfg.huber);
        let r_mod = space.r_var.zip_map(&u, |v, ui| two * v / (ui * cfg.robust_weight));
        let weights = square_root_weights(space, &space.y, &r_mod)?;
        w = weights.mean.0.clone();
        diag.obs_weights = Some(u);
        last = Some(weights);
    }
    Ok((last.expect("at least one outer iteration"), diag))
}

/// Robust analysis selected by `cfg.norm` (plain EnSRF for L2).
pub fn robust_enkf_analysis<T: Real>(
    ens: &Ensemble<T>,
    obs: &ObservationSet<T>,
    cfg: &EnsembleConfig<T>,
) -> Result<(EnsembleWeights<T>, RobustDiagnostics<T>)> {
    cfg.validate()?;
    analyze(&ObsSpace::new(ens, obs)?, cfg)
}

/// L1 observation term, solved by ADMM in ensemble space. The weight
/// deviations follow `cfg.admm_spread`.
pub fn l1_enkf_analysis<T: Real>(
    ens: &Ensemble<T>,
    obs: &ObservationSet<T>,
    cfg: &EnsembleConfig<T>,
) -> Result<(EnsembleWeights<T>, RobustDiagnostics<T>)> {
    robust_enkf_analysis(ens, obs, &EnsembleConfig { norm: Norm::L1Admm, ..*cfg })
}

/// Huber observation term, solved by half-quadratic reweighting.
pub fn huber_enkf_analysis<T: Real>(
    ens: &Ensemble<T>,
    obs: &ObservationSet<T>,
    cfg: &EnsembleConfig<T>,
) -> Result<(EnsembleWeights<T>, RobustDiagnostics<T>)> {
    robust_enkf_analysis(ens, obs, &EnsembleConfig { norm: Norm::HuberHq, ..*cfg })
}
