//! Twin experiments on Lorenz-96: reference run, synthetic observations with
//! outliers, the assimilation runs and their RMSE series.

mod grid;
mod synth;

pub use grid::{grid_configs, Protocol};
pub use synth::{
    make_reference, observation_times, rmse, state_at, synthesize_observations, time_averaged_magnitude,
    OutlierSchedule,
};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::Covariance;
use crate::ensrf::{letkf_cycle, AdmmSpread, Ensemble, EnsembleConfig, LocalizationConfig};
use crate::error::{Error, Result};
use crate::model::{ModelConfig, StateVector, Trajectory};
use crate::norms::{HuberParams, ShrinkMode};
use crate::observation::ObservationSet;
use crate::optimize::LbfgsConfig;
use crate::var3d::cycle_3dvar;
use crate::var4d::{solve_4dvar, Var4dConfig};
use crate::variational::{Norm, VarConfig};
use synth::{gaussian, rng, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "3dvar")]
    Var3d,
    #[serde(rename = "4dvar")]
    Var4d,
    #[serde(rename = "letkf", alias = "ensrf")]
    Letkf,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Var3d => "3dvar",
            Method::Var4d => "4dvar",
            Method::Letkf => "letkf",
        }
    }

    pub fn default_norms(self) -> Vec<Norm> {
        match self {
            Method::Letkf => vec![Norm::L2, Norm::L1Admm, Norm::HuberHq],
            _ => Norm::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataQuality {
    Good,
    Bad,
}

impl DataQuality {
    pub fn label(self) -> &'static str {
        match self {
            DataQuality::Good => "good",
            DataQuality::Bad => "bad",
        }
    }
}

/// Inner and outer solver settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    pub outer_iters: usize,
    pub mu0: f64,
    pub rho: f64,
    pub shrink_mode: ShrinkMode,
    pub robust_weight: f64,
    pub inflation: f64,
    pub admm_spread: AdmmSpread,
    pub lbfgs: LbfgsConfig,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            outer_iters: 15,
            mu0: 1.0,
            rho: crate::admm::DEFAULT_RHO,
            shrink_mode: ShrinkMode::Elementwise,
            robust_weight: 1.0,
            inflation: 1.0,
            admm_spread: AdmmSpread::Unscaled,
            lbfgs: LbfgsConfig::default(),
        }
    }
}

fn default_norms() -> Vec<Norm> {
    Vec::new()
}

fn default_quality() -> Vec<DataQuality> {
    vec![DataQuality::Good, DataQuality::Bad]
}

fn default_n_ens() -> usize {
    20
}

fn default_background() -> f64 {
    0.08
}

fn default_obs_noise() -> f64 {
    0.05
}

fn default_spinup() -> f64 {
    1.0
}

/// One twin experiment: a method run under several norms on good and/or
/// bad data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub model: ModelConfig,
    pub method: Method,
    /// Empty means the method's default set.
    #[serde(default = "default_norms")]
    pub norms: Vec<Norm>,
    #[serde(default = "default_quality")]
    pub data: Vec<DataQuality>,
    pub obs_frequency: f64,
    pub window: f64,
    pub tau: f64,
    pub seed: u64,
    #[serde(default = "default_n_ens")]
    pub n_ens: usize,
    #[serde(default)]
    pub localization: LocalizationConfig,
    /// Background error std as a fraction of the time-averaged magnitude.
    #[serde(default = "default_background")]
    pub background_std_frac: f64,
    #[serde(default = "default_obs_noise")]
    pub obs_std_frac: f64,
    #[serde(default)]
    pub outliers: OutlierSchedule,
    #[serde(default = "default_spinup")]
    pub spinup: f64,
    #[serde(default)]
    pub solver: SolverSettings,
}

impl ExperimentConfig {
    /// Defaults for `method` with the given frequency, window, tau and seed.
    pub fn new(method: Method, obs_frequency: f64, window: f64, tau: f64, seed: u64) -> Self {
        Self {
            model: ModelConfig::default(),
            method,
            norms: Vec::new(),
            data: default_quality(),
            obs_frequency,
            window,
            tau,
            seed,
            n_ens: default_n_ens(),
            localization: LocalizationConfig::default(),
            background_std_frac: default_background(),
            obs_std_frac: default_obs_noise(),
            outliers: OutlierSchedule::default(),
            spinup: default_spinup(),
            solver: SolverSettings::default(),
        }
    }

    pub fn norms(&self) -> Vec<Norm> {
        if self.norms.is_empty() {
            self.method.default_norms()
        } else {
            self.norms.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        observation_times(self.obs_frequency, self.window)?;
        HuberParams::new(self.tau)?;
        if self.data.is_empty() {
            return Err(Error::InvalidParameter("data must list at least one of good, bad".into()));
        }
        if self.method == Method::Letkf {
            if self.n_ens < 2 {
                return Err(Error::InvalidParameter(format!("n_ens must be at least 2, got {}", self.n_ens)));
            }
            self.localization.validate()?;
        }
        if !(self.background_std_frac > 0.0) || !(self.obs_std_frac > 0.0) {
            return Err(Error::InvalidParameter("error std fractions must be positive".into()));
        }
        if !(self.spinup >= 0.0) {
            return Err(Error::InvalidParameter("spinup must be non-negative".into()));
        }
        self.outliers.validate(self.model.n)?;
        let b = Covariance::scaled_identity(self.model.n, 1.0)?;
        for norm in self.norms() {
            self.var_config(b.clone(), norm).validate()?;
            self.ensemble_config(norm).validate()?;
        }
        Ok(())
    }

    fn var_config(&self, b: Covariance<f64>, norm: Norm) -> VarConfig<f64> {
        let s = &self.solver;
        VarConfig {
            background_cov: b,
            norm,
            huber: HuberParams { tau: self.tau },
            outer_iters: s.outer_iters,
            mu0: s.mu0,
            rho: s.rho,
            shrink_mode: s.shrink_mode,
            robust_weight: s.robust_weight,
            lbfgs: s.lbfgs,
        }
    }

    fn ensemble_config(&self, norm: Norm) -> EnsembleConfig<f64> {
        let s = &self.solver;
        EnsembleConfig {
            norm,
            huber: HuberParams { tau: self.tau },
            outer_iters: s.outer_iters,
            mu0: s.mu0,
            rho: s.rho,
            shrink_mode: s.shrink_mode,
            robust_weight: s.robust_weight,
            inflation: s.inflation,
            admm_spread: s.admm_spread,
        }
    }
}

/// RMSE against the reference at a sequence of times.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RmseSeries {
    pub times: Vec<f64>,
    pub rmse: Vec<f64>,
    pub label: String,
    pub method: Method,
    /// `None` for the free forecast.
    pub norm: Option<Norm>,
    pub tau: f64,
    pub seed: u64,
    /// `None` for the free forecast, which sees no data.
    pub data_quality: Option<DataQuality>,
}

impl RmseSeries {
    pub fn norm_label(&self) -> &'static str {
        self.norm.map_or("none", Norm::label)
    }

    pub fn quality_label(&self) -> &'static str {
        self.data_quality.map_or("none", DataQuality::label)
    }

    pub fn final_rmse(&self) -> Option<f64> {
        self.rmse.last().copied()
    }
}

fn series_label(method: Method, norm: Norm, tau: f64, q: DataQuality) -> String {
    if norm.uses_tau() {
        format!("{}_{}_tau{}_{}", method.label(), norm.label(), tau, q.label())
    } else {
        format!("{}_{}_{}", method.label(), norm.label(), q.label())
    }
}

/// Shared inputs of every run in one experiment.
#[derive(Debug, Clone)]
pub struct ExperimentInputs {
    pub reference: Trajectory<f64>,
    pub background: StateVector<f64>,
    pub background_cov: Covariance<f64>,
    pub background_std: f64,
    /// One observation sequence per configured data quality.
    pub observations: Vec<(DataQuality, Vec<ObservationSet<f64>>)>,
}

/// Reference run, perturbed background and synthetic observations for `cfg`.
/// Good and bad sequences share their noise and differ only in the outliers.
pub fn experiment_inputs(cfg: &ExperimentConfig) -> Result<ExperimentInputs> {
    cfg.validate()?;
    let reference = make_reference(&cfg.model, cfg.spinup, cfg.window)?;
    let magnitude = time_averaged_magnitude(&reference);
    let background_std = cfg.background_std_frac * magnitude;
    let background_cov = Covariance::scaled_identity(cfg.model.n, background_std)?;
    let truth0 = reference.first();
    let background = StateVector::new(
        &truth0.values + gaussian(&mut rng(cfg.seed, Stream::Background), cfg.model.n, background_std),
        truth0.time,
    );
    let observations = cfg
        .data
        .iter()
        .map(|&q| {
            let sched = match q {
                DataQuality::Good => OutlierSchedule::none(),
                DataQuality::Bad => cfg.outliers.clone(),
            };
            synthesize_observations(&reference, cfg.obs_frequency, cfg.obs_std_frac, &sched, cfg.seed).map(|o| (q, o))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentInputs { reference, background, background_cov, background_std, observations })
}

fn errors_at(
    reference: &Trajectory<f64>,
    states: impl Iterator<Item = StateVector<f64>>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut times = Vec::new();
    let mut errs = Vec::new();
    for s in states {
        let truth = state_at(reference, s.time)?;
        errs.push(rmse(&s, truth)?);
        times.push(s.time);
    }
    Ok((times, errs))
}

fn run_one(
    cfg: &ExperimentConfig,
    setup: &ExperimentInputs,
    obs: &[ObservationSet<f64>],
    norm: Norm,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let model = cfg.model.integrator::<f64>()?;
    match cfg.method {
        Method::Var3d => {
            let var = cfg.var_config(setup.background_cov.clone(), norm);
            let res = cycle_3dvar(&setup.background, obs, &model, &var)?;
            errors_at(&setup.reference, res.into_iter().map(|r| r.analysis))
        }
        Method::Var4d => {
            let var =
                Var4dConfig { var: cfg.var_config(setup.background_cov.clone(), norm), window_end: Some(cfg.window) };
            let res = solve_4dvar(&setup.background, obs, &model, &var)?;
            let traj = res.trajectory.ok_or(Error::InvalidParameter("missing 4D-Var trajectory".into()))?;
            let mut wanted = vec![setup.background.time];
            wanted.extend(obs.iter().map(|o| o.time));
            let states = wanted
                .into_iter()
                .filter_map(|t| traj.states().iter().find(|s| (s.time - t).abs() < synth::TIME_TOL).cloned());
            errors_at(&setup.reference, states)
        }
        Method::Letkf => {
            let mut r = rng(cfg.seed, Stream::Ensemble);
            let cols: Vec<DVector<f64>> = (0..cfg.n_ens)
                .map(|_| &setup.background.values + gaussian(&mut r, cfg.model.n, setup.background_std))
                .collect();
            let ens0 = Ensemble::from_matrix(&DMatrix::from_columns(&cols), setup.background.time);
            let out = letkf_cycle(&ens0, obs, &model, &cfg.localization, &cfg.ensemble_config(norm))?;
            errors_at(&setup.reference, out.into_iter().map(|c| StateVector::new(c.analysis.mean, c.analysis.time)))
        }
    }
}

/// Runs every configured norm on every configured data variant, plus the
/// free forecast from the same background. The forecast comes first.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RmseSeries>> {
    let setup = experiment_inputs(cfg)?;
    let model = cfg.model.integrator::<f64>()?;
    let observations = &setup.observations;

    let obs_times: Vec<f64> = observations[0].1.iter().map(|o| o.time).collect();
    let mut forecast_times = Vec::new();
    if cfg.method == Method::Var4d {
        forecast_times.push(setup.background.time);
    }
    forecast_times.extend(&obs_times);
    let (free, _) = model.integrate_through(&setup.background, &forecast_times)?;
    let (times, errs) = errors_at(
        &setup.reference,
        forecast_times
            .iter()
            .filter_map(|&t| free.states().iter().find(|s| (s.time - t).abs() < synth::TIME_TOL).cloned()),
    )?;
    let mut out = vec![RmseSeries {
        times,
        rmse: errs,
        label: format!("{}_forecast", cfg.method.label()),
        method: cfg.method,
        norm: None,
        tau: cfg.tau,
        seed: cfg.seed,
        data_quality: None,
    }];

    let jobs: Vec<(DataQuality, Norm, &[ObservationSet<f64>])> =
        observations.iter().flat_map(|(q, o)| cfg.norms().into_iter().map(move |n| (*q, n, o.as_slice()))).collect();
    let runs = jobs
        .par_iter()
        .map(|&(q, norm, obs)| {
            let (times, errs) = run_one(cfg, &setup, obs, norm)?;
            if errs.iter().any(|e| !e.is_finite()) {
                return Err(Error::NonFinite("analysis RMSE"));
            }
            Ok(RmseSeries {
                times,
                rmse: errs,
                label: series_label(cfg.method, norm, cfg.tau, q),
                method: cfg.method,
                norm: Some(norm),
                tau: cfg.tau,
                seed: cfg.seed,
                data_quality: Some(q),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    out.extend(runs);
    Ok(out)
}
