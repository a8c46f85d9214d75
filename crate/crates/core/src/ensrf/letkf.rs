use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::robust::analyze;
use super::{Ensemble, ObsSpace};
use crate::ensrf::EnsembleConfig;
use crate::error::{check_dim, Error, Result};
use crate::model::{Dynamics, Rk4};
use crate::observation::ObservationSet;
use crate::scalar::Real;

/// Cutoff localization: each state index is analysed with the observations
/// within `radius` grid points (cyclic distance), without tapering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalizationConfig {
    pub radius: usize,
    pub enabled: bool,
}

impl Default for LocalizationConfig {
    fn default() -> Self {
        Self { radius: 4, enabled: true }
    }
}

impl LocalizationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.enabled && self.radius == 0 {
            return Err(Error::InvalidParameter("localization radius must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleOutput<T: Real> {
    pub forecast: Ensemble<T>,
    pub analysis: Ensemble<T>,
    /// Largest final ADMM penalty over the local analyses.
    pub final_mu: Option<T>,
}

fn cyclic_distance(a: usize, b: usize, n: usize) -> usize {
    let d = a.abs_diff(b) % n;
    d.min(n - d)
}

fn propagate<T: Real, D: Dynamics<T>>(ens: &Ensemble<T>, model: &Rk4<T, D>, t: T) -> Result<Ensemble<T>> {
    let cols = (0..ens.n_ens())
        .into_par_iter()
        .map(|k| model.forecast(&ens.member(k), t).map(|s| s.values))
        .collect::<Result<Vec<_>>>()?;
    Ok(Ensemble::from_matrix(&DMatrix::from_columns(&cols), t))
}

fn select_rows<T: Real>(space: &ObsSpace<T>, rows: &[usize]) -> ObsSpace<T> {
    ObsSpace {
        y_dev: space.y_dev.select_rows(rows),
        h_mean: space.h_mean.select_rows(rows),
        y: space.y.select_rows(rows),
        r_var: space.r_var.select_rows(rows),
    }
}

fn local_analysis<T: Real>(
    forecast: &Ensemble<T>,
    obs: &ObservationSet<T>,
    loc: &LocalizationConfig,
    cfg: &EnsembleConfig<T>,
) -> Result<(Ensemble<T>, Option<T>)> {
    let n = forecast.dim();
    let space = ObsSpace::new(forecast, obs)?;
    let locations = (0..obs.dim())
        .map(|k| {
            obs.operator
                .location(k)
                .ok_or_else(|| Error::InvalidParameter("localization needs observations with grid locations".into()))
        })
        .collect::<Result<Vec<_>>>()?;

    let rows = (0..n)
        .into_par_iter()
        .map(|i| {
            let near: Vec<usize> =
                (0..obs.dim()).filter(|&k| cyclic_distance(locations[k], i, n) <= loc.radius).collect();
            let x_i = forecast.deviations.row(i);
            if near.is_empty() {
                return Ok((forecast.mean[i], x_i.into_owned(), None));
            }
            let (w, diag) = analyze(&select_rows(&space, &near), cfg)?;
            let mean = forecast.mean[i] + (x_i * &w.mean.0)[0];
            Ok((mean, x_i * &w.deviations, diag.final_mu))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut mean = DVector::zeros(n);
    let mut deviations = DMatrix::zeros(n, forecast.n_ens());
    let mut final_mu: Option<T> = None;
    for (i, (m, row, mu)) in rows.into_iter().enumerate() {
        mean[i] = m;
        deviations.set_row(i, &row);
        if let Some(mu) = mu {
            final_mu = Some(final_mu.map_or(mu, |f| f.max(mu)));
        }
    }
    Ok((Ensemble { mean, deviations, time: forecast.time }, final_mu))
}

/// Propagates every member to each observation time and analyses, locally
/// when `loc.enabled`, with the formulation selected by `cfg.norm`.
pub fn letkf_cycle<T: Real, D: Dynamics<T>>(
    ens0: &Ensemble<T>,
    obs_seq: &[ObservationSet<T>],
    model: &Rk4<T, D>,
    loc: &LocalizationConfig,
    cfg: &EnsembleConfig<T>,
) -> Result<Vec<CycleOutput<T>>> {
    cfg.validate()?;
    loc.validate()?;
    check_dim("ensemble", model.dim(), ens0.dim())?;
    if obs_seq.windows(2).any(|w| !(w[1].time > w[0].time)) {
        return Err(Error::UnorderedTimes);
    }
    let mut out = Vec::with_capacity(obs_seq.len());
    let mut current = ens0.clone();
    for obs in obs_seq {
        let mut forecast = propagate(&current, model, obs.time)?;
        forecast.inflate(cfg.inflation);
        let (analysis, final_mu) = if loc.enabled {
            local_analysis(&forecast, obs, loc, cfg)?
        } else {
            let (w, diag) = analyze(&ObsSpace::new(&forecast, obs)?, cfg)?;
            (forecast.apply_weights(&w)?, diag.final_mu)
        };
        current = analysis.clone();
        out.push(CycleOutput { forecast, analysis, final_mu });
    }
    Ok(out)
}
