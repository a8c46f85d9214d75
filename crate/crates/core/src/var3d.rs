//! 3D-Var analyses and the cycled 3D-Var driver.

use nalgebra::DVector;

use crate::covariance::Covariance;
use crate::error::{check_dim, Error, Result};
use crate::model::{Dynamics, Rk4, StateVector};
use crate::norms::scaled_departure;
use crate::observation::ObservationSet;
use crate::optimize::{lbfgs, LbfgsConfig, OptimizeReport};
use crate::scalar::{lit, Real};
use crate::variational::{solve_control, AnalysisResult, ControlProblem, Norm, VarConfig};

pub type Var3dConfig<T> = VarConfig<T>;

/// Observations that are this close to the background time count as
/// simultaneous.
const TIME_TOL: f64 = 1e-9;

struct Problem3d<'a, T: Real> {
    xb: &'a DVector<T>,
    b: &'a Covariance<T>,
    obs: [ObservationSet<T>; 1],
}

impl<T: Real> Problem3d<'_, T> {
    fn state(&self, v: &DVector<T>) -> Result<DVector<T>> {
        Ok(self.xb + self.b.sqrt_apply(v)?)
    }
}

impl<T: Real> ControlProblem<T> for Problem3d<'_, T> {
    fn control_dim(&self) -> usize {
        self.xb.len()
    }

    fn observations(&self) -> &[ObservationSet<T>] {
        &self.obs
    }

    fn minimize(&self, obs: &[ObservationSet<T>], v0: DVector<T>, cfg: &LbfgsConfig) -> Result<OptimizeReport<T>> {
        let n = self.xb.len();
        let half = lit::<T>(0.5);
        let f = |v: &DVector<T>| {
            let x = self.state(v)?;
            let mut cost = half * v.norm_squared();
            let mut hadj = DVector::zeros(n);
            for o in obs {
                let r = o.departure(&x)?;
                let w = o.obs_cov.solve(&r)?;
                cost += half * r.dot(&w);
                hadj += o.operator.adjoint_apply(&w, n)?;
            }
            Ok((cost, v + self.b.sqrt_apply(&hadj)?))
        };
        lbfgs(f, v0, cfg)
    }

    fn scaled_departures(&self, v: &DVector<T>) -> Result<Vec<DVector<T>>> {
        let x = self.state(v)?;
        self.obs.iter().map(|o| scaled_departure(&x, o)).collect()
    }
}

fn solve<T: Real>(xb: &StateVector<T>, obs: &ObservationSet<T>, cfg: &Var3dConfig<T>) -> Result<AnalysisResult<T>> {
    check_dim("background covariance", xb.dim(), cfg.background_cov.dim())?;
    if (obs.time - xb.time).abs() > lit(TIME_TOL) {
        return Err(Error::InvalidParameter(format!(
            "3D-Var observations at t = {} do not match the background time {}",
            obs.time, xb.time
        )));
    }
    obs.departure(&xb.values)?;
    let problem = Problem3d { xb: &xb.values, b: &cfg.background_cov, obs: [obs.clone()] };
    let sol = solve_control(&problem, cfg)?;
    Ok(AnalysisResult {
        analysis: StateVector::new(problem.state(&sol.v)?, xb.time),
        cost_history: sol.cost_history,
        constraint_residual_history: sol.constraint_residual_history,
        inner_reports: sol.inner_reports,
        obs_weights: sol.obs_weights,
        trajectory: None,
    })
}

/// Solves with whichever formulation `cfg.norm` selects.
pub fn solve_3dvar<T: Real>(
    xb: &StateVector<T>,
    obs: &ObservationSet<T>,
    cfg: &Var3dConfig<T>,
) -> Result<AnalysisResult<T>> {
    solve(xb, obs, cfg)
}

/// `min ||x - x_b||^2_{B^-1}/2 + ||H(x) - y||^2_{R^-1}/2`
pub fn solve_l2_3dvar<T: Real>(
    xb: &StateVector<T>,
    obs: &ObservationSet<T>,
    cfg: &Var3dConfig<T>,
) -> Result<AnalysisResult<T>> {
    solve(xb, obs, &cfg.with_norm(Norm::L2))
}

/// L1 observation term, solved by ADMM.
pub fn solve_l1_3dvar<T: Real>(
    xb: &StateVector<T>,
    obs: &ObservationSet<T>,
    cfg: &Var3dConfig<T>,
) -> Result<AnalysisResult<T>> {
    solve(xb, obs, &cfg.with_norm(Norm::L1Admm))
}

/// Huber observation term, solved by ADMM.
pub fn solve_huber_3dvar_admm<T: Real>(
    xb: &StateVector<T>,
    obs: &ObservationSet<T>,
    cfg: &Var3dConfig<T>,
) -> Result<AnalysisResult<T>> {
    solve(xb, obs, &cfg.with_norm(Norm::HuberAdmm))
}

/// Huber observation term, solved by half-quadratic reweighting.
pub fn solve_huber_3dvar_hq<T: Real>(
    xb: &StateVector<T>,
    obs: &ObservationSet<T>,
    cfg: &Var3dConfig<T>,
) -> Result<AnalysisResult<T>> {
    solve(xb, obs, &cfg.with_norm(Norm::HuberHq))
}

/// Forecasts each analysis to the next observation time and analyses again.
pub fn cycle_3dvar<T: Real, D: Dynamics<T>>(
    x0b: &StateVector<T>,
    obs_seq: &[ObservationSet<T>],
    model: &Rk4<T, D>,
    cfg: &Var3dConfig<T>,
) -> Result<Vec<AnalysisResult<T>>> {
    if obs_seq.windows(2).any(|w| !(w[1].time > w[0].time)) {
        return Err(Error::UnorderedTimes);
    }
    let mut out = Vec::with_capacity(obs_seq.len());
    let mut state = x0b.clone();
    for obs in obs_seq {
        let xb = model.forecast(&state, obs.time)?;
        let res = solve(&xb, obs, cfg)?;
        state = res.analysis.clone();
        out.push(res);
    }
    Ok(out)
}
