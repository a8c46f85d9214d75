//! Strong-constraint 4D-Var under the same four observation-term formulations.

use nalgebra::DVector;

use crate::error::{check_dim, Error, Result};
use crate::model::{Dynamics, Rk4, StateVector, Trajectory};
use crate::norms::scaled_departure;
use crate::observation::ObservationSet;
use crate::optimize::{lbfgs, LbfgsConfig, OptimizeReport};
use crate::scalar::{lit, Real};
use crate::variational::{solve_control, AnalysisResult, ControlProblem, Norm, VarConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct Var4dConfig<T: Real> {
    pub var: VarConfig<T>,
    /// End of the assimilation window; defaults to the last observation time.
    pub window_end: Option<T>,
}

impl<T: Real> Var4dConfig<T> {
    pub fn new(var: VarConfig<T>) -> Self {
        Self { var, window_end: None }
    }

    pub fn with_norm(&self, norm: Norm) -> Self {
        Self { var: self.var.with_norm(norm), window_end: self.window_end }
    }
}

/// Per-time blocks `z_i`, `lambda_i` or `d_i` concatenated into one vector.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedInnovation<T: Real> {
    pub values: DVector<T>,
    pub block_dims: Vec<usize>,
}

impl<T: Real> StackedInnovation<T> {
    pub fn from_blocks(blocks: &[DVector<T>]) -> Self {
        Self { values: crate::variational::stack(blocks), block_dims: blocks.iter().map(|b| b.len()).collect() }
    }

    pub fn blocks(&self) -> Vec<DVector<T>> {
        crate::variational::split(&self.values, &self.block_dims)
    }
}

struct Problem4d<'a, T: Real, D> {
    x0b: &'a StateVector<T>,
    cfg: &'a VarConfig<T>,
    obs: &'a [ObservationSet<T>],
    model: &'a Rk4<T, D>,
    /// Observation times followed by the window end.
    times: Vec<T>,
}

impl<T: Real, D: Dynamics<T>> Problem4d<'_, T, D> {
    fn initial_state(&self, v: &DVector<T>) -> Result<StateVector<T>> {
        Ok(StateVector::new(&self.x0b.values + self.cfg.background_cov.sqrt_apply(v)?, self.x0b.time))
    }

    fn forward(&self, v: &DVector<T>) -> Result<(Trajectory<T>, Vec<usize>)> {
        self.model.integrate_through(&self.initial_state(v)?, &self.times)
    }

    fn cost_and_gradient(&self, obs: &[ObservationSet<T>], v: &DVector<T>) -> Result<(T, DVector<T>)> {
        let n = self.x0b.dim();
        let half = lit::<T>(0.5);
        let (traj, nodes) = match self.forward(v) {
            Ok(f) => f,
            // let the line search back off from trial points where the model blows up
            Err(Error::NonFinite(_)) => return Ok((lit(f64::INFINITY), DVector::zeros(n))),
            Err(e) => return Err(e),
        };
        let mut cost = half * v.norm_squared();
        let mut forcing = Vec::with_capacity(obs.len());
        for (o, &k) in obs.iter().zip(&nodes) {
            let r = o.departure(&traj.states()[k].values)?;
            let w = o.obs_cov.solve(&r)?;
            cost += half * r.dot(&w);
            forcing.push((k, o.operator.adjoint_apply(&w, n)?));
        }
        let adj = self.model.adjoint_with_forcing(&traj, &forcing)?;
        Ok((cost, v + self.cfg.background_cov.sqrt_apply(&adj)?))
    }
}

impl<T: Real, D: Dynamics<T>> ControlProblem<T> for Problem4d<'_, T, D> {
    fn control_dim(&self) -> usize {
        self.x0b.dim()
    }

    fn observations(&self) -> &[ObservationSet<T>] {
        self.obs
    }

    fn minimize(&self, obs: &[ObservationSet<T>], v0: DVector<T>, cfg: &LbfgsConfig) -> Result<OptimizeReport<T>> {
        lbfgs(|v: &DVector<T>| self.cost_and_gradient(obs, v), v0, cfg)
    }

    fn scaled_departures(&self, v: &DVector<T>) -> Result<Vec<DVector<T>>> {
        let (traj, nodes) = self.forward(v)?;
        self.obs.iter().zip(&nodes).map(|(o, &k)| scaled_departure(&traj.states()[k].values, o)).collect()
    }
}

fn build<'a, T: Real, D: Dynamics<T>>(
    x0b: &'a StateVector<T>,
    obs_seq: &'a [ObservationSet<T>],
    model: &'a Rk4<T, D>,
    cfg: &'a Var4dConfig<T>,
) -> Result<Problem4d<'a, T, D>> {
    check_dim("background covariance", x0b.dim(), cfg.var.background_cov.dim())?;
    check_dim("model", model.dim(), x0b.dim())?;
    let mut prev = x0b.time;
    for (i, o) in obs_seq.iter().enumerate() {
        let ok = if i == 0 { o.time >= prev } else { o.time > prev };
        if !ok {
            return Err(Error::UnorderedTimes);
        }
        prev = o.time;
        o.departure(&x0b.values)?;
    }
    let mut times: Vec<T> = obs_seq.iter().map(|o| o.time).collect();
    if let Some(end) = cfg.window_end {
        if end < prev {
            return Err(Error::InvalidParameter(format!("window end {end} precedes the last observation time {prev}")));
        }
        times.push(end);
    }
    Ok(Problem4d { x0b, cfg: &cfg.var, obs: obs_seq, model, times })
}

/// Solves with whichever formulation `cfg.var.norm` selects. The returned
/// trajectory is the model run from the analysed initial state over the
/// whole window.
pub fn solve_4dvar<T: Real, D: Dynamics<T>>(
    x0b: &StateVector<T>,
    obs_seq: &[ObservationSet<T>],
    model: &Rk4<T, D>,
    cfg: &Var4dConfig<T>,
) -> Result<AnalysisResult<T>> {
    let problem = build(x0b, obs_seq, model, cfg)?;
    let sol = solve_control(&problem, &cfg.var)?;
    let (trajectory, _) = problem.forward(&sol.v)?;
    Ok(AnalysisResult {
        analysis: trajectory.first().clone(),
        cost_history: sol.cost_history,
        constraint_residual_history: sol.constraint_residual_history,
        inner_reports: sol.inner_reports,
        obs_weights: sol.obs_weights,
        trajectory: Some(trajectory),
    })
}

pub fn solve_l2_4dvar<T: Real, D: Dynamics<T>>(
    x0b: &StateVector<T>,
    obs_seq: &[ObservationSet<T>],
    model: &Rk4<T, D>,
    cfg: &Var4dConfig<T>,
) -> Result<AnalysisResult<T>> {
    solve_4dvar(x0b, obs_seq, model, &cfg.with_norm(Norm::L2))
}

pub fn solve_l1_4dvar<T: Real, D: Dynamics<T>>(
    x0b: &StateVector<T>,
    obs_seq: &[ObservationSet<T>],
    model: &Rk4<T, D>,
    cfg: &Var4dConfig<T>,
) -> Result<AnalysisResult<T>> {
    solve_4dvar(x0b, obs_seq, model, &cfg.with_norm(Norm::L1Admm))
}

pub fn solve_huber_4dvar_admm<T: Real, D: Dynamics<T>>(
    x0b: &StateVector<T>,
    obs_seq: &[ObservationSet<T>],
    model: &Rk4<T, D>,
    cfg: &Var4dConfig<T>,
) -> Result<AnalysisResult<T>> {
    solve_4dvar(x0b, obs_seq, model, &cfg.with_norm(Norm::HuberAdmm))
}

pub fn solve_huber_4dvar_hq<T: Real, D: Dynamics<T>>(
    x0b: &StateVector<T>,
    obs_seq: &[ObservationSet<T>],
    model: &Rk4<T, D>,
    cfg: &Var4dConfig<T>,
) -> Result<AnalysisResult<T>> {
    solve_4dvar(x0b, obs_seq, model, &cfg.with_norm(Norm::HuberHq))
}

/// L2 4D-Var cost and adjoint gradient with respect to the control variable
/// `v`, where `x_0 = x_b + B^{1/2} v`.
pub fn l2_4dvar_cost<T: Real, D: Dynamics<T>>(
    x0b: &StateVector<T>,
    obs_seq: &[ObservationSet<T>],
    model: &Rk4<T, D>,
    cfg: &Var4dConfig<T>,
    v: &DVector<T>,
) -> Result<(T, DVector<T>)> {
    let problem = build(x0b, obs_seq, model, cfg)?;
    check_dim("control vector", x0b.dim(), v.len())?;
    problem.cost_and_gradient(obs_seq, v)
}
