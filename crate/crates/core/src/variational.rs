//! Outer loops shared by 3D-Var and 4D-Var: plain L2, ADMM (L1 or Huber) and
//! half-quadratic Huber, all driving the same L2 inner problem.
//!
//! The inner problems are posed in the control variable `v` with
//! `x = x_b + B^{1/2} v`, so the background term is `||v||^2 / 2`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::admm::{AdmmState, RobustPenalty, DEFAULT_RHO};
use crate::covariance::Covariance;
use crate::error::{Error, Result};
use crate::model::{StateVector, Trajectory};
use crate::norms::{
    hq_modified_covariance, hq_weights, modify_observations, HuberParams, ScaledInnovation, ShrinkMode,
};
use crate::observation::ObservationSet;
use crate::optimize::{LbfgsConfig, OptimizeReport};
use crate::scalar::{lit, Real};

/// Observation-term formulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Norm {
    L2,
    #[serde(rename = "l1")]
    L1Admm,
    HuberAdmm,
    HuberHq,
}

impl Norm {
    pub const ALL: [Norm; 4] = [Norm::L2, Norm::L1Admm, Norm::HuberAdmm, Norm::HuberHq];

    pub fn label(self) -> &'static str {
        match self {
            Norm::L2 => "l2",
            Norm::L1Admm => "l1",
            Norm::HuberAdmm => "huber_admm",
            Norm::HuberHq => "huber_hq",
        }
    }

    pub fn uses_tau(self) -> bool {
        matches!(self, Norm::HuberAdmm | Norm::HuberHq)
    }
}

impl std::fmt::Display for Norm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Norm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Norm::ALL
            .into_iter()
            .find(|n| n.label() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown norm '{s}'")))
    }
}

/// Solver settings shared by the variational methods.
#[derive(Debug, Clone, PartialEq)]
pub struct VarConfig<T: Real> {
    pub background_cov: Covariance<T>,
    pub norm: Norm,
    pub huber: HuberParams<T>,
    pub outer_iters: usize,
    pub mu0: T,
    pub rho: T,
    pub shrink_mode: ShrinkMode,
    /// Weight on the robust observation term.
    pub robust_weight: T,
    pub lbfgs: LbfgsConfig,
}

impl<T: Real> VarConfig<T> {
    pub fn new(background_cov: Covariance<T>, norm: Norm) -> Self {
        Self {
            background_cov,
            norm,
            huber: HuberParams { tau: T::one() },
            outer_iters: 15,
            mu0: T::one(),
            rho: lit(DEFAULT_RHO),
            shrink_mode: ShrinkMode::Elementwise,
            robust_weight: T::one(),
            lbfgs: LbfgsConfig::default(),
        }
    }

    pub fn with_norm(&self, norm: Norm) -> Self {
        Self { norm, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.outer_iters == 0 {
            return Err(Error::InvalidParameter("outer_iters must be at least 1".into()));
        }
        self.lbfgs.validate()?;
        self.penalty().validate()?;
        AdmmState::initialize(DVector::<T>::zeros(0), self.mu0, self.rho)?;
        Ok(())
    }

    pub(crate) fn penalty(&self) -> RobustPenalty<T> {
        match self.norm {
            Norm::L1Admm => RobustPenalty::L1 { weight: self.robust_weight, mode: self.shrink_mode },
            _ => RobustPenalty::Huber { params: self.huber, weight: self.robust_weight, mode: self.shrink_mode },
        }
    }
}

/// Outcome of one analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisResult<T: Real> {
    pub analysis: StateVector<T>,
    /// Optimizer costs for L2; the full robust objective after each outer
    /// iteration otherwise.
    pub cost_history: Vec<T>,
    /// `||d - z||` after each z-update (ADMM only).
    pub constraint_residual_history: Vec<T>,
    pub inner_reports: Vec<OptimizeReport<T>>,
    /// Final half-quadratic weights, stacked over observation times.
    pub obs_weights: Option<DVector<T>>,
    /// Analysis trajectory over the window (4D-Var only).
    pub trajectory: Option<Trajectory<T>>,
}

/// Least-squares problem in the control variable whose observation blocks
/// can be swapped for modified ones.
pub(crate) trait ControlProblem<T: Real> {
    fn control_dim(&self) -> usize;

    fn observations(&self) -> &[ObservationSet<T>];

    /// Minimizes `||v||^2/2 + sum_i ||H_i(x_i) - y_i||^2_{R_i^{-1}} / 2`.
    fn minimize(&self, obs: &[ObservationSet<T>], v0: DVector<T>, cfg: &LbfgsConfig) -> Result<OptimizeReport<T>>;

    /// `R_i^{-1/2} (H_i(x_i) - y_i)` for the original observations.
    fn scaled_departures(&self, v: &DVector<T>) -> Result<Vec<DVector<T>>>;
}

pub(crate) fn stack<T: Real>(blocks: &[DVector<T>]) -> DVector<T> {
    let total = blocks.iter().map(|b| b.len()).sum();
    let mut out = DVector::zeros(total);
    let mut at = 0;
    for b in blocks {
        out.rows_mut(at, b.len()).copy_from(b);
        at += b.len();
    }
    out
}

pub(crate) fn split<T: Real>(v: &DVector<T>, dims: &[usize]) -> Vec<DVector<T>> {
    let mut at = 0;
    dims.iter()
        .map(|&m| {
            let b = v.rows(at, m).into_owned();
            at += m;
            b
        })
        .collect()
}

/// Control vector and diagnostics produced by an outer loop.
pub(crate) struct ControlSolution<T: Real> {
    pub v: DVector<T>,
    pub cost_history: Vec<T>,
    pub constraint_residual_history: Vec<T>,
    pub inner_reports: Vec<OptimizeReport<T>>,
    pub obs_weights: Option<DVector<T>>,
}

pub(crate) fn solve_control<T: Real, P: ControlProblem<T>>(
    problem: &P,
    cfg: &VarConfig<T>,
) -> Result<ControlSolution<T>> {
    cfg.validate()?;
    match cfg.norm {
        Norm::L2 => solve_l2(problem, cfg),
        Norm::L1Admm | Norm::HuberAdmm => solve_admm(problem, cfg),
        Norm::HuberHq => solve_hq(problem, cfg),
    }
}

fn solve_l2<T: Real, P: ControlProblem<T>>(problem: &P, cfg: &VarConfig<T>) -> Result<ControlSolution<T>> {
    let rep = problem.minimize(problem.observations(), DVector::zeros(problem.control_dim()), &cfg.lbfgs)?;
    Ok(ControlSolution {
        v: rep.x_opt.clone(),
        cost_history: rep.cost_history.clone(),
        constraint_residual_history: Vec::new(),
        inner_reports: vec![rep],
        obs_weights: None,
    })
}

fn solve_admm<T: Real, P: ControlProblem<T>>(problem: &P, cfg: &VarConfig<T>) -> Result<ControlSolution<T>> {
    let obs = problem.observations();
    let dims: Vec<usize> = obs.iter().map(|o| o.dim()).collect();
    let penalty = cfg.penalty();
    let half = lit::<T>(0.5);

    let mut v = DVector::zeros(problem.control_dim());
    let d0 = stack(&problem.scaled_departures(&v)?);
    let mut st = AdmmState::initialize(d0, cfg.mu0, cfg.rho)?;
    let mut sol = ControlSolution {
        v: v.clone(),
        cost_history: Vec::with_capacity(cfg.outer_iters),
        constraint_residual_history: Vec::with_capacity(cfg.outer_iters),
        inner_reports: Vec::with_capacity(cfg.outer_iters),
        obs_weights: None,
    };
    for _ in 0..cfg.outer_iters {
        let z = split(&st.z, &dims);
        let lambda = split(&st.lambda, &dims);
        let modified = obs
            .iter()
            .zip(z.iter().zip(&lambda))
            .map(|(o, (z, l))| modify_observations(o, z, l, st.mu))
            .collect::<Result<Vec<_>>>()?;
        let rep = problem.minimize(&modified, v, &cfg.lbfgs)?;
        v = rep.x_opt.clone();
        let d = stack(&problem.scaled_departures(&v)?);
        st.shrink(&d, &penalty)?;
        sol.constraint_residual_history.push(st.residual(&d));
        st.update_multipliers(&d)?;
        sol.cost_history.push(half * v.norm_squared() + penalty.value(&d));
        sol.inner_reports.push(rep);
        st.grow_penalty();
    }
    sol.v = v;
    Ok(sol)
}

fn solve_hq<T: Real, P: ControlProblem<T>>(problem: &P, cfg: &VarConfig<T>) -> Result<ControlSolution<T>> {
    let obs = problem.observations();
    let penalty = cfg.penalty();
    let half = lit::<T>(0.5);

    let mut v = DVector::zeros(problem.control_dim());
    let mut d = problem.scaled_departures(&v)?;
    let mut sol = ControlSolution {
        v: v.clone(),
        cost_history: Vec::with_capacity(cfg.outer_iters),
        constraint_residual_history: Vec::new(),
        inner_reports: Vec::with_capacity(cfg.outer_iters),
        obs_weights: None,
    };
    for _ in 0..cfg.outer_iters {
        let u: Vec<DVector<T>> = d.iter().map(|di| hq_weights(&ScaledInnovation(di.clone()), &cfg.huber)).collect();
        let modified = obs
            .iter()
            .zip(&u)
            .map(|(o, ui)| {
                let cov = hq_modified_covariance(&o.obs_cov, &(ui * cfg.robust_weight))?;
                o.with_data(o.values.clone(), cov)
            })
            .collect::<Result<Vec<_>>>()?;
        let rep = problem.minimize(&modified, v, &cfg.lbfgs)?;
        v = rep.x_opt.clone();
        d = problem.scaled_departures(&v)?;
        sol.cost_history.push(half * v.norm_squared() + penalty.value(&stack(&d)));
        sol.inner_reports.push(rep);
        sol.obs_weights = Some(stack(&u));
    }
    sol.v = v;
    Ok(sol)
}
