//! Limited-memory BFGS with a backtracking Armijo line search.

use std::collections::VecDeque;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::scalar::{lit, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LbfgsConfig {
    pub memory: usize,
    pub max_iter: usize,
    /// Stop when `||grad||_inf <= grad_tol * sqrt(dim)`.
    pub grad_tol: f64,
    /// Stop when the relative cost decrease falls below this.
    pub cost_rtol: f64,
    pub armijo_c1: f64,
    pub max_line_search: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self { memory: 10, max_iter: 200, grad_tol: 1e-6, cost_rtol: 1e-14, armijo_c1: 1e-4, max_line_search: 40 }
    }
}

impl LbfgsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.memory == 0 {
            return Err(Error::InvalidParameter("L-BFGS memory must be at least 1".into()));
        }
        if !(self.grad_tol >= 0.0) || !(self.armijo_c1 > 0.0 && self.armijo_c1 < 1.0) {
            return Err(Error::InvalidParameter("invalid L-BFGS tolerances".into()));
        }
        if self.max_line_search == 0 {
            return Err(Error::InvalidParameter("max_line_search must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GradientTolerance,
    CostStagnation,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeReport<T: Real> {
    pub x_opt: DVector<T>,
    pub cost: T,
    pub grad_norm: T,
    pub iterations: usize,
    pub evaluations: usize,
    /// Cost at the start and after every accepted step.
    pub cost_history: Vec<T>,
    pub termination: Termination,
}

impl<T: Real> OptimizeReport<T> {
    pub fn converged(&self) -> bool {
        matches!(self.termination, Termination::GradientTolerance | Termination::CostStagnation)
    }
}

fn inf_norm<T: Real>(g: &DVector<T>) -> T {
    g.iter().fold(T::zero(), |m, &a| m.max(a.abs()))
}

/// A smooth minimization problem: starting point and cost/gradient callback.
pub struct OptimizeProblem<T: Real, F> {
    pub x0: DVector<T>,
    pub cost_and_gradient: F,
}

impl<T: Real, F> OptimizeProblem<T, F>
where
    F: FnMut(&DVector<T>) -> Result<(T, DVector<T>)>,
{
    pub fn dim(&self) -> usize {
        self.x0.len()
    }
}

/// L-BFGS with the default memory and line search, stopping at
/// `||grad||_inf <= tol_grad * sqrt(dim)` or after `max_iter` iterations.
pub fn minimize<T, F>(p: OptimizeProblem<T, F>, tol_grad: f64, max_iter: usize) -> Result<OptimizeReport<T>>
where
    T: Real,
    F: FnMut(&DVector<T>) -> Result<(T, DVector<T>)>,
{
    let cfg = LbfgsConfig { grad_tol: tol_grad, max_iter, ..LbfgsConfig::default() };
    lbfgs(p.cost_and_gradient, p.x0, &cfg)
}

/// Cost differences below this fraction of `|f|` are treated as round-off
/// by the approximate sufficient-decrease test.
const ROUNDOFF_RTOL: f64 = 1e-10;

/// Minimizes `f`, where `f(x)` returns the cost and its gradient.
///
/// Near the optimum the cost decrease drowns in round-off before the
/// gradient does, so a trial step whose cost is flat to within round-off is
/// also accepted when its directional derivative satisfies
/// `g(x + a d).d <= (2 c1 - 1) g(x).d`, which for a quadratic is the same
/// condition as sufficient decrease.
pub fn lbfgs<T, F>(mut f: F, x0: DVector<T>, cfg: &LbfgsConfig) -> Result<OptimizeReport<T>>
where
    T: Real,
    F: FnMut(&DVector<T>) -> Result<(T, DVector<T>)>,
{
    cfg.validate()?;
    let n = x0.len();
    let tol = lit::<T>(cfg.grad_tol) * lit::<T>(n.max(1) as f64).sqrt();
    let c1 = lit::<T>(cfg.armijo_c1);
    let half = lit::<T>(0.5);
    let roundoff = lit::<T>(ROUNDOFF_RTOL);
    let approx_c = lit::<T>(2.0 * cfg.armijo_c1 - 1.0);

    let mut x = x0;
    let (mut fx, mut g) = f(&x)?;
    check_dim("gradient", n, g.len())?;
    if !fx.is_finite() || g.iter().any(|a| !a.is_finite()) {
        return Err(Error::NonFinite("cost at the initial point"));
    }
    let mut evaluations = 1;
    let mut history = vec![fx];
    let mut pairs: VecDeque<(DVector<T>, DVector<T>, T)> = VecDeque::with_capacity(cfg.memory);
    let mut iterations = 0;

    let termination = loop {
        if inf_norm(&g) <= tol {
            break Termination::GradientTolerance;
        }
        if iterations >= cfg.max_iter {
            break Termination::MaxIterations;
        }

        // two-loop recursion
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(pairs.len());
        for (s, y, rho) in pairs.iter().rev() {
            let a = *rho * s.dot(&q);
            q.axpy(-a, y, T::one());
            alphas.push(a);
        }
        if let Some((s, y, _)) = pairs.back() {
            q *= s.dot(y) / y.dot(y);
        }
        for ((s, y, rho), a) in pairs.iter().zip(alphas.into_iter().rev()) {
            let b = *rho * y.dot(&q);
            q.axpy(a - b, s, T::one());
        }
        let mut dir = -q;
        let mut slope = g.dot(&dir);
        if !(slope < T::zero()) {
            pairs.clear();
            dir = -g.clone();
            slope = g.dot(&dir);
        }

        let mut step = if pairs.is_empty() { T::one().min(T::one() / inf_norm(&g)) } else { T::one() };
        let mut accepted = None;
        let mut only_flat = true;
        for _ in 0..cfg.max_line_search {
            let trial = &x + &dir * step;
            let (ft, gt) = f(&trial)?;
            evaluations += 1;
            check_dim("gradient", n, gt.len())?;
            if ft.is_finite() && gt.iter().all(|a| a.is_finite()) {
                let flat = (fx - ft).abs() <= roundoff * fx.abs();
                only_flat &= flat;
                let ok = if flat { gt.dot(&dir) <= approx_c * slope } else { ft <= fx + c1 * step * slope };
                if ok {
                    accepted = Some((trial, ft, gt, flat));
                    break;
                }
            } else {
                only_flat = false;
            }
            step *= half;
        }
        let Some((x_new, f_new, g_new, flat)) = accepted else {
            // Nothing distinguishable from the current cost: as far down as
            // the arithmetic allows.
            break if only_flat { Termination::CostStagnation } else { Termination::LineSearchFailed };
        };

        iterations += 1;
        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > T::default_epsilon() * y.norm() * s.norm() {
            if pairs.len() == cfg.memory {
                pairs.pop_front();
            }
            pairs.push_back((s, y, T::one() / sy));
        }
        let decrease = fx - f_new;
        x = x_new;
        fx = f_new;
        g = g_new;
        history.push(fx);
        if !flat && decrease <= lit::<T>(cfg.cost_rtol) * fx.abs().max(T::one()) {
            break if inf_norm(&g) <= tol { Termination::GradientTolerance } else { Termination::CostStagnation };
        }
    };

    Ok(OptimizeReport {
        grad_norm: g.norm(),
        x_opt: x,
        cost: fx,
        iterations,
        evaluations,
        cost_history: history,
        termination,
    })
}
