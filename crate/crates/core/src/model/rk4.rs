use nalgebra::DVector;

use super::{Dynamics, StateVector, Trajectory};
use crate::error::{check_dim, Error, Result};
use crate::scalar::{all_finite, lit, Real};

/// Classical four-stage Runge-Kutta with a fixed step.
///
/// The last step of every integration segment is shortened so that the
/// trajectory lands exactly on the requested time. The tangent-linear and
/// adjoint below differentiate this discrete map stage by stage, so the
/// adjoint is the exact transpose of the tangent-linear model.
#[derive(Debug, Clone, PartialEq)]
pub struct Rk4<T: Real, D> {
    dynamics: D,
    dt: T,
}

struct Stages<T: Real> {
    x1: DVector<T>,
    x2: DVector<T>,
    x3: DVector<T>,
    x4: DVector<T>,
}

impl<T: Real, D: Dynamics<T>> Rk4<T, D> {
    pub fn new(dynamics: D, dt: T) -> Result<Self> {
        if !(dt > T::zero()) || !dt.is_finite() {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        Ok(Self { dynamics, dt })
    }

    pub fn dynamics(&self) -> &D {
        &self.dynamics
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn dim(&self) -> usize {
        self.dynamics.dim()
    }

    /// Stage evaluation points of one step from `x` with step `h`.
    fn stages(&self, x: &DVector<T>, h: T) -> (Stages<T>, DVector<T>) {
        let half = h * lit(0.5);
        let k1 = self.dynamics.rhs(x);
        let x2 = x + &k1 * half;
        let k2 = self.dynamics.rhs(&x2);
        let x3 = x + &k2 * half;
        let k3 = self.dynamics.rhs(&x3);
        let x4 = x + &k3 * h;
        let k4 = self.dynamics.rhs(&x4);
        let next = x + (k1 + (k2 + k3) * lit::<T>(2.0) + k4) * (h / lit(6.0));
        (Stages { x1: x.clone(), x2, x3, x4 }, next)
    }

    /// One RK4 step.
    pub fn step(&self, x: &DVector<T>, h: T) -> DVector<T> {
        self.stages(x, h).1
    }

    fn step_tangent(&self, x: &DVector<T>, h: T, dx: &DVector<T>) -> DVector<T> {
        let (s, _) = self.stages(x, h);
        let half = h * lit(0.5);
        let dk1 = self.dynamics.jvp(&s.x1, dx);
        let dk2 = self.dynamics.jvp(&s.x2, &(dx + &dk1 * half));
        let dk3 = self.dynamics.jvp(&s.x3, &(dx + &dk2 * half));
        let dk4 = self.dynamics.jvp(&s.x4, &(dx + &dk3 * h));
        dx + (dk1 + (dk2 + dk3) * lit::<T>(2.0) + dk4) * (h / lit(6.0))
    }

    fn step_adjoint(&self, x: &DVector<T>, h: T, ax_out: &DVector<T>) -> DVector<T> {
        let (s, _) = self.stages(x, h);
        let half = h * lit(0.5);
        let sixth = h / lit(6.0);
        let third = h / lit(3.0);
        let mut ax = ax_out.clone();
        let ak4 = ax_out * sixth;
        let mut ak3 = ax_out * third;
        let mut ak2 = ax_out * third;
        let mut ak1 = ax_out * sixth;

        let u4 = self.dynamics.vjp(&s.x4, &ak4);
        ax += &u4;
        ak3 += &u4 * h;

        let u3 = self.dynamics.vjp(&s.x3, &ak3);
        ax += &u3;
        ak2 += &u3 * half;

        let u2 = self.dynamics.vjp(&s.x2, &ak2);
        ax += &u2;
        ak1 += &u2 * half;

        ax += self.dynamics.vjp(&s.x1, &ak1);
        ax
    }

    /// Times of the grid nodes strictly after `ta` up to and including `tb`.
    fn segment_nodes(&self, ta: T, tb: T) -> Vec<T> {
        let span = tb - ta;
        if span <= T::zero() {
            return Vec::new();
        }
        let eps = lit::<T>(1e-9);
        let ratio = span / self.dt;
        let mut full = ratio.floor();
        if ratio - full > T::one() - eps {
            full += T::one();
        }
        let full_steps = full.to_usize().unwrap_or(0);
        let remainder = span - full * self.dt;
        let mut nodes: Vec<T> = (1..=full_steps).map(|k| ta + lit::<T>(k as f64) * self.dt).collect();
        if remainder > eps * self.dt {
            nodes.push(tb);
        } else if let Some(last) = nodes.last_mut() {
            *last = tb;
        } else {
            nodes.push(tb);
        }
        nodes
    }

    /// Integrates from `x0` to `t_end`, returning every step.
    pub fn integrate(&self, x0: &StateVector<T>, t_end: T) -> Result<Trajectory<T>> {
        if !(t_end > x0.time) {
            return Err(Error::InvalidParameter(format!("t_end ({t_end}) must exceed the initial time ({})", x0.time)));
        }
        Ok(self.integrate_through(x0, &[t_end])?.0)
    }

    /// Integrates through the non-decreasing `times` (all `>= x0.time`),
    /// landing exactly on each. Returns the full trajectory and the node
    /// index of every requested time.
    pub fn integrate_through(&self, x0: &StateVector<T>, times: &[T]) -> Result<(Trajectory<T>, Vec<usize>)> {
        check_dim("integrator initial state", self.dim(), x0.dim())?;
        if !all_finite(&x0.values) {
            return Err(Error::NonFinite("integrator initial state"));
        }
        let mut states = vec![x0.clone()];
        let mut indices = Vec::with_capacity(times.len());
        let mut current = x0.clone();
        for &t in times {
            if t < current.time {
                return Err(Error::UnorderedTimes);
            }
            for node in self.segment_nodes(current.time, t) {
                let h = node - current.time;
                let next = self.step(&current.values, h);
                if !all_finite(&next) {
                    return Err(Error::NonFinite("RK4 integration"));
                }
                current = StateVector::new(next, node);
                states.push(current.clone());
            }
            indices.push(states.len() - 1);
        }
        Ok((Trajectory::new(states)?, indices))
    }

    /// Final state after integrating `x0` to `t_end`.
    pub fn forecast(&self, x0: &StateVector<T>, t_end: T) -> Result<StateVector<T>> {
        if t_end == x0.time {
            return Ok(x0.clone());
        }
        Ok(self.integrate(x0, t_end)?.last().clone())
    }

    /// Propagates `dx0` through the linearization of the discrete map along
    /// `traj`, returning the perturbation at the final node.
    pub fn tangent_linear(&self, traj: &Trajectory<T>, dx0: &DVector<T>) -> Result<DVector<T>> {
        check_dim("tangent-linear perturbation", traj.first().dim(), dx0.len())?;
        let mut dx = dx0.clone();
        for pair in traj.states().windows(2) {
            let h = pair[1].time - pair[0].time;
            dx = self.step_tangent(&pair[0].values, h, &dx);
        }
        Ok(dx)
    }

    /// Transpose of [`Self::tangent_linear`] applied to `dx_end`.
    pub fn adjoint(&self, traj: &Trajectory<T>, dx_end: &DVector<T>) -> Result<DVector<T>> {
        self.adjoint_with_forcing(traj, &[(traj.len() - 1, dx_end.clone())])
    }

    /// Single backward sweep accumulating adjoint forcings injected at the
    /// given trajectory nodes. Returns the sensitivity with respect to the
    /// initial state.
    pub fn adjoint_with_forcing(&self, traj: &Trajectory<T>, forcing: &[(usize, DVector<T>)]) -> Result<DVector<T>> {
        let n = traj.first().dim();
        let mut at_node: Vec<Option<DVector<T>>> = vec![None; traj.len()];
        for (idx, f) in forcing {
            if *idx >= traj.len() {
                return Err(Error::InvalidParameter(format!(
                    "adjoint forcing node {idx} outside trajectory of length {}",
                    traj.len()
                )));
            }
            check_dim("adjoint forcing", n, f.len())?;
            match &mut at_node[*idx] {
                Some(acc) => *acc += f,
                slot @ None => *slot = Some(f.clone()),
            }
        }
        let states = traj.states();
        let mut adj = DVector::zeros(n);
        for k in (1..states.len()).rev() {
            if let Some(f) = &at_node[k] {
                adj += f;
            }
            let h = states[k].time - states[k - 1].time;
            adj = self.step_adjoint(&states[k - 1].values, h, &adj);
        }
        if let Some(f) = &at_node[0] {
            adj += f;
        }
        Ok(adj)
    }
}
