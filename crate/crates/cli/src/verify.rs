//! Oracle checks run by `robust-da verify` and by the acceptance suite.
//! Every oracle here is computed independently of the solver under test:
//! brute-force scalar minimization for the shrinkage operators, explicit
//! dense Kalman algebra for the linear-Gaussian cases.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use robust_da::ensrf::{ensemble_stats, letkf_cycle};
use robust_da::norms::{huber_shrinkage, l1_shrinkage};
use robust_da::var3d::solve_l2_3dvar;
use robust_da::var4d::l2_4dvar_cost;
use robust_da::{
    Covariance, Dynamics, EnsembleConfig, HuberParams, LinearDynamics, LocalizationConfig, Lorenz96, ModelConfig, Norm,
    ObservationOperator, ObservationSet, Rk4, ShrinkMode, StateVector, Var4dConfig, VarConfig,
};

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    /// Worst discrepancy found.
    pub worst: f64,
    pub tolerance: f64,
}

impl Check {
    fn new(name: &'static str, worst: f64, tolerance: f64) -> Self {
        Self { name, passed: worst <= tolerance, worst, tolerance }
    }

    fn failed(name: &'static str, tolerance: f64) -> Self {
        Self { name, passed: false, worst: f64::NAN, tolerance }
    }
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} {:<28} worst {:.3e} (tolerance {:.0e})",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.worst,
            self.tolerance
        )
    }
}

fn randn(rng: &mut ChaCha8Rng) -> f64 {
    rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng)
}

fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| randn(rng))
}

fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| randn(rng))
}

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Golden-section minimum of a convex `f` on `[a, b]`.
fn golden_min(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..300 {
        if b - a < 1e-13 * (1.0 + a.abs().max(b.abs())) {
            break;
        }
        if fc < fd {
            (b, d, fd) = (d, c, fc);
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            (a, c, fc) = (c, d, fd);
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    [f(a), f(b), fc, fd].into_iter().fold(f64::INFINITY, f64::min)
}

/// Closed interval and the penalty branch on it.
type Piece<'a> = (f64, f64, &'a dyn Fn(f64) -> f64);

/// `min_z g(z) + mu/2 (v - z)^2` where `g` is convex and smooth on each of
/// the closed `pieces`.
fn brute_prox_min(pieces: &[Piece], v: f64, mu: f64) -> f64 {
    pieces
        .iter()
        .filter(|(a, b, _)| a <= b)
        .map(|&(a, b, g)| golden_min(&|z| g(z) + 0.5 * mu * (v - z) * (v - z), a, b))
        .fold(f64::INFINITY, f64::min)
}

fn huber_scalar(z: f64, tau: f64) -> f64 {
    let (quad, lin) = (0.5 * z * z, z.abs() - 0.5);
    if z.abs() < tau {
        quad
    } else if z.abs() > tau {
        lin
    } else {
        quad.min(lin)
    }
}

/// Elementwise L1 and Huber shrinkage against per-coordinate brute force.
/// The discrepancy is the objective gap.
pub fn prox_agreement(instances: usize, seed: u64) -> Check {
    const NAME: &str = "prox brute-force agreement";
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let mu = rng.random_range(0.1..100.0);
        let tau = [1.0, 2.0, 3.0][rng.random_range(0..3)];
        let m = 4;
        let d = DVector::from_fn(m, |_, _| rng.random_range(-12.0..12.0));
        let lambda = DVector::from_fn(m, |_, _| rng.random_range(-5.0..5.0));
        let (Ok(z1), Ok(zh)) = (
            l1_shrinkage(mu, &d, &lambda, ShrinkMode::Elementwise),
            huber_shrinkage(mu, &d, &lambda, &HuberParams { tau }, ShrinkMode::Elementwise),
        ) else {
            return Check::failed(NAME, 1e-9);
        };
        for l in 0..m {
            let v = d[l] - lambda[l] / mu;
            let q = |z: f64| 0.5 * mu * (v - z) * (v - z);
            let r = v.abs() + tau + 2.0 / mu + 1.0;
            let l1_min = brute_prox_min(&[(-r, 0.0, &|z: f64| -z), (0.0, r, &|z: f64| z)], v, mu);
            let hub_min = brute_prox_min(
                &[(-r, -tau, &|z: f64| -z - 0.5), (-tau, tau, &|z: f64| 0.5 * z * z), (tau, r, &|z: f64| z - 0.5)],
                v,
                mu,
            );
            worst = worst.max(z1[l].abs() + q(z1[l]) - l1_min).max(huber_scalar(zh[l], tau) + q(zh[l]) - hub_min);
        }
    }
    Check::new(NAME, worst, 1e-9)
}

/// Lorenz-96 dynamics whose transposed Jacobian is deliberately wrong.
struct CorruptedAdjoint(Lorenz96<f64>);

impl Dynamics<f64> for CorruptedAdjoint {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn rhs(&self, x: &DVector<f64>) -> DVector<f64> {
        self.0.rhs(x)
    }
    fn jvp(&self, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        self.0.jvp(x, v)
    }
    fn vjp(&self, x: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        self.0.vjp(x, w) + w * 1e-2
    }
}

fn spun_up_lorenz() -> StateVector<f64> {
    let model = ModelConfig::default().integrator::<f64>().expect("default model");
    let x = StateVector::new(DVector::from_fn(40, |i, _| 8.0 + if i == 19 { 0.01 } else { 0.0 }), 0.0);
    let s = model.forecast(&x, 5.0).expect("spin-up");
    StateVector::new(s.values, 0.0)
}

fn dot_product_worst<D: Dynamics<f64>>(model: &Rk4<f64, D>, x0: &StateVector<f64>, pairs: usize) -> Option<f64> {
    let traj = model.integrate(x0, 0.6).ok()?;
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let dx = rand_vec(&mut rng, x0.dim());
        let dy = rand_vec(&mut rng, x0.dim());
        let lhs = model.tangent_linear(&traj, &dx).ok()?.dot(&dy);
        let rhs = dx.dot(&model.adjoint(&traj, &dy).ok()?);
        worst = worst.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()));
    }
    Some(worst)
}

/// `<M dx, dy> = <dx, M^T dy>` over a 0.6-unit Lorenz-96 window.
pub fn adjoint_dot_product(pairs: usize, corrupt: bool) -> Check {
    const NAME: &str = "adjoint dot-product";
    let cfg = ModelConfig::default();
    let x0 = spun_up_lorenz();
    let worst = if corrupt {
        let dynamics = CorruptedAdjoint(Lorenz96 { n: cfg.n, forcing: cfg.forcing });
        Rk4::new(dynamics, cfg.dt).ok().and_then(|m| dot_product_worst(&m, &x0, pairs))
    } else {
        cfg.integrator::<f64>().ok().and_then(|m| dot_product_worst(&m, &x0, pairs))
    };
    worst.map_or(Check::failed(NAME, 1e-10), |w| Check::new(NAME, w, 1e-10))
}

/// Adjoint gradient of the L2 4D-Var cost against central differences.
pub fn adjoint_gradient(directions: usize) -> Check {
    const NAME: &str = "4D-Var gradient vs FD";
    let run = || -> Option<f64> {
        let model = ModelConfig::default().integrator::<f64>().ok()?;
        let truth0 = spun_up_lorenz();
        let mut rng = ChaCha8Rng::seed_from_u64(102);
        let times: Vec<f64> = (1..=6).map(|k| 0.1 * k as f64).collect();
        let (traj, idx) = model.integrate_through(&truth0, &times).ok()?;
        let obs: Vec<_> = idx
            .iter()
            .map(|&k| {
                let s = &traj.states()[k];
                ObservationSet::new(
                    s.time,
                    &s.values + rand_vec(&mut rng, 40) * 0.5,
                    Covariance::scaled_identity(40, 0.5).ok()?,
                    ObservationOperator::Identity,
                )
                .ok()
            })
            .collect::<Option<_>>()?;
        let xb = StateVector::new(&truth0.values + rand_vec(&mut rng, 40) * 0.6, 0.0);
        let cfg = Var4dConfig::new(VarConfig::new(Covariance::scaled_identity(40, 0.6).ok()?, Norm::L2));
        let v = rand_vec(&mut rng, 40) * 0.3;
        let (_, grad) = l2_4dvar_cost(&xb, &obs, &model, &cfg, &v).ok()?;
        let eps = 1e-5;
        let mut worst: f64 = 0.0;
        for _ in 0..directions {
            let dir = rand_vec(&mut rng, 40).normalize();
            let (fp, _) = l2_4dvar_cost(&xb, &obs, &model, &cfg, &(&v + &dir * eps)).ok()?;
            let (fm, _) = l2_4dvar_cost(&xb, &obs, &model, &cfg, &(&v - &dir * eps)).ok()?;
            let fd = (fp - fm) / (2.0 * eps);
            let an = grad.dot(&dir);
            worst = worst.max((fd - an).abs() / an.abs().max(1e-12));
        }
        Some(worst)
    };
    run().map_or(Check::failed(NAME, 1e-5), |w| Check::new(NAME, w, 1e-5))
}

fn kf_update(
    xb: &DVector<f64>,
    p: &DMatrix<f64>,
    h: &DMatrix<f64>,
    r: &DMatrix<f64>,
    y: &DVector<f64>,
) -> Option<(DVector<f64>, DMatrix<f64>)> {
    let s = h * p * h.transpose() + r;
    let k = p * h.transpose() * s.try_inverse()?;
    let xa = xb + &k * (y - h * xb);
    let pa = (DMatrix::identity(xb.len(), xb.len()) - &k * h) * p;
    Some((xa, pa))
}

/// L2 3D-Var against the Kalman update on random linear cases with `n <= 5`.
pub fn kf_3dvar(cases: usize) -> Check {
    const NAME: &str = "3D-Var vs Kalman update";
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let mut run = || -> Option<f64> {
        let mut worst: f64 = 0.0;
        for _ in 0..cases {
            let n = rng.random_range(1..=5);
            let m = rng.random_range(1..=n + 1);
            let a = rand_mat(&mut rng, n, n);
            let b = &a * a.transpose() + DMatrix::identity(n, n) * 0.5;
            let h = rand_mat(&mut rng, m, n);
            let r_var = DVector::from_fn(m, |_, _| rng.random_range(0.2..2.0));
            let xb = rand_vec(&mut rng, n);
            let y = rand_vec(&mut rng, m) * 2.0;
            let obs = ObservationSet::new(
                0.0,
                y.clone(),
                Covariance::diagonal(r_var.clone()).ok()?,
                ObservationOperator::Linear(h.clone()),
            )
            .ok()?;
            let mut cfg = VarConfig::new(Covariance::dense(b.clone()).ok()?, Norm::L2);
            cfg.lbfgs.grad_tol = 1e-13;
            cfg.lbfgs.cost_rtol = 0.0;
            let res = solve_l2_3dvar(&StateVector::new(xb.clone(), 0.0), &obs, &cfg).ok()?;
            let (xa, _) = kf_update(&xb, &b, &h, &DMatrix::from_diagonal(&r_var), &y)?;
            worst = worst.max((&res.analysis.values - &xa).amax());
        }
        Some(worst)
    };
    run().map_or(Check::failed(NAME, 1e-8), |w| Check::new(NAME, w, 1e-8))
}

/// Cycled EnSRF mean against the Kalman filter on a linear model with more
/// members than state components.
pub fn kf_ensrf(cycles: usize) -> Check {
    const NAME: &str = "EnSRF vs Kalman filter";
    let run = || -> Option<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(104);
        let (n, n_ens, dt_obs) = (4, 9, 0.1);
        let a = rand_mat(&mut rng, n, n) * 0.5;
        let model = Rk4::new(LinearDynamics::new(a).ok()?, 0.01).ok()?;
        let cols = (0..n)
            .map(|j| {
                let e = StateVector::new(DVector::from_fn(n, |i, _| if i == j { 1.0 } else { 0.0 }), 0.0);
                model.forecast(&e, dt_obs).ok().map(|s| s.values)
            })
            .collect::<Option<Vec<_>>>()?;
        let m_step = DMatrix::from_columns(&cols);
        let members: Vec<_> = (0..n_ens).map(|_| StateVector::new(rand_vec(&mut rng, n), 0.0)).collect();
        let ens0 = ensemble_stats(&members).ok()?;
        let h = rand_mat(&mut rng, 2, n);
        let r_var = DVector::from_vec(vec![0.3, 0.6]);
        let obs = (1..=cycles)
            .map(|k| {
                ObservationSet::new(
                    dt_obs * k as f64,
                    rand_vec(&mut rng, 2),
                    Covariance::diagonal(r_var.clone()).ok()?,
                    ObservationOperator::Linear(h.clone()),
                )
                .ok()
            })
            .collect::<Option<Vec<_>>>()?;
        let loc = LocalizationConfig { enabled: false, ..LocalizationConfig::default() };
        let out = letkf_cycle(&ens0, &obs, &model, &loc, &EnsembleConfig::new(Norm::L2)).ok()?;
        let (mut x, mut p) = (ens0.mean.clone(), ens0.covariance());
        let r = DMatrix::from_diagonal(&r_var);
        let mut worst: f64 = 0.0;
        for (o, c) in obs.iter().zip(&out) {
            (x, p) = kf_update(&(&m_step * &x), &(&m_step * &p * m_step.transpose()), &h, &r, &o.values)?;
            worst = worst.max((&c.analysis.mean - &x).amax());
        }
        Some(worst)
    };
    run().map_or(Check::failed(NAME, 1e-6), |w| Check::new(NAME, w, 1e-6))
}

/// The fast suite behind `robust-da verify`.
pub fn run_all(corrupt_adjoint: bool) -> Vec<Check> {
    vec![
        adjoint_dot_product(100, corrupt_adjoint),
        adjoint_gradient(20),
        prox_agreement(300, 7),
        kf_3dvar(25),
        kf_ensrf(5),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_section_finds_parabola_minimum() {
        let m = golden_min(&|z| (z - 1.3) * (z - 1.3) + 2.0, -10.0, 10.0);
        assert!((m - 2.0).abs() < 1e-15);
    }

    #[test]
    fn fast_suite_passes() {
        for c in run_all(false) {
            assert!(c.passed, "{c}");
        }
    }

    #[test]
    fn corrupted_adjoint_is_caught() {
        assert!(!adjoint_dot_product(5, true).passed);
    }
}
