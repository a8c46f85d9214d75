//! Closed-form Kalman filter checks on small linear-Gaussian systems.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use robust_da::ensrf::{ensemble_stats, ensrf_analysis, ensrf_weight_cost, letkf_cycle};
use robust_da::var3d::solve_l2_3dvar;
use robust_da::{
    Covariance, EnsembleConfig, LinearDynamics, LocalizationConfig, Norm, ObservationOperator, ObservationSet, Rk4,
    StateVector, VarConfig, WeightVector,
};

fn randn(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| randn(rng))
}

fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| randn(rng))
}

fn kf_update(
    xb: &DVector<f64>,
    p: &DMatrix<f64>,
    h: &DMatrix<f64>,
    r: &DMatrix<f64>,
    y: &DVector<f64>,
) -> (DVector<f64>, DMatrix<f64>) {
    let s = h * p * h.transpose() + r;
    let k = p * h.transpose() * s.try_inverse().unwrap();
    let xa = xb + &k * (y - h * xb);
    let n = xb.len();
    let pa = (DMatrix::identity(n, n) - &k * h) * p;
    (xa, pa)
}

#[test]
fn l2_3dvar_is_the_kalman_update() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..25 {
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
            Covariance::diagonal(r_var.clone()).unwrap(),
            ObservationOperator::Linear(h.clone()),
        )
        .unwrap();
        let mut cfg = VarConfig::new(Covariance::dense(b.clone()).unwrap(), Norm::L2);
        cfg.lbfgs.grad_tol = 1e-13;
        cfg.lbfgs.cost_rtol = 0.0;
        let res = solve_l2_3dvar(&StateVector::new(xb.clone(), 0.0), &obs, &cfg).unwrap();
        let (xa, _) = kf_update(&xb, &b, &h, &DMatrix::from_diagonal(&r_var), &y);
        let err = (&res.analysis.values - &xa).amax();
        assert!(err <= 1e-8, "n={n} m={m} error {err:e}");
    }
}

#[test]
fn ensrf_tracks_the_kalman_filter_on_a_linear_model() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 3;
    let n_ens = 8;
    let a = rand_mat(&mut rng, n, n) * 0.5;
    let model = Rk4::new(LinearDynamics::new(a).unwrap(), 0.01).unwrap();
    // Discrete propagator over one 0.1 cycle.
    let cols: Vec<DVector<f64>> = (0..n)
        .map(|j| {
            let e = StateVector::new(DVector::from_fn(n, |i, _| if i == j { 1.0 } else { 0.0 }), 0.0);
            model.forecast(&e, 0.1).unwrap().values
        })
        .collect();
    let m_step = DMatrix::from_columns(&cols);

    let members: Vec<_> = (0..n_ens).map(|_| StateVector::new(rand_vec(&mut rng, n), 0.0)).collect();
    let ens0 = ensemble_stats(&members).unwrap();
    let h = rand_mat(&mut rng, 2, n);
    let r_var = DVector::from_vec(vec![0.3, 0.6]);
    let obs: Vec<_> = (1..=5)
        .map(|k| {
            ObservationSet::new(
                0.1 * k as f64,
                rand_vec(&mut rng, 2),
                Covariance::diagonal(r_var.clone()).unwrap(),
                ObservationOperator::Linear(h.clone()),
            )
            .unwrap()
        })
        .collect();

    let loc = LocalizationConfig { enabled: false, ..LocalizationConfig::default() };
    let out = letkf_cycle(&ens0, &obs, &model, &loc, &EnsembleConfig::new(Norm::L2)).unwrap();

    let mut x = ens0.mean.clone();
    let mut p = ens0.covariance();
    let r = DMatrix::from_diagonal(&r_var);
    for (o, c) in obs.iter().zip(&out) {
        x = &m_step * x;
        p = &m_step * p * m_step.transpose();
        (x, p) = kf_update(&x, &p, &h, &r, &o.values);
        assert!((&c.analysis.mean - &x).amax() <= 1e-6);
        assert!((c.analysis.covariance() - &p).amax() <= 1e-6);
    }
}

fn weight_case() -> (robust_da::Ensemble<f64>, ObservationSet<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let members: Vec<_> = (0..5).map(|_| StateVector::new(rand_vec(&mut rng, 6), 0.0)).collect();
    let ens = ensemble_stats(&members).unwrap();
    let obs = ObservationSet::new(
        0.0,
        rand_vec(&mut rng, 3),
        Covariance::diagonal(DVector::from_vec(vec![0.5, 1.0, 2.0])).unwrap(),
        ObservationOperator::subset(vec![0, 2, 5], 6).unwrap(),
    )
    .unwrap();
    (ens, obs)
}

#[test]
fn weight_cost_gradient_and_minimizer() {
    let (ens, obs) = weight_case();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let w = WeightVector(rand_vec(&mut rng, 5));
    let (_, g) = ensrf_weight_cost(&w, &ens, &obs).unwrap();
    for _ in 0..5 {
        let dir = rand_vec(&mut rng, 5);
        let eps = 1e-6;
        let (fp, _) = ensrf_weight_cost(&WeightVector(&w.0 + &dir * eps), &ens, &obs).unwrap();
        let (fm, _) = ensrf_weight_cost(&WeightVector(&w.0 - &dir * eps), &ens, &obs).unwrap();
        let fd = (fp - fm) / (2.0 * eps);
        assert!((fd - g.dot(&dir)).abs() <= 1e-6 * fd.abs().max(1.0));
    }
    let wa = ensrf_analysis(&ens, &obs).unwrap();
    let (_, g_min) = ensrf_weight_cost(&wa.mean, &ens, &obs).unwrap();
    assert!(g_min.amax() <= 1e-10);
}

#[test]
fn sample_covariance_of_twenty_members() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let members: Vec<_> = (0..20).map(|_| StateVector::new(rand_vec(&mut rng, 4), 0.0)).collect();
    let ens = ensemble_stats(&members).unwrap();
    let mean: DVector<f64> = members.iter().fold(DVector::zeros(4), |acc, m| acc + &m.values) / 20.0;
    let mut cov = DMatrix::zeros(4, 4);
    for m in &members {
        for i in 0..4 {
            for j in 0..4 {
                cov[(i, j)] += (m.values[i] - mean[i]) * (m.values[j] - mean[j]) / 19.0;
            }
        }
    }
    assert!((&ens.mean - mean).amax() <= 1e-14);
    assert!((ens.covariance() - cov).amax() <= 1e-13);
}
