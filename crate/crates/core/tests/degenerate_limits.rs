//! Huber solvers with a threshold far beyond every innovation, and
//! zero-innovation inputs.

use nalgebra::{DMatrix, DVector};
use robust_da::ensrf::{ensemble_stats, ensrf_analysis, robust_enkf_analysis};
use robust_da::var3d::solve_3dvar;
use robust_da::var4d::solve_4dvar;
use robust_da::{
    Covariance, EnsembleConfig, HuberParams, LinearDynamics, ModelConfig, Norm, ObservationOperator, ObservationSet,
    Rk4, StateVector, Var4dConfig, VarConfig,
};

const TAU: f64 = 1e6;

fn obs_at(t: f64, y: DVector<f64>, std: f64) -> ObservationSet<f64> {
    let n = y.len();
    ObservationSet::new(t, y, Covariance::scaled_identity(n, std).unwrap(), ObservationOperator::Identity).unwrap()
}

fn doubled(o: &ObservationSet<f64>) -> ObservationSet<f64> {
    o.with_data(o.values.clone(), o.obs_cov.scaled(2.0).unwrap()).unwrap()
}

fn var_cfg(n: usize, norm: Norm) -> VarConfig<f64> {
    let mut c = VarConfig::new(Covariance::scaled_identity(n, 0.8).unwrap(), norm);
    c.huber = HuberParams { tau: TAU };
    c.lbfgs.grad_tol = 1e-12;
    c
}

#[test]
fn three_dvar_large_tau() {
    let xb = StateVector::new(DVector::from_fn(6, |i, _| i as f64), 0.0);
    let obs = obs_at(0.0, DVector::from_fn(6, |i, _| i as f64 + (i as f64).cos()), 0.5);
    let l2 = solve_3dvar(&xb, &obs, &var_cfg(6, Norm::L2)).unwrap().analysis.values;
    let l2_2r = solve_3dvar(&xb, &doubled(&obs), &var_cfg(6, Norm::L2)).unwrap().analysis.values;
    let hq = solve_3dvar(&xb, &obs, &var_cfg(6, Norm::HuberHq)).unwrap().analysis.values;
    let admm = solve_3dvar(&xb, &obs, &var_cfg(6, Norm::HuberAdmm)).unwrap().analysis.values;
    assert!((hq - l2_2r).amax() <= 1e-3);
    assert!((admm - l2).amax() <= 1e-3);
}

#[test]
fn four_dvar_large_tau() {
    let a = DMatrix::from_fn(4, 4, |i, j| if i == j { -0.2 } else { 0.1 * (i as f64 - j as f64) });
    let model = Rk4::new(LinearDynamics::new(a).unwrap(), 0.01).unwrap();
    let xb = StateVector::new(DVector::from_vec(vec![1.0, -1.0, 0.5, 0.0]), 0.0);
    let obs: Vec<_> =
        (1..=3).map(|k| obs_at(0.1 * k as f64, DVector::from_fn(4, |i, _| ((i + k) as f64).sin()), 0.5)).collect();
    let obs2: Vec<_> = obs.iter().map(doubled).collect();
    let run = |o: &[ObservationSet<f64>], norm| {
        solve_4dvar(&xb, o, &model, &Var4dConfig::new(var_cfg(4, norm))).unwrap().analysis.values
    };
    assert!((run(&obs, Norm::HuberHq) - run(&obs2, Norm::L2)).amax() <= 1e-3);
    assert!((run(&obs, Norm::HuberAdmm) - run(&obs, Norm::L2)).amax() <= 1e-3);
}

#[test]
fn ensemble_large_tau() {
    let members: Vec<_> =
        (0..5).map(|k| StateVector::new(DVector::from_fn(4, |i, _| ((i * 3 + k) as f64).sin()), 0.0)).collect();
    let ens = ensemble_stats(&members).unwrap();
    let obs = obs_at(0.0, DVector::from_vec(vec![0.4, -0.3, 0.9, 0.1]), 0.5);
    let mut cfg = EnsembleConfig::new(Norm::HuberHq);
    cfg.huber = HuberParams { tau: TAU };
    let (hq, _) = robust_enkf_analysis(&ens, &obs, &cfg).unwrap();
    let l2_2r = ensrf_analysis(&ens, &doubled(&obs)).unwrap();
    assert!((&hq.mean.0 - &l2_2r.mean.0).amax() <= 1e-3);
    assert!((&hq.deviations - &l2_2r.deviations).amax() <= 1e-3);
}

#[test]
fn zero_innovation_is_a_fixed_point() {
    let model = ModelConfig::default().integrator::<f64>().unwrap();
    let xb = StateVector::new(DVector::from_fn(40, |i, _| 8.0 * (i as f64 * 0.4).cos()), 0.0);
    let at_t = model.forecast(&xb, 0.1).unwrap();
    let obs0 = obs_at(0.0, xb.values.clone(), 0.5);
    let obs1 = obs_at(0.1, at_t.values.clone(), 0.5);
    let members: Vec<_> = (0..6).map(|k| StateVector::new(xb.values.add_scalar(k as f64 - 2.5), 0.0)).collect();
    let ens = ensemble_stats(&members).unwrap();
    let obs_mean = obs_at(0.0, ens.mean.clone(), 0.5);
    for norm in [Norm::L1Admm, Norm::HuberAdmm, Norm::HuberHq] {
        let cfg = VarConfig::new(Covariance::scaled_identity(40, 0.8).unwrap(), norm);
        assert_eq!(solve_3dvar(&xb, &obs0, &cfg).unwrap().analysis.values, xb.values);
        let r4 = solve_4dvar(&xb, std::slice::from_ref(&obs1), &model, &Var4dConfig::new(cfg)).unwrap();
        assert_eq!(r4.analysis.values, xb.values);
        let (w, _) = robust_enkf_analysis(&ens, &obs_mean, &EnsembleConfig::new(norm)).unwrap();
        assert_eq!(w.mean.0, DVector::zeros(6));
    }
}
