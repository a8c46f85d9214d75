use nalgebra::{DMatrix, DVector};
use robust_da::ensrf::{ensemble_stats, ensrf_analysis};
use robust_da::var3d::solve_3dvar;
use robust_da::var4d::solve_4dvar;
use robust_da::{
    Covariance, ModelConfig, Norm, ObservationOperator, ObservationSet, StateVector, Var4dConfig, VarConfig,
};

#[test]
fn single_precision_pipeline() {
    let model = ModelConfig::default().integrator::<f32>().unwrap();
    let x0 = StateVector::new(DVector::from_fn(40, |i, _| 8.0f32 + (i as f32 * 0.3).sin()), 0.0f32);
    let traj = model.integrate(&x0, 0.2).unwrap();
    let model64 = ModelConfig::default().integrator::<f64>().unwrap();
    let x64 = StateVector::new(x0.values.map(f64::from), 0.0);
    let end64 = model64.forecast(&x64, 0.2).unwrap();
    assert!((traj.last().values.map(f64::from) - end64.values).amax() < 1e-3);

    let truth = traj.last().clone();
    let obs = ObservationSet::new(
        truth.time,
        truth.values.clone(),
        Covariance::scaled_identity(40, 0.5f32).unwrap(),
        ObservationOperator::Identity,
    )
    .unwrap();
    let xb = StateVector::new(truth.values.add_scalar(1.0), truth.time);
    for norm in Norm::ALL {
        let cfg = VarConfig::new(Covariance::scaled_identity(40, 1.0f32).unwrap(), norm);
        let res = solve_3dvar(&xb, &obs, &cfg).unwrap();
        assert!((&res.analysis.values - &truth.values).norm() < (&xb.values - &truth.values).norm());
    }

    let x0b = StateVector::new(x0.values.add_scalar(0.5), 0.0f32);
    let cfg = Var4dConfig::new(VarConfig::new(Covariance::scaled_identity(40, 1.0f32).unwrap(), Norm::L2));
    let res = solve_4dvar(&x0b, std::slice::from_ref(&obs), &model, &cfg).unwrap();
    assert!((&res.analysis.values - &x0.values).norm() < (&x0b.values - &x0.values).norm());

    let members: Vec<_> =
        (0..6).map(|k| StateVector::new(truth.values.add_scalar(k as f32 * 0.2 - 0.5), truth.time)).collect();
    let ens = ensemble_stats(&members).unwrap();
    let w = ensrf_analysis(&ens, &obs).unwrap();
    assert_eq!(w.deviations.shape(), DMatrix::<f32>::zeros(6, 6).shape());
}
