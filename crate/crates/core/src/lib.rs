//! Robust variational and ensemble data assimilation for the Lorenz-96 model.
//!
//! Everything numerical is generic over the scalar type; the `*64` aliases
//! below fix it to `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod admm;
pub mod covariance;
pub mod ensrf;
pub mod error;
pub mod experiments;
pub mod model;
pub mod norms;
pub mod observation;
pub mod optimize;
pub mod scalar;
pub mod var3d;
pub mod var4d;
pub mod variational;

pub use admm::{AdmmState, RobustPenalty};
pub use covariance::Covariance;
pub use ensrf::{Ensemble, EnsembleConfig, EnsembleWeights, LocalizationConfig, WeightVector};
pub use error::{Error, Result};
pub use experiments::{
    experiment_inputs, run_experiment, DataQuality, ExperimentConfig, ExperimentInputs, Method, Protocol, RmseSeries,
};
pub use model::{Dynamics, LinearDynamics, Lorenz96, ModelConfig, Rk4, StateVector, Trajectory};
pub use norms::{HuberParams, ScaledInnovation, ShrinkMode};
pub use observation::{ObservationOperator, ObservationSet};
pub use optimize::{lbfgs, minimize, LbfgsConfig, OptimizeProblem, OptimizeReport};
pub use scalar::Real;
pub use var3d::Var3dConfig;
pub use var4d::Var4dConfig;
pub use variational::{AnalysisResult, Norm, VarConfig};

pub type StateVector64 = StateVector<f64>;
pub type Trajectory64 = Trajectory<f64>;
pub type Covariance64 = Covariance<f64>;
pub type ObservationSet64 = ObservationSet<f64>;
pub type Ensemble64 = Ensemble<f64>;
pub type Lorenz96Rk4 = Rk4<f64, Lorenz96<f64>>;
