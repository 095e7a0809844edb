//! Sensor fault estimation filters built from input/output data.
//!
//! The crate covers the full pipeline: linear-system primitives and the
//! innovation/predictor conversion ([`lti`]), least-squares identification of
//! predictor Markov parameters ([`sysid`]), the model-based system-inversion
//! filter ([`inverse`]), the direct Markov-parameter design of the same filter
//! ([`design`]) and a moving-horizon least-squares baseline ([`mhe`]).
//!
//! All numerical code is generic over [`Scalar`] (implemented for `f32` and
//! `f64`); the aliases at the crate root fix the scalar to `f64`.

pub mod design;
pub mod error;
pub mod fixtures;
pub mod inverse;
pub mod linalg;
pub mod lti;
pub mod mhe;
pub mod scalar;
pub mod sysid;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use design::{DesignConfig, OrderSelection};
pub use inverse::{StabilizationStrategy, ZeroReport};
pub use lti::Channel;
pub use sysid::XiOptions;

/// Dense `f64` matrix.
pub type Matrix = nalgebra::DMatrix<f64>;
/// Dense `f64` column vector.
pub type Vector = nalgebra::DVector<f64>;

pub type StateSpaceModel = lti::StateSpaceModel<f64>;
pub type PredictorModel = lti::PredictorModel<f64>;
pub type MarkovSequence = lti::MarkovSequence<f64>;
pub type IoData = lti::IoData<f64>;
pub type LtiSystem = lti::LtiSystem<f64>;
pub type IdentifiedXi = sysid::IdentifiedXi<f64>;
pub type InverseMatrices = inverse::InverseMatrices<f64>;
pub type FaultEstimationFilter = inverse::FaultEstimationFilter<f64>;
pub type RealizedSystem = design::RealizedSystem<f64>;
pub type MheProblem = mhe::MheProblem<f64>;
pub type MheRunner = mhe::MheRunner<f64>;

/// Single-precision variants.
pub mod f32 {
    pub type Matrix = nalgebra::DMatrix<f32>;
    pub type StateSpaceModel = crate::lti::StateSpaceModel<f32>;
    pub type PredictorModel = crate::lti::PredictorModel<f32>;
    pub type MarkovSequence = crate::lti::MarkovSequence<f32>;
    pub type FaultEstimationFilter = crate::inverse::FaultEstimationFilter<f32>;
}
