//! Wearable-marker tracking and airflow haptic barrier for human-robot
//! shared workspaces.
//!
//! The numeric core is generic over `f32`/`f64`; the aliases below fix the
//! scalar to `f64` for everyday use, with `F32` variants where single
//! precision is useful.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod airflow;
pub mod cli;
pub mod geometry;
pub mod pipeline;
pub mod safety;
pub mod scalar;
pub mod sim;
pub mod stats;
pub mod wire;

pub use scalar::Real;

pub type CameraIntrinsics = geometry::CameraIntrinsics<f64>;
pub type MarkerSpec = geometry::MarkerSpec<f64>;
pub type TagObservation = geometry::TagObservation<f64>;
pub type MarkerPose = geometry::MarkerPose<f64>;
pub type TcpPoint = geometry::TcpPoint<f64>;
pub type SafetyZoneConfig = safety::SafetyZoneConfig<f64>;
pub type SafetyDecision = safety::SafetyDecision<f64>;
pub type SafetyMonitor = safety::SafetyMonitor<f64>;
pub type JetModel = airflow::JetModel<f64>;
pub type PerceptionModel = airflow::PerceptionModel<f64>;
pub type SampleVector = stats::SampleVector<f64>;
pub type TestResult = stats::TestResult<f64>;

pub type CameraIntrinsicsF32 = geometry::CameraIntrinsics<f32>;
pub type MarkerSpecF32 = geometry::MarkerSpec<f32>;
pub type TagObservationF32 = geometry::TagObservation<f32>;
pub type MarkerPoseF32 = geometry::MarkerPose<f32>;
pub type SafetyZoneConfigF32 = safety::SafetyZoneConfig<f32>;
pub type JetModelF32 = airflow::JetModel<f32>;
pub type PerceptionModelF32 = airflow::PerceptionModel<f32>;

pub use safety::SafetyState;
