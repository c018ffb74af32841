//! Discrete-time simulation of the shared-workspace trial: a scripted robot
//! TCP, a single-point hand model and the full tracking/feedback loop, run
//! under visual-only (V) and visual-plus-airflow (VA) conditions.

mod calibrate;
mod human;
mod report;
mod trajectory;
mod trial;

use thiserror::Error;

use crate::airflow::AirflowError;
use crate::geometry::GeometryError;
use crate::pipeline::PipelineError;
use crate::safety::SafetyError;

pub use calibrate::{calibrate, evaluate, CalibrationOptions, CalibrationReport, CalibrationTargets, Residuals};
pub use human::HumanModel;
pub use report::{analyze_pairs, ConditionStats, TrialReport};
pub use trajectory::{robot_tcp_at, RobotTrajectory, Waypoint};
pub use trial::{
    below_had_mean, matched_pair, run_trial, Condition, DistanceTrace, TraceSample, World, DEFAULT_DURATION_S, TICK_MS,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid robot trajectory: {0}")]
    InvalidTrajectory(&'static str),
    #[error("invalid human model: {0}")]
    InvalidHuman(&'static str),
    #[error("invalid simulation parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("trial duration must be positive, got {0} s")]
    InvalidDuration(f64),
    #[error("unknown condition {0:?}; expected V or VA")]
    UnknownCondition(String),
    #[error("trace never entered the activation distance")]
    NoExposure,
    #[error("calibration failed: worst residual {residual:.4} m after {evaluations} evaluations")]
    CalibrationFailed { residual: f64, evaluations: usize },
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Airflow(#[from] AirflowError),
}

impl From<GeometryError> for SimError {
    fn from(e: GeometryError) -> Self {
        SimError::Pipeline(e.into())
    }
}

impl From<SafetyError> for SimError {
    fn from(e: SafetyError) -> Self {
        SimError::Pipeline(e.into())
    }
}
