//! Scenario simulation: ground truth, rendered sensor data and evaluation.

pub mod eval;
pub mod render;
pub mod spec;

pub use eval::{EvalReport, Evaluator};
pub use render::{imu_sample, render_dogma_frame, render_track_frame, truth_at, RenderInfo, TrackRenderInfo, TruthState};
pub use spec::{canned, ScenarioSpec, CANNED};

use crate::dogma::DogmaError;
use crate::ego::EgoError;
use crate::map::MapError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("cannot parse {path}: {message}")]
    Parse { path: String, message: String },
    #[error("timeline mismatch: {0}")]
    Timeline(String),
    #[error("time {0} lies outside the scenario")]
    TimeOutOfRange(f64),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Dogma(#[from] DogmaError),
    #[error(transparent)]
    Ego(#[from] EgoError),
}
