//! Multi-person 3D skeleton filtering.
//!
//! Noisy pose-estimation frames pass through three stages: a spatial check
//! that rejects implausible skeletons and rescales keypoint confidences from
//! bone-length proportions, a tracker that keeps identities stable with a
//! Hungarian assignment, and a per-keypoint particle filter that keeps
//! predicting through total occlusion. Kalman baselines, a synthetic scenario
//! generator, trajectory metrics and JSONL stream I/O complete the harness.

// `!(x > y)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assignment;
pub mod config;
pub mod io;
pub mod kabsch;
pub mod kalman;
pub mod metrics;
pub mod permanence;
pub mod pipeline;
pub mod sim;
pub mod skeleton;
pub mod spatial;
pub mod tracker;

use thiserror::Error;

pub use assignment::{assignment_cost, solve_assignment, CostMatrix, MatrixError};
pub use config::Config;
pub use kabsch::{kabsch_align, KabschError, RigidTransform};
pub use kalman::{KalmanBank, KalmanConfig, KalmanState};
pub use metrics::{MetricError, MetricReport, Trajectory};
pub use permanence::{PermanenceBank, PermanenceConfig, PermanenceModel};
pub use pipeline::{FilterKind, FollowerState, Pipeline, PipelineConfig, PipelineError, PipelineOutput};
pub use sim::{NoiseSpec, ScenarioSpec, SimOutput, Task};
pub use skeleton::{default_graph, Edge, Frame, Joint, Keypoint, Point3, Skeleton, SkeletonGraph};
pub use spatial::{SpatialConfig, SpatialReject};
pub use tracker::{TrackRegistry, TrackerConfig};

/// Rejected configuration value or unreadable configuration source.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid `{field}`: {message}")]
    Invalid { field: String, message: String },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("config io error: {0}")]
    Io(#[from] std::io::Error),
}

impl ConfigError {
    pub fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Invalid {
            field: field.into(),
            message: message.into(),
        }
    }
}
