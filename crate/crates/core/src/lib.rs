//! Safety-aware scoring of recorded robot manipulation rollouts.
//!
//! A [`TaskSpec`] declares the objects in scope and the goal predicates; a
//! [`Trajectory`] records one trial. [`score_trial`] evaluates the goals on
//! the final frame, scans the whole trajectory for safety violations and
//! reports Q, sQ, seQ and seQ-Oracle with target and non-target violation
//! counts. [`analysis`] aggregates score cards across trials and runs, and
//! [`synthgen`] produces trajectories with known ground truth.
//!
//! The numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix it to `f64`.

pub mod analysis;
pub mod geometry;
pub mod metrics;
pub mod predicates;
pub mod report;
pub mod scalar;
pub mod synthgen;
pub mod taskspec;
pub mod thresholds;
pub mod trajlog;
pub mod violations;

pub use metrics::{score_trial, ScoreError};
pub use predicates::GoalVector;
pub use scalar::Scalar;
pub use taskspec::{parse_task_spec, validate_task_spec, Role, SpecError};
pub use trajlog::{read_trajectory, TrajError};
pub use violations::{IndicatorVectors, ViolationCounts, ViolationKind};

pub type TaskSpec = taskspec::TaskSpec<f64>;
pub type ObjectSpec = taskspec::ObjectSpec<f64>;
pub type Trajectory = trajlog::Trajectory<f64>;
pub type Frame = trajlog::Frame<f64>;
pub type ScoreCard = metrics::ScoreCard<f64>;
pub type ViolationEvent = violations::ViolationEvent<f64>;
pub type Thresholds = thresholds::Thresholds<f64>;
pub type TaskSummary = analysis::TaskSummary<f64>;
pub type ConsistencyStats = analysis::ConsistencyStats<f64>;

pub type TaskSpec32 = taskspec::TaskSpec<f32>;
pub type Trajectory32 = trajlog::Trajectory<f32>;
pub type ScoreCard32 = metrics::ScoreCard<f32>;
pub type Thresholds32 = thresholds::Thresholds<f32>;
