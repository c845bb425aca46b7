//! Driving games: reference lines, two-stage trajectory trees per intention,
//! and the comfort/safety/progress/reference utility.

pub mod game;
pub mod geometry;
pub mod scenario;
pub mod trajectory;
pub mod utility;

use thiserror::Error;

pub use game::TrafficGame;
pub use geometry::{Piece, ReferenceLine};
pub use scenario::{Role, Scenario};
pub use trajectory::{
    build_trajectory_tree, build_tree_for_targets, generate_segment, ActionTarget, IntentionSpec, TrajectorySample, TrajectorySegment,
    TrajectoryTree, VehicleState,
};
pub use utility::{UtilityParams, VehicleGeometry};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrafficError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("unknown {0}")]
    UnknownScenario(String),
}
