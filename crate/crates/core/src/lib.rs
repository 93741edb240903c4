//! 2D embodied-navigation simulator and self-supervised adaptation toolkit.
//!
//! A pretrained map-based agent (panorama -> egocentric occupancy map ->
//! pose-fused global map) is deployed into environments with visual and
//! dynamics corruptions and adapts itself without ground truth, via unpaired
//! map style transfer plus flip/temporal consistency, in a three-stage
//! curriculum. A harness reproduces the evaluation protocol at desk scale.

pub mod adapt;
pub mod autodiff;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod maptrans;
pub mod nav;
pub mod perception;
pub mod scalar;
pub mod world;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Pose scalar used by the simulator (f64: pose algebra is checked to 1e-9).
pub type Pose2d = geometry::Pose2<f64>;
/// Grid cell scalar used by maps fed into the learning stack.
pub type Grid32 = geometry::OccupancyGrid<f32>;
/// Double-precision grid, used where oracle comparisons want f64.
pub type Grid64 = geometry::OccupancyGrid<f64>;
