//! SE(2) pose algebra, occupancy grids, ego->global transform, map fusion,
//! and map/pose metrics.

mod grid;
mod io;
mod metrics;
mod pose;

pub use grid::{Channel, EgoMap, GridGeometry, OccupancyGrid};
pub use io::{read_grid_raw, write_grid_pgm, write_grid_png, write_grid_raw};
pub use metrics::{explored_stats, map_mse, median, pose_error, PoseError};
pub use pose::{wrap_angle, Pose2};
