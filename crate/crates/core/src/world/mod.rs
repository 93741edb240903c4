//! Procedural floorplans, egocentric panorama rendering, the visual
//! corruption pipeline, and noisy agent dynamics.

mod deployment;
mod dynamics;
mod floorplan;
mod noise;
mod render;

pub use deployment::Deployment;
pub use dynamics::{read_odometry, step_dynamics, Action, OdometryReading, StepOutcome, AGENT_RADIUS};
pub use floorplan::{generate_floorplan, random_navigable_pose, shortest_path_length, FloorPlan, RESOLUTION};
pub use noise::{GmmComponent, GmmNoiseModel};
pub use render::{corrupt, render_ego_gt, render_panorama, CorruptionSpec, Panorama, EGO_SIZE, PANO_SIZE};

#[cfg(test)]
mod tests;
