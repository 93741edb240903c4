//! Classical navigation on the agent's own believed map: frontier-based
//! exploration, A* planning with unknown-cell penalties, point-goal episodes,
//! and the navigation metrics (SPL, collision ratio).

mod astar;
mod frontier;
mod metrics;
mod pointnav;

pub use astar::astar_plan;
pub use frontier::{frontier_explore_step, HEADING_TOLERANCE};
pub use metrics::{collision_ratio, spl};
pub use pointnav::{pointnav_episode, EpisodeResult, NavTask, Perception, SUCCESS_RADIUS};

#[cfg(test)]
mod tests;
