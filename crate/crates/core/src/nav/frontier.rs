//! Frontier-based exploration over the believed map: head for the nearest
//! known-free cell that borders unexplored space.

use crate::autodiff::Tensor;
use crate::geometry::{wrap_angle, GridGeometry, Pose2};
use crate::nav::astar::{astar_plan, OBSTACLE_THRESHOLD};
use crate::perception::pose_to_cells;
use crate::world::Action;

/// Heading error below which the policy drives forward instead of turning.
pub const HEADING_TOLERANCE: f64 = 0.15;

fn is_frontier(map: &Tensor, r: usize, c: usize) -> bool {
    let [_, _, h, w] = map.shape;
    let free = map.at(0, 0, r, c) <= OBSTACLE_THRESHOLD && map.at(0, 1, r, c) > 0.5;
    if !free {
        return false;
    }
    let neighbors = [
        (r.wrapping_sub(1), c),
        (r + 1, c),
        (r, c.wrapping_sub(1)),
        (r, c + 1),
    ];
    neighbors
        .into_iter()
        .any(|(nr, nc)| nr < h && nc < w && map.at(0, 1, nr, nc) <= 0.5)
}

fn octile(a: (usize, usize), b: (usize, usize)) -> f64 {
    let dr = a.0.abs_diff(b.0) as f64;
    let dc = a.1.abs_diff(b.1) as f64;
    dr.max(dc) + (std::f64::consts::SQRT_2 - 1.0) * dr.min(dc)
}

/// Select the nearest frontier cell (deterministic tie-break: lowest row,
/// then lowest column), plan to it on the believed map, and return the
/// first action of the path. With no frontier or no route, rotate in place.
pub fn frontier_explore_step(
    global: &Tensor,
    pose: &Pose2<f64>,
    geom: &GridGeometry<f32>,
) -> Action {
    let [_, _, h, w] = global.shape;
    let cells = pose_to_cells(pose, geom);
    let agent = (
        (cells[0].round().max(0.0) as usize).min(h - 1),
        (cells[1].round().max(0.0) as usize).min(w - 1),
    );

    let mut best: Option<((usize, usize), f64)> = None;
    for r in 0..h {
        for c in 0..w {
            if !is_frontier(global, r, c) {
                continue;
            }
            let d = octile(agent, (r, c));
            // strict < keeps the first (lowest row, then col) on ties
            if best.map(|(_, bd)| d < bd).unwrap_or(true) {
                best = Some(((r, c), d));
            }
        }
    }
    let Some((target, _)) = best else {
        return Action::TurnLeft; // NoFrontier branch
    };
    let Ok(path) = astar_plan(global, agent, target) else {
        return Action::TurnLeft;
    };
    if path.len() < 2 {
        return Action::TurnLeft;
    }
    steer_towards(pose, geom, path[1])
}

/// Turn until the next path cell is roughly ahead, then drive.
pub(crate) fn steer_towards(
    pose: &Pose2<f64>,
    geom: &GridGeometry<f32>,
    next: (usize, usize),
) -> Action {
    let (tx, ty) = geom.cell_to_world(next.0, next.1);
    let desired = ((ty as f64 - pose.y).atan2(tx as f64 - pose.x)) as f64;
    let err = wrap_angle(desired - pose.phi);
    if err.abs() <= HEADING_TOLERANCE {
        Action::Forward
    } else if err > 0.0 {
        Action::TurnLeft
    } else {
        Action::TurnRight
    }
}
