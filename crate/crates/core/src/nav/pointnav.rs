//! Point-goal navigation: the agent plans to the believed goal cell on its
//! own map every step; success is judged against the true pose.

use rand::Rng;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::geometry::Pose2;
use crate::nav::astar::astar_plan;
use crate::nav::frontier::{frontier_explore_step, steer_towards};
use crate::perception::{pose_to_cells, write_global_tensor, Pretrained};
use crate::world::{shortest_path_length, Deployment};

/// True-pose success radius in meters.
pub const SUCCESS_RADIUS: f64 = 0.2;

#[derive(Debug, Clone)]
pub struct NavTask {
    /// Goal pose relative to the episode start (body frame).
    pub goal: Pose2<f64>,
    pub success_radius: f64,
    pub budget: usize,
}

impl NavTask {
    pub fn new(goal: Pose2<f64>) -> Self {
        NavTask {
            goal,
            success_radius: SUCCESS_RADIUS,
            budget: 500,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.success_radius <= 0.0 || self.budget == 0 {
            return Err(Error::ConfigInvalid(format!("{self:?}")));
        }
        Ok(())
    }
}

/// What drives the believed map and pose during an episode.
#[derive(Clone, Copy)]
pub enum Perception<'a> {
    /// The agent's own models.
    Learned(&'a Pretrained),
    /// Ground-truth ego maps and poses (diagnostic upper bound).
    Oracle,
}

#[derive(Debug, Clone)]
pub struct EpisodeResult {
    pub success: bool,
    /// True path length traveled (m).
    pub path_length: f64,
    /// Geodesic start-to-goal distance on the true map (m); infinite when
    /// the goal is unreachable.
    pub shortest_length: f64,
    pub steps: usize,
    pub collisions: usize,
    /// Explored believed area (m^2) after each step.
    pub explored_trace: Vec<f64>,
}

fn clamp_cell(cells: [f32; 3], h: usize, w: usize) -> (usize, usize) {
    (
        (cells[0].round().max(0.0) as usize).min(h - 1),
        (cells[1].round().max(0.0) as usize).min(w - 1),
    )
}

fn planar_dist(a: &Pose2<f64>, b: &Pose2<f64>) -> f64 {
    ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt()
}

/// Run one PointNav episode from the deployment's current start pose.
pub fn pointnav_episode(
    perception: Perception<'_>,
    env: &mut Deployment,
    task: &NavTask,
    rng: &mut impl Rng,
) -> Result<EpisodeResult> {
    task.validate()?;
    env.reset();
    let start = env.gt_pose();
    let goal = start.compose(&task.goal);
    let shortest = match shortest_path_length(&env.plan, &start, &goal) {
        Ok(l) => l,
        Err(Error::Unreachable) | Err(Error::OutOfBounds(_)) => f64::INFINITY,
        Err(e) => return Err(e),
    };

    let geom = env.map_geometry();
    let (h, w) = (geom.height, geom.width);
    let res2 = (geom.resolution as f64) * (geom.resolution as f64);
    let mut global = Tensor::zeros([1, 2, h, w]);
    let mut pose_est = start;
    let predict = |env: &Deployment, rng: &mut _| -> Result<Tensor> {
        match perception {
            Perception::Learned(agent) => {
                agent.map.predict_tensor(&env.observe(rng)?.to_tensor())
            }
            Perception::Oracle => Ok(env.gt_ego()?.grid.to_tensor()),
        }
    };
    let mut m_prev = predict(env, rng)?;
    let mut true_prev = start;
    let mut path_length = 0.0;
    let mut trace = Vec::new();

    for _ in 0..task.budget {
        // stop when the agent believes it has arrived
        if planar_dist(&pose_est, &goal) < task.success_radius {
            break;
        }
        let agent_cell = clamp_cell(pose_to_cells(&pose_est, &geom), h, w);
        let goal_cell = clamp_cell(pose_to_cells(&goal, &geom), h, w);
        let action = match astar_plan(&global, agent_cell, goal_cell) {
            Ok(path) if path.len() >= 2 => steer_towards(&pose_est, &geom, path[1]),
            Ok(_) => break, // same believed cell as goal
            // no believed route yet: explore to open one
            Err(Error::Unreachable) => frontier_explore_step(&global, &pose_est, &geom),
            Err(e) => return Err(e),
        };
        let s_t = env.step(action, rng);
        let m_t = predict(env, rng)?;
        pose_est = match perception {
            Perception::Learned(agent) => agent.loc.localize(&pose_est, s_t, &m_prev, &m_t)?,
            Perception::Oracle => env.gt_pose(),
        };
        m_prev = m_t.clone();
        let cells = pose_to_cells(&pose_est, &geom);
        if cells[0] >= 0.0
            && cells[1] >= 0.0
            && cells[0] <= (h - 1) as f32
            && cells[1] <= (w - 1) as f32
        {
            global = write_global_tensor(&global, &m_t, &pose_est, &geom)?;
        }
        let explored = global.data[h * w..2 * h * w]
            .iter()
            .filter(|&&v| v > 0.5)
            .count();
        trace.push(explored as f64 * res2);

        let true_now = env.gt_pose();
        path_length += planar_dist(&true_now, &true_prev);
        true_prev = true_now;
    }

    let arrived_belief = planar_dist(&pose_est, &goal) < task.success_radius;
    let success = arrived_belief && planar_dist(&env.gt_pose(), &goal) < task.success_radius;

    Ok(EpisodeResult {
        success,
        path_length,
        shortest_length: shortest,
        steps: env.steps(),
        collisions: env.collisions(),
        explored_trace: trace,
    })
}
