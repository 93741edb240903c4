//! Replay evaluation: feed logged observations and odometry through a
//! model pair and score pose and map quality against the logged truth.
//! Actions come from the log, so every method sees identical trajectories.

use rayon::prelude::*;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::geometry::{median, pose_error, PoseError};
use crate::harness::trajlog::{observe_logged, plan_geometry, TrajectoryLog};
use crate::perception::{pose_to_cells, write_global_tensor, Pretrained};
use crate::world::render_ego_gt;

/// Aggregated replay metrics over a log set.
#[derive(Debug, Clone)]
pub struct ReplayOutcome {
    pub pose: PoseError,
    /// Mean per-step MSE of the predicted ego obstacle channel.
    pub ego_mse: f64,
    /// Mean final-map MSE of the believed global obstacle channel against
    /// the ground-truth global map built at true poses.
    pub global_mse: f64,
    pub explored_area_m2: f64,
    pub explored_ratio: f64,
    pub collision_ratio: f64,
    pub episodes: usize,
}

struct EpisodeEval {
    trans: Vec<f64>,
    rot: Vec<f64>,
    ego_mse_sum: f64,
    ego_mse_n: usize,
    global_mse: f64,
    explored_area: f64,
    explored_ratio: f64,
    collisions: usize,
    steps: usize,
    believed: Tensor,
    gt_global: Tensor,
}

/// MSE between channel `ch` of two [1,2,h,w] tensors, accumulated in f64.
fn channel_mse(a: &Tensor, b: &Tensor, ch: usize) -> Result<f64> {
    if a.shape != b.shape {
        return Err(Error::ShapeMismatch(format!(
            "channel_mse {:?} vs {:?}",
            a.shape, b.shape
        )));
    }
    let [_, _, h, w] = a.shape;
    let off = ch * h * w;
    let sum: f64 = a.data[off..off + h * w]
        .iter()
        .zip(&b.data[off..off + h * w])
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    Ok(sum / (h * w) as f64)
}

fn eval_episode(agent: &Pretrained, log: &TrajectoryLog) -> Result<EpisodeEval> {
    let plan = log.plan()?;
    let geom = plan_geometry(&plan);
    let (h, w) = (geom.height, geom.width);
    let res2 = (geom.resolution as f64) * (geom.resolution as f64);
    let in_bounds = |cells: [f32; 3]| {
        cells[0] >= 0.0
            && cells[1] >= 0.0
            && cells[0] <= (h - 1) as f32
            && cells[1] <= (w - 1) as f32
    };

    let start = log.start_pose();
    let mut pose_est = start;
    let mut believed = Tensor::zeros([1, 2, h, w]);
    let mut gt_global = Tensor::zeros([1, 2, h, w]);
    let mut m_prev = agent
        .map
        .predict_tensor(&observe_logged(&plan, &start, &log.corruption, log.start_pan_seed)?)?;

    let mut ev = EpisodeEval {
        trans: Vec::with_capacity(log.steps.len()),
        rot: Vec::with_capacity(log.steps.len()),
        ego_mse_sum: 0.0,
        ego_mse_n: 0,
        global_mse: 0.0,
        explored_area: 0.0,
        explored_ratio: 0.0,
        collisions: 0,
        steps: log.steps.len(),
        believed: Tensor::zeros([1, 2, h, w]),
        gt_global: Tensor::zeros([1, 2, h, w]),
    };

    for rec in &log.steps {
        let true_pose = crate::geometry::Pose2::new(
            rec.true_pose[0],
            rec.true_pose[1],
            rec.true_pose[2],
        );
        let o_t = observe_logged(&plan, &true_pose, &log.corruption, rec.pan_seed)?;
        let m_t = agent.map.predict_tensor(&o_t)?;
        pose_est = agent.loc.localize(&pose_est, rec.odometry, &m_prev, &m_t)?;

        ev.trans.push(pose_est.translation_distance(&true_pose));
        ev.rot
            .push(pose_est.rotation_distance(&true_pose).to_degrees());
        if rec.collided {
            ev.collisions += 1;
        }

        let gt_ego = render_ego_gt(&plan, &true_pose)?.grid.to_tensor();
        ev.ego_mse_sum += channel_mse(&m_t, &gt_ego, 0)?;
        ev.ego_mse_n += 1;

        if in_bounds(pose_to_cells(&pose_est, &geom)) {
            believed = write_global_tensor(&believed, &m_t, &pose_est, &geom)?;
        }
        if in_bounds(pose_to_cells(&true_pose, &geom)) {
            gt_global = write_global_tensor(&gt_global, &gt_ego, &true_pose, &geom)?;
        }
        m_prev = m_t;
    }

    ev.global_mse = channel_mse(&believed, &gt_global, 0)?;
    let explored_cells = believed.data[h * w..2 * h * w]
        .iter()
        .filter(|&&v| v > 0.5)
        .count();
    ev.explored_area = explored_cells as f64 * res2;
    ev.explored_ratio = (ev.explored_area / plan.navigable_area_m2).clamp(0.0, 1.0);
    ev.believed = believed;
    ev.gt_global = gt_global;
    Ok(ev)
}

/// Final believed and ground-truth global maps a model produces on one
/// log (for figure dumps).
pub fn replay_maps(agent: &Pretrained, log: &TrajectoryLog) -> Result<(Tensor, Tensor)> {
    let ev = eval_episode(agent, log)?;
    Ok((ev.believed, ev.gt_global))
}

/// Evaluate one model pair over a log set. Episodes run in parallel and
/// merge in input order, so the result bytes never depend on scheduling.
pub fn replay_evaluate(agent: &Pretrained, logs: &[TrajectoryLog]) -> Result<ReplayOutcome> {
    if logs.is_empty() {
        return Err(Error::EmptyCorpus("no trajectory logs".into()));
    }
    let evals: Vec<EpisodeEval> = logs
        .par_iter()
        .map(|log| eval_episode(agent, log))
        .collect::<Result<_>>()?;

    let mut trans = Vec::new();
    let mut rot = Vec::new();
    let (mut ego_sum, mut ego_n) = (0.0f64, 0usize);
    let mut global_sum = 0.0f64;
    let (mut area_sum, mut ratio_sum) = (0.0f64, 0.0f64);
    let (mut coll, mut steps) = (0usize, 0usize);
    for ev in &evals {
        trans.extend_from_slice(&ev.trans);
        rot.extend_from_slice(&ev.rot);
        ego_sum += ev.ego_mse_sum;
        ego_n += ev.ego_mse_n;
        global_sum += ev.global_mse;
        area_sum += ev.explored_area;
        ratio_sum += ev.explored_ratio;
        coll += ev.collisions;
        steps += ev.steps;
    }
    if steps == 0 {
        return Err(Error::ZeroSteps);
    }
    let n = evals.len() as f64;
    Ok(ReplayOutcome {
        pose: PoseError {
            translation: median(&mut trans),
            rotation: median(&mut rot),
        },
        ego_mse: ego_sum / ego_n as f64,
        global_mse: global_sum / n,
        explored_area_m2: area_sum / n,
        explored_ratio: ratio_sum / n,
        collision_ratio: coll as f64 / steps as f64,
        episodes: evals.len(),
    })
}

/// The believed pose track a model produces on one log; used by tests to
/// confirm replay reproduces the online estimates bit-exactly.
pub fn replay_pose_track(
    agent: &Pretrained,
    log: &TrajectoryLog,
) -> Result<Vec<crate::geometry::Pose2<f64>>> {
    let plan = log.plan()?;
    let start = log.start_pose();
    let mut pose_est = start;
    let mut track = vec![pose_est];
    let mut m_prev = agent
        .map
        .predict_tensor(&observe_logged(&plan, &start, &log.corruption, log.start_pan_seed)?)?;
    for rec in &log.steps {
        let true_pose = crate::geometry::Pose2::new(
            rec.true_pose[0],
            rec.true_pose[1],
            rec.true_pose[2],
        );
        let m_t = agent
            .map
            .predict_tensor(&observe_logged(&plan, &true_pose, &log.corruption, rec.pan_seed)?)?;
        pose_est = agent.loc.localize(&pose_est, rec.odometry, &m_prev, &m_t)?;
        track.push(pose_est);
        m_prev = m_t;
    }
    Ok(track)
}

/// Pooled pose error of a model over a log set (pose metrics only).
pub fn replay_pose_error(agent: &Pretrained, logs: &[TrajectoryLog]) -> Result<PoseError> {
    let mut pred = Vec::new();
    let mut truth = Vec::new();
    for log in logs {
        let track = replay_pose_track(agent, log)?;
        pred.extend_from_slice(&track[1..]);
        truth.extend(log.true_poses()[1..].iter().copied());
    }
    pose_error(&pred, &truth)
}
