//! Trajectory logging and bit-exact replay. Every adaptation method is
//! scored on the same logged trajectories: the log stores the realized
//! motion and a per-step observation seed, so replaying reproduces the
//! exact panoramas and true poses the un-adapted agent saw.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::geometry::{GridGeometry, Pose2};
use crate::harness::config::ExperimentConfig;
use crate::nav::frontier_explore_step;
use crate::perception::{pose_to_cells, write_global_tensor, Pretrained};
use crate::world::{
    corrupt, generate_floorplan, random_navigable_pose, read_odometry, render_panorama,
    step_dynamics, Action, CorruptionSpec, FloorPlan,
};

pub const LOG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepRecord {
    pub action: Action,
    /// Realized body-frame motion (post collision truncation).
    pub delta_true: [f64; 3],
    /// True pose after the step.
    pub true_pose: [f64; 3],
    /// Noisy odometry the agent received.
    pub odometry: [f64; 3],
    pub collided: bool,
    /// Seed of the corruption rng for the post-step observation.
    pub pan_seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryLog {
    pub schema_version: u32,
    pub floorplan_seed: u64,
    pub scale_factor: f64,
    pub corruption: CorruptionSpec,
    pub start: [f64; 3],
    /// Seed of the corruption rng for the observation at the start pose.
    pub start_pan_seed: u64,
    pub steps: Vec<StepRecord>,
}

impl TrajectoryLog {
    pub fn plan(&self) -> Result<FloorPlan> {
        generate_floorplan(self.floorplan_seed, self.scale_factor)
    }

    pub fn start_pose(&self) -> Pose2<f64> {
        Pose2::new(self.start[0], self.start[1], self.start[2])
    }

    /// True-pose track (start followed by one pose per step).
    pub fn true_poses(&self) -> Vec<Pose2<f64>> {
        let mut out = Vec::with_capacity(self.steps.len() + 1);
        out.push(self.start_pose());
        for s in &self.steps {
            out.push(Pose2::new(s.true_pose[0], s.true_pose[1], s.true_pose[2]));
        }
        out
    }

    /// Re-simulate the pose chain from the logged realized motions; bit
    /// equality with `true_poses` is the replayability invariant.
    pub fn resimulated_poses(&self) -> Vec<Pose2<f64>> {
        let mut out = Vec::with_capacity(self.steps.len() + 1);
        let mut pose = self.start_pose();
        out.push(pose);
        for s in &self.steps {
            pose = pose.compose(&Pose2::new(
                s.delta_true[0],
                s.delta_true[1],
                s.delta_true[2],
            ));
            out.push(pose);
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = serde_json::to_vec_pretty(self)?;
        std::fs::write(path, bytes)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read(path)?;
        let log: TrajectoryLog = serde_json::from_slice(&text)?;
        if log.schema_version != LOG_SCHEMA_VERSION {
            return Err(Error::SchemaMismatch(format!(
                "log schema {} (expected {LOG_SCHEMA_VERSION})",
                log.schema_version
            )));
        }
        Ok(log)
    }
}

/// FNV-1a over the serialized log set; recorded in reports so every row of
/// a replay table provably used the same log bytes.
pub fn logs_hash(logs: &[TrajectoryLog]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for log in logs {
        for b in serde_json::to_vec(log).expect("log serializes") {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    }
    h
}

/// The corrupted panorama at `pose`, regenerated from its logged seed.
pub fn observe_logged(
    plan: &FloorPlan,
    pose: &Pose2<f64>,
    spec: &CorruptionSpec,
    pan_seed: u64,
) -> Result<Tensor> {
    let pan = render_panorama(plan, pose)?;
    let mut rng = ChaCha8Rng::seed_from_u64(pan_seed);
    Ok(corrupt(&pan, spec, &mut rng).to_tensor())
}

/// Map geometry of a plan at single precision (the frame believed maps and
/// ground-truth maps share during evaluation).
pub fn plan_geometry(plan: &FloorPlan) -> GridGeometry<f32> {
    GridGeometry::new(
        plan.geometry.height,
        plan.geometry.width,
        plan.geometry.resolution as f32,
        Pose2::new(
            plan.geometry.origin.x as f32,
            plan.geometry.origin.y as f32,
            0.0,
        ),
    )
}

/// Log one exploration episode driven by the agent's own perception.
/// Returns the log and the agent's believed pose track (the online
/// estimates, used to cross-check replay consistency).
pub fn log_episode(
    agent: &Pretrained,
    plan: &FloorPlan,
    cfg: &ExperimentConfig,
    start: Pose2<f64>,
    rng: &mut ChaCha8Rng,
) -> Result<(TrajectoryLog, Vec<Pose2<f64>>)> {
    let spec = cfg.corruption();
    let geom = plan_geometry(plan);
    let (h, w) = (geom.height, geom.width);

    let start_pan_seed: u64 = rng.gen();
    let mut pose = start;
    let mut pose_est = start;
    let mut believed = vec![pose_est];
    let mut global = Tensor::zeros([1, 2, h, w]);
    let mut m_prev = agent
        .map
        .predict_tensor(&observe_logged(plan, &pose, &spec, start_pan_seed)?)?;
    let mut steps = Vec::with_capacity(cfg.episode_steps);

    for _ in 0..cfg.episode_steps {
        let action = frontier_explore_step(&global, &pose_est, &geom);
        let out = step_dynamics(plan, &pose, action, &cfg.act_noise, rng);
        pose = out.pose;
        let s_t = read_odometry(&out.delta_true, &cfg.sen_noise, rng);
        let pan_seed: u64 = rng.gen();
        let m_t = agent
            .map
            .predict_tensor(&observe_logged(plan, &pose, &spec, pan_seed)?)?;
        pose_est = agent.loc.localize(&pose_est, s_t, &m_prev, &m_t)?;
        believed.push(pose_est);
        let cells = pose_to_cells(&pose_est, &geom);
        if cells[0] >= 0.0
            && cells[1] >= 0.0
            && cells[0] <= (h - 1) as f32
            && cells[1] <= (w - 1) as f32
        {
            global = write_global_tensor(&global, &m_t, &pose_est, &geom)?;
        }
        m_prev = m_t;
        steps.push(StepRecord {
            action,
            delta_true: [out.delta_true.x, out.delta_true.y, out.delta_true.phi],
            true_pose: [pose.x, pose.y, pose.phi],
            odometry: s_t,
            collided: out.collided,
            pan_seed,
        });
    }

    Ok((
        TrajectoryLog {
            schema_version: LOG_SCHEMA_VERSION,
            floorplan_seed: plan.seed,
            scale_factor: plan.scale_factor,
            corruption: spec,
            start: [start.x, start.y, start.phi],
            start_pan_seed,
            steps,
        },
        believed,
    ))
}

/// Episode rng, derived so each (scene, episode) pair is independent of
/// list order and worker scheduling.
pub fn episode_rng(master_seed: u64, scene: u64, episode: usize) -> ChaCha8Rng {
    let mix = master_seed
        .wrapping_mul(0x9e3779b97f4a7c15)
        .wrapping_add(scene.wrapping_mul(0x100000001b3))
        .wrapping_add(episode as u64);
    ChaCha8Rng::seed_from_u64(mix)
}

/// Log `episodes_per_scene` un-adapted-agent episodes on every eval scene.
pub fn log_trajectories(agent: &Pretrained, cfg: &ExperimentConfig) -> Result<Vec<TrajectoryLog>> {
    cfg.validate()?;
    let mut logs = Vec::new();
    for &scene in &cfg.eval_seeds {
        let plan = generate_floorplan(scene, cfg.scale_factor())?;
        for ep in 0..cfg.episodes_per_scene {
            let mut rng = episode_rng(cfg.master_seed, scene, ep);
            let start = random_navigable_pose(&plan, &mut rng);
            let (log, _) = log_episode(agent, &plan, cfg, start, &mut rng)?;
            logs.push(log);
        }
    }
    Ok(logs)
}

/// Write one file per episode plus a manifest listing them in order.
pub fn save_logs(logs: &[TrajectoryLog], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut names = Vec::new();
    for (i, log) in logs.iter().enumerate() {
        let name = format!("ep_{:04}_scene_{}.json", i, log.floorplan_seed);
        log.save(&dir.join(&name))?;
        names.push(name);
    }
    std::fs::write(
        dir.join("manifest.json"),
        serde_json::to_vec_pretty(&names)?,
    )?;
    Ok(())
}

pub fn load_logs(dir: &Path) -> Result<Vec<TrajectoryLog>> {
    let text = std::fs::read(dir.join("manifest.json"))?;
    let names: Vec<String> = serde_json::from_slice(&text)?;
    names.iter().map(|n| TrajectoryLog::load(&dir.join(n))).collect()
}
