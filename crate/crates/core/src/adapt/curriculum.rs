//! Three-stage adaptation curriculum over a live deployment: collect a
//! noisy map corpus and train the style networks, then adapt the mapping
//! model with the visual losses, then the localization model with the
//! dynamics losses. Exploration drives movement throughout; ground truth is
//! never read (audited via the deployment counter).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::adapt::losses::{loss_dynamics, loss_visual, AdaptConfig};
use crate::autodiff::{Adam, Graph, Tensor};
use crate::error::{Error, Result};
use crate::geometry::GridGeometry;
use crate::maptrans::{
    channel_slice, resize_bilinear, train_style, CycleTrainConfig, MapDataset, MapRole, MapScope,
    Provenance, TranslationNet, GLOBAL_SIZE,
};
use crate::nav::frontier_explore_step;
use crate::perception::{
    pose_node_to_cells, pose_to_cells, write_global, write_global_tensor, FuseMode, Pretrained,
};
use crate::world::{random_navigable_pose, Deployment};

#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurriculumSchedule {
    /// End of the collection stage (environment steps).
    pub t_c: usize,
    /// End of the visual adaptation stage.
    pub t_v: usize,
    /// End of the dynamics adaptation stage.
    pub t_d: usize,
}

impl Default for CurriculumSchedule {
    fn default() -> Self {
        CurriculumSchedule {
            t_c: 10_000,
            t_v: 20_000,
            t_d: 30_000,
        }
    }
}

impl CurriculumSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(0 < self.t_c && self.t_c < self.t_v && self.t_v < self.t_d) {
            return Err(Error::ConfigInvalid(format!("{self:?}")));
        }
        Ok(())
    }
}

/// Episode shape and style-training budget for the curriculum.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurriculumOptions {
    pub episode_len: usize,
    /// Ego corpus sampling stride during stage 1.
    pub ego_stride: usize,
    pub style: CycleTrainConfig,
}

impl Default for CurriculumOptions {
    fn default() -> Self {
        CurriculumOptions {
            episode_len: 250,
            ego_stride: 10,
            style: CycleTrainConfig::default(),
        }
    }
}

/// One scalar loss observation.
#[derive(Debug, Clone)]
pub struct LossRecord {
    pub step: usize,
    pub stage: u8,
    pub name: &'static str,
    pub value: f64,
}

/// Evidence that the stages touched exactly what they may touch.
#[derive(Debug, Clone)]
pub struct StageAudit {
    /// f_L parameter hash before/after stage 2 (must be equal).
    pub loc_hash_stage2: (u64, u64),
    /// f_M parameter hash before/after stage 3 (must be equal).
    pub map_hash_stage3: (u64, u64),
    /// Ground-truth read counter before/after the whole curriculum
    /// (must be equal).
    pub gt_reads: (usize, usize),
}

impl StageAudit {
    pub fn holds(&self) -> bool {
        self.loc_hash_stage2.0 == self.loc_hash_stage2.1
            && self.map_hash_stage3.0 == self.map_hash_stage3.1
            && self.gt_reads.0 == self.gt_reads.1
    }
}

pub struct CurriculumRun {
    pub s_ego: TranslationNet,
    pub s_global: TranslationNet,
    pub records: Vec<LossRecord>,
    pub audit: StageAudit,
}

/// Live agent state threaded through every curriculum step.
struct Rollout {
    geom: GridGeometry<f32>,
    pose_est: crate::geometry::Pose2<f64>,
    global: Tensor,
    m_prev: Tensor,
    step_in_episode: usize,
}

impl Rollout {
    fn new_episode(
        agent: &Pretrained,
        env: &mut Deployment,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let start = random_navigable_pose(&env.plan, rng);
        env.reset_to(start);
        let geom = env.map_geometry();
        let global = Tensor::zeros([1, 2, geom.height, geom.width]);
        let m_prev = agent
            .map
            .predict_tensor(&env.observe(rng)?.to_tensor())?;
        Ok(Rollout {
            geom,
            pose_est: start,
            global,
            m_prev,
            step_in_episode: 0,
        })
    }

    fn in_bounds(&self, cells: [f32; 3]) -> bool {
        cells[0] >= 0.0
            && cells[1] >= 0.0
            && cells[0] <= (self.geom.height - 1) as f32
            && cells[1] <= (self.geom.width - 1) as f32
    }
}

/// Data produced by one environment step of the shared rollout plumbing.
struct StepData {
    o_t: Tensor,
    m_prev: Tensor,
    m_t: Tensor,
    s_t: [f64; 3],
}

fn rollout_step(
    agent: &Pretrained,
    env: &mut Deployment,
    ro: &mut Rollout,
    rng: &mut ChaCha8Rng,
) -> Result<StepData> {
    let action = frontier_explore_step(&ro.global, &ro.pose_est, &ro.geom);
    let s_t = env.step(action, rng);
    let o_t = env.observe(rng)?.to_tensor();
    let m_t = agent.map.predict_tensor(&o_t)?;
    let m_prev = ro.m_prev.clone();
    ro.pose_est = agent.loc.localize(&ro.pose_est, s_t, &m_prev, &m_t)?;
    let cells = pose_to_cells(&ro.pose_est, &ro.geom);
    if ro.in_bounds(cells) {
        ro.global = write_global_tensor(&ro.global, &m_t, &ro.pose_est, &ro.geom)?;
    }
    ro.m_prev = m_t.clone();
    ro.step_in_episode += 1;
    Ok(StepData {
        o_t,
        m_prev,
        m_t,
        s_t,
    })
}

#[allow(clippy::too_many_arguments)]
pub fn run_curriculum(
    agent: &mut Pretrained,
    env: &mut Deployment,
    schedule: &CurriculumSchedule,
    cfg: &AdaptConfig,
    opts: &CurriculumOptions,
    clean_ego: &MapDataset,
    clean_global: &MapDataset,
    seed: u64,
) -> Result<CurriculumRun> {
    schedule.validate()?;
    cfg.validate()?;
    let gt_reads_start = env.gt_read_count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::new();
    let mut step = 0usize;
    let mut ro = Rollout::new_episode(agent, env, &mut rng)?;

    // ---- stage 1: collect D_noisy with the un-adapted agent ----
    let mut noisy_ego = MapDataset::new(MapRole::Noisy, MapScope::Ego);
    let mut noisy_global = MapDataset::new(MapRole::Noisy, MapScope::Global);
    let mut episode = 0usize;
    while step < schedule.t_c {
        if ro.step_in_episode >= opts.episode_len {
            push_global_item(&mut noisy_global, &ro, episode, ro.step_in_episode)?;
            episode += 1;
            ro = Rollout::new_episode(agent, env, &mut rng)?;
        }
        let data = rollout_step(agent, env, &mut ro, &mut rng)?;
        step += 1;
        if ro.step_in_episode % opts.ego_stride == 0 {
            noisy_ego.push(
                channel_slice(&data.m_t, 1),
                Provenance {
                    episode,
                    step: ro.step_in_episode,
                },
            )?;
        }
    }
    push_global_item(&mut noisy_global, &ro, episode, ro.step_in_episode)?;
    let (s_ego, ego_stats) = train_style(clean_ego, &noisy_ego, &opts.style, seed ^ 0xE60)?;
    let (s_global, global_stats) =
        train_style(clean_global, &noisy_global, &opts.style, seed ^ 0x610B41)?;
    if let Some(s) = ego_stats.last() {
        records.push(LossRecord {
            step,
            stage: 1,
            name: "style_ego_g",
            value: s.loss_g,
        });
    }
    if let Some(s) = global_stats.last() {
        records.push(LossRecord {
            step,
            stage: 1,
            name: "style_global_g",
            value: s.loss_g,
        });
    }

    // ---- stage 2: visual adaptation of f_M ----
    let loc_hash_before = agent.loc.params.content_hash();
    let mut opt = Adam::with_lr(cfg.lr);
    let mut last_good = agent.map.params.clone();
    while step < schedule.t_v {
        if ro.step_in_episode >= opts.episode_len {
            ro = Rollout::new_episode(agent, env, &mut rng)?;
        }
        let data = rollout_step(agent, env, &mut ro, &mut rng)?;
        step += 1;
        if step % cfg.update_period != 0 {
            continue;
        }
        let mut g = Graph::new();
        let (total, ego_v, fc_v) = loss_visual(&mut g, cfg, &agent.map, &data.o_t, &s_ego)?;
        if !g.value_f64(total).is_finite() {
            agent.map.params = last_good;
            return Err(Error::StageDiverged(format!("visual stage at step {step}")));
        }
        let grads = g.backward(total)?;
        opt.step(&mut agent.map.params, &grads.param_grads())?;
        last_good = agent.map.params.clone();
        records.push(LossRecord {
            step,
            stage: 2,
            name: "ego_st",
            value: ego_v,
        });
        records.push(LossRecord {
            step,
            stage: 2,
            name: "fc",
            value: fc_v,
        });
    }
    let loc_hash_after = agent.loc.params.content_hash();

    // ---- stage 3: dynamics adaptation of f_L ----
    let map_hash_before = agent.map.params.content_hash();
    let mut opt = Adam::with_lr(cfg.lr);
    let mut last_good = agent.loc.params.clone();
    // soft-fused map maintained at update granularity, detached in between
    let mut soft_prev = ro.global.clone();
    let mut window: Vec<StepData> = Vec::new();
    let mut window_pose = ro.pose_est;
    while step < schedule.t_d {
        if ro.step_in_episode >= opts.episode_len {
            ro = Rollout::new_episode(agent, env, &mut rng)?;
            soft_prev = ro.global.clone();
            window.clear();
            window_pose = ro.pose_est;
        }
        let data = rollout_step(agent, env, &mut ro, &mut rng)?;
        step += 1;
        window.push(data);
        if step % cfg.update_period != 0 || window.is_empty() {
            continue;
        }
        let mut g = Graph::new();
        let mut pose = g.leaf(Tensor::vector(&[
            window_pose.x as f32,
            window_pose.y as f32,
            window_pose.phi as f32,
        ]));
        let mut map_node = g.leaf(soft_prev.clone());
        for d in &window {
            let s = g.leaf(Tensor::vector(&[
                d.s_t[0] as f32,
                d.s_t[1] as f32,
                d.s_t[2] as f32,
            ]));
            let mp = g.leaf(d.m_prev.clone());
            let mt = g.leaf(d.m_t.clone());
            pose = agent.loc.localize_node(&mut g, pose, s, mp, mt)?;
            let cells = pose_node_to_cells(&mut g, pose, &ro.geom)?;
            let cv = g.value(cells);
            if ro.in_bounds([cv.data[0], cv.data[1], cv.data[2]]) {
                map_node = write_global(&mut g, map_node, mt, cells, FuseMode::Soft)?;
            }
        }
        let (total, st_v, tc_v) = loss_dynamics(&mut g, cfg, map_node, &soft_prev, &s_global)?;
        if !g.value_f64(total).is_finite() {
            agent.loc.params = last_good;
            return Err(Error::StageDiverged(format!(
                "dynamics stage at step {step}"
            )));
        }
        let grads = g.backward(total)?;
        opt.step(&mut agent.loc.params, &grads.param_grads())?;
        last_good = agent.loc.params.clone();
        soft_prev = g.value(map_node).clone();
        {
            let pv = g.value(pose);
            window_pose =
                crate::geometry::Pose2::new(pv.data[0] as f64, pv.data[1] as f64, pv.data[2] as f64);
        }
        window.clear();
        records.push(LossRecord {
            step,
            stage: 3,
            name: "global_st",
            value: st_v,
        });
        records.push(LossRecord {
            step,
            stage: 3,
            name: "tc",
            value: tc_v,
        });
    }
    let map_hash_after = agent.map.params.content_hash();

    Ok(CurriculumRun {
        s_ego,
        s_global,
        records,
        audit: StageAudit {
            loc_hash_stage2: (loc_hash_before, loc_hash_after),
            map_hash_stage3: (map_hash_before, map_hash_after),
            gt_reads: (gt_reads_start, env.gt_read_count()),
        },
    })
}

fn push_global_item(
    ds: &mut MapDataset,
    ro: &Rollout,
    episode: usize,
    step: usize,
) -> Result<()> {
    let obstacle = channel_slice(&ro.global, 0);
    ds.push(
        resize_bilinear(&obstacle, GLOBAL_SIZE, GLOBAL_SIZE),
        Provenance { episode, step },
    )
}

/// Write the loss stream as CSV (step, stage, loss_name, value).
pub fn write_loss_csv(records: &[LossRecord], path: &std::path::Path) -> Result<()> {
    use std::io::Write;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "step,stage,loss_name,value")?;
    for r in records {
        writeln!(f, "{},{},{},{:.6}", r.step, r.stage, r.name, r.value)?;
    }
    Ok(())
}
