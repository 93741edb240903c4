//! Evaluation protocols: generalization, specialization, the cumulative
//! loss ablation, and a ground-truth-supervised ceiling. All randomness
//! derives from the config's master seed, so every protocol is replayable.

use rand::Rng;

use crate::adapt::{run_curriculum, AdaptConfig, CurriculumRun};
use crate::autodiff::{Adam, Graph, Tensor};
use crate::error::{Error, Result};
use crate::geometry::median;
use crate::harness::config::{ExperimentConfig, SplitMode};
use crate::harness::replay::{replay_evaluate, ReplayOutcome};
use crate::harness::report::{MetricsReport, MetricsRow};
use crate::harness::trajlog::{episode_rng, log_trajectories, logs_hash, TrajectoryLog};
use crate::maptrans::{collect_clean_maps, CollectConfig, MapDataset};
use crate::nav::{pointnav_episode, NavTask, Perception};
use crate::perception::Pretrained;
use crate::world::{
    generate_floorplan, random_navigable_pose, shortest_path_length, Deployment,
};

/// Cumulative loss variants in the ablation's row order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossVariant {
    /// The un-adapted agent.
    Na,
    /// Flip consistency only.
    Fc,
    /// Flip consistency + ego style transfer.
    FcEgo,
    /// Visual losses + temporal consistency.
    FcEgoTc,
    /// The full objective (adds global style transfer).
    Full,
}

impl LossVariant {
    pub const ALL: [LossVariant; 5] = [
        LossVariant::Na,
        LossVariant::Fc,
        LossVariant::FcEgo,
        LossVariant::FcEgoTc,
        LossVariant::Full,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            LossVariant::Na => "na",
            LossVariant::Fc => "na+fc",
            LossVariant::FcEgo => "na+fc+ego_st",
            LossVariant::FcEgoTc => "na+fc+ego_st+tc",
            LossVariant::Full => "moda",
        }
    }

    /// Zero out the weights this variant does not use.
    pub fn weights(&self, base: &AdaptConfig) -> AdaptConfig {
        let mut w = base.clone();
        match self {
            LossVariant::Na => {
                w.lambda_ego_st = 0.0;
                w.lambda_fc = 0.0;
                w.lambda_global_st = 0.0;
                w.lambda_tc = 0.0;
            }
            LossVariant::Fc => {
                w.lambda_ego_st = 0.0;
                w.lambda_global_st = 0.0;
                w.lambda_tc = 0.0;
            }
            LossVariant::FcEgo => {
                w.lambda_global_st = 0.0;
                w.lambda_tc = 0.0;
            }
            LossVariant::FcEgoTc => {
                w.lambda_global_st = 0.0;
            }
            LossVariant::Full => {}
        }
        w
    }
}

/// Collect the clean-domain map corpora from the config's clean scenes.
pub fn build_clean_corpora(cfg: &ExperimentConfig) -> Result<(MapDataset, MapDataset)> {
    let plans: Vec<_> = cfg
        .clean_seeds
        .iter()
        .map(|&s| generate_floorplan(s, 1.0))
        .collect::<Result<_>>()?;
    let collect = CollectConfig {
        episodes: cfg.clean_episodes_per_scene,
        steps_per_episode: cfg.episode_steps,
        ego_stride: cfg.curriculum.ego_stride,
    };
    collect_clean_maps(&plans, &collect, cfg.master_seed ^ 0xC1EA4)
}

/// Run the curriculum on every adapt scene in sequence. Returns the
/// adapted agent and the per-scene curriculum runs (audits included).
pub fn adapt_agent(
    agent: &Pretrained,
    cfg: &ExperimentConfig,
    weights: &AdaptConfig,
    clean_ego: &MapDataset,
    clean_global: &MapDataset,
    seed_salt: u64,
) -> Result<(Pretrained, Vec<CurriculumRun>)> {
    let mut adapted = agent.clone();
    let mut runs = Vec::new();
    for &scene in &cfg.adapt_seeds {
        let plan = generate_floorplan(scene, cfg.scale_factor())?;
        let mut rng = episode_rng(cfg.master_seed ^ seed_salt, scene, usize::MAX);
        let start = random_navigable_pose(&plan, &mut rng);
        let mut env = Deployment::new(
            plan,
            cfg.corruption(),
            cfg.act_noise.clone(),
            cfg.sen_noise.clone(),
            start,
        )?;
        let run = run_curriculum(
            &mut adapted,
            &mut env,
            &cfg.schedule,
            weights,
            &cfg.curriculum,
            clean_ego,
            clean_global,
            cfg.master_seed ^ seed_salt ^ scene,
        )?;
        if !run.audit.holds() {
            return Err(Error::SchemaMismatch(format!(
                "stage audit violated on scene {scene}: {:?}",
                run.audit
            )));
        }
        runs.push(run);
    }
    Ok((adapted, runs))
}

/// Live PointNav over the eval scenes: mean success and mean SPL.
pub fn pointnav_eval(
    agent: &Pretrained,
    cfg: &ExperimentConfig,
    seed_salt: u64,
) -> Result<(f64, f64)> {
    let mut successes = 0.0;
    let mut spl_sum = 0.0;
    let mut n = 0.0;
    for &scene in &cfg.eval_seeds {
        let plan = generate_floorplan(scene, cfg.scale_factor())?;
        for ep in 0..cfg.episodes_per_scene {
            let mut rng = episode_rng(cfg.master_seed ^ seed_salt, scene, ep);
            let start = random_navigable_pose(&plan, &mut rng);
            // a reachable goal at least 0.5 m away, body frame
            let mut goal_rel = None;
            for _ in 0..32 {
                let goal = random_navigable_pose(&plan, &mut rng);
                if start.translation_distance(&goal) < 0.5 {
                    continue;
                }
                if shortest_path_length(&plan, &start, &goal).is_ok() {
                    goal_rel = Some(start.delta_to(&goal));
                    break;
                }
            }
            let Some(goal_rel) = goal_rel else { continue };
            let mut task = NavTask::new(goal_rel);
            task.budget = cfg.episode_steps;
            let mut env = Deployment::new(
                plan.clone(),
                cfg.corruption(),
                cfg.act_noise.clone(),
                cfg.sen_noise.clone(),
                start,
            )?;
            let result =
                pointnav_episode(Perception::Learned(agent), &mut env, &task, &mut rng)?;
            successes += if result.success { 1.0 } else { 0.0 };
            spl_sum += crate::nav::spl(
                result.success,
                result.shortest_length,
                result.path_length,
            )?;
            n += 1.0;
        }
    }
    if n == 0.0 {
        return Err(Error::ZeroSteps);
    }
    Ok((successes / n, spl_sum / n))
}

fn method_row(
    method: &str,
    cfg: &ExperimentConfig,
    agent: &Pretrained,
    logs: &[TrajectoryLog],
    log_hash: u64,
    pointnav_salt: u64,
) -> Result<(MetricsRow, ReplayOutcome)> {
    let replay = replay_evaluate(agent, logs)?;
    let (success, spl) = pointnav_eval(agent, cfg, pointnav_salt)?;
    Ok((
        MetricsRow::from_replay(method, cfg.scenario.name(), &replay, success, spl, log_hash),
        replay,
    ))
}

/// Everything one scenario run produces.
pub struct ScenarioArtifacts {
    pub report: MetricsReport,
    pub logs: Vec<TrajectoryLog>,
    pub adapted: Pretrained,
    pub runs: Vec<CurriculumRun>,
}

/// Seed salt separating goal sampling from trajectory logging.
pub const POINTNAV_SALT: u64 = 0x9A7;

fn run_scenario(cfg: &ExperimentConfig, agent: &Pretrained) -> Result<ScenarioArtifacts> {
    cfg.validate()?;
    let logs = log_trajectories(agent, cfg)?;
    let hash = logs_hash(&logs);
    let (na_row, _) = method_row("na", cfg, agent, &logs, hash, POINTNAV_SALT)?;

    let (clean_ego, clean_global) = build_clean_corpora(cfg)?;
    let (adapted, runs) =
        adapt_agent(agent, cfg, &cfg.weights, &clean_ego, &clean_global, 0)?;
    let (moda_row, _) = method_row("moda", cfg, &adapted, &logs, hash, POINTNAV_SALT)?;

    Ok(ScenarioArtifacts {
        report: MetricsReport {
            rows: vec![na_row, moda_row],
        },
        logs,
        adapted,
        runs,
    })
}

/// Adapt on the adapt split, evaluate on the disjoint eval split.
pub fn run_generalization(cfg: &ExperimentConfig, agent: &Pretrained) -> Result<ScenarioArtifacts> {
    if cfg.mode != SplitMode::Generalization {
        return Err(Error::ConfigInvalid("config mode is not generalization".into()));
    }
    run_scenario(cfg, agent)
}

/// Adapt and evaluate on the same scenes with new start poses.
pub fn run_specialization(cfg: &ExperimentConfig, agent: &Pretrained) -> Result<ScenarioArtifacts> {
    if cfg.mode != SplitMode::Specialization {
        return Err(Error::ConfigInvalid("config mode is not specialization".into()));
    }
    run_scenario(cfg, agent)
}

/// Ablation results: base-seed rows in cumulative order plus per-seed
/// global-map MSE and pose medians for variance estimates.
pub struct AblationArtifacts {
    pub report: MetricsReport,
    /// `[seed][variant]` global MSE.
    pub global_mse: Vec<Vec<f64>>,
    /// `[seed][variant]` median translation error.
    pub pose_translation: Vec<Vec<f64>>,
}

impl AblationArtifacts {
    /// Pooled standard deviation of global MSE across seeds (pooled over
    /// the five variants).
    pub fn pooled_std(&self) -> f64 {
        let seeds = self.global_mse.len();
        let variants = self.global_mse[0].len();
        if seeds < 2 {
            return 0.0;
        }
        let mut acc = 0.0;
        for v in 0..variants {
            let vals: Vec<f64> = (0..seeds).map(|s| self.global_mse[s][v]).collect();
            let mean = vals.iter().sum::<f64>() / seeds as f64;
            acc += vals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (seeds - 1) as f64;
        }
        (acc / variants as f64).sqrt()
    }
}

/// Run the five cumulative loss variants; the first configured seed is the
/// config's own master seed, so the NA row matches the scenario run's.
pub fn run_ablation(cfg: &ExperimentConfig, agent: &Pretrained) -> Result<AblationArtifacts> {
    cfg.validate()?;
    let mut rows = Vec::new();
    let mut global_mse = Vec::new();
    let mut pose_translation = Vec::new();

    for k in 0..cfg.ablation_seeds {
        let mut seed_cfg = cfg.clone();
        seed_cfg.master_seed = cfg.master_seed.wrapping_add(k as u64);
        let logs = log_trajectories(agent, &seed_cfg)?;
        let hash = logs_hash(&logs);
        let (clean_ego, clean_global) = build_clean_corpora(&seed_cfg)?;

        let mut seed_mse = Vec::new();
        let mut seed_pose = Vec::new();
        for variant in LossVariant::ALL {
            let model = if variant == LossVariant::Na {
                agent.clone()
            } else {
                let weights = variant.weights(&cfg.weights);
                adapt_agent(agent, &seed_cfg, &weights, &clean_ego, &clean_global, 0)?.0
            };
            if k == 0 {
                let (row, replay) =
                    method_row(variant.name(), &seed_cfg, &model, &logs, hash, POINTNAV_SALT)?;
                seed_mse.push(replay.global_mse);
                seed_pose.push(replay.pose.translation);
                rows.push(row);
            } else {
                let replay = replay_evaluate(&model, &logs)?;
                seed_mse.push(replay.global_mse);
                seed_pose.push(replay.pose.translation);
            }
        }
        global_mse.push(seed_mse);
        pose_translation.push(seed_pose);
    }

    Ok(AblationArtifacts {
        report: MetricsReport { rows },
        global_mse,
        pose_translation,
    })
}

/// Ground-truth-supervised fine-tuning in the deployment environment: an
/// oracle ceiling row, never a contender.
pub fn baseline_gt_upper_bound(
    cfg: &ExperimentConfig,
    agent: &Pretrained,
    logs: &[TrajectoryLog],
) -> Result<MetricsRow> {
    cfg.validate()?;
    let mut tuned = agent.clone();
    let scene = cfg.adapt_seeds[0];
    let plan = generate_floorplan(scene, cfg.scale_factor())?;
    let mut rng = episode_rng(cfg.master_seed ^ 0x06AC1E, scene, 0);
    let start = random_navigable_pose(&plan, &mut rng);
    let mut env = Deployment::new(
        plan,
        cfg.corruption(),
        cfg.act_noise.clone(),
        cfg.sen_noise.clone(),
        start,
    )?;

    let steps = cfg.schedule.t_d - cfg.schedule.t_c;
    let mut opt_map = Adam::with_lr(cfg.weights.lr);
    let mut opt_loc = Adam::with_lr(cfg.weights.lr);
    let mut pose_est = start;
    let mut m_prev = tuned.map.predict_tensor(&env.observe(&mut rng)?.to_tensor())?;
    for step in 0..steps {
        let action = {
            // wander: mostly forward, occasional turns
            let u: f64 = rng.gen();
            if u < 0.6 {
                crate::world::Action::Forward
            } else if u < 0.8 {
                crate::world::Action::TurnLeft
            } else {
                crate::world::Action::TurnRight
            }
        };
        let s_t = env.step(action, &mut rng);
        let o_t = env.observe(&mut rng)?.to_tensor();
        let m_t = tuned.map.predict_tensor(&o_t)?;
        let gt_pose = env.gt_pose();
        let gt_ego = env.gt_ego()?.grid.to_tensor();

        if step % cfg.weights.update_period == 0 {
            // supervised map update
            let mut g = Graph::new();
            let x = g.leaf(o_t.clone());
            let pred = tuned.map.predict(&mut g, x)?;
            let target = g.leaf(gt_ego);
            let loss = g.mse_loss(pred, target)?;
            let grads = g.backward(loss)?;
            opt_map.step(&mut tuned.map.params, &grads.param_grads())?;

            // supervised pose update
            let mut g = Graph::new();
            let p = g.leaf(Tensor::vector(&[
                pose_est.x as f32,
                pose_est.y as f32,
                pose_est.phi as f32,
            ]));
            let s = g.leaf(Tensor::vector(&[s_t[0] as f32, s_t[1] as f32, s_t[2] as f32]));
            let mp = g.leaf(m_prev.clone());
            let mt = g.leaf(m_t.clone());
            let pred = tuned.loc.localize_node(&mut g, p, s, mp, mt)?;
            let target = g.leaf(Tensor::vector(&[
                gt_pose.x as f32,
                gt_pose.y as f32,
                gt_pose.phi as f32,
            ]));
            let loss = g.mse_loss(pred, target)?;
            let grads = g.backward(loss)?;
            opt_loc.step(&mut tuned.loc.params, &grads.param_grads())?;
        }
        pose_est = tuned.loc.localize(&pose_est, s_t, &m_prev, &m_t)?;
        // supervision keeps the estimate anchored during data collection
        if pose_est.translation_distance(&gt_pose) > 0.5 {
            pose_est = gt_pose;
        }
        m_prev = m_t;
    }

    let hash = logs_hash(logs);
    let (mut row, _) = method_row("gt_finetune", cfg, &tuned, logs, hash, POINTNAV_SALT)?;
    row.oracle = true;
    Ok(row)
}

/// Per-episode figure dumps: ground-truth, un-adapted and adapted global
/// maps with the true trajectory burned in.
pub fn dump_scenario_pngs(
    dir: &std::path::Path,
    na: &Pretrained,
    adapted: &Pretrained,
    log: &TrajectoryLog,
) -> Result<()> {
    use crate::harness::replay::replay_maps;
    use crate::harness::report::dump_map_png;
    use crate::harness::trajlog::plan_geometry;
    use crate::perception::pose_to_cells;

    std::fs::create_dir_all(dir)?;
    let plan = log.plan()?;
    let geom = plan_geometry(&plan);
    let cells: Vec<(usize, usize)> = log
        .true_poses()
        .iter()
        .map(|p| {
            let c = pose_to_cells(p, &geom);
            (c[0].round().max(0.0) as usize, c[1].round().max(0.0) as usize)
        })
        .collect();
    let (na_map, gt_map) = replay_maps(na, log)?;
    let (moda_map, _) = replay_maps(adapted, log)?;
    dump_map_png(&gt_map, &geom, &cells, &dir.join("gt_map"))?;
    dump_map_png(&na_map, &geom, &cells, &dir.join("na_map"))?;
    dump_map_png(&moda_map, &geom, &cells, &dir.join("moda_map"))?;
    Ok(())
}

/// Mean of a slice (report plumbing).
pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Median over a copied buffer.
pub fn median_of(xs: &[f64]) -> f64 {
    let mut buf = xs.to_vec();
    median(&mut buf)
}
