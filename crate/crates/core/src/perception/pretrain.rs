//! Supervised pretraining in the clean environment: f_M against rendered
//! ground-truth ego maps, f_L against ground-truth per-step motion under
//! injected zero-mean odometry noise.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{load_checkpoint, save_checkpoint, Adam, Graph, Tensor};
use crate::error::{Error, Result};
use crate::perception::{LocalizationModel, MappingModel};
use crate::world::{
    generate_floorplan, random_navigable_pose, read_odometry, render_ego_gt, render_panorama,
    step_dynamics, Action, FloorPlan, GmmNoiseModel,
};

#[derive(Debug, Clone)]
pub struct PretrainConfig {
    pub floorplan_seeds: Vec<u64>,
    /// f_M training pairs sampled per floorplan.
    pub poses_per_plan: usize,
    pub map_epochs: usize,
    /// f_L rollouts per floorplan and steps per rollout.
    pub loc_rollouts: usize,
    pub rollout_steps: usize,
    pub loc_epochs: usize,
    pub lr: f32,
    /// Odometry noise injected while collecting f_L data. Zero-mean: the
    /// pretrained corrector must stay unbiased so that clean deployments
    /// (exact odometry) are not perturbed.
    pub sen_noise: GmmNoiseModel,
    /// Actuation noise during f_L data collection (motion diversity).
    pub act_noise: GmmNoiseModel,
}

fn zero_mean(stddev: [f64; 3]) -> GmmNoiseModel {
    GmmNoiseModel {
        components: vec![crate::world::GmmComponent {
            weight: 1.0,
            mean: [0.0; 3],
            stddev,
        }],
    }
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            floorplan_seeds: vec![101, 102, 103],
            poses_per_plan: 160,
            map_epochs: 6,
            loc_rollouts: 4,
            rollout_steps: 50,
            loc_epochs: 6,
            lr: 1e-3,
            sen_noise: zero_mean([0.01, 0.004, 0.01]),
            act_noise: zero_mean([0.005, 0.002, 0.005]),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Pretrained {
    pub map: MappingModel,
    pub loc: LocalizationModel,
}

impl Pretrained {
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        save_checkpoint(&self.map.params, &dir.join("map.ckpt"))?;
        save_checkpoint(&self.loc.params, &dir.join("loc.ckpt"))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        // architecture is fixed; any seed builds the right shapes
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut map = MappingModel::new(&mut rng);
        let mut loc = LocalizationModel::new(&mut rng);
        load_checkpoint(&mut map.params, &dir.join("map.ckpt"))?;
        load_checkpoint(&mut loc.params, &dir.join("loc.ckpt"))?;
        Ok(Pretrained { map, loc })
    }
}

/// One (panorama, ground-truth ego map) supervision pair.
struct MapSample {
    pan: Tensor,
    ego: Tensor,
}

/// One localization supervision step.
struct LocSample {
    m_prev: Tensor,
    m_t: Tensor,
    s_t: [f64; 3],
    delta_true: [f64; 3],
}

fn collect_map_samples(
    plans: &[FloorPlan],
    per_plan: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<MapSample> {
    let mut out = Vec::new();
    for plan in plans {
        for _ in 0..per_plan {
            let pose = random_navigable_pose(plan, rng);
            let pan = render_panorama(plan, &pose).expect("sampled pose is navigable");
            let ego = render_ego_gt(plan, &pose).expect("sampled pose is navigable");
            out.push(MapSample {
                pan: pan.to_tensor(),
                ego: ego.grid.to_tensor(),
            });
        }
    }
    out
}

/// Forward-biased random exploration used for data collection.
pub(crate) fn random_action(rng: &mut impl Rng) -> Action {
    match rng.gen_range(0..10) {
        0..=5 => Action::Forward,
        6 | 7 => Action::TurnLeft,
        _ => Action::TurnRight,
    }
}

fn collect_loc_samples(
    plans: &[FloorPlan],
    map: &MappingModel,
    cfg: &PretrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<LocSample>> {
    let mut out = Vec::new();
    for plan in plans {
        for _ in 0..cfg.loc_rollouts {
            let mut pose = random_navigable_pose(plan, rng);
            let mut m_prev = map.predict_tensor(&render_panorama(plan, &pose)?.to_tensor())?;
            for _ in 0..cfg.rollout_steps {
                let action = random_action(rng);
                let step = step_dynamics(plan, &pose, action, &cfg.act_noise, rng);
                let s_t = read_odometry(&step.delta_true, &cfg.sen_noise, rng);
                pose = step.pose;
                let m_t = map.predict_tensor(&render_panorama(plan, &pose)?.to_tensor())?;
                out.push(LocSample {
                    m_prev: m_prev.clone(),
                    m_t: m_t.clone(),
                    s_t,
                    delta_true: [step.delta_true.x, step.delta_true.y, step.delta_true.phi],
                });
                m_prev = m_t;
            }
        }
    }
    Ok(out)
}

fn shuffled(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        idx.swap(i, rng.gen_range(0..=i));
    }
    idx
}

/// Train f_M then f_L with ground-truth supervision on clean renders.
/// Returns the models and writes checkpoints plus a CSV training log
/// (epoch, loss_map, loss_pose) under `out_dir`.
pub fn pretrain(cfg: &PretrainConfig, seed: u64, out_dir: &Path) -> Result<Pretrained> {
    std::fs::create_dir_all(out_dir)?;
    let plans: Vec<FloorPlan> = cfg
        .floorplan_seeds
        .iter()
        .map(|&s| generate_floorplan(s, 1.0))
        .collect::<Result<_>>()?;
    if plans.is_empty() {
        return Err(Error::EmptyCorpus("no pretraining floorplans".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut map = MappingModel::new(&mut rng);
    let mut loc = LocalizationModel::new(&mut rng);
    let mut log: Vec<(usize, Option<f64>, Option<f64>)> = Vec::new();

    // Stage A: f_M against rendered ground truth.
    let samples = collect_map_samples(&plans, cfg.poses_per_plan, &mut rng);
    let mut opt = Adam::with_lr(cfg.lr);
    for epoch in 0..cfg.map_epochs {
        let mut total = 0.0f64;
        for &i in &shuffled(samples.len(), &mut rng) {
            let s = &samples[i];
            let mut g = Graph::new();
            let x = g.leaf(s.pan.clone());
            let pred = map.predict(&mut g, x)?;
            let tgt = g.leaf(s.ego.clone());
            let loss = g.mse_loss(pred, tgt)?;
            let lv = g.value_f64(loss);
            if !lv.is_finite() {
                return Err(Error::Diverged(format!("map loss at epoch {epoch}")));
            }
            total += lv;
            let grads = g.backward(loss)?;
            opt.step(&mut map.params, &grads.param_grads())?;
        }
        log.push((epoch, Some(total / samples.len() as f64), None));
    }

    // Stage B: f_L against ground-truth motion under injected noise.
    let samples = collect_loc_samples(&plans, &map, cfg, &mut rng)?;
    let mut opt = Adam::with_lr(cfg.lr);
    for epoch in 0..cfg.loc_epochs {
        let mut total = 0.0f64;
        for &i in &shuffled(samples.len(), &mut rng) {
            let s = &samples[i];
            let mut g = Graph::new();
            let st = g.leaf(Tensor::vector(&[
                s.s_t[0] as f32,
                s.s_t[1] as f32,
                s.s_t[2] as f32,
            ]));
            let mp = g.leaf(s.m_prev.clone());
            let mt = g.leaf(s.m_t.clone());
            let corr = loc.correction(&mut g, st, mp, mt)?;
            let tgt = g.leaf(Tensor::vector(&[
                (s.delta_true[0] - s.s_t[0]) as f32,
                (s.delta_true[1] - s.s_t[1]) as f32,
                (s.delta_true[2] - s.s_t[2]) as f32,
            ]));
            let loss = g.mse_loss(corr, tgt)?;
            let lv = g.value_f64(loss);
            if !lv.is_finite() {
                return Err(Error::Diverged(format!("pose loss at epoch {epoch}")));
            }
            total += lv;
            let grads = g.backward(loss)?;
            opt.step(&mut loc.params, &grads.param_grads())?;
        }
        log.push((epoch, None, Some(total / samples.len() as f64)));
    }

    let mut csv = std::fs::File::create(out_dir.join("pretrain.csv"))?;
    writeln!(csv, "epoch,loss_map,loss_pose")?;
    for (e, lm, lp) in &log {
        writeln!(
            csv,
            "{e},{},{}",
            lm.map(|v| format!("{v:.6}")).unwrap_or_default(),
            lp.map(|v| format!("{v:.6}")).unwrap_or_default()
        )?;
    }

    let out = Pretrained { map, loc };
    out.save(out_dir)?;
    Ok(out)
}
