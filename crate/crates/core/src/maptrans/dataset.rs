//! Unpaired map corpora: clean maps collected with ground truth from the
//! noiseless simulator, noisy maps produced by the un-adapted agent's own
//! predictions inside a corrupted deployment. Ego items are the explored
//! channel at native 64x64; global items are the obstacle channel resized
//! to a fixed 128x128.

use std::io::{Read as _, Write as _};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::geometry::GridGeometry;
use crate::perception::{pose_to_cells, write_global_tensor, Pretrained};
use crate::world::{random_navigable_pose, Deployment, FloorPlan};

/// Side length global-map items are resized to before translation training.
pub const GLOBAL_SIZE: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MapRole {
    Clean,
    Noisy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MapScope {
    Ego,
    Global,
}

/// Where an item came from; never references ground-truth channels.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Provenance {
    pub episode: usize,
    pub step: usize,
}

#[derive(Debug, Clone)]
pub struct MapItem {
    /// Single-channel image [1, 1, h, w], values in [0, 1].
    pub image: Tensor,
    pub provenance: Provenance,
}

#[derive(Debug, Clone)]
pub struct MapDataset {
    pub role: MapRole,
    pub scope: MapScope,
    pub items: Vec<MapItem>,
}

impl MapDataset {
    pub fn new(role: MapRole, scope: MapScope) -> Self {
        MapDataset {
            role,
            scope,
            items: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, image: Tensor, provenance: Provenance) -> Result<()> {
        let [n, c, _, _] = image.shape;
        if n != 1 || c != 1 {
            return Err(Error::ShapeMismatch(format!(
                "map item must be single-channel, got {:?}",
                image.shape
            )));
        }
        if let Some(first) = self.items.first() {
            if first.image.shape != image.shape {
                return Err(Error::ShapeMismatch("map item shape drift".into()));
            }
        }
        if image.data.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::ConfigInvalid("map item outside [0,1]".into()));
        }
        self.items.push(MapItem { image, provenance });
        Ok(())
    }

    pub fn item_shape(&self) -> Option<[usize; 4]> {
        self.items.first().map(|i| i.image.shape)
    }

    /// Mean fraction of pixels above `thresh` across items; the sparsity
    /// diagnostic reported for obstacle corpora.
    pub fn mean_nonzero_fraction(&self, thresh: f32) -> f64 {
        if self.items.is_empty() {
            return 0.0;
        }
        let mut total = 0.0;
        for it in &self.items {
            let nz = it.image.data.iter().filter(|&&v| v > thresh).count();
            total += nz as f64 / it.image.numel() as f64;
        }
        total / self.items.len() as f64
    }

    /// Per-pixel mean over the corpus, for distribution-shift diagnostics.
    pub fn pixel_mean(&self) -> f64 {
        let mut sum = 0.0;
        let mut n = 0usize;
        for it in &self.items {
            sum += it.image.data.iter().map(|&v| v as f64).sum::<f64>();
            n += it.image.numel();
        }
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }

    /// Store as a directory of binary PGMs plus a JSON manifest.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut entries = Vec::new();
        for (i, it) in self.items.iter().enumerate() {
            let name = format!("{i:06}.pgm");
            write_pgm(&dir.join(&name), &it.image)?;
            entries.push((name, it.provenance));
        }
        let manifest = Manifest {
            role: self.role,
            scope: self.scope,
            entries,
        };
        let mut f = std::fs::File::create(dir.join("manifest.json"))?;
        f.write_all(serde_json::to_string_pretty(&manifest)?.as_bytes())?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(dir.join("manifest.json"))?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        let mut out = MapDataset::new(manifest.role, manifest.scope);
        for (name, prov) in manifest.entries {
            out.push(read_pgm(&dir.join(&name))?, prov)?;
        }
        Ok(out)
    }
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    role: MapRole,
    scope: MapScope,
    entries: Vec<(String, Provenance)>,
}

fn write_pgm(path: &Path, image: &Tensor) -> Result<()> {
    let [_, _, h, w] = image.shape;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(f, "P5\n{w} {h}\n255\n")?;
    let bytes: Vec<u8> = image
        .data
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    f.write_all(&bytes)?;
    Ok(())
}

fn read_pgm(path: &Path) -> Result<Tensor> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let header_end = bytes
        .windows(1)
        .enumerate()
        .filter(|(_, b)| b[0] == b'\n')
        .map(|(i, _)| i)
        .nth(2)
        .ok_or_else(|| Error::ConfigInvalid(format!("truncated pgm {path:?}")))?;
    let header = std::str::from_utf8(&bytes[..header_end])
        .map_err(|_| Error::ConfigInvalid("pgm header not utf-8".into()))?;
    let mut fields = header.split_ascii_whitespace();
    if fields.next() != Some("P5") {
        return Err(Error::ConfigInvalid("not a binary pgm".into()));
    }
    let w: usize = fields.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let h: usize = fields.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let pixels = &bytes[header_end + 1..];
    if w == 0 || h == 0 || pixels.len() != w * h {
        return Err(Error::ConfigInvalid(format!("bad pgm geometry {path:?}")));
    }
    Ok(Tensor::from_vec(
        [1, 1, h, w],
        pixels.iter().map(|&b| b as f32 / 255.0).collect(),
    ))
}

/// Bilinear resize of a single-channel [1,1,h,w] image.
pub fn resize_bilinear(image: &Tensor, oh: usize, ow: usize) -> Tensor {
    let [_, _, h, w] = image.shape;
    let mut out = Tensor::zeros([1, 1, oh, ow]);
    let sr = h as f64 / oh as f64;
    let sc = w as f64 / ow as f64;
    for r in 0..oh {
        for c in 0..ow {
            // align sample points with pixel centers
            let fr = ((r as f64 + 0.5) * sr - 0.5).clamp(0.0, (h - 1) as f64);
            let fc = ((c as f64 + 0.5) * sc - 0.5).clamp(0.0, (w - 1) as f64);
            let (r0, c0) = (fr.floor() as usize, fc.floor() as usize);
            let (r1, c1) = ((r0 + 1).min(h - 1), (c0 + 1).min(w - 1));
            let (ar, ac) = (fr - r0 as f64, fc - c0 as f64);
            let v00 = image.at(0, 0, r0, c0) as f64;
            let v01 = image.at(0, 0, r0, c1) as f64;
            let v10 = image.at(0, 0, r1, c0) as f64;
            let v11 = image.at(0, 0, r1, c1) as f64;
            let v = v00 * (1.0 - ar) * (1.0 - ac)
                + v01 * (1.0 - ar) * ac
                + v10 * ar * (1.0 - ac)
                + v11 * ar * ac;
            *out.at_mut(0, 0, r, c) = v as f32;
        }
    }
    out
}

/// Extract one channel of a [1,2,h,w] map tensor as a [1,1,h,w] item.
pub fn channel_slice(map: &Tensor, ch: usize) -> Tensor {
    let [_, c, h, w] = map.shape;
    assert!(ch < c);
    Tensor::from_vec(
        [1, 1, h, w],
        map.data[ch * h * w..(ch + 1) * h * w].to_vec(),
    )
}

fn global_geom(plan: &FloorPlan) -> GridGeometry<f32> {
    GridGeometry::new(
        plan.geometry.height,
        plan.geometry.width,
        plan.geometry.resolution as f32,
        crate::geometry::Pose2::new(
            plan.geometry.origin.x as f32,
            plan.geometry.origin.y as f32,
            0.0,
        ),
    )
}

/// Collection sizing shared by both corpus collectors.
#[derive(Debug, Clone)]
pub struct CollectConfig {
    pub episodes: usize,
    pub steps_per_episode: usize,
    /// Ego maps are sampled every `ego_stride` steps.
    pub ego_stride: usize,
}

impl Default for CollectConfig {
    fn default() -> Self {
        CollectConfig {
            episodes: 10,
            steps_per_episode: 500,
            ego_stride: 10,
        }
    }
}

/// Collect D_gt from the noiseless simulator: ground-truth ego maps every
/// `ego_stride` steps, accumulated ground-truth global maps at episode end.
pub fn collect_clean_maps(
    plans: &[FloorPlan],
    cfg: &CollectConfig,
    seed: u64,
) -> Result<(MapDataset, MapDataset)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ego_ds = MapDataset::new(MapRole::Clean, MapScope::Ego);
    let mut global_ds = MapDataset::new(MapRole::Clean, MapScope::Global);
    let mut episode = 0usize;
    for plan in plans {
        for _ in 0..cfg.episodes {
            let start = random_navigable_pose(plan, &mut rng);
            let mut env = Deployment::clean(plan.clone(), start)?;
            let geom = global_geom(plan);
            let mut global = Tensor::zeros([1, 2, geom.height, geom.width]);
            for step in 0..cfg.steps_per_episode {
                let action = crate::perception::random_action(&mut rng);
                env.step(action, &mut rng);
                let pose = env.gt_pose();
                let ego = env.gt_ego()?.grid.to_tensor();
                if step % cfg.ego_stride == 0 {
                    ego_ds.push(channel_slice(&ego, 1), Provenance { episode, step })?;
                }
                if pose_in_bounds(&pose, &geom) {
                    global = write_global_tensor(&global, &ego, &pose, &geom)?;
                }
            }
            let obstacle = channel_slice(&global, 0);
            global_ds.push(
                resize_bilinear(&obstacle, GLOBAL_SIZE, GLOBAL_SIZE),
                Provenance {
                    episode,
                    step: cfg.steps_per_episode,
                },
            )?;
            episode += 1;
        }
    }
    if ego_ds.is_empty() || global_ds.is_empty() {
        return Err(Error::EmptyCorpus("clean map collection".into()));
    }
    Ok((ego_ds, global_ds))
}

fn pose_in_bounds(pose: &crate::geometry::Pose2<f64>, geom: &GridGeometry<f32>) -> bool {
    let cells = pose_to_cells(pose, geom);
    cells[0] >= 0.0
        && cells[1] >= 0.0
        && cells[0] <= (geom.height - 1) as f32
        && cells[1] <= (geom.width - 1) as f32
}

/// Collect D_noisy inside corrupted deployments using only the agent's own
/// predictions: f_M ego maps from corrupted panoramas, f_L pose estimates
/// from noisy odometry. Never reads ground truth (audited by the caller via
/// `Deployment::gt_read_count`).
pub fn collect_noisy_maps(
    agent: &Pretrained,
    env: &mut Deployment,
    cfg: &CollectConfig,
    seed: u64,
) -> Result<(MapDataset, MapDataset)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ego_ds = MapDataset::new(MapRole::Noisy, MapScope::Ego);
    let mut global_ds = MapDataset::new(MapRole::Noisy, MapScope::Global);
    let geom = global_geom(&env.plan);
    for episode in 0..cfg.episodes {
        let start = random_navigable_pose(&env.plan, &mut rng);
        env.reset_to(start);
        let mut pose_est = start;
        let mut global = Tensor::zeros([1, 2, geom.height, geom.width]);
        let mut m_prev = agent
            .map
            .predict_tensor(&env.observe(&mut rng)?.to_tensor())?;
        for step in 0..cfg.steps_per_episode {
            let action = crate::perception::random_action(&mut rng);
            let s_t = env.step(action, &mut rng);
            let m_t = agent
                .map
                .predict_tensor(&env.observe(&mut rng)?.to_tensor())?;
            pose_est = agent.loc.localize(&pose_est, s_t, &m_prev, &m_t)?;
            if step % cfg.ego_stride == 0 {
                ego_ds.push(channel_slice(&m_t, 1), Provenance { episode, step })?;
            }
            if pose_in_bounds(&pose_est, &geom) {
                global = write_global_tensor(&global, &m_t, &pose_est, &geom)?;
            }
            m_prev = m_t;
        }
        let obstacle = channel_slice(&global, 0);
        global_ds.push(
            resize_bilinear(&obstacle, GLOBAL_SIZE, GLOBAL_SIZE),
            Provenance {
                episode,
                step: cfg.steps_per_episode,
            },
        )?;
    }
    if ego_ds.is_empty() || global_ds.is_empty() {
        return Err(Error::EmptyCorpus("noisy map collection".into()));
    }
    Ok((ego_ds, global_ds))
}
