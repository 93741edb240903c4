//! Egocentric rendering: shaded range panoramas, ground-truth ego maps, and
//! the visual corruption pipeline.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Channel, EgoMap, GridGeometry, OccupancyGrid, Pose2};
use crate::world::floorplan::{FloorPlan, RESOLUTION};

/// Panorama height and width in pixels.
pub const PANO_SIZE: usize = 64;
/// Ego map side length in cells.
pub const EGO_SIZE: usize = 64;
/// Horizontal field of view in radians.
pub const FOV: f64 = std::f64::consts::FRAC_PI_2;
/// Maximum ray range in meters.
const MAX_RANGE: f64 = 4.0;
/// Ray-march step in meters.
const RAY_STEP: f64 = 0.01;
/// Column fill height is HEIGHT_GAIN / range, as a fraction of the image.
const HEIGHT_GAIN: f64 = 0.5;

/// Single-channel [0,1] image; column k maps to a bearing in the agent
/// frame, leftmost column = +FOV/2 (left of heading). Intensity encodes
/// shaded inverse range, 1/(1+r).
#[derive(Debug, Clone, PartialEq)]
pub struct Panorama {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl Panorama {
    pub fn zeros(height: usize, width: usize) -> Self {
        Panorama {
            height,
            width,
            data: vec![0.0; height * width],
        }
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.width + col]
    }

    pub fn to_tensor(&self) -> crate::autodiff::Tensor {
        crate::autodiff::Tensor::from_vec([1, 1, self.height, self.width], self.data.clone())
    }
}

/// Visual corruption parameters; the identity is (0, 1, 0, 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorruptionSpec {
    pub speckle_sigma: f64,
    pub lighting_gain: f64,
    pub lighting_bias: f64,
    /// Acts only at floorplan generation, not on pixels.
    pub scale_factor: f64,
}

impl CorruptionSpec {
    pub fn identity() -> Self {
        CorruptionSpec {
            speckle_sigma: 0.0,
            lighting_gain: 1.0,
            lighting_bias: 0.0,
            scale_factor: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.speckle_sigma < 0.0 || self.lighting_gain <= 0.0 || self.scale_factor <= 0.0 {
            return Err(Error::ConfigInvalid(format!("corruption spec {self:?}")));
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        self.speckle_sigma == 0.0
            && self.lighting_gain == 1.0
            && self.lighting_bias == 0.0
            && self.scale_factor == 1.0
    }
}

/// Bearing (agent frame, radians, left positive) of panorama column `k`.
fn column_bearing(k: usize, width: usize) -> f64 {
    (0.5 - (k as f64 + 0.5) / width as f64) * FOV
}

/// March a ray from `pose` at agent-frame bearing `theta`; returns hit
/// distance, or MAX_RANGE when nothing is hit.
fn raycast(plan: &FloorPlan, pose: &Pose2<f64>, theta: f64) -> f64 {
    let ang = pose.phi + theta;
    let (s, c) = ang.sin_cos();
    let mut r = RAY_STEP;
    while r < MAX_RANGE {
        if plan.solid_at_world(pose.x + c * r, pose.y + s * r) {
            return r;
        }
        r += RAY_STEP;
    }
    MAX_RANGE
}

/// Per-column raycast: the column fills from the bottom up to a horizon
/// height proportional to 1/r with intensity 1/(1+r).
pub fn render_panorama(plan: &FloorPlan, pose: &Pose2<f64>) -> Result<Panorama> {
    if !plan.pose_navigable(pose) {
        return Err(Error::PoseInObstacle);
    }
    let (h, w) = (PANO_SIZE, PANO_SIZE);
    let mut pan = Panorama::zeros(h, w);
    for k in 0..w {
        let r = raycast(plan, pose, column_bearing(k, w));
        let fill = ((h as f64) * (HEIGHT_GAIN / r).min(1.0)).round() as usize;
        let intensity = (1.0 / (1.0 + r)) as f32;
        for row in h - fill..h {
            pan.data[row * w + k] = intensity;
        }
    }
    Ok(pan)
}

/// Ground-truth egocentric map: a V x V top-down crop around the pose in the
/// agent frame (+row forward, +col left). Explored marks the visibility
/// wedge of the raycast; obstacle marks visible solid cells.
pub fn render_ego_gt(plan: &FloorPlan, pose: &Pose2<f64>) -> Result<EgoMap<f32>> {
    if !plan.pose_navigable(pose) {
        return Err(Error::PoseInObstacle);
    }
    let v = EGO_SIZE;
    // agent at cell (v/2, v/2): the centered geometry
    let geometry = GridGeometry::centered(v, v, RESOLUTION as f32);
    let mut grid = OccupancyGrid::<f32>::zeros(geometry);
    // Dense ray fan over the field of view; 4 rays per panorama column keeps
    // the wedge free of radial gaps at map range.
    let rays = PANO_SIZE * 4;
    for k in 0..rays {
        let theta = (0.5 - (k as f64 + 0.5) / rays as f64) * FOV;
        let ang = pose.phi + theta;
        let (sw, cw) = ang.sin_cos();
        let (se, ce) = theta.sin_cos();
        let mut r = 0.0;
        while r < MAX_RANGE {
            // agent-frame coordinates: x forward, y left
            let (ex, ey) = (ce * r, se * r);
            let er = (ex / RESOLUTION).round() as i64 + (v / 2) as i64;
            let ec = (ey / RESOLUTION).round() as i64 + (v / 2) as i64;
            let hit = plan.solid_at_world(pose.x + cw * r, pose.y + sw * r);
            if er >= 0 && ec >= 0 && er < v as i64 && ec < v as i64 {
                let i = er as usize * v + ec as usize;
                grid.channel_mut(Channel::Explored)[i] = 1.0;
                if hit {
                    grid.channel_mut(Channel::Obstacle)[i] = 1.0;
                }
            }
            if hit {
                break;
            }
            r += RAY_STEP;
        }
    }
    Ok(EgoMap { grid })
}

/// I' = clamp(gain * (I * (1 + n)) + bias, 0, 1) with n ~ N(0, sigma²) per
/// pixel. The identity spec is a bit-exact no-op.
pub fn corrupt(pan: &Panorama, spec: &CorruptionSpec, rng: &mut impl Rng) -> Panorama {
    if spec.is_identity() {
        return pan.clone();
    }
    let normal = Normal::new(0.0f64, spec.speckle_sigma).unwrap();
    let mut out = pan.clone();
    for px in &mut out.data {
        let n = if spec.speckle_sigma > 0.0 {
            normal.sample(rng)
        } else {
            0.0
        };
        let v = spec.lighting_gain * (*px as f64 * (1.0 + n)) + spec.lighting_bias;
        *px = v.clamp(0.0, 1.0) as f32;
    }
    out
}
