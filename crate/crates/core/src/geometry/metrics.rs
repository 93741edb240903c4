//! Map and pose evaluation metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Channel, OccupancyGrid, Pose2};
use crate::scalar::Scalar;

/// Median localization error: translation in meters, rotation in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseError {
    pub translation: f64,
    pub rotation: f64,
}

/// Mean squared per-cell difference of one channel. Accumulates in f64.
pub fn map_mse<S: Scalar>(
    a: &OccupancyGrid<S>,
    b: &OccupancyGrid<S>,
    channel: Channel,
) -> Result<f64> {
    if !a.same_geometry(b) {
        return Err(Error::GeometryMismatch("map_mse".into()));
    }
    let xs = a.channel(channel);
    let ys = b.channel(channel);
    let sum: f64 = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| {
            let d = x.to_f64_() - y.to_f64_();
            d * d
        })
        .sum();
    Ok(sum / xs.len() as f64)
}

/// Explored area in m^2 and the ratio against the ground-truth navigable area.
pub fn explored_stats<S: Scalar>(map: &OccupancyGrid<S>, gt_navigable_area: f64) -> (f64, f64) {
    assert!(gt_navigable_area > 0.0);
    let res = map.geometry.resolution.to_f64_();
    let area = map.total_mass(Channel::Explored) * res * res;
    (area, (area / gt_navigable_area).clamp(0.0, 1.0))
}

/// Per-step translation / wrapped-rotation error medians over two pose tracks.
pub fn pose_error<S: Scalar>(pred: &[Pose2<S>], gt: &[Pose2<S>]) -> Result<PoseError> {
    if pred.len() != gt.len() {
        return Err(Error::LengthMismatch(pred.len(), gt.len()));
    }
    if pred.is_empty() {
        return Err(Error::LengthMismatch(0, 0));
    }
    let mut trans: Vec<f64> = pred
        .iter()
        .zip(gt)
        .map(|(p, g)| p.translation_distance(g).to_f64_())
        .collect();
    let mut rot: Vec<f64> = pred
        .iter()
        .zip(gt)
        .map(|(p, g)| p.rotation_distance(g).to_f64_().to_degrees())
        .collect();
    Ok(PoseError {
        translation: median(&mut trans),
        rotation: median(&mut rot),
    })
}

/// Median; the mean of the two middle values for even lengths.
pub fn median(xs: &mut [f64]) -> f64 {
    assert!(!xs.is_empty());
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}
