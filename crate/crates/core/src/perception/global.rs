//! Differentiable global-map writing: M_t = fuse(M_{t-1}, T_{p_t}(m_t)).

use crate::autodiff::{Graph, NodeId, Tensor};
use crate::error::{Error, Result};
use crate::geometry::{GridGeometry, Pose2};

/// Temperature of the smooth-max fusion used during adaptation; evaluation
/// uses the hard max (zero gradient for the loser, so useless for training).
pub const SOFT_FUSE_TAU: f32 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FuseMode {
    /// Hard per-cell max: idempotent, used for evaluation.
    Hard,
    /// Log-sum-exp smooth max: pose gradients are nonzero everywhere.
    Soft,
}

/// Convert a world pose to (row, col, phi) in cells of `geom`, the pose
/// format grid_sample_se2 expects.
pub fn pose_to_cells(p: &Pose2<f64>, geom: &GridGeometry<f32>) -> [f32; 3] {
    [
        ((p.x - geom.origin.x as f64) / geom.resolution as f64) as f32,
        ((p.y - geom.origin.y as f64) / geom.resolution as f64) as f32,
        p.phi as f32,
    ]
}

/// Graph version of pose_to_cells for a pose node in meters.
pub fn pose_node_to_cells(
    g: &mut Graph,
    pose_m: NodeId,
    geom: &GridGeometry<f32>,
) -> Result<NodeId> {
    let inv = 1.0 / geom.resolution;
    let scale = g.leaf(Tensor::vector(&[inv, inv, 1.0]));
    let shift = g.leaf(Tensor::vector(&[
        -geom.origin.x * inv,
        -geom.origin.y * inv,
        0.0,
    ]));
    let scaled = g.mul(pose_m, scale)?;
    g.add(scaled, shift)
}

/// Differentiable write: warp the ego node by the cell-space pose node into
/// the global frame and fuse with the previous map.
pub fn write_global(
    g: &mut Graph,
    m_prev: NodeId,
    ego: NodeId,
    pose_cells: NodeId,
    mode: FuseMode,
) -> Result<NodeId> {
    let [_, _, h, w] = g.shape(m_prev);
    let pv = g.value(pose_cells);
    let (pr, pc) = (pv.data[0], pv.data[1]);
    if pr < 0.0 || pc < 0.0 || pr > (h - 1) as f32 || pc > (w - 1) as f32 {
        return Err(Error::OutOfBounds(format!(
            "pose ({pr:.1}, {pc:.1}) cells outside {h}x{w} global map"
        )));
    }
    let warped = g.grid_sample_se2(ego, pose_cells, (h, w))?;
    match mode {
        FuseMode::Hard => g.max2(m_prev, warped),
        FuseMode::Soft => g.softmax2(m_prev, warped, SOFT_FUSE_TAU),
    }
}

/// Tensor-level convenience for evaluation rollouts.
pub fn write_global_tensor(
    m_prev: &Tensor,
    ego: &Tensor,
    pose: &Pose2<f64>,
    geom: &GridGeometry<f32>,
) -> Result<Tensor> {
    let mut g = Graph::new();
    let prev = g.leaf(m_prev.clone());
    let e = g.leaf(ego.clone());
    let p = g.leaf(Tensor::vector(&pose_to_cells(pose, geom)));
    let out = write_global(&mut g, prev, e, p, FuseMode::Hard)?;
    Ok(g.value(out).clone())
}

/// Per-episode perception state.
#[derive(Debug, Clone)]
pub struct AgentState {
    /// Pose estimate p̂_t in world meters.
    pub pose_est: Pose2<f64>,
    /// Global map tensor [1, 2, H, W].
    pub global: Tensor,
    pub geom: GridGeometry<f32>,
    /// Previous predicted ego map, if any step has run.
    pub prev_ego: Option<Tensor>,
}

impl AgentState {
    pub fn new(origin: Pose2<f64>, geom: GridGeometry<f32>) -> Self {
        AgentState {
            pose_est: origin,
            global: Tensor::zeros([1, 2, geom.height, geom.width]),
            geom,
            prev_ego: None,
        }
    }
}
