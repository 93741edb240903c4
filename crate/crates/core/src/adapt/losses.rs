//! The four adaptation losses and the combined visual/dynamics objectives.
//! All norms are the Frobenius norm of the difference image; every style
//! target is a frozen tensor, so gradients reach only the agent's models.

use crate::autodiff::{Graph, NodeId, Tensor};
use crate::error::{Error, Result};
use crate::maptrans::{resize_bilinear, TranslationNet};
use crate::perception::MappingModel;

/// A frozen map-style target producer.
pub trait Style {
    fn stylize(&self, m: &Tensor) -> Result<Tensor>;
}

impl Style for TranslationNet {
    /// Apply at the trained resolution; maps of another size are resized
    /// in and the result resized back.
    fn stylize(&self, m: &Tensor) -> Result<Tensor> {
        let trained = self.item_shape();
        if m.shape == trained {
            return self.apply(m);
        }
        let [_, _, h, w] = m.shape;
        let small = resize_bilinear(m, trained[2], trained[3]);
        let styled = self.apply(&small)?;
        Ok(resize_bilinear(&styled, h, w))
    }
}

/// The no-op style: turns every style loss into an exact fixed point.
pub struct IdentityStyle;

impl Style for IdentityStyle {
    fn stylize(&self, m: &Tensor) -> Result<Tensor> {
        Ok(m.clone())
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptConfig {
    pub lambda_ego_st: f32,
    pub lambda_fc: f32,
    pub lambda_global_st: f32,
    pub lambda_tc: f32,
    pub lr: f32,
    /// Optimize once every this many environment steps.
    pub update_period: usize,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        AdaptConfig {
            lambda_ego_st: 1.0,
            lambda_fc: 0.1,
            lambda_global_st: 1.0,
            lambda_tc: 0.1,
            lr: 1e-4,
            update_period: 4,
        }
    }
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_ego_st < 0.0
            || self.lambda_fc < 0.0
            || self.lambda_global_st < 0.0
            || self.lambda_tc < 0.0
            || self.lr <= 0.0
            || self.update_period == 0
        {
            return Err(Error::ConfigInvalid(format!("{self:?}")));
        }
        Ok(())
    }
}

/// Ego style loss: ‖explored(m_t) − S_ego(explored(m_t))‖₂ with the styled
/// map as a frozen target. `m_t` is a [1,2,64,64] prediction node.
pub fn loss_ego_st(g: &mut Graph, m_t: NodeId, s_ego: &dyn Style) -> Result<NodeId> {
    let explored = g.slice_channel(m_t, 1)?;
    let styled = s_ego.stylize(g.value(explored))?;
    if styled.shape != g.shape(explored) {
        return Err(Error::ShapeMismatch("styled ego target".into()));
    }
    let target = g.leaf(styled);
    g.l2_between(explored, target)
}

/// Flip-consistency loss on the mapping feature extractor:
/// ‖flip(F(o)) − F(flip(o))‖₂ along the panorama bearing axis.
pub fn loss_fc(g: &mut Graph, model: &MappingModel, o_t: &Tensor) -> Result<NodeId> {
    let x = g.leaf(o_t.clone());
    let xf = g.leaf(o_t.flip_w());
    let f = model.encode(g, x)?;
    let ff = model.encode(g, xf)?;
    let f_flipped = g.flip_w(f)?;
    g.l2_between(f_flipped, ff)
}

/// Visual-domain objective: builds m_t = f_M(o_t) on the tape and returns
/// (weighted total, ego term value, fc term value).
pub fn loss_visual(
    g: &mut Graph,
    cfg: &AdaptConfig,
    model: &MappingModel,
    o_t: &Tensor,
    s_ego: &dyn Style,
) -> Result<(NodeId, f64, f64)> {
    let x = g.leaf(o_t.clone());
    let m_t = model.predict(g, x)?;
    let ego = loss_ego_st(g, m_t, s_ego)?;
    let fc = loss_fc(g, model, o_t)?;
    let ego_v = g.value_f64(ego);
    let fc_v = g.value_f64(fc);
    let we = g.scale(ego, cfg.lambda_ego_st)?;
    let wf = g.scale(fc, cfg.lambda_fc)?;
    let total = g.add(we, wf)?;
    Ok((total, ego_v, fc_v))
}

/// Global style loss: ‖obstacle(M_t) − S_global(obstacle(M_t))‖₂ on a map
/// node built through the differentiable (soft-fused) write path.
pub fn loss_global_st(g: &mut Graph, m_global: NodeId, s_global: &dyn Style) -> Result<NodeId> {
    let obstacle = g.slice_channel(m_global, 0)?;
    let styled = s_global.stylize(g.value(obstacle))?;
    if styled.shape != g.shape(obstacle) {
        return Err(Error::ShapeMismatch("styled global target".into()));
    }
    let target = g.leaf(styled);
    g.l2_between(obstacle, target)
}

/// Temporal consistency: ‖M_t − M_{t−1}‖₂ with the earlier map detached.
pub fn loss_tc(g: &mut Graph, m_t: NodeId, m_prev: &Tensor) -> Result<NodeId> {
    if g.shape(m_t) != m_prev.shape {
        return Err(Error::GeometryMismatch(format!(
            "temporal pair {:?} vs {:?}",
            g.shape(m_t),
            m_prev.shape
        )));
    }
    let prev = g.leaf(m_prev.clone());
    g.l2_between(m_t, prev)
}

/// Dynamics-domain objective on an already-built global map node. Returns
/// (weighted total, global style value, temporal value).
pub fn loss_dynamics(
    g: &mut Graph,
    cfg: &AdaptConfig,
    m_global: NodeId,
    m_prev: &Tensor,
    s_global: &dyn Style,
) -> Result<(NodeId, f64, f64)> {
    let st = loss_global_st(g, m_global, s_global)?;
    let tc = loss_tc(g, m_global, m_prev)?;
    let st_v = g.value_f64(st);
    let tc_v = g.value_f64(tc);
    let ws = g.scale(st, cfg.lambda_global_st)?;
    let wt = g.scale(tc, cfg.lambda_tc)?;
    let total = g.add(ws, wt)?;
    Ok((total, st_v, tc_v))
}
