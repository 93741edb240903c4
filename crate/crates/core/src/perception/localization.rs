//! Localization model: a conv trunk over the stacked (m_{t-1}, m_t) ego
//! maps whose features join the odometry reading in a small head that
//! predicts a bounded residual correction to the odometry.

use rand::Rng;

use crate::autodiff::{Graph, NodeId, ParamSet, Tensor};
use crate::error::{Error, Result};
use crate::geometry::Pose2;
use crate::perception::mapping::{add_conv, conv, Conv};

/// Odometry normalization (m, m, rad): roughly one action magnitude.
pub const ODO_SCALE: [f32; 3] = [0.25, 0.25, 0.175];
/// Correction bound per component (m, m, rad): tanh output times this.
const CORRECTION_SCALE: [f32; 3] = [0.03, 0.03, 0.03];
const TRUNK_FEATURES: usize = 16;
const HIDDEN: usize = 32;

#[derive(Debug, Clone)]
pub struct LocalizationModel {
    pub params: ParamSet,
    trunk: [Conv; 3],
    fc1: (usize, usize),
    fc2: (usize, usize),
}

impl LocalizationModel {
    pub fn new(rng: &mut impl Rng) -> Self {
        let mut ps = ParamSet::new();
        let trunk = [
            add_conv(&mut ps, "loc.c1", 8, 4, 3, 2, rng),
            add_conv(&mut ps, "loc.c2", 16, 8, 3, 2, rng),
            add_conv(&mut ps, "loc.c3", TRUNK_FEATURES, 16, 3, 2, rng),
        ];
        let fc1 = ps.add_linear("loc.fc1", HIDDEN, TRUNK_FEATURES + 3, 1.0, rng);
        // zero init: the untrained model is exactly dead reckoning
        let fc2 = ps.add_linear("loc.fc2", 3, HIDDEN, 0.0, rng);
        LocalizationModel {
            params: ps,
            trunk,
            fc1,
            fc2,
        }
    }

    /// Residual correction (m, m, rad) as a graph node. `m_prev` and `m_t`
    /// are [1,2,64,64] ego-map nodes; `s_t` is a 3-vector node.
    pub fn correction(
        &self,
        g: &mut Graph,
        s_t: NodeId,
        m_prev: NodeId,
        m_t: NodeId,
    ) -> Result<NodeId> {
        if g.shape(m_prev) != g.shape(m_t) {
            return Err(Error::ShapeMismatch("localization map pair".into()));
        }
        let mut x = g.concat_channels(m_prev, m_t)?;
        for l in self.trunk {
            x = conv(g, &self.params, l, x)?;
            x = g.leaky_relu(x, 0.2)?;
        }
        let pooled = g.mean_pool_hw(x)?;
        let feat = g.flatten(pooled)?;
        let inv_scale = g.leaf(Tensor::vector(&[
            1.0 / ODO_SCALE[0],
            1.0 / ODO_SCALE[1],
            1.0 / ODO_SCALE[2],
        ]));
        let s_norm = g.mul(s_t, inv_scale)?;
        let joined = g.concat_vec(feat, s_norm)?;
        let (w1, b1) = self.fc1;
        let w1 = g.param(&self.params, w1);
        let b1 = g.param(&self.params, b1);
        let h = g.linear(joined, w1, b1)?;
        let h = g.leaky_relu(h, 0.2)?;
        let (w2, b2) = self.fc2;
        let w2 = g.param(&self.params, w2);
        let b2 = g.param(&self.params, b2);
        let raw = g.linear(h, w2, b2)?;
        let bounded = g.tanh(raw)?;
        let scale = g.leaf(Tensor::vector(&CORRECTION_SCALE));
        g.mul(bounded, scale)
    }

    /// p_t = compose(p_prev, s_t + correction), as a graph node
    /// differentiable w.r.t. model parameters and `p_prev`.
    pub fn localize_node(
        &self,
        g: &mut Graph,
        p_prev: NodeId,
        s_t: NodeId,
        m_prev: NodeId,
        m_t: NodeId,
    ) -> Result<NodeId> {
        let corr = self.correction(g, s_t, m_prev, m_t)?;
        let delta = g.add(s_t, corr)?;
        g.se2_compose(p_prev, delta)
    }

    /// Convenience evaluation outside a training graph.
    pub fn localize(
        &self,
        p_prev: &Pose2<f64>,
        s_t: [f64; 3],
        m_prev: &Tensor,
        m_t: &Tensor,
    ) -> Result<Pose2<f64>> {
        let mut g = Graph::new();
        let p = g.leaf(Tensor::vector(&[p_prev.x as f32, p_prev.y as f32, p_prev.phi as f32]));
        let s = g.leaf(Tensor::vector(&[s_t[0] as f32, s_t[1] as f32, s_t[2] as f32]));
        let mp = g.leaf(m_prev.clone());
        let mt = g.leaf(m_t.clone());
        let out = self.localize_node(&mut g, p, s, mp, mt)?;
        let v = g.value(out);
        Ok(Pose2::new(v.data[0] as f64, v.data[1] as f64, v.data[2] as f64))
    }
}
