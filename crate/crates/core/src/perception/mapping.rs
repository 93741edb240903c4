//! Mapping model: panorama 1x64x64 -> features 64x8x8 -> 2x64x64 ego map.

use rand::Rng;

use crate::autodiff::{Graph, NodeId, ParamSet, Tensor};
use crate::error::{Error, Result};

/// Conv layer handle inside a ParamSet.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Conv {
    pub w: usize,
    pub b: usize,
    pub stride: usize,
    pub pad: usize,
}

pub(crate) fn add_conv(
    ps: &mut ParamSet,
    name: &str,
    co: usize,
    ci: usize,
    k: usize,
    stride: usize,
    rng: &mut impl Rng,
) -> Conv {
    let (w, b) = ps.add_conv(name, co, ci, k, rng);
    Conv {
        w,
        b,
        stride,
        pad: k / 2,
    }
}

pub(crate) fn conv(g: &mut Graph, ps: &ParamSet, l: Conv, x: NodeId) -> Result<NodeId> {
    let w = g.param(ps, l.w);
    let b = g.param(ps, l.b);
    g.conv2d(x, w, b, l.stride, l.pad)
}

/// Encoder F (4 conv layers, last three stride 2) plus an upsampling
/// decoder with a sigmoid output.
#[derive(Debug, Clone)]
pub struct MappingModel {
    pub params: ParamSet,
    enc: [Conv; 4],
    dec: [Conv; 3],
}

impl MappingModel {
    pub fn new(rng: &mut impl Rng) -> Self {
        let mut ps = ParamSet::new();
        let enc = [
            add_conv(&mut ps, "map.enc1", 8, 1, 3, 1, rng),
            add_conv(&mut ps, "map.enc2", 16, 8, 3, 2, rng),
            add_conv(&mut ps, "map.enc3", 32, 16, 3, 2, rng),
            add_conv(&mut ps, "map.enc4", 64, 32, 3, 2, rng),
        ];
        let dec = [
            add_conv(&mut ps, "map.dec1", 32, 64, 3, 1, rng),
            add_conv(&mut ps, "map.dec2", 16, 32, 3, 1, rng),
            add_conv(&mut ps, "map.dec3", 2, 16, 3, 1, rng),
        ];
        MappingModel {
            params: ps,
            enc,
            dec,
        }
    }

    /// Feature extractor F: [1,1,64,64] -> [1,64,8,8].
    pub fn encode(&self, g: &mut Graph, pan: NodeId) -> Result<NodeId> {
        if g.shape(pan) != [1, 1, 64, 64] {
            return Err(Error::ShapeMismatch(format!(
                "mapping input {:?}",
                g.shape(pan)
            )));
        }
        let mut x = pan;
        for l in self.enc {
            x = conv(g, &self.params, l, x)?;
            x = g.leaky_relu(x, 0.2)?;
        }
        Ok(x)
    }

    /// Decoder: [1,64,8,8] -> sigmoid [1,2,64,64].
    pub fn decode(&self, g: &mut Graph, feat: NodeId) -> Result<NodeId> {
        let mut x = feat;
        for (i, l) in self.dec.into_iter().enumerate() {
            x = g.upsample_nearest2(x)?;
            x = conv(g, &self.params, l, x)?;
            if i + 1 < self.dec.len() {
                x = g.leaky_relu(x, 0.2)?;
            }
        }
        g.sigmoid(x)
    }

    /// Full f_M forward.
    pub fn predict(&self, g: &mut Graph, pan: NodeId) -> Result<NodeId> {
        let f = self.encode(g, pan)?;
        self.decode(g, f)
    }

    /// Convenience: run a forward pass outside any training graph.
    pub fn predict_tensor(&self, pan: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let x = g.leaf(pan.clone());
        let y = self.predict(&mut g, x)?;
        Ok(g.value(y).clone())
    }
}
