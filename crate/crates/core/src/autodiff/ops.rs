//! Layer primitives with exact vector-Jacobian products.

use rayon::prelude::*;

use crate::autodiff::graph::{Graph, NodeId};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

const INSTANCE_NORM_EPS: f32 = 1e-5;

impl Graph {
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "add")?;
        let v = self.value(a).zip(self.value(b), |x, y| x + y);
        let id = self.push(
            v,
            vec![a, b],
            Some(Box::new(|g: &Tensor| vec![g.clone(), g.clone()])),
            None,
        )?;
        if let (Some(ha), Some(hb)) = (self.hi(a), self.hi(b)) {
            self.set_hi(id, ha + hb);
        }
        Ok(id)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "sub")?;
        let v = self.value(a).zip(self.value(b), |x, y| x - y);
        self.push(
            v,
            vec![a, b],
            Some(Box::new(|g: &Tensor| vec![g.clone(), g.map(|x| -x)])),
            None,
        )
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "mul")?;
        let av = self.value(a).clone();
        let bv = self.value(b).clone();
        let v = av.zip(&bv, |x, y| x * y);
        self.push(
            v,
            vec![a, b],
            Some(Box::new(move |g: &Tensor| {
                vec![g.zip(&bv, |x, y| x * y), g.zip(&av, |x, y| x * y)]
            })),
            None,
        )
    }

    pub fn scale(&mut self, a: NodeId, k: f32) -> Result<NodeId> {
        let v = self.value(a).map(|x| x * k);
        let id = self.push(
            v,
            vec![a],
            Some(Box::new(move |g: &Tensor| vec![g.map(|x| x * k)])),
            None,
        )?;
        if let Some(ha) = self.hi(a) {
            self.set_hi(id, ha * k as f64);
        }
        Ok(id)
    }

    /// Stop-gradient: value passes, gradient does not.
    pub fn detach(&mut self, a: NodeId) -> NodeId {
        self.leaf(self.value(a).clone())
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        let av = self.value(a).clone();
        let v = av.map(|x| x.max(0.0));
        self.push(
            v,
            vec![a],
            Some(Box::new(move |g: &Tensor| {
                vec![g.zip(&av, |gy, x| if x > 0.0 { gy } else { 0.0 })]
            })),
            None,
        )
    }

    pub fn leaky_relu(&mut self, a: NodeId, slope: f32) -> Result<NodeId> {
        let av = self.value(a).clone();
        let v = av.map(|x| if x > 0.0 { x } else { slope * x });
        self.push(
            v,
            vec![a],
            Some(Box::new(move |g: &Tensor| {
                vec![g.zip(&av, |gy, x| if x > 0.0 { gy } else { slope * gy })]
            })),
            None,
        )
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).map(|x| x.tanh());
        let y = v.clone();
        self.push(
            v,
            vec![a],
            Some(Box::new(move |g: &Tensor| {
                vec![g.zip(&y, |gy, t| gy * (1.0 - t * t))]
            })),
            None,
        )
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).map(|x| 1.0 / (1.0 + (-x).exp()));
        let y = v.clone();
        self.push(
            v,
            vec![a],
            Some(Box::new(move |g: &Tensor| {
                vec![g.zip(&y, |gy, s| gy * s * (1.0 - s))]
            })),
            None,
        )
    }

    /// Horizontal flip (last axis); its own adjoint.
    pub fn flip_w(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).flip_w();
        self.push(
            v,
            vec![a],
            Some(Box::new(|g: &Tensor| vec![g.flip_w()])),
            None,
        )
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        let shape = self.shape(a);
        let s: f64 = self.value(a).data.iter().map(|&x| x as f64).sum();
        let id = self.push(
            Tensor::scalar(s as f32),
            vec![a],
            Some(Box::new(move |g: &Tensor| {
                let gy = g.item();
                vec![Tensor::from_vec(shape, vec![gy; shape.iter().product()])]
            })),
            None,
        )?;
        self.set_hi(id, s);
        Ok(id)
    }

    pub fn mean(&mut self, a: NodeId) -> Result<NodeId> {
        let n = self.value(a).numel() as f32;
        let s = self.sum(a)?;
        self.scale(s, 1.0 / n)
    }

    /// Mean of squared differences.
    pub fn mse_loss(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "mse_loss")?;
        let d = self.sub(a, b)?;
        let sq = self.mul(d, d)?;
        self.mean(sq)
    }

    /// Frobenius norm of the difference: sqrt(sum((a-b)^2)).
    ///
    /// Subgradient 0 at the fixed point a == b.
    pub fn l2_between(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "l2_between")?;
        let diff = self.value(a).zip(self.value(b), |x, y| x - y);
        let norm64 = diff.data.iter().map(|&d| d as f64 * d as f64).sum::<f64>().sqrt();
        let norm = norm64 as f32;
        let id = self.push(
            Tensor::scalar(norm),
            vec![a, b],
            Some(Box::new(move |g: &Tensor| {
                let gy = g.item();
                let scale = if norm > 0.0 { gy / norm } else { 0.0 };
                let ga = diff.map(|d| d * scale);
                let gb = ga.map(|x| -x);
                vec![ga, gb]
            })),
            None,
        )?;
        self.set_hi(id, norm64);
        Ok(id)
    }

    /// Mean of absolute differences.
    ///
    /// Subgradient 0 where a == b.
    pub fn l1_loss(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "l1_loss")?;
        let diff = self.value(a).zip(self.value(b), |x, y| x - y);
        let n = diff.numel();
        let mean64 = diff.data.iter().map(|&d| (d as f64).abs()).sum::<f64>() / n as f64;
        let id = self.push(
            Tensor::scalar(mean64 as f32),
            vec![a, b],
            Some(Box::new(move |g: &Tensor| {
                let gy = g.item() / n as f32;
                let ga = diff.map(|d| {
                    if d > 0.0 {
                        gy
                    } else if d < 0.0 {
                        -gy
                    } else {
                        0.0
                    }
                });
                let gb = ga.map(|x| -x);
                vec![ga, gb]
            })),
            None,
        )?;
        self.set_hi(id, mean64);
        Ok(id)
    }

    /// Extract one channel as a [n, 1, h, w] view.
    pub fn slice_channel(&mut self, x: NodeId, ch: usize) -> Result<NodeId> {
        let [n, c, h, w] = self.shape(x);
        if ch >= c {
            return Err(Error::ShapeMismatch(format!(
                "slice_channel {ch} of {c} channels"
            )));
        }
        let xv = self.value(x);
        let plane = h * w;
        let mut data = Vec::with_capacity(n * plane);
        for in_ in 0..n {
            let base = (in_ * c + ch) * plane;
            data.extend_from_slice(&xv.data[base..base + plane]);
        }
        self.push(
            Tensor::from_vec([n, 1, h, w], data),
            vec![x],
            Some(Box::new(move |g: &Tensor| {
                let mut gx = Tensor::zeros([n, c, h, w]);
                for in_ in 0..n {
                    let base = (in_ * c + ch) * plane;
                    gx.data[base..base + plane]
                        .copy_from_slice(&g.data[in_ * plane..(in_ + 1) * plane]);
                }
                vec![gx]
            })),
            None,
        )
    }

    /// Add a constant to every element.
    pub fn offset(&mut self, a: NodeId, c: f32) -> Result<NodeId> {
        let v = self.value(a).map(|x| x + c);
        let hi = self.hi(a).map(|h| h + c as f64);
        let id = self.push(
            v,
            vec![a],
            Some(Box::new(move |g: &Tensor| vec![g.clone()])),
            None,
        )?;
        if let Some(h) = hi {
            self.set_hi(id, h);
        }
        Ok(id)
    }

    /// Concatenate along the channel axis.
    pub fn concat_channels(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let [na, ca, ha, wa] = self.shape(a);
        let [nb, cb, hb, wb] = self.shape(b);
        if na != nb || ha != hb || wa != wb {
            return Err(Error::ShapeMismatch("concat_channels".into()));
        }
        let av = self.value(a);
        let bv = self.value(b);
        let mut data = Vec::with_capacity(av.numel() + bv.numel());
        for n in 0..na {
            let plane = ha * wa;
            data.extend_from_slice(&av.data[n * ca * plane..(n + 1) * ca * plane]);
            data.extend_from_slice(&bv.data[n * cb * plane..(n + 1) * cb * plane]);
        }
        let v = Tensor::from_vec([na, ca + cb, ha, wa], data);
        self.push(
            v,
            vec![a, b],
            Some(Box::new(move |g: &Tensor| {
                let plane = ha * wa;
                let mut ga = Tensor::zeros([na, ca, ha, wa]);
                let mut gb = Tensor::zeros([nb, cb, hb, wb]);
                for n in 0..na {
                    let base = n * (ca + cb) * plane;
                    ga.data[n * ca * plane..(n + 1) * ca * plane]
                        .copy_from_slice(&g.data[base..base + ca * plane]);
                    gb.data[n * cb * plane..(n + 1) * cb * plane]
                        .copy_from_slice(&g.data[base + ca * plane..base + (ca + cb) * plane]);
                }
                vec![ga, gb]
            })),
            None,
        )
    }

    /// 2D convolution; weight [co, ci, k, k], bias [1, co, 1, 1].
    pub fn conv2d(
        &mut self,
        x: NodeId,
        weight: NodeId,
        bias: NodeId,
        stride: usize,
        pad: usize,
    ) -> Result<NodeId> {
        let xv = self.value(x).clone();
        let wv = self.value(weight).clone();
        let bv = self.value(bias).clone();
        let [_n, ci, h, w] = xv.shape;
        let [co, wci, k, _k2] = wv.shape;
        if wci != ci || bv.shape != [1, co, 1, 1] {
            return Err(Error::ShapeMismatch(format!(
                "conv2d: x {:?} w {:?} b {:?}",
                xv.shape, wv.shape, bv.shape
            )));
        }
        if h + 2 * pad < k || w + 2 * pad < k {
            return Err(Error::ShapeMismatch("conv2d: kernel larger than padded input".into()));
        }
        let ho = (h + 2 * pad - k) / stride + 1;
        let wo = (w + 2 * pad - k) / stride + 1;
        let v = conv2d_forward(&xv, &wv, &bv, stride, pad, ho, wo);
        self.push(
            v,
            vec![x, weight, bias],
            Some(Box::new(move |g: &Tensor| {
                conv2d_backward(g, &xv, &wv, stride, pad)
            })),
            None,
        )
    }

    /// Nearest-neighbour 2x upsample.
    pub fn upsample_nearest2(&mut self, x: NodeId) -> Result<NodeId> {
        let [n, c, h, w] = self.shape(x);
        let xv = self.value(x);
        let mut out = Tensor::zeros([n, c, 2 * h, 2 * w]);
        for in_ in 0..n {
            for ic in 0..c {
                for ih in 0..2 * h {
                    for iw in 0..2 * w {
                        *out.at_mut(in_, ic, ih, iw) = xv.at(in_, ic, ih / 2, iw / 2);
                    }
                }
            }
        }
        self.push(
            out,
            vec![x],
            Some(Box::new(move |g: &Tensor| {
                let mut gx = Tensor::zeros([n, c, h, w]);
                for in_ in 0..n {
                    for ic in 0..c {
                        for ih in 0..2 * h {
                            for iw in 0..2 * w {
                                *gx.at_mut(in_, ic, ih / 2, iw / 2) += g.at(in_, ic, ih, iw);
                            }
                        }
                    }
                }
                vec![gx]
            })),
            None,
        )
    }

    /// Instance normalization with per-channel affine parameters
    /// (gain/bias shaped [1, c, 1, 1]).
    pub fn instance_norm(&mut self, x: NodeId, gain: NodeId, bias: NodeId) -> Result<NodeId> {
        let xv = self.value(x).clone();
        let gv = self.value(gain).clone();
        let bv = self.value(bias).clone();
        let [n, c, h, w] = xv.shape;
        if gv.shape != [1, c, 1, 1] || bv.shape != [1, c, 1, 1] {
            return Err(Error::ShapeMismatch("instance_norm affine shape".into()));
        }
        let m = (h * w) as f32;
        // Normalized activations and per-(n,c) inverse stddev, kept for VJP.
        let mut xhat = Tensor::zeros(xv.shape);
        let mut inv_std = vec![0.0f32; n * c];
        let mut out = Tensor::zeros(xv.shape);
        for in_ in 0..n {
            for ic in 0..c {
                let mut mu64 = 0.0f64;
                for ih in 0..h {
                    for iw in 0..w {
                        mu64 += xv.at(in_, ic, ih, iw) as f64;
                    }
                }
                let mu = (mu64 / m as f64) as f32;
                let mut var64 = 0.0f64;
                for ih in 0..h {
                    for iw in 0..w {
                        let d = (xv.at(in_, ic, ih, iw) - mu) as f64;
                        var64 += d * d;
                    }
                }
                let var = (var64 / m as f64) as f32;
                let is = 1.0 / (var + INSTANCE_NORM_EPS).sqrt();
                inv_std[in_ * c + ic] = is;
                let gamma = gv.at(0, ic, 0, 0);
                let beta = bv.at(0, ic, 0, 0);
                for ih in 0..h {
                    for iw in 0..w {
                        let xh = (xv.at(in_, ic, ih, iw) - mu) * is;
                        *xhat.at_mut(in_, ic, ih, iw) = xh;
                        *out.at_mut(in_, ic, ih, iw) = gamma * xh + beta;
                    }
                }
            }
        }
        self.push(
            out,
            vec![x, gain, bias],
            Some(Box::new(move |g: &Tensor| {
                let mut gx = Tensor::zeros([n, c, h, w]);
                let mut gg = Tensor::zeros([1, c, 1, 1]);
                let mut gb = Tensor::zeros([1, c, 1, 1]);
                for in_ in 0..n {
                    for ic in 0..c {
                        let gamma = gv.at(0, ic, 0, 0);
                        let is = inv_std[in_ * c + ic];
                        let mut sum_g = 0.0;
                        let mut sum_gx = 0.0;
                        for ih in 0..h {
                            for iw in 0..w {
                                let gy = g.at(in_, ic, ih, iw);
                                let xh = xhat.at(in_, ic, ih, iw);
                                sum_g += gy;
                                sum_gx += gy * xh;
                                *gg.at_mut(0, ic, 0, 0) += gy * xh;
                                *gb.at_mut(0, ic, 0, 0) += gy;
                            }
                        }
                        let mean_g = sum_g / m;
                        let mean_gx = sum_gx / m;
                        for ih in 0..h {
                            for iw in 0..w {
                                let gy = g.at(in_, ic, ih, iw);
                                let xh = xhat.at(in_, ic, ih, iw);
                                *gx.at_mut(in_, ic, ih, iw) =
                                    gamma * is * (gy - mean_g - xh * mean_gx);
                            }
                        }
                    }
                }
                vec![gx, gg, gb]
            })),
            None,
        )
    }

    /// Global average pool over (h, w): [n,c,h,w] -> [n,c,1,1].
    pub fn mean_pool_hw(&mut self, x: NodeId) -> Result<NodeId> {
        let [n, c, h, w] = self.shape(x);
        let xv = self.value(x);
        let m = (h * w) as f32;
        let mut out = Tensor::zeros([n, c, 1, 1]);
        for in_ in 0..n {
            for ic in 0..c {
                let mut s = 0.0f64;
                for ih in 0..h {
                    for iw in 0..w {
                        s += xv.at(in_, ic, ih, iw) as f64;
                    }
                }
                *out.at_mut(in_, ic, 0, 0) = (s / m as f64) as f32;
            }
        }
        self.push(
            out,
            vec![x],
            Some(Box::new(move |g: &Tensor| {
                let mut gx = Tensor::zeros([n, c, h, w]);
                for in_ in 0..n {
                    for ic in 0..c {
                        let gy = g.at(in_, ic, 0, 0) / m;
                        for ih in 0..h {
                            for iw in 0..w {
                                *gx.at_mut(in_, ic, ih, iw) = gy;
                            }
                        }
                    }
                }
                vec![gx]
            })),
            None,
        )
    }

    /// Flatten to a vector [1, 1, 1, numel].
    pub fn flatten(&mut self, x: NodeId) -> Result<NodeId> {
        let shape = self.shape(x);
        let v = Tensor::from_vec([1, 1, 1, shape.iter().product()], self.value(x).data.clone());
        self.push(
            v,
            vec![x],
            Some(Box::new(move |g: &Tensor| {
                vec![Tensor::from_vec(shape, g.data.clone())]
            })),
            None,
        )
    }

    /// Fully connected layer: x [1,1,1,in], weight [1,1,out,in], bias [1,1,1,out].
    pub fn linear(&mut self, x: NodeId, weight: NodeId, bias: NodeId) -> Result<NodeId> {
        let xv = self.value(x).clone();
        let wv = self.value(weight).clone();
        let bv = self.value(bias).clone();
        let inp = xv.shape[3];
        let (out, win) = (wv.shape[2], wv.shape[3]);
        if xv.shape[0] * xv.shape[1] * xv.shape[2] != 1 || win != inp || bv.shape[3] != out {
            return Err(Error::ShapeMismatch("linear".into()));
        }
        let mut y = vec![0.0f32; out];
        for o in 0..out {
            let mut s = bv.data[o] as f64;
            for i in 0..inp {
                s += (wv.data[o * inp + i] * xv.data[i]) as f64;
            }
            y[o] = s as f32;
        }
        self.push(
            Tensor::vector(&y),
            vec![x, weight, bias],
            Some(Box::new(move |g: &Tensor| {
                let mut gx = vec![0.0f32; inp];
                let mut gw = vec![0.0f32; out * inp];
                for o in 0..out {
                    let gy = g.data[o];
                    for i in 0..inp {
                        gx[i] += gy * wv.data[o * inp + i];
                        gw[o * inp + i] = gy * xv.data[i];
                    }
                }
                vec![
                    Tensor::vector(&gx),
                    Tensor::from_vec([1, 1, out, inp], gw),
                    g.clone(),
                ]
            })),
            None,
        )
    }

    /// Concatenate two vectors along the last axis.
    pub fn concat_vec(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let av = self.value(a).clone();
        let bv = self.value(b).clone();
        if av.shape[0] * av.shape[1] * av.shape[2] != 1 || bv.shape[0] * bv.shape[1] * bv.shape[2] != 1 {
            return Err(Error::ShapeMismatch("concat_vec expects vectors".into()));
        }
        let (na, nb) = (av.numel(), bv.numel());
        let mut data = av.data.clone();
        data.extend_from_slice(&bv.data);
        self.push(
            Tensor::from_vec([1, 1, 1, na + nb], data),
            vec![a, b],
            Some(Box::new(move |g: &Tensor| {
                vec![
                    Tensor::vector(&g.data[..na]),
                    Tensor::vector(&g.data[na..]),
                ]
            })),
            None,
        )
    }

    /// Elementwise hard maximum; the gradient goes to the winner (ties to a).
    pub fn max2(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "max2")?;
        let av = self.value(a).clone();
        let bv = self.value(b).clone();
        let v = av.zip(&bv, |x, y| x.max(y));
        self.push(
            v,
            vec![a, b],
            Some(Box::new(move |g: &Tensor| {
                let mut ga = Tensor::zeros(av.shape);
                let mut gb = Tensor::zeros(bv.shape);
                for i in 0..av.data.len() {
                    if av.data[i] >= bv.data[i] {
                        ga.data[i] = g.data[i];
                    } else {
                        gb.data[i] = g.data[i];
                    }
                }
                vec![ga, gb]
            })),
            None,
        )
    }

    /// Elementwise smooth maximum: tau * log(exp(a/tau) + exp(b/tau)).
    pub fn softmax2(&mut self, a: NodeId, b: NodeId, tau: f32) -> Result<NodeId> {
        self.same_shape(a, b, "softmax2")?;
        let av = self.value(a).clone();
        let bv = self.value(b).clone();
        let v = av.zip(&bv, |x, y| smooth_max(x, y, tau));
        self.push(
            v,
            vec![a, b],
            Some(Box::new(move |g: &Tensor| {
                let mut ga = Tensor::zeros(av.shape);
                let mut gb = Tensor::zeros(bv.shape);
                for i in 0..av.data.len() {
                    let (x, y) = (av.data[i], bv.data[i]);
                    let m = x.max(y);
                    let ex = ((x - m) / tau).exp();
                    let ey = ((y - m) / tau).exp();
                    let wa = ex / (ex + ey);
                    ga.data[i] = g.data[i] * wa;
                    gb.data[i] = g.data[i] * (1.0 - wa);
                }
                vec![ga, gb]
            })),
            None,
        )
    }

    /// SE(2) composition on 3-vectors (x, y, phi): prev then body-frame delta.
    pub fn se2_compose(&mut self, prev: NodeId, delta: NodeId) -> Result<NodeId> {
        let pv = self.value(prev).clone();
        let dv = self.value(delta).clone();
        if pv.numel() != 3 || dv.numel() != 3 {
            return Err(Error::ShapeMismatch("se2_compose expects 3-vectors".into()));
        }
        let (px, py, pphi) = (pv.data[0], pv.data[1], pv.data[2]);
        let (dx, dy, dphi) = (dv.data[0], dv.data[1], dv.data[2]);
        let (s, c) = pphi.sin_cos();
        let v = Tensor::vector(&[px + c * dx - s * dy, py + s * dx + c * dy, pphi + dphi]);
        self.push(
            v,
            vec![prev, delta],
            Some(Box::new(move |g: &Tensor| {
                let (gx, gy, gphi) = (g.data[0], g.data[1], g.data[2]);
                let gp = Tensor::vector(&[
                    gx,
                    gy,
                    gx * (-s * dx - c * dy) + gy * (c * dx - s * dy) + gphi,
                ]);
                let gd = Tensor::vector(&[gx * c + gy * s, -gx * s + gy * c, gphi]);
                vec![gp, gd]
            })),
            None,
        )
    }

    fn same_shape(&self, a: NodeId, b: NodeId, op: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::ShapeMismatch(format!(
                "{op}: {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }
}

fn smooth_max(x: f32, y: f32, tau: f32) -> f32 {
    let m = x.max(y);
    m + tau * (((x - m) / tau).exp() + ((y - m) / tau).exp()).ln()
}

fn conv2d_forward(
    x: &Tensor,
    w: &Tensor,
    b: &Tensor,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
) -> Tensor {
    let [n, ci, h, wi_] = x.shape;
    let [co, _, k, _] = w.shape;
    let mut out = Tensor::zeros([n, co, ho, wo]);
    let plane = ho * wo;
    for in_ in 0..n {
        let out_batch =
            &mut out.data[in_ * co * plane..(in_ + 1) * co * plane];
        out_batch
            .par_chunks_mut(plane)
            .enumerate()
            .for_each(|(oc, out_plane)| {
                for oh in 0..ho {
                    for ow in 0..wo {
                        // f64 accumulation keeps finite-difference oracles sharp
                        let mut acc = b.at(0, oc, 0, 0) as f64;
                        for ic in 0..ci {
                            for kh in 0..k {
                                let ih = (oh * stride + kh) as isize - pad as isize;
                                if ih < 0 || ih >= h as isize {
                                    continue;
                                }
                                for kw in 0..k {
                                    let iw = (ow * stride + kw) as isize - pad as isize;
                                    if iw < 0 || iw >= wi_ as isize {
                                        continue;
                                    }
                                    acc += (x.at(in_, ic, ih as usize, iw as usize)
                                        * w.at(oc, ic, kh, kw))
                                        as f64;
                                }
                            }
                        }
                        out_plane[oh * wo + ow] = acc as f32;
                    }
                }
            });
    }
    out
}

fn conv2d_backward(g: &Tensor, x: &Tensor, w: &Tensor, stride: usize, pad: usize) -> Vec<Tensor> {
    let [n, ci, h, wi_] = x.shape;
    let [co, _, k, _] = w.shape;
    let [_, _, ho, wo] = g.shape;
    let mut gx = Tensor::zeros(x.shape);
    let mut gw = Tensor::zeros(w.shape);
    let mut gb = Tensor::zeros([1, co, 1, 1]);

    for oc in 0..co {
        let mut s = 0.0;
        for in_ in 0..n {
            for oh in 0..ho {
                for ow in 0..wo {
                    s += g.at(in_, oc, oh, ow);
                }
            }
        }
        *gb.at_mut(0, oc, 0, 0) = s;
    }

    // Weight gradient: parallel over output channels (disjoint gw slices).
    let wplane = ci * k * k;
    gw.data
        .par_chunks_mut(wplane)
        .enumerate()
        .for_each(|(oc, gw_oc)| {
            for in_ in 0..n {
                for oh in 0..ho {
                    for ow in 0..wo {
                        let gy = g.at(in_, oc, oh, ow);
                        if gy == 0.0 {
                            continue;
                        }
                        for ic in 0..ci {
                            for kh in 0..k {
                                let ih = (oh * stride + kh) as isize - pad as isize;
                                if ih < 0 || ih >= h as isize {
                                    continue;
                                }
                                for kw in 0..k {
                                    let iw = (ow * stride + kw) as isize - pad as isize;
                                    if iw < 0 || iw >= wi_ as isize {
                                        continue;
                                    }
                                    gw_oc[(ic * k + kh) * k + kw] +=
                                        gy * x.at(in_, ic, ih as usize, iw as usize);
                                }
                            }
                        }
                    }
                }
            }
        });

    // Input gradient: parallel over input channels (disjoint gx slices).
    let xplane = h * wi_;
    for in_ in 0..n {
        let gx_batch = &mut gx.data[in_ * ci * xplane..(in_ + 1) * ci * xplane];
        gx_batch
            .par_chunks_mut(xplane)
            .enumerate()
            .for_each(|(ic, gx_ic)| {
                for oc in 0..co {
                    for oh in 0..ho {
                        for ow in 0..wo {
                            let gy = g.at(in_, oc, oh, ow);
                            if gy == 0.0 {
                                continue;
                            }
                            for kh in 0..k {
                                let ih = (oh * stride + kh) as isize - pad as isize;
                                if ih < 0 || ih >= h as isize {
                                    continue;
                                }
                                for kw in 0..k {
                                    let iw = (ow * stride + kw) as isize - pad as isize;
                                    if iw < 0 || iw >= wi_ as isize {
                                        continue;
                                    }
                                    gx_ic[ih as usize * wi_ + iw as usize] +=
                                        gy * w.at(oc, ic, kh, kw);
                                }
                            }
                        }
                    }
                }
            });
    }

    vec![gx, gw, gb]
}
