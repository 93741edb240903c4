//! Pose-differentiable bilinear SE(2) resampler.
//!
//! Writes an agent-centered patch into an output grid frame. The pose is a
//! 3-vector tensor (row, col, phi) in output cell units: the patch center
//! (cell (V/2, V/2)) lands at (row, col) and the patch +row axis points
//! along heading phi. Gradients are exact w.r.t. both the patch cells and
//! the three pose components (zero padding outside the patch).
//!
//! Warp coordinates and bilinear weights are computed in f64 so that
//! finite-difference oracles on the pose path are not drowned in f32
//! round-off; stored values stay f32.

use crate::autodiff::graph::{Graph, NodeId};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

impl Graph {
    pub fn grid_sample_se2(
        &mut self,
        input: NodeId,
        pose: NodeId,
        out_hw: (usize, usize),
    ) -> Result<NodeId> {
        let xv = self.value(input).clone();
        let pv = self.value(pose).clone();
        if pv.numel() != 3 {
            return Err(Error::ShapeMismatch("grid_sample_se2 pose must have 3 elements".into()));
        }
        let [n, c, vh, vw] = xv.shape;
        if n != 1 {
            return Err(Error::ShapeMismatch("grid_sample_se2 expects batch 1".into()));
        }
        let (ho, wo) = out_hw;
        let (pr, pc, phi) = (pv.data[0] as f64, pv.data[1] as f64, pv.data[2] as f64);
        let (s, co) = phi.sin_cos();
        let (cr, cc) = ((vh / 2) as f64, (vw / 2) as f64);

        let mut out = Tensor::zeros([1, c, ho, wo]);
        for ch in 0..c {
            for r in 0..ho {
                for col in 0..wo {
                    let dr = r as f64 - pr;
                    let dc = col as f64 - pc;
                    // Inverse rotation into the patch frame.
                    let er = cr + co * dr + s * dc;
                    let ec = cc - s * dr + co * dc;
                    *out.at_mut(0, ch, r, col) = bilinear(&xv, ch, er, ec).0 as f32;
                }
            }
        }

        self.push(
            out,
            vec![input, pose],
            Some(Box::new(move |g: &Tensor| {
                let mut gx = Tensor::zeros([1, c, vh, vw]);
                let mut gp = [0.0f64; 3];
                for ch in 0..c {
                    for r in 0..ho {
                        for col in 0..wo {
                            let gy = g.at(0, ch, r, col) as f64;
                            if gy == 0.0 {
                                continue;
                            }
                            let dr = r as f64 - pr;
                            let dc = col as f64 - pc;
                            let er = cr + co * dr + s * dc;
                            let ec = cc - s * dr + co * dc;
                            let (_, vr, vc) = corners(&xv, Some(&mut gx), ch, er, ec, gy);
                            // Chain rule through the inverse warp.
                            let der_dpr = -co;
                            let dec_dpr = s;
                            let der_dpc = -s;
                            let dec_dpc = -co;
                            let der_dphi = -s * dr + co * dc;
                            let dec_dphi = -co * dr - s * dc;
                            gp[0] += gy * (vr * der_dpr + vc * dec_dpr);
                            gp[1] += gy * (vr * der_dpc + vc * dec_dpc);
                            gp[2] += gy * (vr * der_dphi + vc * dec_dphi);
                        }
                    }
                }
                vec![
                    gx,
                    Tensor::vector(&[gp[0] as f32, gp[1] as f32, gp[2] as f32]),
                ]
            })),
            None,
        )
    }
}

/// Bilinear read with zero padding; also returns (d val/d er, d val/d ec).
fn bilinear(x: &Tensor, ch: usize, er: f64, ec: f64) -> (f64, f64, f64) {
    corners(x, None, ch, er, ec, 0.0)
}

/// Smallest distance of any warped sample coordinate to an integer grid
/// line, over an `out_hw` output and a `patch_hw` patch. Finite-difference
/// checks of the pose path need this clearance to exceed the perturbation
/// radius: bilinear interpolation has slope kinks on integer lines.
pub fn kink_clearance(pose: [f32; 3], patch_hw: (usize, usize), out_hw: (usize, usize)) -> f32 {
    let (pr, pc, phi) = (pose[0], pose[1], pose[2]);
    let (s, co) = phi.sin_cos();
    let (cr, cc) = ((patch_hw.0 / 2) as f32, (patch_hw.1 / 2) as f32);
    let mut min = f32::INFINITY;
    for r in 0..out_hw.0 {
        for col in 0..out_hw.1 {
            let dr = r as f32 - pr;
            let dc = col as f32 - pc;
            let er = cr + co * dr + s * dc;
            let ec = cc - s * dr + co * dc;
            for v in [er, ec] {
                min = min.min((v - v.round()).abs());
            }
        }
    }
    min
}

/// Bilinear read over the four corner cells; optionally scatters `gy` times
/// the corner weights into `gx`.
fn corners(
    x: &Tensor,
    mut gx: Option<&mut Tensor>,
    ch: usize,
    er: f64,
    ec: f64,
    gy: f64,
) -> (f64, f64, f64) {
    let [_, _, vh, vw] = x.shape;
    let r0f = er.floor();
    let c0f = ec.floor();
    let fr = er - r0f;
    let fc = ec - c0f;
    let r0 = r0f as i64;
    let c0 = c0f as i64;
    let mut val = 0.0;
    let mut vr = 0.0;
    let mut vc = 0.0;
    for (dr, wr, dwr) in [(0i64, 1.0 - fr, -1.0f64), (1, fr, 1.0)] {
        for (dc, wc, dwc) in [(0i64, 1.0 - fc, -1.0f64), (1, fc, 1.0)] {
            let rr = r0 + dr;
            let cc = c0 + dc;
            if rr < 0 || cc < 0 || rr >= vh as i64 || cc >= vw as i64 {
                continue;
            }
            let v = x.at(0, ch, rr as usize, cc as usize) as f64;
            val += wr * wc * v;
            vr += dwr * wc * v;
            vc += wr * dwc * v;
            if let Some(gx) = gx.as_deref_mut() {
                *gx.at_mut(0, ch, rr as usize, cc as usize) += (gy * wr * wc) as f32;
            }
        }
    }
    (val, vr, vc)
}
