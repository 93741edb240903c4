use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::error::Result;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn rand_tensor(shape: [usize; 4], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_vec(
        shape,
        (0..shape.iter().product()).map(|_| rng.gen_range(-1.0..1.0f32)).collect(),
    )
}

#[test]
fn conv2d_identity_kernel() {
    let mut g = Graph::new();
    let x = g.leaf(rand_tensor([1, 1, 5, 5], &mut rng(0)));
    let w = g.leaf(Tensor::from_vec([1, 1, 1, 1], vec![1.0]));
    let b = g.leaf(Tensor::from_vec([1, 1, 1, 1], vec![0.0]));
    let y = g.conv2d(x, w, b, 1, 0).unwrap();
    assert_eq!(g.value(y).data, g.value(x).data);
}

#[test]
fn mse_of_self_is_zero_with_zero_grad() {
    let mut g = Graph::new();
    let x = g.leaf(rand_tensor([1, 1, 3, 3], &mut rng(1)));
    let y = g.detach(x);
    let loss = g.mse_loss(x, y).unwrap();
    assert_eq!(g.value(loss).item(), 0.0);
    let grads = g.backward(loss).unwrap();
    assert!(grads.of(x).unwrap().data.iter().all(|&v| v == 0.0));
}

/// Every primitive passes a central finite-difference check at 1e-3.
#[test]
fn primitives_pass_finite_difference_checks() {
    let mut r = rng(2);
    let target = rand_tensor([1, 2, 6, 6], &mut r);
    let t2 = target.clone();
    let cases: Vec<(&str, Box<dyn Fn(&mut Graph, NodeId) -> Result<NodeId>>, Tensor)> = vec![
        (
            "conv2d",
            {
                let w = rand_tensor([3, 2, 3, 3], &mut r);
                let b = rand_tensor([1, 3, 1, 1], &mut r);
                Box::new(move |g: &mut Graph, x: NodeId| {
                    let wi = g.leaf(w.clone());
                    let bi = g.leaf(b.clone());
                    let y = g.conv2d(x, wi, bi, 2, 1)?;
                    let sq = g.mul(y, y)?;
                    g.mean(sq)
                })
            },
            rand_tensor([1, 2, 6, 6], &mut r),
        ),
        (
            "leaky_relu",
            Box::new(|g, x| {
                let y = g.leaky_relu(x, 0.2)?;
                let sq = g.mul(y, y)?;
                g.sum(sq)
            }),
            // keep activations away from the kink at 0
            rand_tensor([1, 1, 4, 4], &mut r).map(|v| if v.abs() < 0.1 { v + 0.2 } else { v }),
        ),
        (
            "relu",
            Box::new(|g, x| {
                let y = g.relu(x)?;
                g.sum(y)
            }),
            rand_tensor([1, 1, 4, 4], &mut r).map(|v| if v.abs() < 0.1 { v + 0.2 } else { v }),
        ),
        (
            "tanh",
            Box::new(|g, x| {
                let y = g.tanh(x)?;
                let sq = g.mul(y, y)?;
                g.sum(sq)
            }),
            rand_tensor([1, 1, 4, 4], &mut r),
        ),
        (
            "sigmoid",
            Box::new(|g, x| {
                let y = g.sigmoid(x)?;
                let sq = g.mul(y, y)?;
                g.sum(sq)
            }),
            rand_tensor([1, 1, 4, 4], &mut r),
        ),
        (
            "instance_norm",
            {
                let gain = Tensor::from_vec([1, 2, 1, 1], vec![1.3, 0.7]);
                let bias = Tensor::from_vec([1, 2, 1, 1], vec![0.1, -0.2]);
                let t = target.clone();
                Box::new(move |g: &mut Graph, x: NodeId| {
                    let gi = g.leaf(gain.clone());
                    let bi = g.leaf(bias.clone());
                    let y = g.instance_norm(x, gi, bi)?;
                    let ti = g.leaf(t.clone());
                    g.mse_loss(y, ti)
                })
            },
            rand_tensor([1, 2, 6, 6], &mut r),
        ),
        (
            "upsample_conv",
            {
                let w = rand_tensor([1, 1, 3, 3], &mut r);
                let b = rand_tensor([1, 1, 1, 1], &mut r);
                Box::new(move |g: &mut Graph, x: NodeId| {
                    let u = g.upsample_nearest2(x)?;
                    let wi = g.leaf(w.clone());
                    let bi = g.leaf(b.clone());
                    let y = g.conv2d(u, wi, bi, 1, 1)?;
                    let sq = g.mul(y, y)?;
                    g.mean(sq)
                })
            },
            rand_tensor([1, 1, 4, 4], &mut r),
        ),
        (
            "l2_between",
            {
                let t = t2.clone();
                Box::new(move |g: &mut Graph, x: NodeId| {
                    let ti = g.leaf(t.clone());
                    g.l2_between(x, ti)
                })
            },
            rand_tensor([1, 2, 6, 6], &mut r),
        ),
        (
            "mse_loss",
            {
                let t = t2.clone();
                Box::new(move |g: &mut Graph, x: NodeId| {
                    let ti = g.leaf(t.clone());
                    g.mse_loss(x, ti)
                })
            },
            rand_tensor([1, 2, 6, 6], &mut r),
        ),
        (
            "l1_loss",
            {
                // keep every |a - t| well above eps so no kink is crossed
                let t = t2.map(|v| v + 0.1);
                Box::new(move |g: &mut Graph, x: NodeId| {
                    let ti = g.leaf(t.clone());
                    g.l1_loss(x, ti)
                })
            },
            t2.map(|v| v - 0.1),
        ),
        (
            "slice_channel",
            {
                let t = rand_tensor([1, 1, 4, 4], &mut r);
                Box::new(move |g: &mut Graph, x: NodeId| {
                    let y = g.slice_channel(x, 1)?;
                    let ti = g.leaf(t.clone());
                    g.mse_loss(y, ti)
                })
            },
            rand_tensor([1, 3, 4, 4], &mut r),
        ),
        (
            "offset",
            Box::new(|g: &mut Graph, x: NodeId| {
                let y = g.offset(x, 0.7)?;
                let sq = g.mul(y, y)?;
                g.mean(sq)
            }),
            rand_tensor([1, 2, 4, 4], &mut r),
        ),
        (
            "linear",
            {
                let w = rand_tensor([1, 1, 4, 8], &mut r);
                let b = rand_tensor([1, 1, 1, 4], &mut r);
                Box::new(move |g: &mut Graph, x: NodeId| {
                    let wi = g.leaf(w.clone());
                    let bi = g.leaf(b.clone());
                    let y = g.linear(x, wi, bi)?;
                    let sq = g.mul(y, y)?;
                    g.sum(sq)
                })
            },
            rand_tensor([1, 1, 1, 8], &mut r),
        ),
        (
            "softmax2",
            {
                let other = rand_tensor([1, 1, 4, 4], &mut r);
                Box::new(move |g: &mut Graph, x: NodeId| {
                    let o = g.leaf(other.clone());
                    let y = g.softmax2(x, o, 0.05)?;
                    g.sum(y)
                })
            },
            rand_tensor([1, 1, 4, 4], &mut r),
        ),
        (
            "flip_mul",
            Box::new(|g, x| {
                let f = g.flip_w(x)?;
                let y = g.mul(f, f)?;
                g.sum(y)
            }),
            rand_tensor([1, 1, 4, 4], &mut r),
        ),
        (
            "se2_compose",
            {
                Box::new(move |g: &mut Graph, x: NodeId| {
                    let prev = g.leaf(Tensor::vector(&[0.3, -0.2, 0.7]));
                    let y = g.se2_compose(prev, x)?;
                    let sq = g.mul(y, y)?;
                    g.sum(sq)
                })
            },
            Tensor::vector(&[0.25, 0.02, 0.17]),
        ),
        (
            "concat_channels",
            {
                let other = rand_tensor([1, 2, 4, 4], &mut r);
                Box::new(move |g: &mut Graph, x: NodeId| {
                    let o = g.leaf(other.clone());
                    let y = g.concat_channels(x, o)?;
                    let sq = g.mul(y, y)?;
                    g.mean(sq)
                })
            },
            rand_tensor([1, 3, 4, 4], &mut r),
        ),
        (
            "mean_pool_hw",
            Box::new(|g, x| {
                let y = g.mean_pool_hw(x)?;
                let sq = g.mul(y, y)?;
                g.sum(sq)
            }),
            rand_tensor([1, 3, 4, 4], &mut r),
        ),
    ];

    for (name, f, input) in cases {
        let report = check_gradients(f.as_ref(), &input, 1e-3).unwrap();
        assert!(
            report.passes(1e-3),
            "{name}: max rel err {:.2e} (abs {:.2e})",
            report.rel_err,
            report.max_abs_err
        );
    }
}

#[test]
fn composite_conv_relu_mse_passes_gradcheck() {
    let mut r = rng(5);
    let w = rand_tensor([2, 1, 3, 3], &mut r);
    let b = rand_tensor([1, 2, 1, 1], &mut r);
    let t = rand_tensor([1, 2, 4, 4], &mut r);
    let input = rand_tensor([1, 1, 4, 4], &mut r);
    let report = check_gradients(
        move |g, x| {
            let wi = g.leaf(w.clone());
            let bi = g.leaf(b.clone());
            let y = g.conv2d(x, wi, bi, 1, 1)?;
            let a = g.leaky_relu(y, 0.2)?;
            let ti = g.leaf(t.clone());
            g.mse_loss(a, ti)
        },
        &input,
        1e-3,
    )
    .unwrap();
    assert!(report.passes(1e-3), "rel {:.2e}", report.rel_err);
}

#[test]
fn linear_function_gradient_is_exact() {
    let input = Tensor::vector(&[0.5, -1.0, 2.0]);
    let report = check_gradients(
        |g, x| {
            let y = g.scale(x, 3.0)?;
            g.sum(y)
        },
        &input,
        1e-3,
    )
    .unwrap();
    assert!(report.max_abs_err < 1e-3, "abs {:.2e}", report.max_abs_err);
}

/// Mutation test: a deliberately wrong VJP must be flagged.
#[test]
fn broken_vjp_is_detected() {
    let input = Tensor::vector(&[0.4, 0.9, -0.3]);
    let report = check_gradients(
        |g, x| {
            // tanh forward but a relu-style (wrong) backward, built from
            // detached pieces: y = tanh(detach(x)) + 0*x gives zero grad.
            let d = g.detach(x);
            let t = g.tanh(d)?;
            let z = g.scale(x, 0.0)?;
            let y = g.add(t, z)?;
            g.sum(y)
        },
        &input,
        1e-3,
    )
    .unwrap();
    assert!(!report.passes(1e-3), "broken VJP slipped through");
}

#[test]
fn backward_is_linear_over_loss_sum() {
    let mut r = rng(6);
    let xval = rand_tensor([1, 1, 3, 3], &mut r);
    let t1 = rand_tensor([1, 1, 3, 3], &mut r);
    let t2 = rand_tensor([1, 1, 3, 3], &mut r);

    let grad_of = |losses: &[&Tensor]| -> Tensor {
        let mut g = Graph::new();
        let x = g.leaf(xval.clone());
        let mut total: Option<NodeId> = None;
        for t in losses {
            let ti = g.leaf((*t).clone());
            let l = g.mse_loss(x, ti).unwrap();
            total = Some(match total {
                None => l,
                Some(acc) => g.add(acc, l).unwrap(),
            });
        }
        let grads = g.backward(total.unwrap()).unwrap();
        grads.of(x).unwrap().clone()
    };

    let g_sum = grad_of(&[&t1, &t2]);
    let g1 = grad_of(&[&t1]);
    let g2 = grad_of(&[&t2]);
    for i in 0..g_sum.numel() {
        assert!((g_sum.data[i] - (g1.data[i] + g2.data[i])).abs() < 1e-6);
    }
}

mod grid_sample {
    use super::*;

    #[test]
    fn identity_pose_copies_input() {
        let mut r = rng(7);
        let input = rand_tensor([1, 1, 8, 8], &mut r);
        let mut g = Graph::new();
        let x = g.leaf(input.clone());
        // identity: patch center lands on output center, no rotation
        let p = g.leaf(Tensor::vector(&[4.0, 4.0, 0.0]));
        let y = g.grid_sample_se2(x, p, (8, 8)).unwrap();
        for i in 0..input.numel() {
            assert!((g.value(y).data[i] - input.data[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn one_cell_translation_shifts_interior() {
        let mut r = rng(8);
        let input = rand_tensor([1, 1, 8, 8], &mut r);
        let mut g = Graph::new();
        let x = g.leaf(input.clone());
        let p = g.leaf(Tensor::vector(&[5.0, 4.0, 0.0])); // +1 row
        let y = g.grid_sample_se2(x, p, (8, 8)).unwrap();
        // index-shift oracle: out(r+1, c) == in(r, c) in the interior
        for rr in 0..7 {
            for cc in 0..8 {
                assert!(
                    (g.value(y).at(0, 0, rr + 1, cc) - input.at(0, 0, rr, cc)).abs() < 1e-6,
                    "at ({rr},{cc})"
                );
            }
        }
    }

    #[test]
    fn pose_gradient_matches_finite_differences() {
        let mut r = rng(9);
        let input = rand_tensor([1, 1, 16, 16], &mut r);
        let target = rand_tensor([1, 1, 16, 16], &mut r);
        // non-integer offsets keep us away from bilinear kinks: scan for a
        // pose whose warped coordinates all clear the integer grid lines by
        // more than the finite-difference perturbation can move them
        let eps = 1e-4f32;
        let pose0 = (0..200)
            .map(|k| [8.3f32, 7.6, 0.35 + 0.013 * k as f32])
            .find(|&p| kink_clearance(p, (16, 16), (16, 16)) > 2e-3)
            .expect("no kink-free pose found");
        let report = check_gradients(
            move |g, p| {
                let x = g.leaf(input.clone());
                let y = g.grid_sample_se2(x, p, (16, 16))?;
                let t = g.leaf(target.clone());
                g.mse_loss(y, t)
            },
            &Tensor::vector(&pose0),
            eps,
        )
        .unwrap();
        eprintln!("pose rel err {:.3e}", report.rel_err);
        assert!(report.passes(1e-3), "pose rel err {:.2e}", report.rel_err);
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let mut r = rng(10);
        let input = rand_tensor([1, 1, 8, 8], &mut r);
        let target = rand_tensor([1, 1, 8, 8], &mut r);
        let report = check_gradients(
            move |g, x| {
                let p = g.leaf(Tensor::vector(&[4.2, 3.7, 0.3]));
                let y = g.grid_sample_se2(x, p, (8, 8))?;
                let t = g.leaf(target.clone());
                g.mse_loss(y, t)
            },
            &input,
            1e-3,
        )
        .unwrap();
        assert!(report.passes(1e-3), "input rel err {:.2e}", report.rel_err);
    }
}

mod adam_tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut ps = ParamSet::new();
        ps.add("w", Tensor::vector(&[1.0, 2.0, 3.0]));
        let before = ps.params[0].value.clone();
        let mut opt = Adam::with_lr(0.1);
        let mut grads = HashMap::new();
        grads.insert(0usize, Tensor::vector(&[0.0, 0.0, 0.0]));
        opt.step(&mut ps, &grads).unwrap();
        assert_eq!(ps.params[0].value, before);
    }

    #[test]
    fn first_step_magnitude_is_bias_corrected_lr() {
        // hand evaluation: m=0.1, v=0.001, mhat=1, vhat=1 -> step = lr
        let mut ps = ParamSet::new();
        ps.add("w", Tensor::scalar(0.0));
        let mut opt = Adam::with_lr(0.1);
        let mut grads = HashMap::new();
        grads.insert(0usize, Tensor::scalar(1.0));
        opt.step(&mut ps, &grads).unwrap();
        assert!((ps.params[0].value.item() + 0.1).abs() < 1e-6);
    }

    #[test]
    fn quadratic_bowl_converges() {
        // f(w) = 0.5*(w - 3)^2, closed-form minimum at 3
        let mut ps = ParamSet::new();
        ps.add("w", Tensor::scalar(0.0));
        let mut opt = Adam::with_lr(0.05);
        for _ in 0..500 {
            let w = ps.params[0].value.item();
            let mut grads = HashMap::new();
            grads.insert(0usize, Tensor::scalar(w - 3.0));
            opt.step(&mut ps, &grads).unwrap();
        }
        assert!((ps.params[0].value.item() - 3.0).abs() < 1e-4);
    }
}

mod checkpoint_tests {
    use super::*;

    #[test]
    fn roundtrip_is_exact() {
        let mut r = rng(11);
        let mut ps = ParamSet::new();
        ps.add("enc.w", rand_tensor([2, 1, 3, 3], &mut r));
        ps.add("enc.b", rand_tensor([1, 2, 1, 1], &mut r));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&ps, &path).unwrap();

        let mut ps2 = ParamSet::new();
        ps2.add("enc.w", Tensor::zeros([2, 1, 3, 3]));
        ps2.add("enc.b", Tensor::zeros([1, 2, 1, 1]));
        load_checkpoint(&mut ps2, &path).unwrap();
        assert_eq!(ps.params[0].value, ps2.params[0].value);
        assert_eq!(ps.params[1].value, ps2.params[1].value);
        assert_eq!(ps.content_hash(), ps2.content_hash());
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut ps = ParamSet::new();
        ps.add("w", Tensor::zeros([1, 1, 2, 2]));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&ps, &path).unwrap();
        let mut ps2 = ParamSet::new();
        ps2.add("w", Tensor::zeros([1, 1, 3, 3]));
        assert!(load_checkpoint(&mut ps2, &path).is_err());
    }
}
