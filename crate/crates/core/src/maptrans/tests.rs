use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, Tensor};
use crate::error::Error;
use crate::maptrans::*;
use crate::perception::{LocalizationModel, MappingModel, Pretrained};
use crate::world::{generate_floorplan, CorruptionSpec, Deployment, GmmNoiseModel};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn prov(step: usize) -> Provenance {
    Provenance { episode: 0, step }
}

mod dataset {
    use super::*;

    #[test]
    fn push_enforces_shape_and_range() {
        let mut ds = MapDataset::new(MapRole::Clean, MapScope::Ego);
        let ok = Tensor::from_vec([1, 1, 4, 4], vec![0.5; 16]);
        ds.push(ok.clone(), prov(0)).unwrap();
        let two_ch = Tensor::zeros([1, 2, 4, 4]);
        assert!(matches!(
            ds.push(two_ch, prov(1)),
            Err(Error::ShapeMismatch(_))
        ));
        let drift = Tensor::zeros([1, 1, 8, 8]);
        assert!(matches!(
            ds.push(drift, prov(1)),
            Err(Error::ShapeMismatch(_))
        ));
        let out_of_range = Tensor::from_vec([1, 1, 4, 4], vec![1.5; 16]);
        assert!(matches!(
            ds.push(out_of_range, prov(1)),
            Err(Error::ConfigInvalid(_))
        ));
    }

    #[test]
    fn pgm_roundtrip_preserves_quantized_values() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = rng(1);
        let mut ds = MapDataset::new(MapRole::Noisy, MapScope::Global);
        for i in 0..3 {
            let img = Tensor::from_vec(
                [1, 1, 8, 8],
                (0..64).map(|_| r.gen_range(0.0..1.0)).collect(),
            );
            ds.push(img, prov(i)).unwrap();
        }
        ds.save(dir.path()).unwrap();
        let loaded = MapDataset::load(dir.path()).unwrap();
        assert_eq!(loaded.role, MapRole::Noisy);
        assert_eq!(loaded.scope, MapScope::Global);
        assert_eq!(loaded.len(), 3);
        for (a, b) in ds.items.iter().zip(&loaded.items) {
            for (x, y) in a.image.data.iter().zip(&b.image.data) {
                // one 8-bit quantization step
                assert!((x - y).abs() <= 0.5 / 255.0 + 1e-6);
            }
            assert_eq!(a.provenance.step, b.provenance.step);
        }
    }

    #[test]
    fn resize_is_exact_on_constant_and_linear_images() {
        let flat = Tensor::from_vec([1, 1, 16, 16], vec![0.37; 256]);
        let up = resize_bilinear(&flat, 32, 32);
        assert!(up.data.iter().all(|&v| (v - 0.37).abs() < 1e-6));

        // a column ramp stays a ramp away from the clamped borders
        let ramp = Tensor::from_vec(
            [1, 1, 16, 16],
            (0..256).map(|i| (i % 16) as f32 / 15.0).collect(),
        );
        let down = resize_bilinear(&ramp, 8, 8);
        for c in 1..7 {
            let expect = ((c as f64 + 0.5) * 2.0 - 0.5) / 15.0;
            assert!(
                (down.at(0, 0, 4, c) as f64 - expect).abs() < 1e-6,
                "col {c}"
            );
        }
    }

    #[test]
    fn clean_collection_counts_match_stride_arithmetic() {
        let plan = generate_floorplan(7, 1.0).unwrap();
        let cfg = CollectConfig {
            episodes: 2,
            steps_per_episode: 30,
            ego_stride: 10,
        };
        let (ego, global) = collect_clean_maps(std::slice::from_ref(&plan), &cfg, 3).unwrap();
        // steps 0, 10, 20 per episode
        assert_eq!(ego.len(), 6);
        assert_eq!(global.len(), 2);
        assert_eq!(ego.item_shape(), Some([1, 1, 64, 64]));
        assert_eq!(global.item_shape(), Some([1, 1, GLOBAL_SIZE, GLOBAL_SIZE]));
        // sparsity diagnostic stays meaningful: some but not all cells set
        let f = global.mean_nonzero_fraction(0.5);
        assert!(f > 0.0 && f < 1.0, "obstacle fill fraction {f}");
    }

    #[test]
    fn noisy_collection_never_reads_ground_truth() {
        let plan = generate_floorplan(8, 1.0).unwrap();
        let mut r = rng(4);
        let agent = Pretrained {
            map: MappingModel::new(&mut r),
            loc: LocalizationModel::new(&mut r),
        };
        let spec = CorruptionSpec {
            speckle_sigma: 0.3,
            ..CorruptionSpec::identity()
        };
        let start = crate::world::random_navigable_pose(&plan, &mut r);
        let mut env = Deployment::new(
            plan,
            spec,
            GmmNoiseModel::act_default(),
            GmmNoiseModel::sen_default(),
            start,
        )
        .unwrap();
        let cfg = CollectConfig {
            episodes: 1,
            steps_per_episode: 12,
            ego_stride: 4,
        };
        let (ego, global) = collect_noisy_maps(&agent, &mut env, &cfg, 5).unwrap();
        assert_eq!(env.gt_read_count(), 0, "self-supervision audit");
        assert_eq!(ego.len(), 3);
        assert_eq!(global.len(), 1);
        assert_eq!(ego.role, MapRole::Noisy);
    }

    #[test]
    fn gt_accessors_bump_the_audit_counter() {
        let plan = generate_floorplan(9, 1.0).unwrap();
        let mut r = rng(5);
        let start = crate::world::random_navigable_pose(&plan, &mut r);
        let env = Deployment::clean(plan, start).unwrap();
        assert_eq!(env.gt_read_count(), 0);
        let _ = env.gt_pose();
        let _ = env.gt_ego().unwrap();
        assert_eq!(env.gt_read_count(), 2);
    }
}

mod style {
    use super::*;

    fn synth_corpora(n: usize, hw: usize, seed: u64) -> (MapDataset, MapDataset) {
        let mut r = rng(seed);
        let mut clean = MapDataset::new(MapRole::Clean, MapScope::Ego);
        let mut noisy = MapDataset::new(MapRole::Noisy, MapScope::Ego);
        for i in 0..n {
            // clean style: a crisp filled disc on empty ground
            let (cr, cc) = (
                r.gen_range(hw / 4..3 * hw / 4) as f64,
                r.gen_range(hw / 4..3 * hw / 4) as f64,
            );
            let rad = r.gen_range(2.0..hw as f64 / 4.0);
            let mut img = Tensor::zeros([1, 1, hw, hw]);
            for y in 0..hw {
                for x in 0..hw {
                    let d = ((y as f64 - cr).powi(2) + (x as f64 - cc).powi(2)).sqrt();
                    if d < rad {
                        *img.at_mut(0, 0, y, x) = 1.0;
                    }
                }
            }
            clean.push(img.clone(), prov(i)).unwrap();
            // noisy style: the same kind of content under speckle
            let speckled = Tensor::from_vec(
                img.shape,
                img.data
                    .iter()
                    .map(|&v| {
                        (v * (1.0 + 0.6 * (r.gen::<f32>() - 0.5)) + 0.1 * r.gen::<f32>())
                            .clamp(0.0, 1.0)
                    })
                    .collect(),
            );
            noisy.push(speckled, prov(i)).unwrap();
        }
        (clean, noisy)
    }

    fn tiny_cfg(iters: usize) -> CycleTrainConfig {
        CycleTrainConfig {
            iterations: iters,
            batch: 2,
            min_items: 8,
            ..CycleTrainConfig::default()
        }
    }

    #[test]
    fn cycle_term_is_exactly_zero_at_identity() {
        let mut r = rng(6);
        let x = Tensor::from_vec(
            [1, 1, 8, 8],
            (0..64).map(|_| r.gen_range(0.0..1.0)).collect(),
        );
        let mut g = Graph::new();
        let a = g.leaf(x.clone());
        let b = g.leaf(x);
        let c = g.l1_loss(a, b).unwrap();
        assert_eq!(g.value_f64(c), 0.0);
    }

    #[test]
    fn apply_preserves_shape_range_and_is_deterministic() {
        let mut r = rng(7);
        let net = TranslationNet::new([1, 1, 32, 32], &mut r);
        let x = Tensor::from_vec(
            [1, 1, 32, 32],
            (0..1024).map(|_| r.gen_range(0.0..1.0)).collect(),
        );
        let y1 = net.apply(&x).unwrap();
        let y2 = net.apply(&x).unwrap();
        assert_eq!(y1.shape, x.shape);
        assert!(y1.data.iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert_eq!(y1.data, y2.data);
        let wrong = Tensor::zeros([1, 1, 16, 16]);
        assert!(matches!(net.apply(&wrong), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn training_rejects_undersized_or_mismatched_corpora() {
        let (clean, noisy) = synth_corpora(4, 16, 8);
        assert!(matches!(
            train_style(&clean, &noisy, &tiny_cfg(1), 0),
            Err(Error::EmptyCorpus(_))
        ));
        let (clean, _) = synth_corpora(8, 16, 9);
        let (_, noisy_big) = synth_corpora(8, 32, 9);
        assert!(matches!(
            train_style(&clean, &noisy_big, &tiny_cfg(1), 0),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn short_training_is_finite_and_deterministic() {
        let (clean, noisy) = synth_corpora(10, 32, 10);
        let cfg = tiny_cfg(6);
        let (net1, stats1) = train_style(&clean, &noisy, &cfg, 42).unwrap();
        let (net2, _) = train_style(&clean, &noisy, &cfg, 42).unwrap();
        assert_eq!(stats1.len(), 6);
        for s in &stats1 {
            assert!(s.loss_g.is_finite() && s.loss_d.is_finite());
            assert!((0.0..=1.0).contains(&s.disc_accuracy));
        }
        assert_eq!(
            net1.params.content_hash(),
            net2.params.content_hash(),
            "seeded training must be bitwise deterministic"
        );
        let (net3, _) = train_style(&clean, &noisy, &cfg, 43).unwrap();
        assert_ne!(net1.params.content_hash(), net3.params.content_hash());
    }

    #[test]
    fn checkpoint_roundtrip_restores_the_network() {
        let mut r = rng(11);
        let net = TranslationNet::new([1, 1, 32, 32], &mut r);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("style.ckpt");
        net.save(&path).unwrap();
        let loaded = TranslationNet::load([1, 1, 32, 32], &path).unwrap();
        assert_eq!(net.params.content_hash(), loaded.params.content_hash());
    }

    #[test]
    fn probe_helper_reports_paired_mse_on_both_sides() {
        let mut r = rng(12);
        let net = TranslationNet::new([1, 1, 16, 16], &mut r);
        let noisy: Vec<Tensor> = (0..3)
            .map(|_| {
                Tensor::from_vec([1, 1, 16, 16], (0..256).map(|_| r.gen_range(0.0..1.0)).collect())
            })
            .collect();
        let clean: Vec<Tensor> = noisy.iter().map(|t| t.map(|v| v * 0.5)).collect();
        let (before, after) = paired_probe_mse(&net, &noisy, &clean).unwrap();
        assert!(before > 0.0 && after > 0.0);
        assert!(matches!(
            paired_probe_mse(&net, &noisy, &clean[..2]),
            Err(Error::LengthMismatch(3, 2))
        ));
    }
}
