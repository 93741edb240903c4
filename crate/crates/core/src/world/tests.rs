use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::geometry::{Channel, Pose2};

const RES: f64 = RESOLUTION;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A 12 m x 12 m plan with only border walls.
fn open_plan() -> FloorPlan {
    let n = 240;
    let mut solid = vec![false; n * n];
    for r in 0..n {
        for c in 0..n {
            if r < 3 || c < 3 || r >= n - 3 || c >= n - 3 {
                solid[r * n + c] = true;
            }
        }
    }
    FloorPlan::from_solid(solid, n, 1.0).unwrap()
}

/// Open plan plus a solid wall spanning all columns at row `rw`.
fn wall_plan(rw: usize) -> FloorPlan {
    let n = 240;
    let mut solid = vec![false; n * n];
    for r in 0..n {
        for c in 0..n {
            if r < 3 || c < 3 || r >= n - 3 || c >= n - 3 || r == rw {
                solid[r * n + c] = true;
            }
        }
    }
    FloorPlan::from_solid(solid, n, 1.0).unwrap()
}

fn center_pose() -> Pose2<f64> {
    Pose2::new(120.0 * RES, 120.0 * RES, 0.0)
}

mod floorplan {
    use super::*;

    #[test]
    fn same_seed_is_bit_identical() {
        let a = generate_floorplan(7, 1.0).unwrap();
        let b = generate_floorplan(7, 1.0).unwrap();
        assert_eq!(a.obstacle, b.obstacle);
        assert_eq!(a.navigable, b.navigable);
    }

    #[test]
    fn scale_two_quadruples_area() {
        let a = generate_floorplan(11, 1.0).unwrap();
        let b = generate_floorplan(11, 2.0).unwrap();
        let ratio = b.navigable_area_m2 / a.navigable_area_m2;
        assert!((ratio - 4.0).abs() <= 0.8, "area ratio {ratio}");
    }

    #[test]
    fn seed_sweep_satisfies_connectivity() {
        for seed in 0..100 {
            let plan = generate_floorplan(seed, 1.0).unwrap();
            // largest 4-connected navigable component must be >= 4 m²
            let area = plan.component.iter().filter(|&&b| b).count() as f64 * RES * RES;
            assert!(area >= 4.0, "seed {seed}: component {area} m²");
        }
    }

    #[test]
    fn scale_factor_out_of_range_is_rejected() {
        assert!(generate_floorplan(0, 0.4).is_err());
        assert!(generate_floorplan(0, 4.1).is_err());
    }

    #[test]
    fn save_writes_raster_and_sidecar() {
        let plan = generate_floorplan(3, 1.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("plan.grid");
        plan.save(&path).unwrap();
        let meta = std::fs::read_to_string(dir.path().join("plan.meta")).unwrap();
        assert!(meta.contains("seed = 3"));
        let grid = crate::geometry::read_grid_raw(std::fs::File::open(&path).unwrap()).unwrap();
        assert_eq!(grid.geometry.height, plan.geometry.height);
    }
}

mod panorama {
    use super::*;

    #[test]
    fn open_area_is_near_black() {
        let plan = open_plan();
        let pan = render_panorama(&plan, &center_pose()).unwrap();
        // max range 4 m: intensity at most 1/(1+4) = 0.2, most pixels empty
        assert!(pan.data.iter().all(|&v| v <= 0.2 + 1e-6));
        let mean: f32 = pan.data.iter().sum::<f32>() / pan.data.len() as f32;
        assert!(mean < 0.05, "mean {mean}");
    }

    #[test]
    fn wall_one_meter_ahead_reads_half() {
        // wall cell at row 160: surface at 160*res - res/2 = 7.975 m
        let plan = wall_plan(160);
        let pose = Pose2::new(7.975 - 1.0, 120.0 * RES, 0.0);
        let pan = render_panorama(&plan, &pose).unwrap();
        for k in [31, 32] {
            let bottom = pan.at(PANO_SIZE - 1, k);
            assert!((bottom - 0.5).abs() <= 0.05, "column {k}: {bottom}");
        }
    }

    #[test]
    fn render_is_deterministic() {
        let plan = generate_floorplan(5, 1.0).unwrap();
        let pose = random_navigable_pose(&plan, &mut rng(1));
        let a = render_panorama(&plan, &pose).unwrap();
        let b = render_panorama(&plan, &pose).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn pose_in_obstacle_is_rejected() {
        let plan = open_plan();
        assert!(matches!(
            render_panorama(&plan, &Pose2::new(0.05, 0.05, 0.0)),
            Err(crate::error::Error::PoseInObstacle)
        ));
    }
}

mod ego_gt {
    use super::*;

    #[test]
    fn open_space_gives_forward_wedge_no_obstacles() {
        let plan = open_plan();
        let ego = render_ego_gt(&plan, &center_pose()).unwrap();
        let v = EGO_SIZE;
        assert!(ego.grid.channel(Channel::Obstacle).iter().all(|&o| o == 0.0));
        // straight ahead (larger row, same col) is explored
        assert_eq!(ego.grid.channel(Channel::Explored)[(v / 2 + 10) * v + v / 2], 1.0);
        // behind the agent is not
        assert_eq!(ego.grid.channel(Channel::Explored)[(v / 2 - 10) * v + v / 2], 0.0);
        // just outside the 90° wedge (bearing 50° left) is not
        let (dr, dc) = (10.0 * 50f64.to_radians().cos(), 10.0 * 50f64.to_radians().sin());
        let idx = ((v / 2) as i64 + dr.round() as i64) as usize * v
            + ((v / 2) as i64 + dc.round() as i64) as usize;
        assert_eq!(ego.grid.channel(Channel::Explored)[idx], 0.0);
    }

    #[test]
    fn obstacle_never_exceeds_explored_on_random_poses() {
        let plan = generate_floorplan(9, 1.0).unwrap();
        let mut r = rng(2);
        for _ in 0..1000 {
            let pose = random_navigable_pose(&plan, &mut r);
            let ego = render_ego_gt(&plan, &pose).unwrap();
            assert!(ego.grid.invariants_hold());
        }
    }

    #[test]
    fn wall_occludes_cells_behind_it() {
        // wall surface 1 m ahead; cells 1.5 m ahead must stay unexplored
        let plan = wall_plan(160);
        let pose = Pose2::new(7.975 - 1.0, 120.0 * RES, 0.0);
        let ego = render_ego_gt(&plan, &pose).unwrap();
        let v = EGO_SIZE;
        let behind = (v / 2 + (1.5 / RES) as usize) * v + v / 2;
        assert_eq!(ego.grid.channel(Channel::Explored)[behind], 0.0);
        // while the wall itself is seen as obstacle
        let wall_row = v / 2 + (1.0 / RES).round() as usize;
        assert_eq!(ego.grid.channel(Channel::Obstacle)[wall_row * v + v / 2], 1.0);
    }
}

mod corruption {
    use super::*;

    fn mid_gray() -> Panorama {
        let mut p = Panorama::zeros(8, 8);
        p.data.fill(0.5);
        p
    }

    #[test]
    fn identity_spec_is_bit_exact() {
        let plan = generate_floorplan(4, 1.0).unwrap();
        let pose = random_navigable_pose(&plan, &mut rng(3));
        let pan = render_panorama(&plan, &pose).unwrap();
        let out = corrupt(&pan, &CorruptionSpec::identity(), &mut rng(0));
        assert_eq!(out, pan);
    }

    #[test]
    fn pure_gain_scales_every_pixel() {
        let pan = mid_gray();
        let spec = CorruptionSpec {
            speckle_sigma: 0.0,
            lighting_gain: 0.4,
            lighting_bias: 0.0,
            scale_factor: 1.0,
        };
        let out = corrupt(&pan, &spec, &mut rng(0));
        for (o, i) in out.data.iter().zip(&pan.data) {
            assert_eq!(*o, (0.4 * *i as f64).clamp(0.0, 1.0) as f32);
        }
    }

    #[test]
    fn speckle_preserves_mean_of_mid_gray() {
        let mut p = Panorama::zeros(1, 1);
        p.data[0] = 0.5;
        let spec = CorruptionSpec {
            speckle_sigma: 0.3,
            lighting_gain: 1.0,
            lighting_bias: 0.0,
            scale_factor: 1.0,
        };
        let mut r = rng(4);
        let n = 100_000;
        let mut sum = 0.0f64;
        for _ in 0..n {
            sum += corrupt(&p, &spec, &mut r).data[0] as f64;
        }
        let mean = sum / n as f64;
        // sd of one draw = 0.5 * 0.3
        let tol = 3.0 * 0.5 * 0.3 / (n as f64).sqrt();
        assert!((mean - 0.5).abs() < tol, "mean {mean}, tol {tol}");
    }
}

mod gmm {
    use super::*;

    #[test]
    fn degenerate_model_is_exactly_zero() {
        let m = GmmNoiseModel::zero();
        m.validate().unwrap();
        assert_eq!(m.sample(&mut rng(0)), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn empirical_mean_matches_component_mean() {
        let m = GmmNoiseModel {
            components: vec![super::super::noise::GmmComponent {
                weight: 1.0,
                mean: [0.01, 0.0, 0.0],
                stddev: [0.01, 0.01, 0.01],
            }],
        };
        m.validate().unwrap();
        let mut r = rng(5);
        let n = 100_000;
        let mut sum = [0.0f64; 3];
        for _ in 0..n {
            let s = m.sample(&mut r);
            for i in 0..3 {
                sum[i] += s[i];
            }
        }
        let tol = 4.0 * 0.01 / (n as f64).sqrt();
        assert!((sum[0] / n as f64 - 0.01).abs() < tol);
        assert!((sum[1] / n as f64).abs() < tol);
        assert!((sum[2] / n as f64).abs() < tol);
    }

    #[test]
    fn component_selection_matches_weights() {
        let m = GmmNoiseModel {
            components: vec![
                super::super::noise::GmmComponent {
                    weight: 0.7,
                    mean: [1.0, 0.0, 0.0],
                    stddev: [0.0; 3],
                },
                super::super::noise::GmmComponent {
                    weight: 0.3,
                    mean: [2.0, 0.0, 0.0],
                    stddev: [0.0; 3],
                },
            ],
        };
        m.validate().unwrap();
        let mut r = rng(6);
        let n = 100_000;
        let picked_first = (0..n).filter(|_| m.sample(&mut r)[0] == 1.0).count();
        let freq = picked_first as f64 / n as f64;
        assert!((freq - 0.7).abs() < 0.01, "freq {freq}");
    }

    #[test]
    fn invalid_weights_are_rejected() {
        let mut m = GmmNoiseModel::act_default();
        m.components[0].weight = 0.5;
        assert!(m.validate().is_err());
    }
}

mod dynamics {
    use super::*;

    #[test]
    fn forward_in_open_space_advances_quarter_meter() {
        let plan = open_plan();
        let pose = Pose2::new(6.0, 6.0, 0.7);
        let out = step_dynamics(&plan, &pose, Action::Forward, &GmmNoiseModel::zero(), &mut rng(0));
        assert!(!out.collided);
        assert!((out.pose.x - (6.0 + 0.25 * 0.7f64.cos())).abs() < 1e-12);
        assert!((out.pose.y - (6.0 + 0.25 * 0.7f64.sin())).abs() < 1e-12);
        assert_eq!(out.delta_true.x, 0.25);
    }

    #[test]
    fn turn_left_only_rotates() {
        let plan = open_plan();
        let pose = Pose2::new(6.0, 6.0, 0.0);
        let out = step_dynamics(&plan, &pose, Action::TurnLeft, &GmmNoiseModel::zero(), &mut rng(0));
        assert_eq!((out.pose.x, out.pose.y), (6.0, 6.0));
        assert!((out.pose.phi - 10f64.to_radians()).abs() < 1e-12);
        assert!(!out.collided);
    }

    #[test]
    fn wall_just_ahead_truncates_motion() {
        // wall surface at 7.975 m; disc front edge 0.05 m before it
        let plan = wall_plan(160);
        let pose = Pose2::new(7.975 - AGENT_RADIUS - 0.05, 120.0 * RES, 0.0);
        let out = step_dynamics(&plan, &pose, Action::Forward, &GmmNoiseModel::zero(), &mut rng(0));
        assert!(out.collided);
        let moved = out.pose.x - pose.x;
        assert!((moved - 0.05).abs() < 1e-3, "moved {moved}");
        assert!(plan.disc_clear(out.pose.x, out.pose.y, AGENT_RADIUS));
    }

    #[test]
    fn zero_noise_rollout_composes_open_loop() {
        let plan = open_plan();
        let mut pose = center_pose();
        let mut acc = Pose2::identity();
        let mut open_loop = center_pose();
        let actions = [
            Action::Forward,
            Action::TurnLeft,
            Action::Forward,
            Action::TurnRight,
            Action::TurnRight,
            Action::Forward,
        ];
        for a in actions {
            let out = step_dynamics(&plan, &pose, a, &GmmNoiseModel::zero(), &mut rng(0));
            assert!(!out.collided);
            acc = acc.compose(&out.delta_true);
            let u = a.control();
            open_loop = open_loop.compose(&Pose2::new(u[0], u[1], u[2]));
            pose = out.pose;
        }
        let final_pose = center_pose().compose(&acc);
        assert!(final_pose.translation_distance(&pose) < 1e-9);
        assert!(open_loop.translation_distance(&pose) < 1e-9);
        assert!(open_loop.rotation_distance(&pose) < 1e-9);
    }

    #[test]
    fn noisy_rollout_never_enters_obstacles() {
        let plan = generate_floorplan(13, 1.0).unwrap();
        let mut r = rng(7);
        let mut pose = random_navigable_pose(&plan, &mut r);
        let act = GmmNoiseModel::act_default();
        for i in 0..300 {
            let a = Action::ALL[i % 3];
            let out = step_dynamics(&plan, &pose, a, &act, &mut r);
            assert!(
                plan.disc_clear(out.pose.x, out.pose.y, AGENT_RADIUS),
                "step {i} entered an obstacle"
            );
            pose = out.pose;
        }
    }

    #[test]
    fn odometry_zero_noise_is_exact() {
        let d = Pose2::new(0.25, 0.0, 0.01);
        assert_eq!(read_odometry(&d, &GmmNoiseModel::zero(), &mut rng(0)), [0.25, 0.0, 0.01]);
    }

    #[test]
    fn odometry_fixed_bias_shifts_exactly() {
        let m = GmmNoiseModel {
            components: vec![super::super::noise::GmmComponent {
                weight: 1.0,
                mean: [0.01, 0.0, 0.005],
                stddev: [0.0; 3],
            }],
        };
        let d = Pose2::new(0.25, 0.0, 0.0);
        assert_eq!(read_odometry(&d, &m, &mut rng(0)), [0.26, 0.0, 0.005]);
    }

    #[test]
    fn odometry_bias_matches_mixture_mean() {
        let m = GmmNoiseModel::sen_default();
        m.validate().unwrap();
        let d = Pose2::identity();
        let mut r = rng(8);
        let n = 100_000;
        let mut sum = [0.0f64; 3];
        for _ in 0..n {
            let s = read_odometry(&d, &m, &mut r);
            for i in 0..3 {
                sum[i] += s[i];
            }
        }
        let expect = m.mean();
        for i in 0..3 {
            let emp = sum[i] / n as f64;
            // conservative Monte-Carlo tolerance from the largest stddev
            let tol = 4.0 * 0.01 / (n as f64).sqrt();
            assert!((emp - expect[i]).abs() < tol, "axis {i}: {emp} vs {}", expect[i]);
        }
    }
}

mod paths {
    use super::*;

    #[test]
    fn zero_length_for_same_pose() {
        let plan = open_plan();
        let p = center_pose();
        assert_eq!(shortest_path_length(&plan, &p, &p).unwrap(), 0.0);
    }

    #[test]
    fn straight_corridor_measures_two_meters() {
        let plan = open_plan();
        let a = Pose2::new(4.0, 6.0, 0.0);
        let b = Pose2::new(6.0, 6.0, 0.0);
        let d = shortest_path_length(&plan, &a, &b).unwrap();
        assert!((d - 2.0).abs() <= RES + 1e-9, "d {d}");
    }

    /// Brute-force Dijkstra without a heuristic, for the oracle check.
    fn dijkstra(plan: &FloorPlan, start: usize, goal: usize) -> Option<f64> {
        let (n, _) = plan.cells();
        let mut dist = vec![f64::INFINITY; n * n];
        dist[start] = 0.0;
        let mut heap = std::collections::BinaryHeap::new();
        heap.push((std::cmp::Reverse(ordered_float(0.0)), start));
        while let Some((std::cmp::Reverse(d), i)) = heap.pop() {
            let d = d.0;
            if i == goal {
                return Some(d);
            }
            if d > dist[i] + 1e-12 {
                continue;
            }
            let (r, c) = ((i / n) as i64, (i % n) as i64);
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    if dr == 0 && dc == 0 {
                        continue;
                    }
                    let (rr, cc) = (r + dr, c + dc);
                    if rr < 0 || cc < 0 || rr >= n as i64 || cc >= n as i64 {
                        continue;
                    }
                    let j = (rr * n as i64 + cc) as usize;
                    if !plan.navigable[j] {
                        continue;
                    }
                    let step = if dr != 0 && dc != 0 {
                        std::f64::consts::SQRT_2 * RES
                    } else {
                        RES
                    };
                    if dist[i] + step < dist[j] {
                        dist[j] = dist[i] + step;
                        heap.push((std::cmp::Reverse(ordered_float(dist[j])), j));
                    }
                }
            }
        }
        None
    }

    #[derive(PartialEq, PartialOrd)]
    struct OrderedF64(f64);
    impl Eq for OrderedF64 {}
    #[allow(clippy::derive_ord_xor_partial_ord)]
    impl Ord for OrderedF64 {
        fn cmp(&self, o: &Self) -> std::cmp::Ordering {
            self.0.partial_cmp(&o.0).unwrap()
        }
    }
    fn ordered_float(v: f64) -> OrderedF64 {
        OrderedF64(v)
    }

    #[test]
    fn matches_dijkstra_oracle_on_random_pairs() {
        let plan = generate_floorplan(17, 1.0).unwrap();
        let (n, _) = plan.cells();
        let mut r = rng(9);
        for _ in 0..20 {
            let a = random_navigable_pose(&plan, &mut r);
            let b = random_navigable_pose(&plan, &mut r);
            let fast = shortest_path_length(&plan, &a, &b).unwrap();
            let ai = (a.x / RES).round() as usize * n + (a.y / RES).round() as usize;
            let bi = (b.x / RES).round() as usize * n + (b.y / RES).round() as usize;
            let oracle = dijkstra(&plan, ai, bi).unwrap();
            assert!((fast - oracle).abs() < 1e-9, "{fast} vs {oracle}");
        }
    }
}
