use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tensor;
use crate::error::Error;
use crate::geometry::{GridGeometry, Pose2};
use crate::nav::astar::path_cost;
use crate::nav::*;
use crate::world::{Action, Deployment, FloorPlan, RESOLUTION};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Believed map [1,2,h,w] that is fully explored and free.
fn open_map(h: usize, w: usize) -> Tensor {
    let mut t = Tensor::zeros([1, 2, h, w]);
    for i in h * w..2 * h * w {
        t.data[i] = 1.0;
    }
    t
}

fn set_obstacle(map: &mut Tensor, r: usize, c: usize) {
    *map.at_mut(0, 0, r, c) = 1.0;
}

fn set_unknown(map: &mut Tensor, r: usize, c: usize) {
    *map.at_mut(0, 1, r, c) = 0.0;
}

mod astar_tests {
    use super::*;

    #[test]
    fn start_equals_goal_gives_single_cell_path() {
        let map = open_map(8, 8);
        let path = astar_plan(&map, (3, 3), (3, 3)).unwrap();
        assert_eq!(path, vec![(3, 3)]);
    }

    #[test]
    fn empty_map_matches_closed_form_octile_distance() {
        let map = open_map(16, 16);
        let path = astar_plan(&map, (2, 3), (10, 7)).unwrap();
        let expect = 8.0 + (std::f64::consts::SQRT_2 - 1.0) * 4.0;
        assert!((path_cost(&map, &path) - expect).abs() < 1e-9);
        assert_eq!(path[0], (2, 3));
        assert_eq!(*path.last().unwrap(), (10, 7));
    }

    #[test]
    fn blocked_goal_and_walled_off_goal_are_unreachable() {
        let mut map = open_map(8, 8);
        set_obstacle(&mut map, 5, 5);
        assert!(matches!(
            astar_plan(&map, (1, 1), (5, 5)),
            Err(Error::Unreachable)
        ));
        let mut walled = open_map(8, 8);
        for c in 0..8 {
            set_obstacle(&mut walled, 4, c);
        }
        assert!(matches!(
            astar_plan(&walled, (1, 1), (7, 7)),
            Err(Error::Unreachable)
        ));
    }

    #[test]
    fn unknown_cells_cost_double_so_known_detours_win() {
        // straight route through an unknown strip (cost 2 per cell) vs a
        // known detour; on a 1-cell strip the straight route still wins,
        // so assert the cost accounting instead of the route choice
        let mut map = open_map(8, 8);
        for c in 0..8 {
            set_unknown(&mut map, 4, c);
        }
        let path = astar_plan(&map, (2, 3), (6, 3)).unwrap();
        assert!((path_cost(&map, &path) - 5.0).abs() < 1e-9, "4 known + 1 unknown");
    }

    /// Brute-force Dijkstra oracle over random maps: identical optimal cost.
    #[test]
    fn cost_matches_dijkstra_oracle_on_random_maps() {
        let mut r = rng(1);
        for trial in 0..20 {
            let (h, w) = (12, 12);
            let mut map = open_map(h, w);
            for rr in 0..h {
                for cc in 0..w {
                    if r.gen_bool(0.2) {
                        set_obstacle(&mut map, rr, cc);
                    }
                    if r.gen_bool(0.3) {
                        set_unknown(&mut map, rr, cc);
                    }
                }
            }
            *map.at_mut(0, 0, 0, 0) = 0.0;
            *map.at_mut(0, 0, h - 1, w - 1) = 0.0;
            let oracle = dijkstra(&map, (0, 0), (h - 1, w - 1));
            match astar_plan(&map, (0, 0), (h - 1, w - 1)) {
                Ok(path) => {
                    let cost = path_cost(&map, &path);
                    let best = oracle.expect("oracle disagrees on reachability");
                    assert!((cost - best).abs() < 1e-9, "trial {trial}: {cost} vs {best}");
                    // never cross a blocked cell
                    for &(pr, pc) in &path {
                        assert!(map.at(0, 0, pr, pc) <= 0.5);
                    }
                }
                Err(Error::Unreachable) => assert!(oracle.is_none(), "trial {trial}"),
                Err(e) => panic!("{e}"),
            }
        }
    }

    fn dijkstra(map: &Tensor, start: (usize, usize), goal: (usize, usize)) -> Option<f64> {
        let [_, _, h, w] = map.shape;
        let mut dist = vec![f64::INFINITY; h * w];
        dist[start.0 * w + start.1] = 0.0;
        let mut done = vec![false; h * w];
        loop {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for i in 0..h * w {
                if !done[i] && dist[i] < best {
                    best = dist[i];
                    u = i;
                }
            }
            if u == usize::MAX {
                break;
            }
            done[u] = true;
            let (ur, uc) = (u / w, u % w);
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    if dr == 0 && dc == 0 {
                        continue;
                    }
                    let (nr, nc) = (ur as i64 + dr, uc as i64 + dc);
                    if nr < 0 || nc < 0 || nr >= h as i64 || nc >= w as i64 {
                        continue;
                    }
                    let v = (nr as usize) * w + nc as usize;
                    if map.at(0, 0, nr as usize, nc as usize) > 0.5 {
                        continue;
                    }
                    let base = if dr != 0 && dc != 0 {
                        std::f64::consts::SQRT_2
                    } else {
                        1.0
                    };
                    let mult = if map.at(0, 1, nr as usize, nc as usize) <= 0.5 {
                        2.0
                    } else {
                        1.0
                    };
                    if dist[u] + base * mult < dist[v] {
                        dist[v] = dist[u] + base * mult;
                    }
                }
            }
        }
        let d = dist[goal.0 * w + goal.1];
        d.is_finite().then_some(d)
    }
}

mod frontier_tests {
    use super::*;

    fn geom10() -> GridGeometry<f32> {
        GridGeometry::new(10, 10, 0.05, Pose2::identity())
    }

    #[test]
    fn fully_explored_map_rotates_in_place() {
        let map = open_map(10, 10);
        let pose = Pose2::new(5.0 * 0.05, 5.0 * 0.05, 0.0);
        assert_eq!(
            frontier_explore_step(&map, &pose, &geom10()),
            Action::TurnLeft
        );
    }

    #[test]
    fn single_frontier_straight_ahead_drives_forward() {
        let mut map = open_map(10, 10);
        for r in 6..10 {
            for c in 0..10 {
                set_unknown(&mut map, r, c);
            }
        }
        // agent at cell (2,4) facing +row; nearest frontier is (5,4)
        let pose = Pose2::new(2.0 * 0.05, 4.0 * 0.05, 0.0);
        assert_eq!(
            frontier_explore_step(&map, &pose, &geom10()),
            Action::Forward
        );
    }

    #[test]
    fn equidistant_frontiers_break_ties_by_row_then_column_stably() {
        let mut map = open_map(10, 10);
        // unexplored pockets left and right of the agent, symmetric
        set_unknown(&mut map, 5, 1);
        set_unknown(&mut map, 5, 9);
        let pose = Pose2::new(5.0 * 0.05, 5.0 * 0.05, 0.0);
        // frontier candidates include (5,2) and (5,8), both distance 3:
        // lowest column wins, which lies to the agent's right (-y)
        let a1 = frontier_explore_step(&map, &pose, &geom10());
        let a2 = frontier_explore_step(&map, &pose, &geom10());
        assert_eq!(a1, Action::TurnRight);
        assert_eq!(a1, a2, "policy must be a pure function of its inputs");
    }
}

mod metric_tests {
    use super::*;

    fn result(success: bool, p: f64, l: f64, steps: usize, collisions: usize) -> EpisodeResult {
        EpisodeResult {
            success,
            path_length: p,
            shortest_length: l,
            steps,
            collisions,
            explored_trace: vec![],
        }
    }

    #[test]
    fn spl_formula_cases() {
        assert_eq!(spl(true, 5.0, 5.0).unwrap(), 1.0);
        assert_eq!(spl(false, 5.0, 3.0).unwrap(), 0.0);
        assert_eq!(spl(true, 5.0, 10.0).unwrap(), 0.5);
        // shorter-than-geodesic p cannot push SPL above 1
        assert_eq!(spl(true, 5.0, 4.0).unwrap(), 1.0);
        assert_eq!(spl(true, 0.0, 0.0).unwrap(), 1.0);
        assert!(matches!(spl(true, -1.0, 5.0), Err(Error::InvalidLength(_))));
        assert!(matches!(spl(true, 0.0, 5.0), Err(Error::InvalidLength(_))));
    }

    #[test]
    fn collision_ratio_cases() {
        assert_eq!(collision_ratio(&result(true, 1.0, 1.0, 100, 0)).unwrap(), 0.0);
        assert_eq!(collision_ratio(&result(true, 1.0, 1.0, 50, 50)).unwrap(), 1.0);
        assert_eq!(
            collision_ratio(&result(true, 1.0, 1.0, 100, 40)).unwrap(),
            0.4
        );
        assert!(matches!(
            collision_ratio(&result(true, 0.0, 0.0, 0, 0)),
            Err(Error::ZeroSteps)
        ));
    }
}

mod pointnav_tests {
    use super::*;

    /// 6 m x 6 m plan with only border walls.
    fn open_plan() -> FloorPlan {
        let n = 120;
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

    /// Open plan split by a full-width wall at row `rw`.
    fn wall_plan(rw: usize) -> FloorPlan {
        let n = 120;
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

    #[test]
    fn goal_at_start_is_immediate_success_with_full_spl() {
        let start = Pose2::new(1.5, 1.5, 0.0);
        let mut env = Deployment::clean(open_plan(), start).unwrap();
        let task = NavTask::new(Pose2::identity());
        let out = pointnav_episode(Perception::Oracle, &mut env, &task, &mut rng(2)).unwrap();
        assert!(out.success);
        assert_eq!(out.steps, 0);
        assert_eq!(
            spl(out.success, out.shortest_length, out.path_length).unwrap(),
            1.0
        );
    }

    #[test]
    fn oracle_agent_reaches_a_distant_goal_near_geodesically() {
        let start = Pose2::new(1.0, 1.0, 0.0);
        let mut env = Deployment::clean(open_plan(), start).unwrap();
        // ~3.9 m away, well inside the open area
        let task = NavTask::new(Pose2::new(3.0, 2.5, 0.0));
        let out = pointnav_episode(Perception::Oracle, &mut env, &task, &mut rng(3)).unwrap();
        assert!(out.success, "oracle failed: {out:?}");
        let (p, l) = (out.path_length, out.shortest_length);
        assert!(
            (p - l).abs() <= 0.1 * l,
            "path {p:.2} m vs geodesic {l:.2} m"
        );
        assert!(out.collisions <= out.steps);
    }

    #[test]
    fn unreachable_goal_fails_at_budget_with_zero_spl() {
        let start = Pose2::new(1.5, 1.5, 0.0);
        let mut env = Deployment::clean(wall_plan(60), start).unwrap();
        let mut task = NavTask::new(Pose2::new(3.5, 0.0, 0.0)); // across the wall
        task.budget = 150;
        let out = pointnav_episode(Perception::Oracle, &mut env, &task, &mut rng(4)).unwrap();
        assert!(!out.success);
        assert_eq!(out.steps, 150);
        assert!(out.shortest_length.is_infinite());
        assert_eq!(
            spl(out.success, out.shortest_length, out.path_length).unwrap(),
            0.0
        );
        // exploration happened along the way
        assert!(*out.explored_trace.last().unwrap() > *out.explored_trace.first().unwrap());
    }

    #[test]
    fn rejects_degenerate_tasks() {
        let start = Pose2::new(1.5, 1.5, 0.0);
        let mut env = Deployment::clean(open_plan(), start).unwrap();
        let mut task = NavTask::new(Pose2::identity());
        task.budget = 0;
        assert!(matches!(
            pointnav_episode(Perception::Oracle, &mut env, &task, &mut rng(5)),
            Err(Error::ConfigInvalid(_))
        ));
    }

    const _: f64 = RESOLUTION; // fixtures above assume the world cell size
}
