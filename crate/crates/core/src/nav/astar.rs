//! A* over a believed occupancy map: obstacle cells above 0.5 are blocked,
//! unexplored cells are traversable at twice the step cost.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Believed-map planning constants.
pub(crate) const OBSTACLE_THRESHOLD: f32 = 0.5;
pub(crate) const UNKNOWN_COST_MULT: f64 = 2.0;

const SQRT2: f64 = std::f64::consts::SQRT_2;

#[derive(PartialEq)]
struct QueueEntry {
    f: f64,
    cell: (usize, usize),
}

impl Eq for QueueEntry {}

impl Ord for QueueEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on f, deterministic tie-break on (row, col)
        other
            .f
            .partial_cmp(&self.f)
            .unwrap()
            .then_with(|| other.cell.cmp(&self.cell))
    }
}

impl PartialOrd for QueueEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn octile(a: (usize, usize), b: (usize, usize)) -> f64 {
    let dr = a.0.abs_diff(b.0) as f64;
    let dc = a.1.abs_diff(b.1) as f64;
    dr.max(dc) + (SQRT2 - 1.0) * dr.min(dc)
}

fn blocked(map: &Tensor, cell: (usize, usize)) -> bool {
    map.at(0, 0, cell.0, cell.1) > OBSTACLE_THRESHOLD
}

fn unknown(map: &Tensor, cell: (usize, usize)) -> bool {
    map.at(0, 1, cell.0, cell.1) <= 0.5
}

/// 8-connected shortest path on a believed map `[1, 2, h, w]` (obstacle,
/// explored channels). Returns the cell path from start to goal inclusive.
pub fn astar_plan(
    map: &Tensor,
    start: (usize, usize),
    goal: (usize, usize),
) -> Result<Vec<(usize, usize)>> {
    let [_, c, h, w] = map.shape;
    if c != 2 || start.0 >= h || start.1 >= w || goal.0 >= h || goal.1 >= w {
        return Err(Error::OutOfBounds(format!(
            "astar start {start:?} goal {goal:?} on {h}x{w}"
        )));
    }
    if blocked(map, goal) {
        return Err(Error::Unreachable);
    }
    if start == goal {
        return Ok(vec![start]);
    }

    let idx = |cell: (usize, usize)| cell.0 * w + cell.1;
    let mut dist = vec![f64::INFINITY; h * w];
    let mut prev = vec![usize::MAX; h * w];
    let mut heap = BinaryHeap::new();
    dist[idx(start)] = 0.0;
    heap.push(QueueEntry {
        f: octile(start, goal),
        cell: start,
    });

    while let Some(QueueEntry { f, cell }) = heap.pop() {
        let d = dist[idx(cell)];
        if f > d + octile(cell, goal) + 1e-12 {
            continue; // stale entry
        }
        if cell == goal {
            let mut path = vec![goal];
            let mut at = idx(goal);
            while prev[at] != usize::MAX {
                at = prev[at];
                path.push((at / w, at % w));
            }
            path.reverse();
            return Ok(path);
        }
        for dr in -1i64..=1 {
            for dc in -1i64..=1 {
                if dr == 0 && dc == 0 {
                    continue;
                }
                let nr = cell.0 as i64 + dr;
                let nc = cell.1 as i64 + dc;
                if nr < 0 || nc < 0 || nr >= h as i64 || nc >= w as i64 {
                    continue;
                }
                let next = (nr as usize, nc as usize);
                if blocked(map, next) {
                    continue;
                }
                let base = if dr != 0 && dc != 0 { SQRT2 } else { 1.0 };
                let mult = if unknown(map, next) {
                    UNKNOWN_COST_MULT
                } else {
                    1.0
                };
                let nd = d + base * mult;
                if nd + 1e-12 < dist[idx(next)] {
                    dist[idx(next)] = nd;
                    prev[idx(next)] = idx(cell);
                    heap.push(QueueEntry {
                        f: nd + octile(next, goal),
                        cell: next,
                    });
                }
            }
        }
    }
    Err(Error::Unreachable)
}

/// Cost of a returned path under the same model, for oracle comparisons.
#[cfg(test)]
pub(crate) fn path_cost(map: &Tensor, path: &[(usize, usize)]) -> f64 {
    path.windows(2)
        .map(|p| {
            let base = if p[0].0 != p[1].0 && p[0].1 != p[1].1 {
                SQRT2
            } else {
                1.0
            };
            let mult = if unknown(map, p[1]) {
                UNKNOWN_COST_MULT
            } else {
                1.0
            };
            base * mult
        })
        .sum()
}
