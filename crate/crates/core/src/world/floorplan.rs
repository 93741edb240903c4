//! Procedural axis-aligned floorplans: rooms carved out of solid wall,
//! L-shaped corridors between them, rectangular furniture.

use std::collections::BinaryHeap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{GridGeometry, Pose2};

/// Grid resolution in meters per cell, shared with the map stack.
pub const RESOLUTION: f64 = 0.05;
/// Side length of a scale-1 plan in meters.
const BASE_EXTENT_M: f64 = 6.0;
/// Outer wall thickness in meters.
const WALL_M: f64 = 0.15;
/// Agent disc radius in meters; obstacles are dilated by this much to form
/// the navigable mask.
const DILATE_M: f64 = 0.1;
/// Minimum area of the largest connected navigable component, m².
const MIN_COMPONENT_M2: f64 = 4.0;
const MAX_ATTEMPTS: u64 = 8;

#[derive(Debug, Clone)]
pub struct FloorPlan {
    pub geometry: GridGeometry<f64>,
    /// True where a cell is solid.
    pub obstacle: Vec<bool>,
    /// Complement of the dilated obstacles: where the agent disc center may be.
    pub navigable: Vec<bool>,
    /// Largest connected navigable component; poses are sampled from here.
    pub component: Vec<bool>,
    /// Total navigable area in m².
    pub navigable_area_m2: f64,
    pub scale_factor: f64,
    pub seed: u64,
}

impl FloorPlan {
    #[inline]
    pub fn idx(&self, r: usize, c: usize) -> usize {
        r * self.geometry.width + c
    }

    pub fn cells(&self) -> (usize, usize) {
        (self.geometry.height, self.geometry.width)
    }

    /// Solid at cell, treating out-of-bounds as solid.
    #[inline]
    pub fn solid_at(&self, r: i64, c: i64) -> bool {
        if r < 0 || c < 0 || r >= self.geometry.height as i64 || c >= self.geometry.width as i64 {
            return true;
        }
        self.obstacle[r as usize * self.geometry.width + c as usize]
    }

    /// Solid at a world position (cell lookup), out-of-bounds solid.
    pub fn solid_at_world(&self, x: f64, y: f64) -> bool {
        let r = (x / RESOLUTION).round() as i64;
        let c = (y / RESOLUTION).round() as i64;
        self.solid_at(r, c)
    }

    /// Whether a disc of `radius` centered at world (x, y) clears every
    /// obstacle cell, using exact point-to-cell-rectangle distances.
    pub fn disc_clear(&self, x: f64, y: f64, radius: f64) -> bool {
        let reach = radius + RESOLUTION;
        let r_lo = ((x - reach) / RESOLUTION).floor() as i64;
        let r_hi = ((x + reach) / RESOLUTION).ceil() as i64;
        let c_lo = ((y - reach) / RESOLUTION).floor() as i64;
        let c_hi = ((y + reach) / RESOLUTION).ceil() as i64;
        for r in r_lo..=r_hi {
            for c in c_lo..=c_hi {
                if !self.solid_at(r, c) {
                    continue;
                }
                // Cell (r, c) spans +-res/2 around its center.
                let (cx, cy) = (r as f64 * RESOLUTION, c as f64 * RESOLUTION);
                let dx = (x - cx).abs() - RESOLUTION / 2.0;
                let dy = (y - cy).abs() - RESOLUTION / 2.0;
                let (dx, dy) = (dx.max(0.0), dy.max(0.0));
                if dx * dx + dy * dy < radius * radius {
                    return false;
                }
            }
        }
        true
    }

    /// Whether a pose's agent disc is in free space.
    pub fn pose_navigable(&self, p: &Pose2<f64>) -> bool {
        self.disc_clear(p.x, p.y, DILATE_M)
    }

    /// Serialize the rasters plus a text metadata sidecar (`<path>.meta`).
    pub fn save(&self, path: &Path) -> Result<()> {
        use crate::geometry::{Channel, OccupancyGrid};
        let mut grid = OccupancyGrid::<f32>::zeros(GridGeometry::new(
            self.geometry.height,
            self.geometry.width,
            RESOLUTION as f32,
            crate::geometry::Pose2::identity(),
        ));
        for i in 0..self.obstacle.len() {
            let o: f32 = if self.obstacle[i] { 1.0 } else { 0.0 };
            // explored carries the navigable mask; keep obstacle <= explored
            // by marking solid cells explored too
            let e: f32 = if self.navigable[i] || self.obstacle[i] { 1.0 } else { 0.0 };
            grid.channel_mut(Channel::Explored)[i] = e;
            grid.channel_mut(Channel::Obstacle)[i] = o;
        }
        let file = std::fs::File::create(path)?;
        crate::geometry::write_grid_raw(&grid, std::io::BufWriter::new(file))?;
        let meta = format!(
            "seed = {}\nscale_factor = {}\nnavigable_area_m2 = {:.6}\n",
            self.seed, self.scale_factor, self.navigable_area_m2
        );
        std::fs::write(path.with_extension("meta"), meta)?;
        Ok(())
    }
}

impl FloorPlan {
    /// Build a plan from an explicit n x n solid raster; the connectivity
    /// invariant still applies. Useful for analytic fixtures.
    pub fn from_solid(solid: Vec<bool>, n: usize, scale_factor: f64) -> Result<Self> {
        assert_eq!(solid.len(), n * n);
        let (navigable, _) = dilate_complement(&solid, n);
        let (component, area) = largest_component(&navigable, n);
        if area < MIN_COMPONENT_M2 {
            return Err(Error::GenerationFailed(0));
        }
        let total = count(&navigable) as f64 * RESOLUTION * RESOLUTION;
        Ok(FloorPlan {
            geometry: GridGeometry::new(n, n, RESOLUTION, Pose2::identity()),
            obstacle: solid,
            navigable,
            component,
            navigable_area_m2: total,
            scale_factor,
            seed: 0,
        })
    }
}

/// Deterministic floorplan generation. Retries with derived seeds when a
/// draw fails the connectivity invariant, and reports failure after a bound.
pub fn generate_floorplan(seed: u64, scale_factor: f64) -> Result<FloorPlan> {
    if !(0.5..=4.0).contains(&scale_factor) {
        return Err(Error::ConfigInvalid(format!(
            "scale_factor {scale_factor} outside [0.5, 4]"
        )));
    }
    for attempt in 0..MAX_ATTEMPTS {
        if let Some(plan) = try_generate(seed, attempt, scale_factor) {
            return Ok(plan);
        }
    }
    Err(Error::GenerationFailed(seed as usize))
}

fn try_generate(seed: u64, attempt: u64, scale_factor: f64) -> Option<FloorPlan> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(attempt));
    let extent = BASE_EXTENT_M * scale_factor;
    let n = (extent / RESOLUTION).round() as usize;
    let mut solid = vec![true; n * n];
    let margin = (WALL_M / RESOLUTION).round() as usize;

    // Rooms: carve axis-aligned rectangles; count scales with area so the
    // carved fraction stays roughly constant across scale factors.
    let rooms = ((3.0 * scale_factor * scale_factor).round() as usize).max(2);
    let mut centers = Vec::with_capacity(rooms);
    for _ in 0..rooms {
        let w = rng.gen_range(1.8f64..3.4).min(extent - 2.0 * WALL_M);
        let h = rng.gen_range(1.8f64..3.4).min(extent - 2.0 * WALL_M);
        let (wc, hc) = ((w / RESOLUTION) as usize, (h / RESOLUTION) as usize);
        let r0 = rng.gen_range(margin..(n - margin - hc).max(margin + 1));
        let c0 = rng.gen_range(margin..(n - margin - wc).max(margin + 1));
        carve_rect(&mut solid, n, r0, c0, hc, wc);
        centers.push((r0 + hc / 2, c0 + wc / 2));
    }

    // L-shaped corridors between consecutive rooms keep the carved space
    // connected.
    let half = ((0.6 / RESOLUTION) as usize) / 2;
    for pair in centers.windows(2) {
        let ((r1, c1), (r2, c2)) = (pair[0], pair[1]);
        let (clo, chi) = (c1.min(c2), c1.max(c2));
        carve_rect(&mut solid, n, r1.saturating_sub(half), clo.saturating_sub(half), 2 * half + 1, chi - clo + 2 * half + 1);
        let (rlo, rhi) = (r1.min(r2), r1.max(r2));
        carve_rect(&mut solid, n, rlo.saturating_sub(half), c2.saturating_sub(half), rhi - rlo + 2 * half + 1, 2 * half + 1);
    }

    // Furniture: small solid rectangles, kept only when they do not break
    // the connectivity invariant.
    let furniture = rooms * 2;
    for _ in 0..furniture {
        let w = rng.gen_range(0.3..0.9);
        let h = rng.gen_range(0.3..0.9);
        let (wc, hc) = ((w / RESOLUTION) as usize, (h / RESOLUTION) as usize);
        let r0 = rng.gen_range(margin..n - margin - hc);
        let c0 = rng.gen_range(margin..n - margin - wc);
        let saved: Vec<(usize, bool)> = rect_indices(n, r0, c0, hc, wc)
            .map(|i| (i, solid[i]))
            .collect();
        for &(i, _) in &saved {
            solid[i] = true;
        }
        let (navigable, _) = dilate_complement(&solid, n);
        let (component, area) = largest_component(&navigable, n);
        let before = count(&navigable) as f64 * RESOLUTION * RESOLUTION;
        // Reject placements that wall off a significant region: the largest
        // component must retain nearly all navigable cells.
        if area < MIN_COMPONENT_M2 || area < 0.95 * before {
            for (i, v) in saved {
                solid[i] = v;
            }
            let _ = component;
        }
    }

    let (navigable, _) = dilate_complement(&solid, n);
    let (component, area) = largest_component(&navigable, n);
    if area < MIN_COMPONENT_M2 {
        return None;
    }
    let total = count(&navigable) as f64 * RESOLUTION * RESOLUTION;
    Some(FloorPlan {
        geometry: GridGeometry::new(n, n, RESOLUTION, crate::geometry::Pose2::identity()),
        obstacle: solid,
        navigable,
        component,
        navigable_area_m2: total,
        scale_factor,
        seed,
    })
}

fn rect_indices(n: usize, r0: usize, c0: usize, h: usize, w: usize) -> impl Iterator<Item = usize> {
    (r0..(r0 + h).min(n)).flat_map(move |r| (c0..(c0 + w).min(n)).map(move |c| r * n + c))
}

fn carve_rect(solid: &mut [bool], n: usize, r0: usize, c0: usize, h: usize, w: usize) {
    for i in rect_indices(n, r0, c0, h, w) {
        solid[i] = false;
    }
}

fn count(mask: &[bool]) -> usize {
    mask.iter().filter(|&&b| b).count()
}

/// Navigable mask: complement of obstacles dilated by the agent radius.
/// The dilation kernel is derived from the same point-to-cell-rectangle
/// distance as `disc_clear`, so mask membership at a cell center agrees
/// with the exact disc test.
fn dilate_complement(solid: &[bool], n: usize) -> (Vec<bool>, usize) {
    let rad = ((DILATE_M + RESOLUTION) / RESOLUTION).ceil() as i64;
    let mut offsets = Vec::new();
    for dr in -rad..=rad {
        for dc in -rad..=rad {
            let dx = (dr.abs() as f64 * RESOLUTION - RESOLUTION / 2.0).max(0.0);
            let dy = (dc.abs() as f64 * RESOLUTION - RESOLUTION / 2.0).max(0.0);
            if dx * dx + dy * dy < DILATE_M * DILATE_M {
                offsets.push((dr, dc));
            }
        }
    }
    let mut nav = vec![true; n * n];
    // cells near the boundary are blocked: out-of-bounds is solid
    let edge = rad.max(0) as usize;
    for r in 0..n {
        for c in 0..n {
            if r < edge || c < edge || r >= n - edge || c >= n - edge {
                nav[r * n + c] = false;
            }
        }
    }
    for r in 0..n as i64 {
        for c in 0..n as i64 {
            if !solid[(r * n as i64 + c) as usize] {
                continue;
            }
            for &(dr, dc) in &offsets {
                let (rr, cc) = (r + dr, c + dc);
                if rr >= 0 && cc >= 0 && rr < n as i64 && cc < n as i64 {
                    nav[(rr * n as i64 + cc) as usize] = false;
                }
            }
        }
    }
    let cnt = count(&nav);
    (nav, cnt)
}

/// Largest 4-connected component of a mask; returns (mask, area m²).
fn largest_component(mask: &[bool], n: usize) -> (Vec<bool>, f64) {
    let mut label = vec![0u32; n * n];
    let mut best = (0u32, 0usize);
    let mut next = 1u32;
    let mut stack = Vec::new();
    for start in 0..n * n {
        if !mask[start] || label[start] != 0 {
            continue;
        }
        let mut size = 0usize;
        stack.push(start);
        label[start] = next;
        while let Some(i) = stack.pop() {
            size += 1;
            let (r, c) = (i / n, i % n);
            for (rr, cc) in [
                (r.wrapping_sub(1), c),
                (r + 1, c),
                (r, c.wrapping_sub(1)),
                (r, c + 1),
            ] {
                if rr < n && cc < n {
                    let j = rr * n + cc;
                    if mask[j] && label[j] == 0 {
                        label[j] = next;
                        stack.push(j);
                    }
                }
            }
        }
        if size > best.1 {
            best = (next, size);
        }
        next += 1;
    }
    let comp: Vec<bool> = label.iter().map(|&l| l == best.0 && l != 0).collect();
    (comp, best.1 as f64 * RESOLUTION * RESOLUTION)
}

/// Uniform random pose over the largest navigable component.
pub fn random_navigable_pose(plan: &FloorPlan, rng: &mut impl Rng) -> Pose2<f64> {
    let cells: Vec<usize> = plan
        .component
        .iter()
        .enumerate()
        .filter_map(|(i, &b)| b.then_some(i))
        .collect();
    let i = cells[rng.gen_range(0..cells.len())];
    let (n, _) = plan.cells();
    let (r, c) = (i / n, i % n);
    Pose2::new(
        r as f64 * RESOLUTION,
        c as f64 * RESOLUTION,
        rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
    )
}

/// 8-connected shortest path length in meters between the cells of `a` and
/// `b` over the navigable mask; diagonal steps cost sqrt(2) * resolution.
pub fn shortest_path_length(plan: &FloorPlan, a: &Pose2<f64>, b: &Pose2<f64>) -> Result<f64> {
    let (n, _) = plan.cells();
    let cell = |p: &Pose2<f64>| -> Result<usize> {
        let r = (p.x / RESOLUTION).round() as i64;
        let c = (p.y / RESOLUTION).round() as i64;
        if r < 0 || c < 0 || r >= n as i64 || c >= n as i64 || !plan.navigable[(r * n as i64 + c) as usize] {
            return Err(Error::OutOfBounds(format!("pose ({}, {}) not navigable", p.x, p.y)));
        }
        Ok((r * n as i64 + c) as usize)
    };
    let (start, goal) = (cell(a)?, cell(b)?);
    if start == goal {
        return Ok(0.0);
    }

    // A* with the octile-distance heuristic (admissible on this grid).
    let h = |i: usize| -> f64 {
        let (r1, c1) = ((i / n) as f64, (i % n) as f64);
        let (r2, c2) = ((goal / n) as f64, (goal % n) as f64);
        let (dr, dc) = ((r1 - r2).abs(), (c1 - c2).abs());
        let (lo, hi) = (dr.min(dc), dr.max(dc));
        (lo * std::f64::consts::SQRT_2 + (hi - lo)) * RESOLUTION
    };

    #[derive(PartialEq)]
    struct Entry(f64, usize);
    impl Eq for Entry {}
    impl PartialOrd for Entry {
        fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(o))
        }
    }
    impl Ord for Entry {
        fn cmp(&self, o: &Self) -> std::cmp::Ordering {
            // min-heap on f-score
            o.0.partial_cmp(&self.0).unwrap().then(o.1.cmp(&self.1))
        }
    }

    let mut dist = vec![f64::INFINITY; n * n];
    dist[start] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(Entry(h(start), start));
    while let Some(Entry(f, i)) = heap.pop() {
        if i == goal {
            return Ok(dist[i]);
        }
        if f > dist[i] + h(i) + 1e-12 {
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
                    std::f64::consts::SQRT_2 * RESOLUTION
                } else {
                    RESOLUTION
                };
                if dist[i] + step < dist[j] {
                    dist[j] = dist[i] + step;
                    heap.push(Entry(dist[j] + h(j), j));
                }
            }
        }
    }
    Err(Error::Unreachable)
}
