//! Two-channel (obstacle, explored) metric occupancy grids.
//!
//! Conventions used throughout the crate:
//! - cell (r, c) has its center at world (origin.x + r*res, origin.y + c*res);
//! - grids are axis-aligned (origin.phi is kept but always zero here);
//! - an egocentric map is V x V with the agent at cell (V/2, V/2), facing
//!   the +row direction; columns are the lateral (+y body) axis.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Pose2;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Channel {
    Obstacle,
    Explored,
}

/// Grid placement: cell counts, metric resolution and world origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry<S> {
    pub height: usize,
    pub width: usize,
    /// Meters per cell, > 0.
    pub resolution: S,
    /// World pose of cell (0, 0)'s center.
    pub origin: Pose2<S>,
}

impl<S: Scalar> GridGeometry<S> {
    pub fn new(height: usize, width: usize, resolution: S, origin: Pose2<S>) -> Self {
        assert!(resolution > S::zero(), "resolution must be positive");
        GridGeometry {
            height,
            width,
            resolution,
            origin,
        }
    }

    /// Centered geometry: the world origin falls on cell (h/2, w/2).
    pub fn centered(height: usize, width: usize, resolution: S) -> Self {
        let half_r = S::from_f64_((height / 2) as f64);
        let half_c = S::from_f64_((width / 2) as f64);
        Self::new(
            height,
            width,
            resolution,
            Pose2::new(-half_r * resolution, -half_c * resolution, S::zero()),
        )
    }

    pub fn cells(&self) -> usize {
        self.height * self.width
    }

    /// Continuous cell coordinates of a world point.
    pub fn world_to_cell(&self, x: S, y: S) -> (S, S) {
        (
            (x - self.origin.x) / self.resolution,
            (y - self.origin.y) / self.resolution,
        )
    }

    pub fn cell_to_world(&self, r: usize, c: usize) -> (S, S) {
        (
            self.origin.x + S::from_f64_(r as f64) * self.resolution,
            self.origin.y + S::from_f64_(c as f64) * self.resolution,
        )
    }

    pub fn contains_cell(&self, r: S, c: S) -> bool {
        r >= S::zero()
            && c >= S::zero()
            && r <= S::from_f64_((self.height - 1) as f64)
            && c <= S::from_f64_((self.width - 1) as f64)
    }
}

/// Two-channel occupancy grid; all cells in [0,1], obstacle <= explored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyGrid<S> {
    pub geometry: GridGeometry<S>,
    pub obstacle: Vec<S>,
    pub explored: Vec<S>,
}

impl<S: Scalar> OccupancyGrid<S> {
    pub fn zeros(geometry: GridGeometry<S>) -> Self {
        let n = geometry.cells();
        OccupancyGrid {
            geometry,
            obstacle: vec![S::zero(); n],
            explored: vec![S::zero(); n],
        }
    }

    #[inline]
    pub fn idx(&self, r: usize, c: usize) -> usize {
        debug_assert!(r < self.geometry.height && c < self.geometry.width);
        r * self.geometry.width + c
    }

    pub fn channel(&self, ch: Channel) -> &[S] {
        match ch {
            Channel::Obstacle => &self.obstacle,
            Channel::Explored => &self.explored,
        }
    }

    pub fn channel_mut(&mut self, ch: Channel) -> &mut [S] {
        match ch {
            Channel::Obstacle => &mut self.obstacle,
            Channel::Explored => &mut self.explored,
        }
    }

    /// Set both channels of a cell, clamped to the grid invariants.
    pub fn set(&mut self, r: usize, c: usize, obstacle: S, explored: S) {
        let i = self.idx(r, c);
        let e = explored.max(S::zero()).min(S::one());
        let o = obstacle.max(S::zero()).min(e);
        self.obstacle[i] = o;
        self.explored[i] = e;
    }

    pub fn same_geometry(&self, other: &Self) -> bool {
        self.geometry == other.geometry
    }

    /// Per-cell, per-channel maximum of two grids with identical geometry.
    pub fn fuse(&self, other: &Self) -> Result<Self> {
        if !self.same_geometry(other) {
            return Err(Error::GeometryMismatch(format!(
                "{}x{} vs {}x{}",
                self.geometry.height, self.geometry.width, other.geometry.height, other.geometry.width
            )));
        }
        let mut out = self.clone();
        for (o, b) in out.obstacle.iter_mut().zip(&other.obstacle) {
            *o = o.max(*b);
        }
        for (e, b) in out.explored.iter_mut().zip(&other.explored) {
            *e = e.max(*b);
        }
        Ok(out)
    }

    /// In-place fuse, same semantics as [`fuse`].
    pub fn fuse_in_place(&mut self, other: &Self) -> Result<()> {
        if !self.same_geometry(other) {
            return Err(Error::GeometryMismatch("fuse_in_place".into()));
        }
        for (o, b) in self.obstacle.iter_mut().zip(&other.obstacle) {
            *o = o.max(*b);
        }
        for (e, b) in self.explored.iter_mut().zip(&other.explored) {
            *e = e.max(*b);
        }
        Ok(())
    }

    /// Verify the value-range and obstacle<=explored invariants.
    pub fn invariants_hold(&self) -> bool {
        self.obstacle.iter().zip(&self.explored).all(|(&o, &e)| {
            o >= S::zero() && e >= S::zero() && e <= S::one() && o <= e + S::from_f64_(1e-6)
        })
    }

    pub fn total_mass(&self, ch: Channel) -> f64 {
        self.channel(ch).iter().map(|v| v.to_f64_()).sum()
    }

    /// Pack as an autodiff tensor [1, 2, h, w]: channel 0 obstacle,
    /// channel 1 explored.
    pub fn to_tensor(&self) -> crate::autodiff::Tensor {
        let mut data: Vec<f32> = Vec::with_capacity(2 * self.cells_len());
        data.extend(self.obstacle.iter().map(|v| v.to_f64_() as f32));
        data.extend(self.explored.iter().map(|v| v.to_f64_() as f32));
        crate::autodiff::Tensor::from_vec([1, 2, self.geometry.height, self.geometry.width], data)
    }

    /// Inverse of `to_tensor` given the grid placement.
    pub fn from_tensor(t: &crate::autodiff::Tensor, geometry: GridGeometry<S>) -> Result<Self> {
        let n = geometry.height * geometry.width;
        if t.shape != [1, 2, geometry.height, geometry.width] {
            return Err(Error::ShapeMismatch(format!("grid tensor {:?}", t.shape)));
        }
        Ok(OccupancyGrid {
            geometry,
            obstacle: t.data[..n].iter().map(|&v| S::from_f64_(v as f64)).collect(),
            explored: t.data[n..].iter().map(|&v| S::from_f64_(v as f64)).collect(),
        })
    }

    fn cells_len(&self) -> usize {
        self.geometry.height * self.geometry.width
    }

    pub fn cast<T: Scalar>(&self) -> OccupancyGrid<T> {
        OccupancyGrid {
            geometry: GridGeometry {
                height: self.geometry.height,
                width: self.geometry.width,
                resolution: T::from_f64_(self.geometry.resolution.to_f64_()),
                origin: self.geometry.origin.cast(),
            },
            obstacle: self.obstacle.iter().map(|v| T::from_f64_(v.to_f64_())).collect(),
            explored: self.explored.iter().map(|v| T::from_f64_(v.to_f64_())).collect(),
        }
    }
}

/// Agent-centered V x V occupancy patch; agent at cell (V/2, V/2) facing +row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EgoMap<S> {
    pub grid: OccupancyGrid<S>,
}

impl<S: Scalar> EgoMap<S> {
    pub fn zeros(v: usize, resolution: S) -> Self {
        EgoMap {
            grid: OccupancyGrid::zeros(GridGeometry::centered(v, v, resolution)),
        }
    }

    pub fn size(&self) -> usize {
        self.grid.geometry.height
    }

    /// Bilinear splat of this ego map into a global grid at pose `p`.
    ///
    /// Each ego cell's value is distributed over its four nearest global
    /// cells, so total mass is conserved for footprints fully inside the
    /// target. Errors with OutOfBounds when the rotated footprint exits.
    pub fn transform_to_global(
        &self,
        p: &Pose2<S>,
        target: &GridGeometry<S>,
    ) -> Result<OccupancyGrid<S>> {
        let v = self.size();
        let res_ratio = self.grid.geometry.resolution / target.resolution;
        let half = S::from_f64_((v / 2) as f64);
        let (sin, cos) = p.phi.sin_cos();
        let (pr, pc) = target.world_to_cell(p.x, p.y);

        // Footprint corners in target cell coordinates.
        let lo = -half;
        let hi = S::from_f64_((v - 1) as f64) - half;
        for &(er, ec) in &[(lo, lo), (lo, hi), (hi, lo), (hi, hi)] {
            let gr = pr + (cos * er - sin * ec) * res_ratio;
            let gc = pc + (sin * er + cos * ec) * res_ratio;
            if !target.contains_cell(gr, gc) {
                return Err(Error::OutOfBounds(format!(
                    "ego footprint corner at cell ({:.1}, {:.1})",
                    gr.to_f64_(),
                    gc.to_f64_()
                )));
            }
        }

        let mut out = OccupancyGrid::zeros(*target);
        for r in 0..v {
            for c in 0..v {
                let i = self.grid.idx(r, c);
                let ob = self.grid.obstacle[i];
                let ex = self.grid.explored[i];
                if ob == S::zero() && ex == S::zero() {
                    continue;
                }
                let er = S::from_f64_(r as f64) - half;
                let ec = S::from_f64_(c as f64) - half;
                let gr = pr + (cos * er - sin * ec) * res_ratio;
                let gc = pc + (sin * er + cos * ec) * res_ratio;
                splat_bilinear(&mut out, gr, gc, ob, ex);
            }
        }
        for (o, e) in out.obstacle.iter_mut().zip(out.explored.iter_mut()) {
            *e = e.min(S::one());
            *o = o.min(*e);
        }
        Ok(out)
    }
}

fn splat_bilinear<S: Scalar>(out: &mut OccupancyGrid<S>, gr: S, gc: S, ob: S, ex: S) {
    let r0 = gr.floor();
    let c0 = gc.floor();
    let fr = gr - r0;
    let fc = gc - c0;
    let r0 = r0.to_f64_() as i64;
    let c0 = c0.to_f64_() as i64;
    let h = out.geometry.height as i64;
    let w = out.geometry.width as i64;
    let one = S::one();
    for (dr, wr) in [(0i64, one - fr), (1, fr)] {
        for (dc, wc) in [(0i64, one - fc), (1, fc)] {
            let rr = r0 + dr;
            let cc = c0 + dc;
            if rr < 0 || cc < 0 || rr >= h || cc >= w {
                continue;
            }
            let wgt = wr * wc;
            if wgt == S::zero() {
                continue;
            }
            let i = (rr as usize) * out.geometry.width + cc as usize;
            out.obstacle[i] += ob * wgt;
            out.explored[i] += ex * wgt;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn global_geom() -> GridGeometry<f64> {
        GridGeometry::centered(240, 240, 0.05)
    }

    #[test]
    fn fuse_identity_and_idempotence() {
        let mut a = OccupancyGrid::<f64>::zeros(GridGeometry::centered(8, 8, 0.05));
        a.set(2, 3, 0.4, 0.9);
        a.set(5, 5, 0.0, 0.2);
        let zero = OccupancyGrid::zeros(a.geometry);
        assert_eq!(a.fuse(&zero).unwrap(), a);
        assert_eq!(a.fuse(&a).unwrap(), a);
    }

    #[test]
    fn fuse_geometry_mismatch_errors() {
        let a = OccupancyGrid::<f64>::zeros(GridGeometry::centered(8, 8, 0.05));
        let b = OccupancyGrid::<f64>::zeros(GridGeometry::centered(9, 8, 0.05));
        assert!(matches!(a.fuse(&b), Err(Error::GeometryMismatch(_))));
    }

    #[test]
    fn fuse_matches_per_cell_loop_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let geom = GridGeometry::centered(16, 16, 0.05);
        let mut a = OccupancyGrid::<f64>::zeros(geom);
        let mut b = OccupancyGrid::<f64>::zeros(geom);
        for g in [&mut a, &mut b] {
            for r in 0..16 {
                for c in 0..16 {
                    let e: f64 = rng.gen();
                    let o: f64 = rng.gen::<f64>() * e;
                    g.set(r, c, o, e);
                }
            }
        }
        let fused = a.fuse(&b).unwrap();
        for r in 0..16 {
            for c in 0..16 {
                let i = fused.idx(r, c);
                assert_eq!(fused.obstacle[i], a.obstacle[i].max(b.obstacle[i]));
                assert_eq!(fused.explored[i], a.explored[i].max(b.explored[i]));
            }
        }
        assert!(fused.invariants_hold());
    }

    #[test]
    fn transform_identity_copies_cells() {
        let mut ego = EgoMap::<f64>::zeros(64, 0.05);
        ego.grid.set(10, 20, 0.5, 1.0);
        ego.grid.set(32, 32, 0.0, 0.7);
        // Pose at the world origin: ego center lands on global cell (120,120).
        let out = ego
            .transform_to_global(&Pose2::identity(), &global_geom())
            .unwrap();
        let i = out.idx(120 - 32 + 10, 120 - 32 + 20);
        assert!((out.obstacle[i] - 0.5).abs() < 1e-12);
        assert!((out.explored[i] - 1.0).abs() < 1e-12);
        let j = out.idx(120, 120);
        assert!((out.explored[j] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn transform_single_cell_mass_conserved() {
        let mut ego = EgoMap::<f64>::zeros(64, 0.05);
        ego.grid.set(32, 32, 0.25, 0.5);
        let p = Pose2::new(0.63, -0.41, 0.3);
        let out = ego.transform_to_global(&p, &global_geom()).unwrap();
        assert!((out.total_mass(Channel::Explored) - 0.5).abs() < 1e-6);
        assert!((out.total_mass(Channel::Obstacle) - 0.25).abs() < 1e-6);
        // Mass concentrated at the global cell nearest (p.x, p.y).
        let (gr, gc) = global_geom().world_to_cell(p.x, p.y);
        let (nr, nc) = (gr.round() as usize, gc.round() as usize);
        assert!(out.explored[out.idx(nr, nc)] > 0.0);
    }

    #[test]
    fn transform_rotation_pi_point_reflects() {
        let mut ego = EgoMap::<f64>::zeros(64, 0.05);
        ego.grid.set(40, 32, 0.0, 1.0);
        let pi = std::f64::consts::PI;
        let out = ego
            .transform_to_global(&Pose2::new(0.0, 0.0, pi), &global_geom())
            .unwrap();
        // Brute-force oracle: under a pi rotation, offset (+8, 0) from the
        // agent cell maps to (-8, 0) about global cell (120, 120).
        let i = out.idx(120 - 8, 120);
        assert!((out.explored[i] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn transform_out_of_bounds_errors() {
        let ego = EgoMap::<f64>::zeros(64, 0.05);
        let r = ego.transform_to_global(&Pose2::new(5.9, 0.0, 0.0), &global_geom());
        assert!(matches!(r, Err(Error::OutOfBounds(_))));
    }

    #[test]
    fn transform_mass_conserved_random_rotations() {
        // Statistical check: sparse map, interior footprint.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut ego = EgoMap::<f64>::zeros(64, 0.05);
        for _ in 0..50 {
            let r = rng.gen_range(8..56);
            let c = rng.gen_range(8..56);
            ego.grid.set(r, c, 0.0, rng.gen_range(0.0..0.3));
        }
        let before = ego.grid.total_mass(Channel::Explored);
        for k in 0..8 {
            let p = Pose2::new(0.2, -0.1, k as f64 * 0.7);
            let out = ego.transform_to_global(&p, &global_geom()).unwrap();
            let after = out.total_mass(Channel::Explored);
            assert!(
                (after - before).abs() < 1e-6,
                "mass {before} -> {after} at rotation {k}"
            );
            assert!(out.invariants_hold());
        }
    }

    proptest! {
        #[test]
        fn fuse_commutative_monotone(seed in 0u64..1000) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let geom = GridGeometry::centered(8, 8, 0.05f64);
            let mut a = OccupancyGrid::zeros(geom);
            let mut b = OccupancyGrid::zeros(geom);
            for g in [&mut a, &mut b] {
                for r in 0..8 {
                    for c in 0..8 {
                        let e: f64 = rng.gen();
                        g.set(r, c, rng.gen::<f64>() * e, e);
                    }
                }
            }
            let ab = a.fuse(&b).unwrap();
            let ba = b.fuse(&a).unwrap();
            prop_assert_eq!(&ab, &ba);
            for i in 0..ab.obstacle.len() {
                prop_assert!(ab.obstacle[i] >= a.obstacle[i] && ab.obstacle[i] >= b.obstacle[i]);
                prop_assert!(ab.explored[i] >= a.explored[i] && ab.explored[i] >= b.explored[i]);
            }
        }
    }
}
