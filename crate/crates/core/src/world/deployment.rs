//! A deployment environment: a floorplan plus active corruption and noise
//! models, wrapped so that an episode only ever sees corrupted observations
//! and noisy odometry. Ground-truth reads go through dedicated accessors
//! that bump an audit counter, which self-supervised stages assert stays
//! at zero.

use std::sync::atomic::{AtomicUsize, Ordering};

use rand::Rng;

use crate::error::Result;
use crate::geometry::{EgoMap, Pose2};
use crate::world::{
    corrupt, read_odometry, render_ego_gt, render_panorama, step_dynamics, Action, CorruptionSpec,
    FloorPlan, GmmNoiseModel, OdometryReading, Panorama,
};

#[derive(Debug)]
pub struct Deployment {
    pub plan: FloorPlan,
    pub corruption: CorruptionSpec,
    pub act_noise: GmmNoiseModel,
    pub sen_noise: GmmNoiseModel,
    pose: Pose2<f64>,
    start: Pose2<f64>,
    collisions: usize,
    steps: usize,
    gt_reads: AtomicUsize,
}

impl Deployment {
    pub fn new(
        plan: FloorPlan,
        corruption: CorruptionSpec,
        act_noise: GmmNoiseModel,
        sen_noise: GmmNoiseModel,
        start: Pose2<f64>,
    ) -> Result<Self> {
        corruption.validate()?;
        act_noise.validate()?;
        sen_noise.validate()?;
        Ok(Deployment {
            plan,
            corruption,
            act_noise,
            sen_noise,
            pose: start,
            start,
            collisions: 0,
            steps: 0,
            gt_reads: AtomicUsize::new(0),
        })
    }

    /// Clean environment: identity corruption, zero noise.
    pub fn clean(plan: FloorPlan, start: Pose2<f64>) -> Result<Self> {
        Self::new(
            plan,
            CorruptionSpec::identity(),
            GmmNoiseModel::zero(),
            GmmNoiseModel::zero(),
            start,
        )
    }

    /// Rewind to the start pose without resetting the audit counter.
    pub fn reset(&mut self) {
        self.pose = self.start;
        self.collisions = 0;
        self.steps = 0;
    }

    /// Reposition the episode start (new episode on the same floorplan).
    pub fn reset_to(&mut self, start: Pose2<f64>) {
        self.start = start;
        self.reset();
    }

    /// Corrupted panorama at the current pose.
    pub fn observe(&self, rng: &mut impl Rng) -> Result<Panorama> {
        let pan = render_panorama(&self.plan, &self.pose)?;
        Ok(corrupt(&pan, &self.corruption, rng))
    }

    /// Advance one action; the agent only gets the noisy odometry back.
    pub fn step(&mut self, action: Action, rng: &mut impl Rng) -> OdometryReading {
        let out = step_dynamics(&self.plan, &self.pose, action, &self.act_noise, rng);
        self.pose = out.pose;
        self.steps += 1;
        if out.collided {
            self.collisions += 1;
        }
        read_odometry(&out.delta_true, &self.sen_noise, rng)
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn collisions(&self) -> usize {
        self.collisions
    }

    /// True pose: evaluation-only, counted by the audit.
    pub fn gt_pose(&self) -> Pose2<f64> {
        self.gt_reads.fetch_add(1, Ordering::Relaxed);
        self.pose
    }

    /// Clean ground-truth ego map: evaluation-only, counted by the audit.
    pub fn gt_ego(&self) -> Result<EgoMap<f32>> {
        self.gt_reads.fetch_add(1, Ordering::Relaxed);
        render_ego_gt(&self.plan, &self.pose)
    }

    /// How many times ground truth has been read since construction.
    pub fn gt_read_count(&self) -> usize {
        self.gt_reads.load(Ordering::Relaxed)
    }

    /// Map geometry the agent uses for its global map: the floorplan frame
    /// at single precision.
    pub fn map_geometry(&self) -> crate::geometry::GridGeometry<f32> {
        crate::geometry::GridGeometry::new(
            self.plan.geometry.height,
            self.plan.geometry.width,
            self.plan.geometry.resolution as f32,
            Pose2::new(
                self.plan.geometry.origin.x as f32,
                self.plan.geometry.origin.y as f32,
                0.0,
            ),
        )
    }
}
