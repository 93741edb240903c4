//! Noisy agent dynamics: actuation, stop-on-collision motion, odometry.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::Pose2;
use crate::world::floorplan::FloorPlan;
use crate::world::noise::GmmNoiseModel;

/// Agent disc radius in meters.
pub const AGENT_RADIUS: f64 = 0.1;

const DEG: f64 = std::f64::consts::PI / 180.0;
/// Collision sweep step in meters.
const SWEEP_STEP: f64 = 0.02;
/// Bisection tolerance for the contact point, meters.
const CONTACT_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    Forward,
    TurnLeft,
    TurnRight,
}

impl Action {
    /// Intended body-frame control (u_x m, u_y m, u_phi rad).
    pub fn control(&self) -> [f64; 3] {
        match self {
            Action::Forward => [0.25, 0.0, 0.0],
            Action::TurnLeft => [0.0, 0.0, 10.0 * DEG],
            Action::TurnRight => [0.0, 0.0, -10.0 * DEG],
        }
    }

    pub const ALL: [Action; 3] = [Action::Forward, Action::TurnLeft, Action::TurnRight];
}

/// Measured per-step motion (m, m, rad), body frame.
pub type OdometryReading = [f64; 3];

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub pose: Pose2<f64>,
    /// Realized body-frame motion.
    pub delta_true: Pose2<f64>,
    pub collided: bool,
}

/// Apply an action with actuation noise: the intended control plus a GMM
/// draw, composed onto the pose. If the swept agent disc hits an obstacle
/// the translation truncates at first contact (stop-on-collision, no
/// sliding); rotation always completes since the disc is symmetric.
pub fn step_dynamics(
    plan: &FloorPlan,
    pose: &Pose2<f64>,
    action: Action,
    act_noise: &GmmNoiseModel,
    rng: &mut impl Rng,
) -> StepOutcome {
    let u = action.control();
    let eps = act_noise.sample(rng);
    let delta = [u[0] + eps[0], u[1] + eps[1], u[2] + eps[2]];

    // World-frame translation target.
    let (s, c) = pose.phi.sin_cos();
    let (wx, wy) = (c * delta[0] - s * delta[1], s * delta[0] + c * delta[1]);
    let len = (wx * wx + wy * wy).sqrt();

    let clear = |t: f64| plan.disc_clear(pose.x + wx * t, pose.y + wy * t, AGENT_RADIUS);
    let mut t_free = 0.0;
    let mut collided = false;
    if len > 0.0 {
        let steps = (len / SWEEP_STEP).ceil() as usize;
        let mut t_hit = None;
        for i in 1..=steps {
            let t = (i as f64 / steps as f64).min(1.0);
            if !clear(t) {
                t_hit = Some(t);
                break;
            }
            t_free = t;
        }
        if let Some(mut hi) = t_hit {
            collided = true;
            let mut lo = t_free;
            while (hi - lo) * len > CONTACT_TOL {
                let mid = 0.5 * (lo + hi);
                if clear(mid) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            t_free = lo;
        } else {
            t_free = 1.0;
        }
    }

    // Derive the pose from the realized motion so that replaying the
    // logged delta reproduces the pose chain bit for bit.
    let delta_true = Pose2::new(delta[0] * t_free, delta[1] * t_free, delta[2]);
    let new_pose = pose.compose(&delta_true);
    StepOutcome {
        pose: new_pose,
        delta_true,
        collided,
    }
}

/// Odometry: the realized motion plus a sensing-noise draw, componentwise.
pub fn read_odometry(
    delta_true: &Pose2<f64>,
    sen_noise: &GmmNoiseModel,
    rng: &mut impl Rng,
) -> OdometryReading {
    let eps = sen_noise.sample(rng);
    [
        delta_true.x + eps[0],
        delta_true.y + eps[1],
        delta_true.phi + eps[2],
    ]
}
