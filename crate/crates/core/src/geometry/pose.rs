//! SE(2) poses: (x, y, phi) with phi normalized to (-pi, pi].

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// A 2D pose or body-frame motion: position in meters, heading in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2<S> {
    pub x: S,
    pub y: S,
    pub phi: S,
}

impl<S: Scalar> Pose2<S> {
    pub fn new(x: S, y: S, phi: S) -> Self {
        Pose2 { x, y, phi }.normalized()
    }

    pub fn identity() -> Self {
        Pose2 {
            x: S::zero(),
            y: S::zero(),
            phi: S::zero(),
        }
    }

    /// Wrap phi into (-pi, pi].
    pub fn normalized(self) -> Self {
        Pose2 {
            x: self.x,
            y: self.y,
            phi: wrap_angle(self.phi),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.phi.is_finite()
    }

    /// `self` followed by the body-frame motion `delta`.
    pub fn compose(&self, delta: &Pose2<S>) -> Pose2<S> {
        let (s, c) = self.phi.sin_cos();
        Pose2 {
            x: self.x + c * delta.x - s * delta.y,
            y: self.y + s * delta.x + c * delta.y,
            phi: wrap_angle(self.phi + delta.phi),
        }
    }

    /// Pose q such that compose(self, q) == identity.
    pub fn inverse(&self) -> Pose2<S> {
        let (s, c) = self.phi.sin_cos();
        Pose2 {
            x: -(c * self.x + s * self.y),
            y: -(-s * self.x + c * self.y),
            phi: wrap_angle(-self.phi),
        }
    }

    /// Body-frame motion d with compose(self, d) == other.
    pub fn delta_to(&self, other: &Pose2<S>) -> Pose2<S> {
        self.inverse().compose(other)
    }

    pub fn translation_distance(&self, other: &Pose2<S>) -> S {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        (dx * dx + dy * dy).sqrt()
    }

    /// Absolute wrapped heading difference, radians in [0, pi].
    pub fn rotation_distance(&self, other: &Pose2<S>) -> S {
        wrap_angle(self.phi - other.phi).abs()
    }

    pub fn cast<T: Scalar>(&self) -> Pose2<T> {
        Pose2 {
            x: T::from_f64_(self.x.to_f64_()),
            y: T::from_f64_(self.y.to_f64_()),
            phi: T::from_f64_(self.phi.to_f64_()),
        }
    }
}

/// Wrap an angle into (-pi, pi].
pub fn wrap_angle<S: Scalar>(a: S) -> S {
    let pi = S::from_f64_(std::f64::consts::PI);
    let two_pi = pi + pi;
    let mut r = a % two_pi;
    if r <= -pi {
        r += two_pi;
    } else if r > pi {
        r -= two_pi;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    type P = Pose2<f64>;

    /// Independent oracle: 3x3 homogeneous matrix product.
    fn compose_matrix(a: &P, b: &P) -> P {
        let ma = to_mat(a);
        let mb = to_mat(b);
        let mut m = [[0.0f64; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    m[i][j] += ma[i][k] * mb[k][j];
                }
            }
        }
        P {
            x: m[0][2],
            y: m[1][2],
            phi: wrap_angle(a.phi + b.phi),
        }
    }

    fn to_mat(p: &P) -> [[f64; 3]; 3] {
        let (s, c) = p.phi.sin_cos();
        [[c, -s, p.x], [s, c, p.y], [0.0, 0.0, 1.0]]
    }

    #[test]
    fn compose_identity() {
        let id = P::identity();
        assert_eq!(id.compose(&id), id);
    }

    #[test]
    fn compose_quarter_turn() {
        // Rotation-matrix oracle: heading pi/2, forward 1m -> moves along +y.
        let p = P::new(0.0, 0.0, std::f64::consts::FRAC_PI_2);
        let q = p.compose(&P::new(1.0, 0.0, 0.0));
        assert!((q.x - 0.0).abs() < 1e-12);
        assert!((q.y - 1.0).abs() < 1e-12);
        assert!((q.phi - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }

    fn arb_pose() -> impl Strategy<Value = P> {
        (-10.0..10.0f64, -10.0..10.0f64, -6.0..6.0f64).prop_map(|(x, y, phi)| P::new(x, y, phi))
    }

    proptest! {
        #[test]
        fn compose_matches_matrix_oracle(a in arb_pose(), b in arb_pose()) {
            let got = a.compose(&b);
            let want = compose_matrix(&a, &b);
            prop_assert!((got.x - want.x).abs() < 1e-9);
            prop_assert!((got.y - want.y).abs() < 1e-9);
            prop_assert!(wrap_angle(got.phi - want.phi).abs() < 1e-9);
        }

        #[test]
        fn compose_associative(a in arb_pose(), b in arb_pose(), c in arb_pose()) {
            let lhs = a.compose(&b).compose(&c);
            let rhs = a.compose(&b.compose(&c));
            prop_assert!((lhs.x - rhs.x).abs() < 1e-9);
            prop_assert!((lhs.y - rhs.y).abs() < 1e-9);
            prop_assert!(wrap_angle(lhs.phi - rhs.phi).abs() < 1e-9);
        }

        #[test]
        fn inverse_cancels(p in arb_pose()) {
            let id = p.compose(&p.inverse());
            prop_assert!(id.x.abs() < 1e-9);
            prop_assert!(id.y.abs() < 1e-9);
            prop_assert!(wrap_angle(id.phi).abs() < 1e-9);
        }

        #[test]
        fn wrap_stays_in_range(a in -100.0..100.0f64) {
            let w = wrap_angle(a);
            prop_assert!(w > -std::f64::consts::PI - 1e-12 && w <= std::f64::consts::PI + 1e-12);
        }
    }
}
