//! Scalar abstraction: core math is generic over f32/f64.

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar for poses and grid cells.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Copy + Send + Sync + std::fmt::Debug + 'static
{
    fn from_f64_(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).unwrap()
    }
    fn to_f64_(self) -> f64 {
        self.to_f64().unwrap()
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
