//! Floating point abstraction shared by the generic numerics.

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, NumCast};
use std::fmt::{Debug, Display};

pub trait Real:
    Float + FloatConst + FromPrimitive + NumCast + NumAssign + Debug + Display + Send + Sync + 'static
{
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in target float")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn two() -> Self {
        Self::one() + Self::one()
    }

    #[inline]
    fn half() -> Self {
        Self::lit(0.5)
    }
}

impl Real for f32 {}
impl Real for f64 {}
