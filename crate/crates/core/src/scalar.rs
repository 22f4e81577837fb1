//! Scalar abstraction for the interval, similarity and metric math.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real-valued scalar used for seconds, similarities and ratios: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + Serialize + DeserializeOwned + 'static
{
    /// Lossy conversion from `f64`; used for configuration constants.
    fn of(value: f64) -> Self {
        Self::from_f64(value).expect("f64 converts to any Scalar")
    }

    /// Lossy conversion from a count.
    fn of_usize(value: usize) -> Self {
        Self::from_usize(value).expect("usize converts to any Scalar")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Round half-up to the nearest integer (`x.5` goes up, also for negative `x`).
pub fn round_half_up<T: Scalar>(x: T) -> T {
    (x + T::of(0.5)).floor()
}
