//! Scalar abstraction shared by the geometric and statistical code.

use std::fmt::{Debug, Display};
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real scalar used for poses, extents, thresholds and metric values.
///
/// Implemented for `f32` and `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + FromStr
    + Display
    + Debug
    + Default
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Slack applied to every strict threshold comparison so that values sitting
    /// on a threshold up to rounding noise are treated as equal to it.
    fn threshold_slack() -> Self;
}

impl Scalar for f32 {
    fn threshold_slack() -> Self {
        1e-5
    }
}

impl Scalar for f64 {
    fn threshold_slack() -> Self {
        1e-9
    }
}

/// Converts an `f64` constant into `T`.
#[inline]
pub fn lit<T: Scalar>(v: f64) -> T {
    T::from_f64(v).expect("f64 constant representable in scalar type")
}

/// Converts a count into `T`.
#[inline]
pub fn from_count<T: Scalar>(n: usize) -> T {
    T::from_usize(n).expect("count representable in scalar type")
}

/// Strict `value > limit`, where values within rounding slack of the limit do not exceed it.
#[inline]
pub fn exceeds<T: Scalar>(value: T, limit: T) -> bool {
    value > limit + T::threshold_slack()
}

/// `value <= limit` with the same slack as [`exceeds`].
#[inline]
pub fn within<T: Scalar>(value: T, limit: T) -> bool {
    !exceeds(value, limit)
}
