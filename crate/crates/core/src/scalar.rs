//! Scalar abstraction: core math is generic over `f32`/`f64`.

use std::fmt::{Debug, Display};

/// Floating-point scalar usable throughout the numeric core.
pub trait Real:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::NumAssignOps
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64` (named to avoid clashing with `FromPrimitive::from_f64`) (used for constants and RNG output).
    fn of(v: f64) -> Self {
        num_traits::FromPrimitive::from_f64(v).expect("finite f64 converts")
    }
    /// Widening conversion to `f64` (used for reporting and file formats).
    fn as_f64(self) -> f64;

    fn pi() -> Self;
}

impl Real for f32 {
    fn as_f64(self) -> f64 {
        self as f64
    }
    fn pi() -> Self {
        std::f32::consts::PI
    }
}

impl Real for f64 {
    fn as_f64(self) -> f64 {
        self
    }
    fn pi() -> Self {
        std::f64::consts::PI
    }
}
