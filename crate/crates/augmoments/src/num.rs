//! Scalar abstraction so the whole library runs on `f32` or `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive};

/// Floating-point scalar used throughout the library.
///
/// Everything numeric is generic over this trait; the crate root exposes
/// `f64` aliases for the common case.
pub trait Scalar:
    Float + FromPrimitive + Sum + Debug + Display + Send + Sync + 'static
{
    /// Shorthand for converting an `f64` constant into this scalar type.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("constant not representable")
    }

    /// Lossy view as `f64`, used for reporting and CSV output.
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn as_f64(self) -> f64 {
        self
    }
}
