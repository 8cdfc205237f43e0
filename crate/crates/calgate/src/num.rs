//! Scalar abstraction: every numeric routine in this crate is generic over
//! [`Scalar`], implemented for `f32` and `f64`. The crate root exports `f64`
//! aliases for the common case.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::{de::DeserializeOwned, Serialize};

/// Floating-point scalar usable throughout the toolkit.
///
/// `Display` for `f32`/`f64` prints the shortest decimal string that reparses
/// to the same bits, which is what the text formats rely on for exact
/// round-trips.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum
    + FromStr
    + Display
    + Debug
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` constant, panicking only for values genuinely
    /// unrepresentable in the target type (never for finite constants).
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 constant must convert")
    }

    /// Converts a count into the scalar type.
    fn from_usize_lossy(v: usize) -> Self {
        Self::from_usize(v).expect("usize must convert to a float")
    }

    /// Widens to `f64` (exact for `f64`, rounded for `f32`).
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("float must widen to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
