//! Scalar abstraction for the numeric kernels.
//!
//! Vector math, WMD, LDA, MMR and ROUGE are generic over [`Scalar`] so they
//! run in `f32` or `f64` unchanged.  The pipeline instantiates everything at
//! `f64` (see the aliases at the crate root).

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign};

/// Floating-point scalar usable by every kernel in this crate.
///
/// The bound collects what the kernels actually need: IEEE float ops
/// (`num_traits::Float`), lossless-enough conversions from counts and
/// configuration literals (`FromPrimitive`), compound assignment, summation,
/// and thread-safety so rayon can fan clusters out across workers.
pub trait Scalar:
    Float + FromPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts a `usize` count, saturating at the scalar's max value.
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).unwrap_or_else(Self::max_value)
    }

    /// Converts an `f64` literal such as a configured λ or tolerance.
    fn from_config(x: f64) -> Self {
        Self::from_f64(x).unwrap_or_else(Self::zero)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
