//! Scalar abstraction shared by the numeric routines.
//!
//! Distance, correlation and compute analytics are written once against
//! [`Real`] and instantiated for `f32` and `f64`. Exact bookkeeping (phase
//! fractions) uses [`num_rational`] through the looser [`num_traits::Num`]
//! bounds where it applies.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub trait Real:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Real for T where
    T: Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
}

/// Number of items kept by a top-fraction cut of `n` items: `ceil(f * n)`.
///
/// Products that land within a few ulps of an integer are snapped to it, so
/// `0.7 * 10` keeps 7, not 8.
pub fn ceil_fraction(fraction: f64, n: usize) -> usize {
    let x = fraction * n as f64;
    let nearest = x.round();
    let k = if (x - nearest).abs() <= 1e-9 * nearest.abs().max(1.0) {
        nearest
    } else {
        x.ceil()
    };
    (k.max(0.0) as usize).min(n)
}
