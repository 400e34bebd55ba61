//! Floating-point abstraction shared by every module.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar the library is generic over (`f32` or `f64`).
///
/// Besides the arithmetic bounds, each implementation pins the numeric
/// tolerances used for simplex validation and log clamping, since a single
/// absolute tolerance cannot serve both precisions.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Accepted deviation of a probability vector's sum from 1.
    const SUM_TOL: f64;
    /// Deviation up to which a vector is renormalized instead of rejected.
    const RENORM_TOL: f64;
    /// Floor applied to probabilities before taking logarithms.
    const CLAMP_EPS: f64;

    /// Converts an `f64` literal. Panics only if the value is not
    /// representable, which cannot happen for finite literals.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }
}

impl Scalar for f64 {
    const SUM_TOL: f64 = 1e-9;
    const RENORM_TOL: f64 = 1e-6;
    const CLAMP_EPS: f64 = 1e-12;
}

impl Scalar for f32 {
    const SUM_TOL: f64 = 1e-5;
    const RENORM_TOL: f64 = 1e-3;
    const CLAMP_EPS: f64 = 1e-12;
}
