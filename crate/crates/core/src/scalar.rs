//! Scalar abstractions.
//!
//! The dense kernels are written once against [`Real`] and instantiated for
//! `f32` and `f64`. The closed-form cost tables are written against
//! [`ModelScalar`], which additionally admits exact rationals so that table
//! entries such as `2/3 N^3` can be compared without rounding.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_rational::Ratio;
use num_traits::{Float, FromPrimitive, Num, ToPrimitive};

/// Floating-point element type of a dense matrix.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Storage size of one element, used for message volumes.
    const BYTES: u64;

    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 converts")
    }
}

impl Real for f32 {
    const BYTES: u64 = 4;
}

impl Real for f64 {
    const BYTES: u64 = 8;
}

/// Exact rational used for symbolic evaluation of the cost tables.
pub type Rational = Ratio<i128>;

/// Numeric type the performance model can be evaluated in.
pub trait ModelScalar: Clone + Num + PartialOrd + Debug {
    fn from_u64(v: u64) -> Self;
    fn to_f64(&self) -> f64;

    fn ratio(num: u64, den: u64) -> Self {
        Self::from_u64(num) / Self::from_u64(den)
    }
}

impl ModelScalar for f64 {
    fn from_u64(v: u64) -> Self {
        v as f64
    }
    fn to_f64(&self) -> f64 {
        *self
    }
}

impl ModelScalar for f32 {
    fn from_u64(v: u64) -> Self {
        v as f32
    }
    fn to_f64(&self) -> f64 {
        f64::from(*self)
    }
}

impl ModelScalar for Rational {
    fn from_u64(v: u64) -> Self {
        Ratio::from_integer(i128::from(v))
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
}
