//! Scalar abstractions.
//!
//! [`Scalar`] is the minimal arithmetic needed by exact enumerations (rates,
//! drifts, decision rules); it is satisfied by `f32`, `f64` and
//! [`Rational`](crate::Rational). [`Real`] adds the floating-point operations
//! the ODE integrator and root finder rely on.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, Num, NumCast};

/// Ordered field elements constructible from primitive numbers.
pub trait Scalar: Num + Clone + PartialOrd + FromPrimitive + Debug {
    /// Converts from `f64`, panicking on values the type cannot represent.
    fn of(v: f64) -> Self {
        Self::from_f64(v).unwrap_or_else(|| panic!("{v} is not representable"))
    }

    fn of_count(n: u64) -> Self {
        Self::from_u64(n).unwrap_or_else(|| panic!("{n} is not representable"))
    }
}

impl<T> Scalar for T where T: Num + Clone + PartialOrd + FromPrimitive + Debug {}

/// Floating-point scalars (`f32`, `f64`).
pub trait Real: Scalar + Float + NumCast + Copy + Sum + Display + Send + Sync + 'static {
    /// Largest tolerated drift of total mass before an integration step is
    /// rejected.
    fn mass_tolerance() -> Self {
        Self::of(1e-9).max(Self::epsilon() * Self::of(1e3))
    }

    /// Negative components down to this value are rounding noise and are
    /// clipped to zero.
    fn negativity_tolerance() -> Self {
        Self::of(1e-12).max(Self::epsilon() * Self::of(16.0))
    }

    fn to_f64_lossy(self) -> f64 {
        NumCast::from(self).unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Rational;

    #[test]
    fn rational_conversion_finds_simple_fractions() {
        assert_eq!(Rational::of(0.2), Rational::new(1, 5));
        assert_eq!(Rational::of(0.1), Rational::new(1, 10));
        assert_eq!(Rational::of(1.0 / 3.0), Rational::new(1, 3));
        assert_eq!(Rational::of_count(7), Rational::from_integer(7));
    }

    #[test]
    fn tolerances_scale_with_precision() {
        assert_eq!(f64::mass_tolerance(), 1e-9);
        assert!(f32::mass_tolerance() > 1e-5);
        assert_eq!(f64::negativity_tolerance(), 1e-12);
    }
}
