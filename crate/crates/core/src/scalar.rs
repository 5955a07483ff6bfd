//! Scalar abstraction shared by every numerical routine in the crate.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating point scalar the library is generic over (`f32` or `f64`).
///
/// Everything numerical is written against this trait; the concrete
/// aliases at the crate root pin it to `f64`.
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + Default + Send + Sync + 'static
{
    /// Machine epsilon.
    const EPSILON: Self;

    /// Converts an `f64` literal into this scalar.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    /// Converts an index or count into this scalar.
    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn finite(self) -> bool {
        self.as_f64().is_finite()
    }

    #[inline]
    fn deg_to_rad(self) -> Self {
        self * Self::pi() / Self::lit(180.0)
    }
}

impl Real for f32 {
    const EPSILON: Self = f32::EPSILON;
}

impl Real for f64 {
    const EPSILON: Self = f64::EPSILON;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degrees_convert() {
        assert!((180.0f64.deg_to_rad() - std::f64::consts::PI).abs() < 1e-15);
        assert!((90.0f32.deg_to_rad() - std::f32::consts::FRAC_PI_2).abs() < 1e-6);
    }

    #[test]
    fn finiteness() {
        assert!(1.0f64.finite());
        assert!(!f64::NAN.finite());
        assert!(!f32::INFINITY.finite());
    }
}
