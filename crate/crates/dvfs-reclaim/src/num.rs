//! Scalar abstraction for the closed-form energy math.
//!
//! All frequency/power/energy arithmetic is generic over [`Real`] so the same
//! formulas run at `f32` or `f64`; the crate root exposes `f64` aliases.

use num_traits::{Float, FromPrimitive};

/// Floating-point scalar used by the power and reclamation math.
pub trait Real:
    Float + FromPrimitive + core::fmt::Debug + core::fmt::Display + core::iter::Sum + 'static
{
    /// Relative tolerance for feasibility and invariant checks.
    ///
    /// 1e-9 for `f64` (all formulas are short rational expressions); widened
    /// for scalars with fewer mantissa bits.
    fn check_tol() -> Self {
        let floor = Self::from_f64(1e-9).unwrap();
        let eps = Self::epsilon() * Self::from_f64(256.0).unwrap();
        if eps > floor {
            eps
        } else {
            floor
        }
    }

    /// Absolute floor used when comparing values near zero.
    fn abs_floor() -> Self {
        let floor = Self::from_f64(1e-15).unwrap();
        let eps = Self::min_positive_value() * Self::from_f64(1e6).unwrap();
        if eps > floor {
            eps
        } else {
            floor
        }
    }

    /// Shorthand for lossy conversion of an `f64` literal.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).unwrap()
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap()
    }
}

impl<T> Real for T where
    T: Float + FromPrimitive + core::fmt::Debug + core::fmt::Display + core::iter::Sum + 'static
{
}

/// `a` and `b` agree within the scalar's relative check tolerance.
pub fn approx_eq<R: Real>(a: R, b: R) -> bool {
    let scale = a.abs().max(b.abs()).max(R::abs_floor());
    (a - b).abs() <= R::check_tol() * scale
}

/// `a <= b` up to the relative check tolerance.
pub fn approx_le<R: Real>(a: R, b: R) -> bool {
    a <= b || approx_eq(a, b)
}

/// Relative gap |a - b| / max(|a|, |b|, floor).
pub fn rel_gap<R: Real>(a: R, b: R) -> R {
    let scale = a.abs().max(b.abs()).max(R::abs_floor());
    (a - b).abs() / scale
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tolerances_per_scalar() {
        assert_eq!(<f64 as Real>::check_tol(), 1e-9);
        assert!(<f32 as Real>::check_tol() > 1e-6);
        assert!(approx_eq(1.0f64, 1.0 + 1e-12));
        assert!(!approx_eq(1.0f64, 1.0 + 1e-6));
        assert!(approx_le(1.0 + 1e-12, 1.0f64));
        assert!(!approx_le(1.0 + 1e-6, 1.0f64));
    }

    #[test]
    fn rel_gap_near_zero_uses_floor() {
        assert!(rel_gap(0.0f64, 0.0) == 0.0);
        assert!(rel_gap(0.0f64, 1e-18) < 1.0);
    }
}
