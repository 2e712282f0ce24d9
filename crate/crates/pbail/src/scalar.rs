//! Scalar abstraction for the numeric core.
//!
//! Foundational math (tensors, autodiff, occupancy solves, rank statistics)
//! is written against [`Scalar`] so it works for `f32` and `f64` alike.
//! Everything trainer-facing uses the crate-root `Real` alias (`f64`).

use std::fmt::{Debug, Display};

use num_traits::float::FloatConst;
use num_traits::{Float, NumAssignOps};

/// Floating-point scalar usable throughout the numeric core.
pub trait Scalar:
    Float + FloatConst + NumAssignOps + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` constant into this scalar type.
    fn c(value: f64) -> Self;

    /// Widens this scalar to `f64`. Named to avoid colliding with the
    /// fallible `ToPrimitive::to_f64` supertrait method.
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    #[inline(always)]
    fn c(value: f64) -> Self {
        value as f32
    }

    #[inline(always)]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    #[inline(always)]
    fn c(value: f64) -> Self {
        value
    }

    #[inline(always)]
    fn as_f64(self) -> f64 {
        self
    }
}

/// Numerically stable `log(sigmoid(z))`, i.e. `-softplus(-z)`.
#[inline]
pub fn log_sigmoid<S: Scalar>(z: S) -> S {
    -softplus(-z)
}

/// Logistic sigmoid, stable for large magnitudes in both directions.
#[inline]
pub fn sigmoid<S: Scalar>(z: S) -> S {
    if z >= S::zero() {
        let e = (-z).exp();
        S::one() / (S::one() + e)
    } else {
        let e = z.exp();
        e / (S::one() + e)
    }
}

/// `softplus(z) = ln(1 + e^z)` computed as `max(z, 0) + ln(1 + e^{-|z|})`.
#[inline]
pub fn softplus<S: Scalar>(z: S) -> S {
    z.max(S::zero()) + (-z.abs()).exp().ln_1p()
}

/// Derivative of softplus, which is the sigmoid.
#[inline]
pub fn softplus_prime<S: Scalar>(z: S) -> S {
    sigmoid(z)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_matches_reference_values() {
        assert!((softplus(-1.0_f64) - 0.31326168751822286).abs() < 1e-15);
        assert!((softplus(-5.0_f64) - 0.006715348489118068).abs() < 1e-15);
        assert!((softplus(0.0_f64) - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn softplus_is_stable_at_extremes() {
        assert_eq!(softplus(800.0_f64), 800.0);
        assert_eq!(softplus(-800.0_f64), 0.0);
        assert!(log_sigmoid(-800.0_f64).is_finite());
        assert_eq!(log_sigmoid(800.0_f64), 0.0);
    }

    #[test]
    fn sigmoid_matches_naive_formula_in_safe_range() {
        for i in -40..=40 {
            let z = i as f64 * 0.5;
            let naive = 1.0 / (1.0 + (-z).exp());
            assert!((sigmoid(z) - naive).abs() < 1e-15);
        }
    }

    #[test]
    fn sigmoid_saturates_without_nan() {
        assert_eq!(sigmoid(800.0_f64), 1.0);
        assert_eq!(sigmoid(-800.0_f64), 0.0);
    }

    #[test]
    fn works_for_f32_too() {
        assert!((softplus(-1.0_f32) - 0.313_261_7_f32).abs() < 1e-6);
        assert!((sigmoid(0.0_f32) - 0.5).abs() < 1e-7);
    }
}
