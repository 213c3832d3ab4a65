//! Scalar abstraction for the numeric kernels.
//!
//! Everything that does arithmetic (likelihoods, design matrices, indices,
//! the simulator's truth records) is generic over [`Scalar`] so the same
//! code runs at f32 or f64. The bound is `nalgebra::RealField` rather than
//! `num_traits::Float`: the two traits both define `ln`, `exp`, `sqrt` and
//! friends taking `self`, so requiring both would make every call ambiguous.
//! `FromPrimitive`/`ToPrimitive` are needed to cross into f64 for the
//! special functions (log-gamma, digamma, Student-t tails), which are only
//! worth evaluating at full precision anyway.

use num_traits::{FromPrimitive, ToPrimitive};

pub trait Scalar: nalgebra::RealField + FromPrimitive + ToPrimitive + Copy {
    /// Lossy conversion from f64, for constants and special-function results.
    /// Panics only if the target type cannot represent ordinary finite
    /// values, which none of the provided impls do.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 must convert into a Scalar")
    }

    /// Conversion into f64 for special functions and reporting.
    fn f64(self) -> f64 {
        self.to_f64().expect("Scalar must convert into f64")
    }
}

impl<T> Scalar for T where T: nalgebra::RealField + FromPrimitive + ToPrimitive + Copy {}

#[cfg(test)]
mod tests {
    use super::*;

    fn generic_sum<T: Scalar>(xs: &[T]) -> T {
        let mut acc = T::zero();
        for &x in xs {
            acc += x;
        }
        acc
    }

    #[test]
    fn works_at_both_widths() {
        assert_eq!(generic_sum(&[1.0f64, 2.0, 3.0]), 6.0);
        assert_eq!(generic_sum(&[1.0f32, 2.0, 3.0]), 6.0);
        assert_eq!(f32::of(0.5).f64(), 0.5);
    }
}
