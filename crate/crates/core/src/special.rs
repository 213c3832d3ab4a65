//! Special functions, routed through f64.
//!
//! statrs only provides f64 implementations; evaluating log-gamma or a
//! Student-t tail at f32 precision would be pointless anyway, so generic
//! callers convert in and out. The wrappers exist so the rest of the crate
//! never imports statrs directly.

use crate::scalar::Scalar;
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::gamma;

/// Natural log of the gamma function.
pub fn ln_gamma<T: Scalar>(x: T) -> T {
    T::of(gamma::ln_gamma(x.f64()))
}

/// Digamma (derivative of ln-gamma).
pub fn digamma<T: Scalar>(x: T) -> T {
    T::of(gamma::digamma(x.f64()))
}

/// P(T <= t) for a central Student-t with `df` degrees of freedom.
pub fn student_t_cdf<T: Scalar>(t: T, df: T) -> T {
    let t = t.f64();
    if t.is_infinite() {
        return T::of(if t > 0.0 { 1.0 } else { 0.0 });
    }
    let dist = StudentsT::new(0.0, 1.0, df.f64()).expect("df > 0 checked by caller");
    T::of(dist.cdf(t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ln_gamma_matches_factorials() {
        // ln Γ(n) = ln (n-1)!
        assert_relative_eq!(ln_gamma(5.0f64), (24.0f64).ln(), max_relative = 1e-14);
        assert_relative_eq!(ln_gamma(1.0f64), 0.0, epsilon = 1e-14);
        // Γ(1/2) = sqrt(pi)
        assert_relative_eq!(
            ln_gamma(0.5f64),
            std::f64::consts::PI.sqrt().ln(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn digamma_recurrence() {
        // psi(x+1) = psi(x) + 1/x
        let x = 3.7f64;
        assert_relative_eq!(digamma(x + 1.0), digamma(x) + 1.0 / x, max_relative = 1e-10);
    }

    #[test]
    fn t_cdf_symmetry_and_center() {
        assert_relative_eq!(student_t_cdf(0.0f64, 7.0), 0.5, epsilon = 1e-12);
        let p = student_t_cdf(1.3f64, 11.0);
        let q = student_t_cdf(-1.3f64, 11.0);
        assert_relative_eq!(p + q, 1.0, epsilon = 1e-12);
        assert_eq!(student_t_cdf(f64::INFINITY, 3.0), 1.0);
        assert_eq!(student_t_cdf(f64::NEG_INFINITY, 3.0), 0.0);
    }

    #[test]
    fn works_at_f32() {
        assert!((ln_gamma(5.0f32) - 24.0f32.ln()).abs() < 1e-5);
    }
}
