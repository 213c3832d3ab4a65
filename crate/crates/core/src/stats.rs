//! Correlation testing between derived series (indices, contextual
//! covariates, count panels).

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::special::student_t_cdf;

/// Direction of the alternative hypothesis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Alternative {
    TwoSided,
    /// Correlation greater than zero.
    Greater,
    /// Correlation less than zero.
    Less,
}

impl Alternative {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "two-sided" | "two_sided" | "twosided" | "both" => Ok(Alternative::TwoSided),
            "greater" | "positive" => Ok(Alternative::Greater),
            "less" | "negative" => Ok(Alternative::Less),
            _ => Err(Error::Config(format!(
                "unknown alternative '{s}' (expected two-sided, greater or less)"
            ))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Alternative::TwoSided => "two-sided",
            Alternative::Greater => "greater",
            Alternative::Less => "less",
        }
    }
}

/// Result of a Pearson correlation test.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationResult<T: Scalar> {
    pub r: T,
    /// `r sqrt((n-2) / (1-r^2))`, Student t with `n - 2` degrees of
    /// freedom under the null of zero correlation.
    pub t: T,
    pub df: usize,
    pub p_value: T,
    pub n: usize,
    pub alternative: Alternative,
}

/// Tests the Pearson correlation between two equal-length series.
/// Degenerate inputs (fewer than three points, zero variance) are errors
/// rather than NaNs.
pub fn pearson_test<T: Scalar>(
    x: &[T],
    y: &[T],
    alternative: Alternative,
) -> Result<CorrelationResult<T>> {
    if x.len() != y.len() {
        return Err(Error::Data(format!(
            "series lengths differ: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::Data(format!(
            "need at least 3 paired observations for a correlation test, got {n}"
        )));
    }
    let n_t = T::of(n as f64);
    let mean = |v: &[T]| v.iter().fold(T::zero(), |a, b| a + *b) / n_t;
    let mx = mean(x);
    let my = mean(y);
    let mut sxx = T::zero();
    let mut syy = T::zero();
    let mut sxy = T::zero();
    for i in 0..n {
        let dx = x[i] - mx;
        let dy = y[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx <= T::zero() || syy <= T::zero() {
        return Err(Error::Domain(
            "correlation undefined: at least one series has zero variance".into(),
        ));
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-T::one(), T::one());
    let df = n - 2;
    let one_minus_r2 = (T::one() - r * r).max(T::zero());
    let t = if one_minus_r2 == T::zero() {
        // Perfect correlation: infinite t, p collapses to 0 or 1.
        if r > T::zero() { T::of(f64::INFINITY) } else { T::of(f64::NEG_INFINITY) }
    } else {
        r * (T::of(df as f64) / one_minus_r2).sqrt()
    };
    let cdf = student_t_cdf(t, T::of(df as f64));
    let p_value = match alternative {
        Alternative::TwoSided => {
            let tail = if t > T::zero() { T::one() - cdf } else { cdf };
            (tail + tail).min(T::one())
        }
        Alternative::Greater => T::one() - cdf,
        Alternative::Less => cdf,
    };
    Ok(CorrelationResult { r, t, df, p_value, n, alternative })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frozen_small_example() {
        // x = 1..5, y = (2,1,4,3,5): r = 8/sqrt(10*10) = 0.8 exactly,
        // t = 0.8 sqrt(3/0.36) = 2.309401, df = 3;
        // via the closed-form t3 CDF: two-sided p = 0.10409.
        let x = [1.0f64, 2.0, 3.0, 4.0, 5.0];
        let y = [2.0f64, 1.0, 4.0, 3.0, 5.0];
        let res = pearson_test(&x, &y, Alternative::TwoSided).unwrap();
        assert!((res.r - 0.8).abs() < 1e-14, "r = {}", res.r);
        assert!((res.t - 2.309_401_076_758_5).abs() < 1e-10, "t = {}", res.t);
        assert_eq!(res.df, 3);
        assert!((res.p_value - 0.104_088).abs() < 5e-4, "p = {}", res.p_value);
        let greater = pearson_test(&x, &y, Alternative::Greater).unwrap();
        let less = pearson_test(&x, &y, Alternative::Less).unwrap();
        assert!((greater.p_value - res.p_value / 2.0).abs() < 1e-12);
        assert!((greater.p_value + less.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_correlation_has_zero_p() {
        let x = [1.0f64, 2.0, 3.0, 4.0];
        let y = [2.0f64, 4.0, 6.0, 8.0];
        let res = pearson_test(&x, &y, Alternative::Greater).unwrap();
        assert_eq!(res.r, 1.0);
        assert!(res.t.is_infinite());
        assert!(res.p_value < 1e-12);
        let anti = pearson_test(&x, &[8.0, 6.0, 4.0, 2.0], Alternative::Less).unwrap();
        assert_eq!(anti.r, -1.0);
        assert!(anti.p_value < 1e-12);
    }

    #[test]
    fn symmetry_and_affine_invariance() {
        let x = [0.3f64, -1.2, 0.7, 2.4, -0.6, 1.1];
        let y = [1.0f64, 0.2, 0.9, 1.8, 0.1, 1.2];
        let a = pearson_test(&x, &y, Alternative::TwoSided).unwrap();
        let b = pearson_test(&y, &x, Alternative::TwoSided).unwrap();
        assert!((a.r - b.r).abs() < 1e-14);
        assert!((a.p_value - b.p_value).abs() < 1e-14);
        let scaled: Vec<f64> = x.iter().map(|v| 3.5 * v + 10.0).collect();
        let c = pearson_test(&scaled, &y, Alternative::TwoSided).unwrap();
        assert!((a.r - c.r).abs() < 1e-12);
        // Negative scaling flips the sign of r.
        let neg: Vec<f64> = x.iter().map(|v| -2.0 * v).collect();
        let d = pearson_test(&neg, &y, Alternative::TwoSided).unwrap();
        assert!((a.r + d.r).abs() < 1e-12);
        assert!((a.p_value - d.p_value).abs() < 1e-12);
    }

    #[test]
    fn degenerate_inputs_are_errors() {
        assert!(pearson_test::<f64>(&[1.0, 2.0], &[1.0, 2.0], Alternative::TwoSided).is_err());
        assert!(
            pearson_test(&[1.0f64, 1.0, 1.0], &[1.0, 2.0, 3.0], Alternative::TwoSided).is_err()
        );
        assert!(pearson_test(&[1.0f64, 2.0], &[1.0], Alternative::TwoSided).is_err());
    }

    #[test]
    fn alternative_parsing() {
        assert_eq!(Alternative::parse("two-sided").unwrap(), Alternative::TwoSided);
        assert_eq!(Alternative::parse("GREATER").unwrap(), Alternative::Greater);
        assert_eq!(Alternative::parse("less").unwrap(), Alternative::Less);
        assert!(Alternative::parse("sideways").is_err());
    }
}
