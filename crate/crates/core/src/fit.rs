//! Shared reporting types for fitted models.

use crate::scalar::Scalar;

/// One estimated fixed effect with its standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficient<T: Scalar> {
    pub name: String,
    pub estimate: T,
    pub se: T,
}

impl<T: Scalar> Coefficient<T> {
    /// Wald z statistic.
    pub fn z(&self) -> T {
        self.estimate / self.se
    }
}

/// How an iterative fit ended. `boundary` lists parameters pinned at a
/// boundary of their domain (variance ratios at the floor, dispersion at
/// the cap); estimates are still valid but their interpretation changes,
/// so reports should surface these notes.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub converged: bool,
    pub iterations: usize,
    /// Norm of the score (gradient of the log-likelihood) at the optimum,
    /// in the parametrisation the optimiser used.
    pub score_norm: f64,
    pub boundary: Vec<String>,
    pub detail: String,
}

impl ConvergenceReport {
    pub fn fresh() -> Self {
        ConvergenceReport {
            converged: false,
            iterations: 0,
            score_norm: f64::NAN,
            boundary: Vec::new(),
            detail: String::new(),
        }
    }
}

/// Looks a coefficient up by exact name.
pub fn find_coefficient<'a, T: Scalar>(
    coefficients: &'a [Coefficient<T>],
    name: &str,
) -> Option<&'a Coefficient<T>> {
    coefficients.iter().find(|c| c.name == name)
}

/// Bayesian information criterion for a fit with `k` free parameters on
/// `n` observations.
pub fn bic(loglik: f64, k: usize, n: usize) -> f64 {
    (k as f64) * (n as f64).ln() - 2.0 * loglik
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bic_matches_hand_computation() {
        // k ln n - 2 l with l = -100, k = 3, n = 50.
        let expected = 3.0 * 50f64.ln() + 200.0;
        assert!((bic(-100.0, 3, 50) - expected).abs() < 1e-12);
    }

    #[test]
    fn find_coefficient_matches_exact_name_only() {
        let coeffs = vec![
            Coefficient { name: "x".into(), estimate: 1.0f64, se: 0.1 },
            Coefficient { name: "x2".into(), estimate: 2.0, se: 0.2 },
        ];
        assert_eq!(find_coefficient(&coeffs, "x").unwrap().estimate, 1.0);
        assert!(find_coefficient(&coeffs, "x3").is_none());
    }
}
