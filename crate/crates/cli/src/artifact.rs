//! On-disk form of a fitted model (`fit.toml`).
//!
//! Captures everything downstream commands need — coefficients, variance
//! components or dispersion, the time axis, reference levels, metadata —
//! so `index` and `report` can run from files without refitting.

use dwellfit_core::design::{TimeAxisInfo, TimeAxisKind, TimePoint};
use dwellfit_core::fit::{Coefficient, ConvergenceReport};
use dwellfit_core::hlm::VarianceComponents;
use dwellfit_core::{Error, HlmFit, NbFit, Result};
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

pub const PRICE_KIND: &str = "price";
pub const COUNT_KIND: &str = "count";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct CoefficientDoc {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct VarianceDoc {
    pub state: f64,
    pub district: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ConvergenceDoc {
    pub converged: bool,
    pub iterations: usize,
    pub score_norm: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub boundary: Vec<String>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct TimePointDoc {
    pub label: String,
    /// Half-open date spans `[start, end)`.
    pub spans: Vec<(NaiveDate, NaiveDate)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub column: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct TimeAxisDoc {
    pub kind: String,
    pub points: Vec<TimePointDoc>,
}

/// The whole artifact. Scalar fields first so the TOML writer can emit
/// them before the tables.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct FitArtifact {
    /// `"price"` or `"count"`.
    pub kind: String,
    pub loglik: f64,
    pub bic: f64,
    pub n_obs: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_districts: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_states: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dispersion: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dispersion_capped: Option<bool>,
    /// Factor name to dropped reference level.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub reference_levels: Vec<(String, String)>,
    pub convergence: ConvergenceDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variance: Option<VarianceDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time: Option<TimeAxisDoc>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, String>,
    pub coefficients: Vec<CoefficientDoc>,
}

fn convergence_doc(report: &ConvergenceReport) -> ConvergenceDoc {
    ConvergenceDoc {
        converged: report.converged,
        iterations: report.iterations,
        score_norm: report.score_norm,
        boundary: report.boundary.clone(),
        detail: report.detail.clone(),
    }
}

fn convergence_from_doc(doc: &ConvergenceDoc) -> ConvergenceReport {
    ConvergenceReport {
        converged: doc.converged,
        iterations: doc.iterations,
        score_norm: doc.score_norm,
        boundary: doc.boundary.clone(),
        detail: doc.detail.clone(),
    }
}

fn time_doc(time: &TimeAxisInfo) -> TimeAxisDoc {
    TimeAxisDoc {
        kind: time.kind.as_str().to_string(),
        points: time
            .points
            .iter()
            .map(|p| TimePointDoc {
                label: p.label.clone(),
                spans: p.spans.clone(),
                column: p.column,
            })
            .collect(),
    }
}

fn time_from_doc(doc: &TimeAxisDoc) -> Result<TimeAxisInfo> {
    Ok(TimeAxisInfo {
        kind: TimeAxisKind::parse(&doc.kind)?,
        points: doc
            .points
            .iter()
            .map(|p| TimePoint {
                label: p.label.clone(),
                spans: p.spans.clone(),
                column: p.column,
            })
            .collect(),
    })
}

fn coefficient_docs(coefficients: &[Coefficient<f64>]) -> Vec<CoefficientDoc> {
    coefficients
        .iter()
        .map(|c| CoefficientDoc { name: c.name.clone(), estimate: c.estimate, se: c.se })
        .collect()
}

impl FitArtifact {
    pub fn from_price(fit: &HlmFit) -> FitArtifact {
        FitArtifact {
            kind: PRICE_KIND.to_string(),
            loglik: fit.loglik,
            bic: fit.bic,
            n_obs: fit.n_obs,
            n_districts: Some(fit.n_districts),
            n_states: Some(fit.n_states),
            dispersion: None,
            dispersion_capped: None,
            reference_levels: fit.reference_levels.clone(),
            convergence: convergence_doc(&fit.convergence),
            variance: Some(VarianceDoc {
                state: fit.variance.state,
                district: fit.variance.district,
                residual: fit.variance.residual,
            }),
            time: fit.time.as_ref().map(time_doc),
            metadata: fit.metadata.clone(),
            coefficients: coefficient_docs(&fit.coefficients),
        }
    }

    pub fn from_count(fit: &NbFit) -> FitArtifact {
        FitArtifact {
            kind: COUNT_KIND.to_string(),
            loglik: fit.loglik,
            bic: fit.bic,
            n_obs: fit.n_obs,
            n_districts: None,
            n_states: None,
            dispersion: Some(fit.dispersion),
            dispersion_capped: Some(fit.dispersion_capped),
            reference_levels: fit.reference_levels.clone(),
            convergence: convergence_doc(&fit.convergence),
            variance: None,
            time: fit.time.as_ref().map(time_doc),
            metadata: fit.metadata.clone(),
            coefficients: coefficient_docs(&fit.coefficients),
        }
    }

    pub fn coefficients(&self) -> Vec<Coefficient<f64>> {
        self.coefficients
            .iter()
            .map(|c| Coefficient { name: c.name.clone(), estimate: c.estimate, se: c.se })
            .collect()
    }

    pub fn time_axis(&self) -> Result<Option<TimeAxisInfo>> {
        self.time.as_ref().map(time_from_doc).transpose()
    }

    pub fn to_price(&self) -> Result<HlmFit> {
        if self.kind != PRICE_KIND {
            return Err(Error::Config(format!(
                "expected a price fit artifact, got kind '{}'",
                self.kind
            )));
        }
        let v = self.variance.as_ref().ok_or_else(|| {
            Error::Config("price fit artifact is missing its variance components".into())
        })?;
        Ok(HlmFit {
            coefficients: self.coefficients(),
            variance: VarianceComponents {
                residual: v.residual,
                district: v.district,
                state: v.state,
            },
            loglik: self.loglik,
            bic: self.bic,
            n_obs: self.n_obs,
            n_districts: self.n_districts.unwrap_or(0),
            n_states: self.n_states.unwrap_or(0),
            convergence: convergence_from_doc(&self.convergence),
            time: self.time_axis()?,
            reference_levels: self.reference_levels.clone(),
            metadata: self.metadata.clone(),
        })
    }

    pub fn to_count(&self) -> Result<NbFit> {
        if self.kind != COUNT_KIND {
            return Err(Error::Config(format!(
                "expected a count fit artifact, got kind '{}'",
                self.kind
            )));
        }
        let dispersion = self.dispersion.ok_or_else(|| {
            Error::Config("count fit artifact is missing its dispersion".into())
        })?;
        Ok(NbFit {
            coefficients: self.coefficients(),
            dispersion,
            dispersion_capped: self.dispersion_capped.unwrap_or(false),
            loglik: self.loglik,
            bic: self.bic,
            n_obs: self.n_obs,
            convergence: convergence_from_doc(&self.convergence),
            time: self.time_axis()?,
            reference_levels: self.reference_levels.clone(),
            metadata: self.metadata.clone(),
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("cannot serialise fit artifact: {e}")))
    }

    pub fn from_toml_str(text: &str) -> Result<FitArtifact> {
        toml::from_str(text)
            .map_err(|e| Error::Config(format!("cannot parse fit artifact: {e}")))
    }

    pub fn load(path: &Path) -> Result<FitArtifact> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read fit artifact '{}': {e}", path.display()))
        })?;
        Self::from_toml_str(&text)
    }
}

/// `name,estimate,se,z` rows; count fits add an incidence-rate-ratio
/// column (`exp(estimate)`).
pub fn coefficients_csv(coefficients: &[Coefficient<f64>], with_irr: bool) -> String {
    let mut out = String::new();
    out.push_str(if with_irr { "name,estimate,se,z,irr\n" } else { "name,estimate,se,z\n" });
    for c in coefficients {
        let z = if c.se > 0.0 { c.estimate / c.se } else { f64::NAN };
        if with_irr {
            out.push_str(&format!("{},{},{},{},{}\n", c.name, c.estimate, c.se, z, c.estimate.exp()));
        } else {
            out.push_str(&format!("{},{},{},{}\n", c.name, c.estimate, c.se, z));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use dwellfit_core::time::Quarter;

    fn sample_price_fit() -> HlmFit {
        let mut metadata = BTreeMap::new();
        metadata.insert("run_id".to_string(), "sim-1-abc".to_string());
        HlmFit {
            coefficients: vec![
                Coefficient { name: "(Intercept)".into(), estimate: 8.6, se: 0.01 },
                Coefficient { name: "time=2020Q2".into(), estimate: 0.02, se: 0.005 },
            ],
            variance: VarianceComponents { residual: 0.1, district: 0.02, state: 0.04 },
            loglik: -123.456,
            bic: 260.0,
            n_obs: 1000,
            n_districts: 90,
            n_states: 9,
            convergence: ConvergenceReport {
                converged: true,
                iterations: 42,
                score_norm: 1e-8,
                boundary: vec![],
                detail: "ok".into(),
            },
            time: Some(TimeAxisInfo {
                kind: TimeAxisKind::Quarterly,
                points: vec![
                    TimePoint {
                        label: Quarter { year: 2020, q: 1 }.to_string(),
                        spans: vec![(
                            NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(),
                            NaiveDate::from_ymd_opt(2020, 4, 1).unwrap(),
                        )],
                        column: None,
                    },
                    TimePoint {
                        label: Quarter { year: 2020, q: 2 }.to_string(),
                        spans: vec![(
                            NaiveDate::from_ymd_opt(2020, 4, 1).unwrap(),
                            NaiveDate::from_ymd_opt(2020, 7, 1).unwrap(),
                        )],
                        column: Some(1),
                    },
                ],
            }),
            reference_levels: vec![("rooms".into(), "1".into())],
            metadata,
        }
    }

    #[test]
    fn price_artifact_round_trips() {
        let fit = sample_price_fit();
        let doc = FitArtifact::from_price(&fit);
        let text = doc.to_toml_string().unwrap();
        let back = FitArtifact::from_toml_str(&text).unwrap();
        let restored = back.to_price().unwrap();
        assert_eq!(restored.coefficients, fit.coefficients);
        assert_eq!(restored.variance, fit.variance);
        assert_eq!(restored.time, fit.time);
        assert_eq!(restored.reference_levels, fit.reference_levels);
        assert_eq!(restored.metadata, fit.metadata);
        assert_eq!(restored.n_districts, fit.n_districts);
        assert_eq!(restored.convergence, fit.convergence);
    }

    #[test]
    fn count_artifact_round_trips() {
        let fit = NbFit {
            coefficients: vec![Coefficient { name: "(Intercept)".into(), estimate: -13.0, se: 0.1 }],
            dispersion: 4.2,
            dispersion_capped: false,
            loglik: -10.0,
            bic: 30.0,
            n_obs: 500,
            convergence: ConvergenceReport {
                converged: true,
                iterations: 7,
                score_norm: 3e-9,
                boundary: vec![],
                detail: String::new(),
            },
            time: None,
            reference_levels: vec![],
            metadata: BTreeMap::new(),
        };
        let doc = FitArtifact::from_count(&fit);
        let text = doc.to_toml_string().unwrap();
        let back = FitArtifact::from_toml_str(&text).unwrap();
        let restored = back.to_count().unwrap();
        assert_eq!(restored.coefficients, fit.coefficients);
        assert_eq!(restored.dispersion, fit.dispersion);
        assert!(back.to_price().is_err());
    }

    #[test]
    fn coefficient_csv_includes_irr_only_for_counts() {
        let coefs = vec![Coefficient { name: "x".into(), estimate: -0.309, se: 0.1 }];
        let plain = coefficients_csv(&coefs, false);
        assert!(plain.starts_with("name,estimate,se,z\n"));
        let irr = coefficients_csv(&coefs, true);
        assert!(irr.starts_with("name,estimate,se,z,irr\n"));
        assert!(irr.contains("0.734"));
    }
}
