//! Ground-truth sidecar and true-versus-estimated checking.
//!
//! Every simulation run carries a `GroundTruth` record with the exact
//! parameters the generator used (after any standardization), keyed by the
//! same column names the design builders emit, so estimates join to truths
//! by name alone.

use super::config::MarketConfig;
use super::generate::GroupEffects;
use crate::data::{DwellingType, State};
use crate::error::{Error, Result};
use crate::hlm::HlmFit;
use crate::nb::NbFit;
use crate::time::Quarter;
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

/// Everything needed to score fits against the generator, and to reproduce
/// the run (the full configuration is embedded).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Deterministic digest of the configuration; fits made from this
    /// run's files can carry it in their metadata under `run_id`.
    pub run_id: String,
    pub seed: u64,
    pub coverage_start: NaiveDate,
    pub coverage_end: NaiveDate,
    /// True price fixed effects by design column name.
    pub price_fixed: BTreeMap<String, f64>,
    pub quarterly_drift: f64,
    pub sigma2_state: f64,
    pub sigma2_district: f64,
    pub sigma2_resid: f64,
    /// Population variance of the intercepts actually drawn. Equal to the
    /// targets when the run standardized its group effects.
    pub realized_sigma2_state: f64,
    pub realized_sigma2_district: f64,
    /// True count-model terms by design column name, including the cycle
    /// in `cycle_cos`/`cycle_sin` coefficient form.
    pub count_terms: BTreeMap<String, f64>,
    pub dispersion: f64,
    pub cycle_amplitude: f64,
    pub cycle_phase: f64,
    pub cycle_period: f64,
    pub standardized_group_effects: bool,
    pub n_adverts: u64,
    pub n_brokered: u64,
    pub n_deeds: u64,
    /// Deeds that never appeared as adverts.
    pub n_extra_deeds: u64,
    pub config: MarketConfig,
    pub notes: Vec<String>,
}

/// 64-bit FNV-1a; stable content digest for run identifiers (not a
/// security boundary).
fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x1000_0000_01b3);
    }
    h
}

impl GroundTruth {
    pub(crate) fn new(
        config: &MarketConfig,
        effects: &GroupEffects,
        n_adverts: u64,
        n_brokered: u64,
        n_deeds: u64,
        n_extra_deeds: u64,
    ) -> Self {
        let config_text = config.to_toml_string().unwrap_or_default();
        let run_id = format!("sim-{}-{:016x}", config.seed, fnv1a64(config_text.as_bytes()));
        let (realized_state, realized_district) = effects.realized_variances();
        let cycle = config.counts.cycle();
        let mut count_terms = config.counts.terms.clone();
        count_terms.insert(crate::design::CYCLE_COS.into(), cycle.beta_cos);
        count_terms.insert(crate::design::CYCLE_SIN.into(), cycle.beta_sin);
        let mut notes = vec![
            "advert and agreement dates lie inside coverage; deed registration may spill past \
             the end (load deeds without a coverage restriction)"
                .into(),
            "prices of advertised dwellings are set at the advert date; time effects on \
             brokered/deed records therefore lag their observation dates"
                .into(),
        ];
        if config.standardize_group_effects {
            notes.push(
                "state and district intercepts were standardized to the configured variances"
                    .into(),
            );
        }
        GroundTruth {
            run_id,
            seed: config.seed,
            coverage_start: config.coverage_start,
            coverage_end: config.coverage_end,
            price_fixed: config.price.fixed.clone(),
            quarterly_drift: config.price.quarterly_drift,
            sigma2_state: config.price.sigma2_state,
            sigma2_district: config.price.sigma2_district,
            sigma2_resid: config.price.sigma2_resid,
            realized_sigma2_state: realized_state,
            realized_sigma2_district: realized_district,
            count_terms,
            dispersion: config.counts.dispersion,
            cycle_amplitude: config.counts.cycle_amplitude,
            cycle_phase: config.counts.cycle_phase,
            cycle_period: config.counts.cycle_period,
            standardized_group_effects: config.standardize_group_effects,
            n_adverts,
            n_brokered,
            n_deeds,
            n_extra_deeds,
            config: config.clone(),
            notes,
        }
    }

    /// True log-price time effect at a date (drift plus price shocks); see
    /// [`MarketConfig::price_time_effect`].
    pub fn price_time_effect(&self, date: NaiveDate, state: State, dwelling: DwellingType) -> f64 {
        self.config.price_time_effect(date, state, dwelling)
    }

    pub fn has_price_shocks(&self) -> bool {
        self.config.shocks.iter().any(|s| s.kind.is_price())
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("cannot serialize ground truth: {e}")))
    }

    pub fn write_toml(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml_string()?)?;
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("bad ground-truth file: {e}")))
    }

    pub fn from_toml_file(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }
}

/// Flagging thresholds for [`oracle_check`].
#[derive(Debug, Clone, Copy)]
pub struct OracleOptions {
    /// Parameters with a standard error flag when `|z|` exceeds this.
    pub z_limit: f64,
    /// Parameters without one (variance components, dispersion) flag on
    /// relative error instead.
    pub rel_limit: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions { z_limit: 3.0, rel_limit: 0.5 }
    }
}

/// One true-versus-estimated comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleRow {
    pub parameter: String,
    pub truth: f64,
    /// None when the fit has no such coefficient.
    pub estimate: Option<f64>,
    pub se: Option<f64>,
    /// Standardized error, when a standard error exists.
    pub z: Option<f64>,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub run_id: String,
    pub rows: Vec<OracleRow>,
}

impl OracleReport {
    pub fn n_flagged(&self) -> usize {
        self.rows.iter().filter(|r| r.flagged).count()
    }

    pub fn flagged(&self) -> impl Iterator<Item = &OracleRow> {
        self.rows.iter().filter(|r| r.flagged)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("parameter,truth,estimate,se,z,flagged\n");
        for r in &self.rows {
            let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.parameter,
                r.truth,
                opt(r.estimate),
                opt(r.se),
                opt(r.z),
                r.flagged
            ));
        }
        out
    }
}

fn check_run_id(truth: &GroundTruth, metadata: &BTreeMap<String, String>) -> Result<()> {
    if let Some(id) = metadata.get("run_id") {
        if id != &truth.run_id {
            return Err(Error::Config(format!(
                "fit was made from run {id} but the ground truth is run {}",
                truth.run_id
            )));
        }
    }
    Ok(())
}

fn score(
    parameter: &str,
    truth: f64,
    estimate: Option<f64>,
    se: Option<f64>,
    options: &OracleOptions,
) -> OracleRow {
    let (z, flagged) = match (estimate, se) {
        (Some(est), Some(se)) if se > 0.0 => {
            let z = (est - truth) / se;
            (Some(z), z.abs() > options.z_limit)
        }
        (Some(est), _) => {
            let denom = truth.abs().max(1e-12);
            (None, ((est - truth).abs() / denom) > options.rel_limit)
        }
        (None, _) => (None, true),
    };
    OracleRow { parameter: parameter.into(), truth, estimate, se, z, flagged }
}

/// Scores fits produced from one simulated run against its ground truth.
/// Coefficients join by design column name; variance components and the
/// dispersion join to the realized/configured values. Quarterly time
/// dummies of the price fit are scored against the deterministic drift
/// when the run had no price shocks (with shocks the per-quarter truth is
/// listing-weighted and not reconstructible from the sidecar alone).
/// A fit whose metadata carries a different `run_id` is an error.
pub fn oracle_check(
    truth: &GroundTruth,
    price_fit: Option<&HlmFit<f64>>,
    count_fit: Option<&NbFit<f64>>,
    options: OracleOptions,
) -> Result<OracleReport> {
    let mut rows = Vec::new();

    if let Some(fit) = price_fit {
        check_run_id(truth, &fit.metadata)?;
        let coef = |name: &str| {
            crate::fit::find_coefficient(&fit.coefficients, name)
                .map(|c| (Some(c.estimate), Some(c.se)))
                .unwrap_or((None, None))
        };
        for (name, &true_val) in &truth.price_fixed {
            let (est, se) = coef(name);
            rows.push(score(name, true_val, est, se, &options));
        }
        if !truth.has_price_shocks() {
            if let Some(axis) = &fit.time {
                if axis.kind == crate::design::TimeAxisKind::Quarterly {
                    let base = Quarter::of(truth.coverage_start);
                    for point in &axis.points {
                        if point.column.is_none() {
                            continue; // reference quarter
                        }
                        if let Ok(q) = Quarter::parse(&point.label) {
                            let steps = (q.year as i64 - base.year as i64) * 4
                                + (q.q as i64 - base.q as i64);
                            let true_val = truth.quarterly_drift * steps as f64;
                            let name = format!("time={}", point.label);
                            let (est, se) = coef(&name);
                            rows.push(score(&name, true_val, est, se, &options));
                        }
                    }
                }
            }
        }
        // Maximum likelihood estimates the realized spread of the drawn
        // intercepts, so realized values are the honest target.
        for (name, true_val, est) in [
            ("sigma2_state", truth.realized_sigma2_state, fit.variance.state),
            ("sigma2_district", truth.realized_sigma2_district, fit.variance.district),
            ("sigma2_resid", truth.sigma2_resid, fit.variance.residual),
        ] {
            rows.push(score(name, true_val, Some(est), None, &options));
        }
    }

    if let Some(fit) = count_fit {
        check_run_id(truth, &fit.metadata)?;
        for (name, &true_val) in &truth.count_terms {
            let (est, se) = crate::fit::find_coefficient(&fit.coefficients, name)
                .map(|c| (Some(c.estimate), Some(c.se)))
                .unwrap_or((None, None));
            rows.push(score(name, true_val, est, se, &options));
        }
        rows.push(score("dispersion", truth.dispersion, Some(fit.dispersion), None, &options));
    }

    if rows.is_empty() {
        return Err(Error::Config(
            "oracle check needs at least one fit to score against the ground truth".into(),
        ));
    }

    Ok(OracleReport { run_id: truth.run_id.clone(), rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fit::{Coefficient, ConvergenceReport};
    use crate::hlm::VarianceComponents;

    fn tiny_truth() -> GroundTruth {
        let mut cfg = MarketConfig::default();
        cfg.validate().unwrap();
        let effects = super::super::generate::draw_group_effects(&cfg);
        GroundTruth::new(&cfg, &effects, 10, 5, 7, 2)
    }

    fn fake_price_fit(truth: &GroundTruth, perturb: f64) -> HlmFit<f64> {
        let coefficients: Vec<Coefficient<f64>> = truth
            .price_fixed
            .iter()
            .map(|(name, &v)| Coefficient { name: name.clone(), estimate: v + perturb, se: 0.01 })
            .collect();
        HlmFit {
            coefficients,
            variance: VarianceComponents {
                residual: truth.sigma2_resid,
                district: truth.realized_sigma2_district,
                state: truth.realized_sigma2_state,
            },
            loglik: 0.0,
            bic: 0.0,
            n_obs: 10,
            n_districts: 4,
            n_states: 2,
            convergence: ConvergenceReport::fresh(),
            time: None,
            reference_levels: vec![],
            metadata: BTreeMap::new(),
        }
    }

    #[test]
    fn sidecar_round_trips_through_toml() {
        let truth = tiny_truth();
        let text = truth.to_toml_string().unwrap();
        let back = GroundTruth::from_toml_str(&text).unwrap();
        assert_eq!(truth, back);
    }

    #[test]
    fn exact_fit_raises_no_flags_and_covers_every_parameter() {
        let truth = tiny_truth();
        let fit = fake_price_fit(&truth, 0.0);
        let report = oracle_check(&truth, Some(&fit), None, OracleOptions::default()).unwrap();
        assert_eq!(report.n_flagged(), 0, "{}", report.to_csv_string());
        // Every declared price parameter and the three components appear.
        assert_eq!(report.rows.len(), truth.price_fixed.len() + 3);
    }

    #[test]
    fn corrupted_fit_raises_flags() {
        let truth = tiny_truth();
        let fit = fake_price_fit(&truth, 0.5); // 50 SEs off
        let report = oracle_check(&truth, Some(&fit), None, OracleOptions::default()).unwrap();
        assert_eq!(report.n_flagged(), truth.price_fixed.len());
    }

    #[test]
    fn missing_coefficient_is_flagged() {
        let truth = tiny_truth();
        let mut fit = fake_price_fit(&truth, 0.0);
        fit.coefficients.retain(|c| c.name != "log_area");
        let report = oracle_check(&truth, Some(&fit), None, OracleOptions::default()).unwrap();
        assert_eq!(report.n_flagged(), 1);
        let row = report.rows.iter().find(|r| r.parameter == "log_area").unwrap();
        assert!(row.estimate.is_none() && row.flagged);
    }

    #[test]
    fn mismatched_run_id_is_an_error() {
        let truth = tiny_truth();
        let mut fit = fake_price_fit(&truth, 0.0);
        fit.metadata.insert("run_id".into(), "sim-999-deadbeef".into());
        let err = oracle_check(&truth, Some(&fit), None, OracleOptions::default()).unwrap_err();
        assert!(err.to_string().contains("run"), "{err}");
    }

    #[test]
    fn no_fits_is_an_error() {
        let truth = tiny_truth();
        assert!(oracle_check(&truth, None, None, OracleOptions::default()).is_err());
    }
}
