//! Market-generator configuration: the data-generating process, staged
//! sampling shares, and injectable shocks. Everything round-trips through
//! TOML so a run can be reproduced from its sidecar alone.

use crate::data::{DwellingType, State};
use crate::error::{Error, Result};
use crate::nb::CyclicalTrend;
use crate::regime::{RegimeCalendar, RegimeFamily, RegimeInterval};
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

/// Average quarter length in days; converts day offsets to the quarter
/// scale gradual drifts are expressed on.
pub const DAYS_PER_QUARTER: f64 = 365.25 / 4.0;

/// What a shock does to the market while its window is active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShockKind {
    /// Adds `magnitude` to log price for listings advertised inside the
    /// window.
    ImmediatePriceShift,
    /// Adds `magnitude` per quarter to log price, accumulating linearly
    /// while the window is open; the accumulated level persists after the
    /// window closes.
    GradualPriceDrift,
    /// Each would-be transaction agreed inside the window falls through
    /// with probability `magnitude` (fewer brokered agreements and deeds,
    /// adverts unchanged).
    DemandThinning,
    /// Each would-be advert inside the window is withheld with probability
    /// `magnitude` (fewer adverts, and downstream fewer agreements).
    SupplyThinning,
}

impl ShockKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ShockKind::ImmediatePriceShift => "immediate-price-shift",
            ShockKind::GradualPriceDrift => "gradual-price-drift",
            ShockKind::DemandThinning => "demand-thinning",
            ShockKind::SupplyThinning => "supply-thinning",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "immediate-price-shift" => Ok(ShockKind::ImmediatePriceShift),
            "gradual-price-drift" => Ok(ShockKind::GradualPriceDrift),
            "demand-thinning" => Ok(ShockKind::DemandThinning),
            "supply-thinning" => Ok(ShockKind::SupplyThinning),
            _ => Err(Error::Config(format!("unknown shock kind '{s}'"))),
        }
    }

    pub fn is_thinning(self) -> bool {
        matches!(self, ShockKind::DemandThinning | ShockKind::SupplyThinning)
    }

    pub fn is_price(self) -> bool {
        !self.is_thinning()
    }
}

/// One shock over a half-open window, optionally narrowed to states and/or
/// one dwelling type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShockSpec {
    pub kind: ShockKind,
    /// Label used for regime calendars built from the shock list.
    pub name: String,
    pub start: NaiveDate,
    /// Exclusive.
    pub end: NaiveDate,
    /// Log-price shift, per-quarter drift, or thinning probability,
    /// depending on `kind`.
    pub magnitude: f64,
    /// Empty means nation-wide.
    #[serde(default)]
    pub states: Vec<State>,
    /// None means both dwelling types.
    #[serde(default)]
    pub dwelling: Option<DwellingType>,
}

impl ShockSpec {
    pub fn applies(&self, date: NaiveDate, state: State, dwelling: DwellingType) -> bool {
        self.start <= date
            && date < self.end
            && (self.states.is_empty() || self.states.contains(&state))
            && self.dwelling.map_or(true, |d| d == dwelling)
    }

    /// Cumulative log-price effect of this shock at `date` (zero when it
    /// never applied). Gradual drifts accumulate only over days the window
    /// was open and then hold their level.
    pub fn price_effect(&self, date: NaiveDate, state: State, dwelling: DwellingType) -> f64 {
        if !(self.states.is_empty() || self.states.contains(&state))
            || self.dwelling.map_or(false, |d| d != dwelling)
        {
            return 0.0;
        }
        match self.kind {
            ShockKind::ImmediatePriceShift => {
                if self.start <= date && date < self.end {
                    self.magnitude
                } else {
                    0.0
                }
            }
            ShockKind::GradualPriceDrift => {
                if date < self.start {
                    0.0
                } else {
                    let until = date.min(self.end);
                    let days = (until - self.start).num_days() as f64;
                    self.magnitude * days / DAYS_PER_QUARTER
                }
            }
            _ => 0.0,
        }
    }
}

/// One state's slice of the market. Districts are named
/// `{state}-D{number}` and cycle through the four urban classes in order,
/// so four or more districts make every class observable in the state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateConfig {
    pub state: State,
    pub districts: u32,
    /// Persons; the exposure offset of the count process.
    pub population: f64,
}

/// True price process: fixed effects by design column name, variance
/// components of the nested random intercepts, and a deterministic
/// quarterly trend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriceProcess {
    /// Design column name → true coefficient. Names absent from the map
    /// (reference levels) contribute zero.
    pub fixed: BTreeMap<String, f64>,
    pub sigma2_state: f64,
    pub sigma2_district: f64,
    pub sigma2_resid: f64,
    /// Log-price drift per quarter, counted from the first coverage
    /// quarter (which therefore stays the natural index base).
    pub quarterly_drift: f64,
}

impl Default for PriceProcess {
    fn default() -> Self {
        let mut fixed = BTreeMap::new();
        for (name, value) in [
            ("(Intercept)", 8.60),
            ("log_area", 0.90),
            ("dwelling=apartment", 0.10),
            ("rooms=2", 0.05),
            ("rooms=3", 0.08),
            ("rooms=>3", 0.10),
            ("age_class=1-10", -0.04),
            ("age_class=11-20", -0.09),
            ("age_class=21-30", -0.14),
            ("age_class=31-50", -0.18),
            ("age_class=51-70", -0.22),
            ("age_class=71-100", -0.20),
            ("age_class=>100", -0.12),
            ("renovated", 0.05),
            ("open_space=up-to-15", 0.04),
            ("open_space=over-15", 0.08),
            ("basement", 0.03),
            ("parking", 0.06),
            ("air_conditioning", 0.02),
            ("step_free", 0.01),
            ("wellness", 0.07),
            ("condition=first-occupancy", 0.08),
            ("condition=as-new", 0.05),
            ("condition=poor", -0.15),
            ("log_plot_price", 0.05),
            ("urban_class=largely-urban", -0.10),
            ("urban_class=regional", -0.22),
            ("urban_class=rural", -0.35),
            ("accessibility=2", -0.03),
            ("accessibility=3", -0.06),
            ("accessibility=4", -0.09),
            ("accessibility=5", -0.12),
        ] {
            fixed.insert(name.to_string(), value);
        }
        PriceProcess {
            fixed,
            sigma2_state: 0.04,
            sigma2_district: 0.02,
            sigma2_resid: 0.10,
            quarterly_drift: 0.01,
        }
    }
}

/// True count process: weekly cell counts are negative binomial with a log
/// link, the state population as exposure, and a yearly cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CountProcess {
    /// Design column name → true coefficient (`(Intercept)`,
    /// `dwelling=...`, `state=...`, `urban_class=...`, `time=...`); absent
    /// names contribute zero.
    pub terms: BTreeMap<String, f64>,
    /// Negative-binomial dispersion `a`; larger is closer to Poisson.
    pub dispersion: f64,
    pub cycle_amplitude: f64,
    /// Radians in `[0, 2π)`; the cycle peaks at week `period·phase/2π`.
    pub cycle_phase: f64,
    /// Weeks per cycle.
    pub cycle_period: f64,
}

impl Default for CountProcess {
    fn default() -> Self {
        let mut terms = BTreeMap::new();
        for (name, value) in [
            ("(Intercept)", -13.0),
            ("dwelling=apartment", 0.25),
            ("state=Vienna", 0.30),
            ("state=Tyrol", 0.10),
            ("state=Burgenland", -0.10),
            ("urban_class=largely-urban", -0.40),
            ("urban_class=regional", -0.80),
            ("urban_class=rural", -1.10),
        ] {
            terms.insert(name.to_string(), value);
        }
        CountProcess {
            terms,
            dispersion: 4.0,
            cycle_amplitude: 0.15,
            cycle_phase: std::f64::consts::FRAC_PI_3,
            cycle_period: 52.0,
        }
    }
}

impl CountProcess {
    /// The cycle in coefficient form:
    /// `α·cos(2πt/T − θ) = α·cosθ·cos(2πt/T) + α·sinθ·sin(2πt/T)`.
    pub fn cycle(&self) -> CyclicalTrend<f64> {
        CyclicalTrend {
            beta_cos: self.cycle_amplitude * self.cycle_phase.cos(),
            beta_sin: self.cycle_amplitude * self.cycle_phase.sin(),
            period: self.cycle_period,
        }
    }
}

/// Full generator configuration. `Default` is a mid-sized three-year
/// market over all nine states that exercises every stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarketConfig {
    pub seed: u64,
    /// Inclusive start. Aligning it to a Monday keeps edge weeks whole, so
    /// the weekly count process is exactly the model the fitters assume.
    pub coverage_start: NaiveDate,
    /// Exclusive end.
    pub coverage_end: NaiveDate,
    pub states: Vec<StateConfig>,
    pub price: PriceProcess,
    pub counts: CountProcess,
    /// Probability an advert ends in a brokered agreement.
    pub brokered_share: f64,
    /// Mean days from advertising to agreement (gamma with shape 2).
    pub time_on_market_mean_days: f64,
    /// Mean days from agreement to deed registration (gamma with shape 2).
    pub deed_lag_mean_days: f64,
    /// Expected non-advertised transactions per brokered one, so deeds
    /// strictly exceed the brokered count on average.
    pub deed_extra_share: f64,
    /// Rescale the drawn state and district intercepts to have sample mean
    /// zero and population variance exactly the configured components.
    /// With only nine states the raw draw's realized variance is itself
    /// very noisy; standardizing removes that source of spread from
    /// recovery experiments without touching the model structure.
    pub standardize_group_effects: bool,
    pub shocks: Vec<ShockSpec>,
}

impl Default for MarketConfig {
    fn default() -> Self {
        MarketConfig {
            seed: 1,
            coverage_start: NaiveDate::from_ymd_opt(2019, 1, 7).expect("valid date"),
            coverage_end: NaiveDate::from_ymd_opt(2022, 1, 3).expect("valid date"),
            states: default_states(),
            price: PriceProcess::default(),
            counts: CountProcess::default(),
            brokered_share: 0.6,
            time_on_market_mean_days: 30.0,
            deed_lag_mean_days: 45.0,
            deed_extra_share: 0.35,
            standardize_group_effects: false,
            shocks: Vec::new(),
        }
    }
}

/// All nine states with round district counts and populations on the right
/// scale (millions for the big states, hundreds of thousands elsewhere).
pub fn default_states() -> Vec<StateConfig> {
    [
        (State::Burgenland, 7, 297_000.0),
        (State::Carinthia, 10, 562_000.0),
        (State::LowerAustria, 20, 1_684_000.0),
        (State::UpperAustria, 15, 1_505_000.0),
        (State::Salzburg, 6, 560_000.0),
        (State::Styria, 13, 1_246_000.0),
        (State::Tyrol, 9, 760_000.0),
        (State::Vorarlberg, 4, 399_000.0),
        (State::Vienna, 23, 1_920_000.0),
    ]
    .into_iter()
    .map(|(state, districts, population)| StateConfig { state, districts, population })
    .collect()
}

impl MarketConfig {
    /// Checks bounds and cross-field consistency, and sorts the state list
    /// into canonical order so generation is independent of config order.
    pub fn validate(&mut self) -> Result<()> {
        if self.coverage_start >= self.coverage_end {
            return Err(Error::Config(format!(
                "coverage start {} not before end {}",
                self.coverage_start, self.coverage_end
            )));
        }
        if self.states.is_empty() {
            return Err(Error::Config("at least one state is required".into()));
        }
        self.states.sort_by_key(|s| s.state.index());
        let mut seen = BTreeSet::new();
        for sc in &self.states {
            if !seen.insert(sc.state) {
                return Err(Error::Config(format!("state {} configured twice", sc.state)));
            }
            if sc.districts == 0 {
                return Err(Error::Config(format!("state {} has zero districts", sc.state)));
            }
            if !(sc.population > 0.0) || !sc.population.is_finite() {
                return Err(Error::Config(format!(
                    "state {} population must be positive, got {}",
                    sc.state, sc.population
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.brokered_share) {
            return Err(Error::Config(format!(
                "brokered share {} outside [0, 1]",
                self.brokered_share
            )));
        }
        for (label, v) in [
            ("time-on-market mean", self.time_on_market_mean_days),
            ("deed lag mean", self.deed_lag_mean_days),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{label} must be positive, got {v}")));
            }
        }
        if self.deed_extra_share < 0.0 || !self.deed_extra_share.is_finite() {
            return Err(Error::Config(format!(
                "extra-deed share must be non-negative, got {}",
                self.deed_extra_share
            )));
        }
        let p = &self.price;
        if p.sigma2_state < 0.0 || p.sigma2_district < 0.0 || !(p.sigma2_resid > 0.0) {
            return Err(Error::Config(format!(
                "price variances must be non-negative with positive residual, got ({}, {}, {})",
                p.sigma2_state, p.sigma2_district, p.sigma2_resid
            )));
        }
        let c = &self.counts;
        if !(c.dispersion > 0.0) {
            return Err(Error::Config(format!(
                "count dispersion must be positive, got {}",
                c.dispersion
            )));
        }
        if c.cycle_amplitude < 0.0 || !(c.cycle_period > 0.0) {
            return Err(Error::Config(format!(
                "cycle amplitude {} must be non-negative and period {} positive",
                c.cycle_amplitude, c.cycle_period
            )));
        }
        let configured: BTreeSet<State> = self.states.iter().map(|s| s.state).collect();
        for shock in &self.shocks {
            if shock.name.trim().is_empty() {
                return Err(Error::Config("shock with an empty name".into()));
            }
            if shock.start >= shock.end {
                return Err(Error::Config(format!(
                    "shock '{}' has start {} not before end {}",
                    shock.name, shock.start, shock.end
                )));
            }
            if shock.start < self.coverage_start || shock.end > self.coverage_end {
                return Err(Error::Config(format!(
                    "shock '{}' window [{}, {}) outside coverage [{}, {})",
                    shock.name, shock.start, shock.end, self.coverage_start, self.coverage_end
                )));
            }
            if shock.kind.is_thinning() && !(0.0..1.0).contains(&shock.magnitude) {
                return Err(Error::Config(format!(
                    "thinning shock '{}' needs a probability in [0, 1), got {}",
                    shock.name, shock.magnitude
                )));
            }
            if !shock.magnitude.is_finite() {
                return Err(Error::Config(format!(
                    "shock '{}' magnitude is not finite",
                    shock.name
                )));
            }
            for s in &shock.states {
                if !configured.contains(s) {
                    return Err(Error::Config(format!(
                        "shock '{}' targets state {} which is not configured",
                        shock.name, s
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn coverage(&self) -> (NaiveDate, NaiveDate) {
        (self.coverage_start, self.coverage_end)
    }

    /// Total log-price time effect at `date` for a listing in `state` of
    /// `dwelling` type: deterministic quarterly drift plus every price
    /// shock's contribution. This is the oracle the index tests compare
    /// estimated time dummies against.
    pub fn price_time_effect(&self, date: NaiveDate, state: State, dwelling: DwellingType) -> f64 {
        let drift = self.price.quarterly_drift * self.quarter_index(date) as f64;
        let shocks: f64 =
            self.shocks.iter().map(|s| s.price_effect(date, state, dwelling)).sum();
        drift + shocks
    }

    /// Quarters elapsed since the first coverage quarter.
    pub fn quarter_index(&self, date: NaiveDate) -> i64 {
        let base = crate::time::Quarter::of(self.coverage_start);
        let q = crate::time::Quarter::of(date);
        (q.year as i64 - base.year as i64) * 4 + (q.q as i64 - base.q as i64)
    }

    /// Builds a regime calendar whose intervals are the price-shock
    /// windows, for split-label fits that isolate the shocked sub-periods.
    /// Returns None when no price shocks are configured.
    pub fn shock_calendar(&self) -> Result<Option<RegimeCalendar>> {
        let intervals: Vec<RegimeInterval> = self
            .shocks
            .iter()
            .filter(|s| s.kind.is_price())
            .map(|s| {
                if s.states.is_empty() {
                    RegimeInterval::national(&s.name, s.start, s.end)
                } else {
                    RegimeInterval::regional(&s.name, s.start, s.end, &s.states)
                }
            })
            .collect();
        if intervals.is_empty() {
            return Ok(None);
        }
        RegimeCalendar::new(RegimeFamily::Lockdowns, self.coverage(), intervals).map(Some)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("cannot serialize market config: {e}")))
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut cfg: MarketConfig = toml::from_str(text)
            .map_err(|e| Error::Config(format!("bad market config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_file(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn date(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).unwrap()
    }

    #[test]
    fn default_config_validates_and_round_trips() {
        let mut cfg = MarketConfig::default();
        cfg.validate().unwrap();
        cfg.shocks.push(ShockSpec {
            kind: ShockKind::ImmediatePriceShift,
            name: "event-1".into(),
            start: date(2020, 3, 16),
            end: date(2020, 5, 4),
            magnitude: -0.05,
            states: vec![State::Vienna, State::Tyrol],
            dwelling: Some(DwellingType::Apartment),
        });
        cfg.validate().unwrap();
        let text = cfg.to_toml_string().unwrap();
        let back = MarketConfig::from_toml_str(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn validation_rejects_bad_windows_and_probabilities() {
        let mut cfg = MarketConfig::default();
        cfg.shocks.push(ShockSpec {
            kind: ShockKind::DemandThinning,
            name: "thin".into(),
            start: date(2018, 1, 1),
            end: date(2019, 6, 1),
            magnitude: 0.3,
            states: vec![],
            dwelling: None,
        });
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("outside coverage"), "{err}");

        let mut cfg = MarketConfig::default();
        cfg.shocks.push(ShockSpec {
            kind: ShockKind::SupplyThinning,
            name: "thin".into(),
            start: date(2020, 1, 6),
            end: date(2020, 3, 2),
            magnitude: 1.0,
            states: vec![],
            dwelling: None,
        });
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("probability in [0, 1)"), "{err}");

        let mut cfg = MarketConfig::default();
        cfg.brokered_share = 1.5;
        assert!(cfg.validate().is_err());

        let mut cfg = MarketConfig::default();
        cfg.states[0].districts = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn price_effect_accumulates_drift_only_inside_window() {
        let shock = ShockSpec {
            kind: ShockKind::GradualPriceDrift,
            name: "slide".into(),
            start: date(2020, 4, 1),
            end: date(2020, 7, 1),
            magnitude: -0.02,
            states: vec![],
            dwelling: None,
        };
        let at = |d: NaiveDate| shock.price_effect(d, State::Vienna, DwellingType::House);
        assert_eq!(at(date(2020, 3, 31)), 0.0);
        // 91 days in the window: one whole quarter of drift.
        let full = -0.02 * 91.0 / DAYS_PER_QUARTER;
        assert!((at(date(2020, 7, 1)) - full).abs() < 1e-12);
        // The accumulated level persists after the window closes.
        assert!((at(date(2021, 1, 1)) - full).abs() < 1e-12);
        // Halfway through, half the days have accrued.
        let half = -0.02 * 45.0 / DAYS_PER_QUARTER;
        assert!((at(date(2020, 5, 16)) - half).abs() < 1e-12);
    }

    #[test]
    fn shock_calendar_contains_price_windows_only() {
        let mut cfg = MarketConfig::default();
        cfg.shocks = vec![
            ShockSpec {
                kind: ShockKind::ImmediatePriceShift,
                name: "dip".into(),
                start: date(2020, 3, 16),
                end: date(2020, 5, 4),
                magnitude: -0.05,
                states: vec![],
                dwelling: None,
            },
            ShockSpec {
                kind: ShockKind::DemandThinning,
                name: "thin".into(),
                start: date(2020, 3, 16),
                end: date(2020, 5, 4),
                magnitude: 0.3,
                states: vec![],
                dwelling: None,
            },
        ];
        cfg.validate().unwrap();
        let cal = cfg.shock_calendar().unwrap().unwrap();
        assert_eq!(cal.intervals.len(), 1);
        assert_eq!(cal.intervals[0].name, "dip");

        cfg.shocks.remove(0);
        assert!(cfg.shock_calendar().unwrap().is_none());
    }

    #[test]
    fn quarter_index_counts_from_coverage_start() {
        let cfg = MarketConfig::default();
        assert_eq!(cfg.quarter_index(date(2019, 1, 7)), 0);
        assert_eq!(cfg.quarter_index(date(2019, 4, 1)), 1);
        assert_eq!(cfg.quarter_index(date(2020, 1, 1)), 4);
        assert_eq!(cfg.quarter_index(date(2021, 12, 31)), 11);
    }

    #[test]
    fn cycle_conversion_matches_amplitude_and_phase() {
        let c = CountProcess::default().cycle();
        assert!((c.amplitude() - 0.15).abs() < 1e-12);
        assert!((c.phase() - std::f64::consts::FRAC_PI_3).abs() < 1e-12);
        assert_eq!(c.period, 52.0);
    }
}
