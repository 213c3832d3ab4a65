//! Design-matrix construction for the price and count models.
//!
//! Factors are dummy-coded against an explicit reference level; only levels
//! actually observed get a column, and every dropped reference is recorded
//! so fit reports can say what the baseline was. Time enters either as
//! plain quarter dummies or as split labels (quarter x regime status), and
//! contextual covariates can enter as a single slope or with one slope per
//! quarter or per regime status.

use crate::data::{
    AgeClass, Condition, DwellingType, ListingRecord, OpenSpace, PanelCell, Rooms, State,
    UrbanClass,
};
use crate::error::{Error, Result};
use crate::nb::CyclicalTrend;
use crate::regime::{assign_split_label, label_spans, RegimeCalendar, SplitTimeLabel};
use crate::scalar::Scalar;
use crate::time::Quarter;
use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use std::collections::BTreeMap;

/// Low-level column assembler. The higher-level builders drive this; the
/// segment-index machinery uses it directly.
pub struct DesignBuilder<T: Scalar> {
    n: usize,
    names: Vec<String>,
    cols: Vec<Vec<T>>,
    refs: Vec<(String, String)>,
}

impl<T: Scalar> DesignBuilder<T> {
    pub fn new(n: usize) -> Self {
        DesignBuilder { n, names: Vec::new(), cols: Vec::new(), refs: Vec::new() }
    }

    pub fn intercept(&mut self) {
        self.names.push("(Intercept)".into());
        self.cols.push(vec![T::one(); self.n]);
    }

    pub fn numeric(&mut self, name: &str, values: &[f64]) -> Result<()> {
        if values.len() != self.n {
            return Err(Error::Design(format!(
                "column '{name}' has {} values for {} rows",
                values.len(),
                self.n
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Design(format!("column '{name}' has non-finite value {bad}")));
        }
        self.names.push(name.into());
        self.cols.push(values.iter().map(|v| T::of(*v)).collect());
        Ok(())
    }

    /// Dummy-codes a factor given per-row level indices. Levels never
    /// observed produce no column; the reference level is dropped and
    /// recorded. Level order fixes column order. Two degenerate cases are
    /// absorbed rather than left to break the rank check: a factor with a
    /// single observed level produces no columns (the intercept carries
    /// it), and an unobserved reference is replaced by the first observed
    /// level, recorded as the effective reference.
    pub fn factor(
        &mut self,
        name: &str,
        codes: &[usize],
        levels: &[String],
        reference: usize,
    ) -> Result<()> {
        if codes.len() != self.n {
            return Err(Error::Design(format!(
                "factor '{name}' has {} codes for {} rows",
                codes.len(),
                self.n
            )));
        }
        if reference >= levels.len() {
            return Err(Error::Design(format!(
                "factor '{name}' reference index {reference} out of range"
            )));
        }
        let mut observed = vec![false; levels.len()];
        for &c in codes {
            if c >= levels.len() {
                return Err(Error::Design(format!("factor '{name}' code {c} out of range")));
            }
            observed[c] = true;
        }
        let n_observed = observed.iter().filter(|&&o| o).count();
        if n_observed <= 1 {
            let only = observed
                .iter()
                .position(|&o| o)
                .map(|i| levels[i].as_str())
                .unwrap_or("<none>");
            self.refs
                .push((name.into(), format!("{only} (absorbed: only observed level)")));
            return Ok(());
        }
        let effective_ref = if observed[reference] {
            reference
        } else {
            observed.iter().position(|&o| o).expect("n_observed >= 2")
        };
        self.refs.push((name.into(), levels[effective_ref].clone()));
        for (idx, level) in levels.iter().enumerate() {
            if idx == effective_ref || !observed[idx] {
                continue;
            }
            self.names.push(format!("{name}={level}"));
            self.cols.push(
                codes
                    .iter()
                    .map(|&c| if c == idx { T::one() } else { T::zero() })
                    .collect(),
            );
        }
        Ok(())
    }

    /// One slope column per observed factor level (no reference drop:
    /// slopes are identified even with an intercept present). Column names
    /// are `numeric*factor=level`.
    pub fn slope_by_factor(
        &mut self,
        numeric_name: &str,
        values: &[f64],
        factor_name: &str,
        codes: &[usize],
        levels: &[String],
    ) -> Result<()> {
        if values.len() != self.n || codes.len() != self.n {
            return Err(Error::Design(format!(
                "interaction '{numeric_name}*{factor_name}' length mismatch"
            )));
        }
        let mut observed = vec![false; levels.len()];
        for &c in codes {
            if c >= levels.len() {
                return Err(Error::Design(format!(
                    "factor '{factor_name}' code {c} out of range"
                )));
            }
            observed[c] = true;
        }
        for (idx, level) in levels.iter().enumerate() {
            if !observed[idx] {
                continue;
            }
            self.names.push(format!("{numeric_name}*{factor_name}={level}"));
            self.cols.push(
                codes
                    .iter()
                    .zip(values)
                    .map(|(&c, &v)| if c == idx { T::of(v) } else { T::zero() })
                    .collect(),
            );
        }
        Ok(())
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn into_parts(self) -> (DMatrix<T>, Vec<String>, Vec<(String, String)>) {
        let x = DMatrix::from_fn(self.n, self.cols.len(), |i, j| self.cols[j][i]);
        (x, self.names, self.refs)
    }
}

/// Nested grouping of rows: district within state, by index.
#[derive(Debug, Clone)]
pub struct Grouping {
    pub state_of_row: Vec<usize>,
    pub district_of_row: Vec<usize>,
    pub state_of_district: Vec<usize>,
    pub state_names: Vec<String>,
    pub district_names: Vec<String>,
}

impl Grouping {
    pub fn n_states(&self) -> usize {
        self.state_names.len()
    }

    pub fn n_districts(&self) -> usize {
        self.district_names.len()
    }

    pub(crate) fn from_records(records: &[ListingRecord]) -> Self {
        let mut state_ids: BTreeMap<State, usize> = BTreeMap::new();
        let mut district_ids: BTreeMap<&str, usize> = BTreeMap::new();
        let mut state_of_district: Vec<usize> = Vec::new();
        let mut state_names = Vec::new();
        let mut district_names = Vec::new();
        // Two passes keep indices sorted by key, independent of row order.
        for r in records {
            state_ids.entry(r.location.state).or_insert(0);
            district_ids.entry(r.location.district.as_str()).or_insert(0);
        }
        for (i, (s, id)) in state_ids.iter_mut().enumerate() {
            *id = i;
            state_names.push(s.to_string());
        }
        for (i, (d, id)) in district_ids.iter_mut().enumerate() {
            *id = i;
            district_names.push(d.to_string());
            state_of_district.push(usize::MAX);
        }
        let mut state_of_row = Vec::with_capacity(records.len());
        let mut district_of_row = Vec::with_capacity(records.len());
        for r in records {
            let s = state_ids[&r.location.state];
            let d = district_ids[r.location.district.as_str()];
            state_of_row.push(s);
            district_of_row.push(d);
            state_of_district[d] = s;
        }
        Grouping { state_of_row, district_of_row, state_of_district, state_names, district_names }
    }
}

/// Which kind of time dummies a model carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeAxisKind {
    None,
    Quarterly,
    /// Quarter x regime-status labels from a calendar.
    Split,
}

impl TimeAxisKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" => Ok(TimeAxisKind::None),
            "quarter" | "quarterly" => Ok(TimeAxisKind::Quarterly),
            "split" => Ok(TimeAxisKind::Split),
            _ => Err(Error::Config(format!("unknown time axis '{s}'"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TimeAxisKind::None => "none",
            TimeAxisKind::Quarterly => "quarterly",
            TimeAxisKind::Split => "split",
        }
    }
}

/// One period on the time axis, with the date spans it covers (a split
/// label interrupted by a regime owns several spans) and the design column
/// holding its coefficient (`None` for the reference period).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimePoint {
    pub label: String,
    pub spans: Vec<(NaiveDate, NaiveDate)>,
    pub column: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimeAxisInfo {
    pub kind: TimeAxisKind,
    /// Ordered by first span start.
    pub points: Vec<TimePoint>,
}

impl TimeAxisInfo {
    pub fn point(&self, label: &str) -> Option<&TimePoint> {
        self.points.iter().find(|p| p.label == label)
    }
}

/// The column-name prefix time dummies use; index extraction scans for it.
pub const TIME_FACTOR: &str = "time";

/// Hedonic regressors for the price model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HedonicTerm {
    LogArea,
    Rooms,
    AgeClass,
    Renovated,
    OpenSpace,
    Basement,
    Parking,
    AirConditioning,
    StepFree,
    Wellness,
    Condition,
    LogPlotPrice,
    Dwelling,
    UrbanClass,
    Accessibility,
}

impl HedonicTerm {
    /// The full set used by the headline price model.
    pub fn full_set() -> Vec<HedonicTerm> {
        use HedonicTerm::*;
        vec![
            Dwelling, LogArea, Rooms, AgeClass, Renovated, OpenSpace, Basement, Parking,
            AirConditioning, StepFree, Wellness, Condition, LogPlotPrice, UrbanClass,
            Accessibility,
        ]
    }

    fn needs_profile(self) -> bool {
        !matches!(self, HedonicTerm::Dwelling | HedonicTerm::UrbanClass | HedonicTerm::Accessibility)
    }
}

/// Reference levels for the dummy-coded factors. Defaults match the usual
/// reporting convention: house, new build, one room, no open space,
/// unclassified condition, urban district, best accessibility, and the
/// largest state for the count model.
#[derive(Debug, Clone)]
pub struct References {
    pub dwelling: DwellingType,
    pub rooms: Rooms,
    pub age_class: AgeClass,
    pub open_space: OpenSpace,
    pub condition: Condition,
    pub urban_class: UrbanClass,
    pub accessibility: u8,
    pub state: State,
}

impl Default for References {
    fn default() -> Self {
        References {
            dwelling: DwellingType::House,
            rooms: Rooms::One,
            age_class: AgeClass::New,
            open_space: OpenSpace::None,
            condition: Condition::Unclassified,
            urban_class: UrbanClass::Urban,
            accessibility: 1,
            state: State::LowerAustria,
        }
    }
}

/// How a contextual covariate enters the design.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContextualMode {
    /// One slope.
    Main,
    /// One slope per observed quarter.
    ByQuarter,
    /// One slope per regime status (needs a calendar).
    ByRegimeStatus,
}

#[derive(Debug, Clone)]
pub struct ContextualTermSpec {
    pub name: String,
    pub mode: ContextualMode,
}

/// Specification of the price-model fixed effects.
#[derive(Debug, Clone)]
pub struct PriceModelSpec {
    pub hedonics: Vec<HedonicTerm>,
    pub time: TimeAxisKind,
    pub contextual: Vec<ContextualTermSpec>,
    pub references: References,
}

impl Default for PriceModelSpec {
    fn default() -> Self {
        PriceModelSpec {
            hedonics: HedonicTerm::full_set(),
            time: TimeAxisKind::Quarterly,
            contextual: Vec::new(),
            references: References::default(),
        }
    }
}

/// Response, design, grouping and bookkeeping for one price-model fit.
#[derive(Debug, Clone)]
pub struct PriceDesign<T: Scalar> {
    pub y: DVector<T>,
    pub x: DMatrix<T>,
    pub names: Vec<String>,
    pub reference_levels: Vec<(String, String)>,
    pub grouping: Grouping,
    pub time: Option<TimeAxisInfo>,
}

/// Builds the price design. `calendar` is required for the split axis and
/// for by-regime contextual slopes; `contextual` maps series names to
/// per-record joined values (see `regime::join_records`), which must be
/// complete: a missing contextual value cannot be zero-coded without
/// biasing the slope, so gaps are an error naming the first bad row.
pub fn build_price_design<T: Scalar>(
    records: &[ListingRecord],
    spec: &PriceModelSpec,
    calendar: Option<&RegimeCalendar>,
    contextual: &BTreeMap<String, Vec<Option<f64>>>,
) -> Result<PriceDesign<T>> {
    if records.is_empty() {
        return Err(Error::Data("cannot build a design from zero records".into()));
    }
    let n = records.len();
    let needs_profile = spec.hedonics.iter().any(|t| t.needs_profile());
    if needs_profile {
        if let Some(bad) = records.iter().find(|r| r.hedonics.is_none()) {
            return Err(Error::Config(format!(
                "record '{}' has no hedonic attributes; deeds need a reduced term set",
                bad.id
            )));
        }
    }

    let mut b: DesignBuilder<T> = DesignBuilder::new(n);
    b.intercept();
    add_hedonics(&mut b, records, spec)?;

    let time = add_time_axis(
        &mut b,
        spec.time,
        calendar,
        &dates_states(records),
    )?;

    for term in &spec.contextual {
        let values = contextual.get(&term.name).ok_or_else(|| {
            Error::Config(format!("no joined values supplied for contextual '{}'", term.name))
        })?;
        let dense = densify(&term.name, values, n)?;
        add_contextual(&mut b, term, &dense, calendar, &dates_states(records))?;
    }

    let y = DVector::from_iterator(n, records.iter().map(|r| T::of(r.log_price())));
    let (x, names, reference_levels) = b.into_parts();
    check_full_rank(&x, &names)?;
    Ok(PriceDesign {
        y,
        x,
        names,
        reference_levels,
        grouping: Grouping::from_records(records),
        time,
    })
}

/// Seasonal-cycle handling in the count design.
#[derive(Debug, Clone)]
pub enum CycleSpec<T: Scalar> {
    /// No seasonal term.
    Off,
    /// Estimate cos/sin coefficients with the given period (weeks).
    Estimate { period: f64 },
    /// Use a previously estimated cycle as a fixed offset.
    Frozen(CyclicalTrend<T>),
}

/// Specification of the count-model design over panel cells.
#[derive(Debug, Clone)]
pub struct CountModelSpec<T: Scalar> {
    pub time: TimeAxisKind,
    pub cycle: CycleSpec<T>,
    pub contextual: Vec<ContextualTermSpec>,
    pub references: References,
}

impl<T: Scalar> Default for CountModelSpec<T> {
    fn default() -> Self {
        CountModelSpec {
            time: TimeAxisKind::Quarterly,
            cycle: CycleSpec::Estimate { period: 52.0 },
            contextual: Vec::new(),
            references: References::default(),
        }
    }
}

/// Counts, design, exposure offset and bookkeeping for one count-model fit.
#[derive(Debug, Clone)]
pub struct CountDesign<T: Scalar> {
    pub y: Vec<u64>,
    pub x: DMatrix<T>,
    pub names: Vec<String>,
    pub reference_levels: Vec<(String, String)>,
    /// log(exposure) plus any frozen-cycle contribution.
    pub offset: DVector<T>,
    pub time: Option<TimeAxisInfo>,
    pub frozen_cycle: Option<CyclicalTrend<T>>,
    /// Provenance notes carried into the fit (zero-fill choice and the
    /// like).
    pub metadata: BTreeMap<String, String>,
}

pub const CYCLE_COS: &str = "cycle_cos";
pub const CYCLE_SIN: &str = "cycle_sin";

/// Builds the count design over panel cells. Cells are dated by the Monday
/// of their week, which decides quarter and regime membership.
pub fn build_count_design<T: Scalar>(
    cells: &[PanelCell],
    spec: &CountModelSpec<T>,
    calendar: Option<&RegimeCalendar>,
    contextual: &BTreeMap<String, Vec<Option<f64>>>,
) -> Result<CountDesign<T>> {
    if cells.is_empty() {
        return Err(Error::Data("cannot build a design from zero cells".into()));
    }
    let n = cells.len();
    let mut b: DesignBuilder<T> = DesignBuilder::new(n);
    b.intercept();

    let dwelling_levels: Vec<String> =
        DwellingType::ALL.iter().map(|d| d.to_string()).collect();
    let dwelling_codes: Vec<usize> = cells
        .iter()
        .map(|c| DwellingType::ALL.iter().position(|d| *d == c.dwelling).expect("dwelling in ALL"))
        .collect();
    let dwelling_ref = DwellingType::ALL
        .iter()
        .position(|d| *d == spec.references.dwelling)
        .expect("reference dwelling in ALL");
    b.factor("dwelling", &dwelling_codes, &dwelling_levels, dwelling_ref)?;

    let state_levels: Vec<String> = State::ALL.iter().map(|s| s.to_string()).collect();
    let state_codes: Vec<usize> = cells.iter().map(|c| c.state.index()).collect();
    b.factor("state", &state_codes, &state_levels, spec.references.state.index())?;

    let urban_levels: Vec<String> = UrbanClass::ALL.iter().map(|u| u.to_string()).collect();
    let urban_codes: Vec<usize> = cells
        .iter()
        .map(|c| UrbanClass::ALL.iter().position(|u| *u == c.urban_class).expect("class in ALL"))
        .collect();
    let urban_ref = UrbanClass::ALL
        .iter()
        .position(|u| *u == spec.references.urban_class)
        .expect("reference urban class in ALL");
    b.factor("urban_class", &urban_codes, &urban_levels, urban_ref)?;

    let dated: Vec<(NaiveDate, State)> =
        cells.iter().map(|c| (c.week.start(), c.state)).collect();
    let time = add_time_axis(&mut b, spec.time, calendar, &dated)?;

    let mut frozen_cycle = None;
    match &spec.cycle {
        CycleSpec::Off => {}
        CycleSpec::Estimate { period } => {
            if *period <= 0.0 {
                return Err(Error::Config(format!("cycle period must be positive, got {period}")));
            }
            let two_pi = std::f64::consts::TAU;
            let cos_col: Vec<f64> = cells
                .iter()
                .map(|c| (two_pi * c.week.cycle_time() / period).cos())
                .collect();
            let sin_col: Vec<f64> = cells
                .iter()
                .map(|c| (two_pi * c.week.cycle_time() / period).sin())
                .collect();
            b.numeric(CYCLE_COS, &cos_col)?;
            b.numeric(CYCLE_SIN, &sin_col)?;
        }
        CycleSpec::Frozen(trend) => frozen_cycle = Some(trend.clone()),
    }

    for term in &spec.contextual {
        let values = contextual.get(&term.name).ok_or_else(|| {
            Error::Config(format!("no joined values supplied for contextual '{}'", term.name))
        })?;
        let dense = densify(&term.name, values, n)?;
        add_contextual(&mut b, term, &dense, calendar, &dated)?;
    }

    let mut offset = DVector::from_iterator(
        n,
        cells.iter().map(|c| {
            debug_assert!(c.exposure > 0.0, "exposure validated on construction");
            T::of(c.exposure.ln())
        }),
    );
    if let Some(trend) = &frozen_cycle {
        for (i, c) in cells.iter().enumerate() {
            offset[i] += trend.eval(T::of(c.week.cycle_time()));
        }
    }

    let y: Vec<u64> = cells.iter().map(|c| c.count).collect();
    let (x, names, reference_levels) = b.into_parts();
    check_full_rank(&x, &names)?;
    Ok(CountDesign {
        y,
        x,
        names,
        reference_levels,
        offset,
        time,
        frozen_cycle,
        metadata: BTreeMap::new(),
    })
}

fn dates_states(records: &[ListingRecord]) -> Vec<(NaiveDate, State)> {
    records.iter().map(|r| (r.observed_on, r.location.state)).collect()
}

pub(crate) fn add_hedonics<T: Scalar>(
    b: &mut DesignBuilder<T>,
    records: &[ListingRecord],
    spec: &PriceModelSpec,
) -> Result<()> {
    let refs = &spec.references;
    fn profile(r: &ListingRecord) -> &crate::data::HedonicProfile {
        r.hedonics.as_ref().expect("checked by caller")
    }
    for term in &spec.hedonics {
        match term {
            HedonicTerm::LogArea => {
                let v: Vec<f64> = records.iter().map(|r| profile(r).log_area).collect();
                b.numeric("log_area", &v)?;
            }
            HedonicTerm::LogPlotPrice => {
                // Zero for records without a plot (apartments); the column
                // is effectively an interaction with "has a plot".
                let v: Vec<f64> = records
                    .iter()
                    .map(|r| profile(r).log_plot_price.unwrap_or(0.0))
                    .collect();
                b.numeric("log_plot_price", &v)?;
            }
            HedonicTerm::Rooms => {
                let levels: Vec<String> = Rooms::ALL.iter().map(|x| x.as_str().into()).collect();
                let codes: Vec<usize> = records
                    .iter()
                    .map(|r| Rooms::ALL.iter().position(|x| *x == profile(r).rooms).expect("in ALL"))
                    .collect();
                let rf = Rooms::ALL.iter().position(|x| *x == refs.rooms).expect("in ALL");
                b.factor("rooms", &codes, &levels, rf)?;
            }
            HedonicTerm::AgeClass => {
                let levels: Vec<String> = AgeClass::ALL.iter().map(|x| x.as_str().into()).collect();
                let codes: Vec<usize> = records
                    .iter()
                    .map(|r| {
                        AgeClass::ALL.iter().position(|x| *x == profile(r).age_class).expect("in ALL")
                    })
                    .collect();
                let rf = AgeClass::ALL.iter().position(|x| *x == refs.age_class).expect("in ALL");
                b.factor("age_class", &codes, &levels, rf)?;
            }
            HedonicTerm::OpenSpace => {
                let levels: Vec<String> =
                    OpenSpace::ALL.iter().map(|x| x.as_str().into()).collect();
                let codes: Vec<usize> = records
                    .iter()
                    .map(|r| {
                        OpenSpace::ALL
                            .iter()
                            .position(|x| *x == profile(r).open_space)
                            .expect("in ALL")
                    })
                    .collect();
                let rf =
                    OpenSpace::ALL.iter().position(|x| *x == refs.open_space).expect("in ALL");
                b.factor("open_space", &codes, &levels, rf)?;
            }
            HedonicTerm::Condition => {
                let levels: Vec<String> =
                    Condition::ALL.iter().map(|x| x.as_str().into()).collect();
                let codes: Vec<usize> = records
                    .iter()
                    .map(|r| {
                        Condition::ALL
                            .iter()
                            .position(|x| *x == profile(r).condition)
                            .expect("in ALL")
                    })
                    .collect();
                let rf =
                    Condition::ALL.iter().position(|x| *x == refs.condition).expect("in ALL");
                b.factor("condition", &codes, &levels, rf)?;
            }
            HedonicTerm::Renovated => flag(b, "renovated", records, |r| profile(r).renovated)?,
            HedonicTerm::Basement => flag(b, "basement", records, |r| profile(r).basement)?,
            HedonicTerm::Parking => flag(b, "parking", records, |r| profile(r).parking)?,
            HedonicTerm::AirConditioning => {
                flag(b, "air_conditioning", records, |r| profile(r).air_conditioning)?
            }
            HedonicTerm::StepFree => flag(b, "step_free", records, |r| profile(r).step_free)?,
            HedonicTerm::Wellness => flag(b, "wellness", records, |r| profile(r).wellness)?,
            HedonicTerm::Dwelling => {
                let levels: Vec<String> =
                    DwellingType::ALL.iter().map(|x| x.to_string()).collect();
                let codes: Vec<usize> = records
                    .iter()
                    .map(|r| {
                        DwellingType::ALL.iter().position(|x| *x == r.dwelling).expect("in ALL")
                    })
                    .collect();
                let rf =
                    DwellingType::ALL.iter().position(|x| *x == refs.dwelling).expect("in ALL");
                b.factor("dwelling", &codes, &levels, rf)?;
            }
            HedonicTerm::UrbanClass => {
                let levels: Vec<String> =
                    UrbanClass::ALL.iter().map(|x| x.to_string()).collect();
                let codes: Vec<usize> = records
                    .iter()
                    .map(|r| {
                        UrbanClass::ALL
                            .iter()
                            .position(|x| *x == r.location.urban_class)
                            .expect("in ALL")
                    })
                    .collect();
                let rf =
                    UrbanClass::ALL.iter().position(|x| *x == refs.urban_class).expect("in ALL");
                b.factor("urban_class", &codes, &levels, rf)?;
            }
            HedonicTerm::Accessibility => {
                let levels: Vec<String> = (1..=5u8).map(|a| a.to_string()).collect();
                let codes: Vec<usize> = records
                    .iter()
                    .map(|r| (r.location.accessibility - 1) as usize)
                    .collect();
                let rf = (refs.accessibility.clamp(1, 5) - 1) as usize;
                b.factor("accessibility", &codes, &levels, rf)?;
            }
        }
    }
    Ok(())
}

fn flag<T: Scalar>(
    b: &mut DesignBuilder<T>,
    name: &str,
    records: &[ListingRecord],
    get: impl Fn(&ListingRecord) -> bool,
) -> Result<()> {
    let v: Vec<f64> = records.iter().map(|r| if get(r) { 1.0 } else { 0.0 }).collect();
    b.numeric(name, &v)
}

/// Adds time dummies and returns the axis bookkeeping. The reference period
/// is the chronologically first one observed.
fn add_time_axis<T: Scalar>(
    b: &mut DesignBuilder<T>,
    kind: TimeAxisKind,
    calendar: Option<&RegimeCalendar>,
    dated: &[(NaiveDate, State)],
) -> Result<Option<TimeAxisInfo>> {
    match kind {
        TimeAxisKind::None => Ok(None),
        TimeAxisKind::Quarterly => {
            let quarters: Vec<Quarter> = dated.iter().map(|(d, _)| Quarter::of(*d)).collect();
            let mut levels: Vec<Quarter> = quarters.clone();
            levels.sort();
            levels.dedup();
            let level_names: Vec<String> = levels.iter().map(|q| q.to_string()).collect();
            let codes: Vec<usize> = quarters
                .iter()
                .map(|q| levels.binary_search(q).expect("level present"))
                .collect();
            let first_col = b.names().len();
            b.factor(TIME_FACTOR, &codes, &level_names, 0)?;
            let mut points = Vec::with_capacity(levels.len());
            let mut col = first_col;
            for (i, q) in levels.iter().enumerate() {
                let column = if i == 0 {
                    None
                } else {
                    let c = col;
                    col += 1;
                    Some(c)
                };
                points.push(TimePoint {
                    label: q.to_string(),
                    spans: vec![(q.start(), q.end_exclusive())],
                    column,
                });
            }
            Ok(Some(TimeAxisInfo { kind, points }))
        }
        TimeAxisKind::Split => {
            let calendar = calendar.ok_or_else(|| {
                Error::Config("split time axis needs a regime calendar".into())
            })?;
            let labels: Vec<SplitTimeLabel> = dated
                .iter()
                .map(|(d, s)| assign_split_label(*d, *s, calendar))
                .collect::<Result<_>>()?;

            // Order observed labels by when their first span starts, using
            // the per-state span walks so regional labels get true spans.
            let mut span_map: BTreeMap<SplitTimeLabel, Vec<(NaiveDate, NaiveDate)>> =
                BTreeMap::new();
            let mut states: Vec<State> = dated.iter().map(|(_, s)| *s).collect();
            states.sort();
            states.dedup();
            for state in &states {
                for span in label_spans(calendar, Some(*state)) {
                    span_map
                        .entry(span.label.clone())
                        .or_default()
                        .push((span.start, span.end));
                }
            }
            for spans in span_map.values_mut() {
                merge_spans(spans);
            }

            let mut observed: Vec<SplitTimeLabel> = labels.clone();
            observed.sort();
            observed.dedup();
            let mut ordered: Vec<(NaiveDate, SplitTimeLabel)> = observed
                .into_iter()
                .map(|l| {
                    let start = span_map
                        .get(&l)
                        .and_then(|s| s.first())
                        .map(|(s, _)| *s)
                        .unwrap_or_else(|| l.quarter.start());
                    (start, l)
                })
                .collect();
            ordered.sort_by(|a, b| (a.0, a.1.to_string()).cmp(&(b.0, b.1.to_string())));
            let levels: Vec<SplitTimeLabel> = ordered.into_iter().map(|(_, l)| l).collect();
            let level_names: Vec<String> = levels.iter().map(|l| l.to_string()).collect();
            let codes: Vec<usize> = labels
                .iter()
                .map(|l| levels.iter().position(|x| x == l).expect("level present"))
                .collect();
            let first_col = b.names().len();
            b.factor(TIME_FACTOR, &codes, &level_names, 0)?;
            let mut points = Vec::with_capacity(levels.len());
            let mut col = first_col;
            for (i, l) in levels.iter().enumerate() {
                let column = if i == 0 {
                    None
                } else {
                    let c = col;
                    col += 1;
                    Some(c)
                };
                points.push(TimePoint {
                    label: l.to_string(),
                    spans: span_map.get(l).cloned().unwrap_or_default(),
                    column,
                });
            }
            Ok(Some(TimeAxisInfo { kind, points }))
        }
    }
}

/// Coalesces overlapping or touching spans in place.
fn merge_spans(spans: &mut Vec<(NaiveDate, NaiveDate)>) {
    spans.sort();
    let mut merged: Vec<(NaiveDate, NaiveDate)> = Vec::with_capacity(spans.len());
    for &(s, e) in spans.iter() {
        match merged.last_mut() {
            Some((_, le)) if s <= *le => *le = (*le).max(e),
            _ => merged.push((s, e)),
        }
    }
    *spans = merged;
}

fn densify(name: &str, values: &[Option<f64>], n: usize) -> Result<Vec<f64>> {
    if values.len() != n {
        return Err(Error::Design(format!(
            "contextual '{name}' has {} values for {n} rows",
            values.len()
        )));
    }
    let missing = values.iter().filter(|v| v.is_none()).count();
    if missing > 0 {
        let first = values.iter().position(|v| v.is_none()).unwrap_or(0) + 1;
        return Err(Error::Data(format!(
            "contextual '{name}' missing for {missing} of {n} rows (first at row {first}); \
             restrict the coverage window or supply a fuller series"
        )));
    }
    Ok(values.iter().map(|v| v.expect("checked")).collect())
}

fn add_contextual<T: Scalar>(
    b: &mut DesignBuilder<T>,
    term: &ContextualTermSpec,
    values: &[f64],
    calendar: Option<&RegimeCalendar>,
    dated: &[(NaiveDate, State)],
) -> Result<()> {
    match term.mode {
        ContextualMode::Main => b.numeric(&term.name, values),
        ContextualMode::ByQuarter => {
            let quarters: Vec<Quarter> = dated.iter().map(|(d, _)| Quarter::of(*d)).collect();
            let mut levels = quarters.clone();
            levels.sort();
            levels.dedup();
            let level_names: Vec<String> = levels.iter().map(|q| q.to_string()).collect();
            let codes: Vec<usize> = quarters
                .iter()
                .map(|q| levels.binary_search(q).expect("level present"))
                .collect();
            b.slope_by_factor(&term.name, values, TIME_FACTOR, &codes, &level_names)
        }
        ContextualMode::ByRegimeStatus => {
            let calendar = calendar.ok_or_else(|| {
                Error::Config(format!(
                    "contextual '{}' by regime status needs a calendar",
                    term.name
                ))
            })?;
            let statuses: Vec<String> = dated
                .iter()
                .map(|(d, s)| {
                    assign_split_label(*d, *s, calendar).map(|l| l.status)
                })
                .collect::<Result<_>>()?;
            let mut levels = statuses.clone();
            levels.sort();
            levels.dedup();
            let codes: Vec<usize> = statuses
                .iter()
                .map(|s| levels.iter().position(|x| x == s).expect("level present"))
                .collect();
            b.slope_by_factor(&term.name, values, "regime", &codes, &levels)
        }
    }
}

/// Modified Gram-Schmidt rank check: any column that is (numerically) a
/// linear combination of the columns before it is reported by name. Runs in
/// O(n p^2), same order as forming the normal equations.
pub fn check_full_rank<T: Scalar>(x: &DMatrix<T>, names: &[String]) -> Result<()> {
    let n = x.nrows();
    let p = x.ncols();
    if n < p {
        return Err(Error::Design(format!(
            "{p} columns but only {n} rows; the design cannot be full rank"
        )));
    }
    let mut basis: Vec<DVector<T>> = Vec::with_capacity(p);
    let mut dependent: Vec<&str> = Vec::new();
    let tol = T::of(1e-10);
    for j in 0..p {
        let mut v = x.column(j).clone_owned();
        let orig_norm = v.norm();
        if orig_norm == T::zero() {
            dependent.push(&names[j]);
            continue;
        }
        for q in &basis {
            let proj = q.dot(&v);
            v.axpy(-proj, q, T::one());
        }
        // Re-orthogonalise once; classical single-pass MGS can leak for
        // nearly dependent columns.
        for q in &basis {
            let proj = q.dot(&v);
            v.axpy(-proj, q, T::one());
        }
        let res_norm = v.norm();
        if res_norm <= tol * orig_norm {
            dependent.push(&names[j]);
        } else {
            basis.push(v / res_norm);
        }
    }
    if dependent.is_empty() {
        Ok(())
    } else {
        Err(Error::Design(format!(
            "collinear columns: {} (each is a linear combination of earlier columns)",
            dependent.join(", ")
        )))
    }
}
