//! Weekly count panel: listings aggregated to ISO week x dwelling type x
//! state x urban class, with per-state annual population as exposure.

use super::types::{DwellingType, ListingRecord, PanelCell, State, UrbanClass};
use crate::error::{Error, Result};
use crate::time::WeekKey;
use chrono::NaiveDate;
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

/// Per-state population figures, optionally per year. The annual figure for
/// a state's year wins over the state's constant fallback; a missing figure
/// is a configuration error at aggregation time, not a silent zero.
#[derive(Debug, Clone, Default)]
pub struct Population {
    annual: BTreeMap<(State, i32), f64>,
    constant: BTreeMap<State, f64>,
}

impl Population {
    /// One figure per state, used for every year.
    pub fn constant(per_state: BTreeMap<State, f64>) -> Self {
        Population { annual: BTreeMap::new(), constant: per_state }
    }

    pub fn set_year(&mut self, state: State, year: i32, persons: f64) {
        self.annual.insert((state, year), persons);
    }

    pub fn set_constant(&mut self, state: State, persons: f64) {
        self.constant.insert(state, persons);
    }

    pub fn exposure(&self, state: State, year: i32) -> Option<f64> {
        self.annual
            .get(&(state, year))
            .or_else(|| self.constant.get(&state))
            .copied()
    }

    /// States with at least one figure. The exposure table defines the
    /// panel's scope: zero-filling enumerates exactly these states, so a
    /// market covering a subset of states gets structural zeros only where
    /// an exposure exists to offset them.
    pub fn covered_states(&self) -> BTreeSet<State> {
        self.annual
            .keys()
            .map(|(s, _)| *s)
            .chain(self.constant.keys().copied())
            .collect()
    }

    /// Reads `state,year,persons` rows; `year` may be `*` for a constant
    /// figure.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
        let mut pop = Population::default();
        for (i, row) in reader.records().enumerate() {
            let row = row.map_err(|e| Error::Data(format!("population row {}: {e}", i + 1)))?;
            let state = State::parse(row.get(0).unwrap_or(""))
                .map_err(|e| Error::Data(format!("population row {}: {e}", i + 1)))?;
            let year_raw = row.get(1).unwrap_or("").trim();
            let persons: f64 = row
                .get(2)
                .unwrap_or("")
                .trim()
                .parse()
                .map_err(|_| Error::Data(format!("population row {}: bad persons value", i + 1)))?;
            if persons <= 0.0 || !persons.is_finite() {
                return Err(Error::Data(format!(
                    "population row {}: persons must be positive",
                    i + 1
                )));
            }
            if year_raw == "*" || year_raw.is_empty() {
                pop.set_constant(state, persons);
            } else {
                let year: i32 = year_raw.parse().map_err(|_| {
                    Error::Data(format!("population row {}: bad year '{year_raw}'", i + 1))
                })?;
                pop.set_year(state, year, persons);
            }
        }
        Ok(pop)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PanelOptions {
    /// When true (the default), every week x dwelling x state x urban-class
    /// combination in the window is present, zero counts included. The count
    /// model needs those structural zeros.
    pub zero_fill: bool,
    /// Window the panel spans (half-open). Defaults to the span of the data;
    /// must be given when `zero_fill` is set and `records` may be empty.
    pub coverage: Option<(NaiveDate, NaiveDate)>,
}

impl Default for PanelOptions {
    fn default() -> Self {
        PanelOptions { zero_fill: true, coverage: None }
    }
}

/// Aggregates listings into the weekly count panel. All records must be of
/// the same dataset tag (counting across stages would double-count) and
/// every state/ISO-year combination touched needs a population figure.
pub fn weekly_cell_counts(
    records: &[ListingRecord],
    population: &Population,
    options: PanelOptions,
) -> Result<Vec<PanelCell>> {
    if let Some(first) = records.first() {
        if let Some(odd) = records.iter().find(|r| r.tag != first.tag) {
            return Err(Error::Data(format!(
                "mixed dataset tags in one panel: {} and {}",
                first.tag, odd.tag
            )));
        }
    }

    let coverage = match options.coverage {
        Some((start, end)) => {
            if start >= end {
                return Err(Error::Config(format!(
                    "panel coverage start {start} not before end {end}"
                )));
            }
            (start, end)
        }
        None => {
            let Some(min) = records.iter().map(|r| r.observed_on).min() else {
                if options.zero_fill {
                    return Err(Error::Config(
                        "zero_fill over empty input needs an explicit coverage window".into(),
                    ));
                }
                return Ok(Vec::new());
            };
            let max = records.iter().map(|r| r.observed_on).max().expect("non-empty");
            (min, max + chrono::Days::new(1))
        }
    };

    let mut counts: BTreeMap<(WeekKey, DwellingType, State, UrbanClass), u64> = BTreeMap::new();
    if options.zero_fill {
        let states = population.covered_states();
        for week in WeekKey::range(coverage.0, coverage.1) {
            for dwelling in DwellingType::ALL {
                for &state in &states {
                    for urban in UrbanClass::ALL {
                        counts.insert((week, dwelling, state, urban), 0);
                    }
                }
            }
        }
    }
    for r in records {
        if r.observed_on < coverage.0 || r.observed_on >= coverage.1 {
            return Err(Error::Data(format!(
                "record '{}' dated {} falls outside the panel coverage [{}, {})",
                r.id, r.observed_on, coverage.0, coverage.1
            )));
        }
        let key = (
            WeekKey::of(r.observed_on),
            r.dwelling,
            r.location.state,
            r.location.urban_class,
        );
        *counts.entry(key).or_insert(0) += 1;
    }

    let mut cells = Vec::with_capacity(counts.len());
    for ((week, dwelling, state, urban_class), count) in counts {
        let exposure = population.exposure(state, week.iso_year).ok_or_else(|| {
            Error::Config(format!(
                "no population figure for {state} in {}",
                week.iso_year
            ))
        })?;
        cells.push(PanelCell { week, dwelling, state, urban_class, count, exposure });
    }
    Ok(cells)
}

pub const CELL_HEADER: [&str; 6] = ["week", "type", "state", "urban_class", "count", "exposure"];

/// Writes the panel as delimited text with the `week,type,state,...` layout.
pub fn write_cells(path: &Path, cells: &[PanelCell]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CELL_HEADER)
        .map_err(|e| Error::Data(format!("cannot write cells: {e}")))?;
    for c in cells {
        w.write_record([
            c.week.to_string(),
            c.dwelling.to_string(),
            c.state.to_string(),
            c.urban_class.to_string(),
            c.count.to_string(),
            format_exposure(c.exposure),
        ])
        .map_err(|e| Error::Data(format!("cannot write cells: {e}")))?;
    }
    w.flush()?;
    Ok(())
}

/// Exposures are person counts; print them without a fractional part when
/// they are whole so files stay diff-friendly.
fn format_exposure(e: f64) -> String {
    if e.fract() == 0.0 && e.abs() < 1e15 {
        format!("{}", e as i64)
    } else {
        format!("{e}")
    }
}

/// Reads a panel written by [`write_cells`] (or by hand in the same layout).
pub fn read_cells(path: &Path) -> Result<Vec<PanelCell>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Schema(format!("cannot read cell header: {e}")))?
        .clone();
    for name in CELL_HEADER {
        if !headers.iter().any(|h| h.trim() == name) {
            return Err(Error::Schema(format!("missing required column '{name}'")));
        }
    }
    let idx = |name: &str| headers.iter().position(|h| h.trim() == name).expect("checked");
    let (wi, ti, si, ui, ci, ei) = (
        idx("week"),
        idx("type"),
        idx("state"),
        idx("urban_class"),
        idx("count"),
        idx("exposure"),
    );

    let mut cells = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let err = |msg: String| Error::Data(format!("cell row {}: {msg}", i + 1));
        let row = row.map_err(|e| err(e.to_string()))?;
        let field = |j: usize| row.get(j).unwrap_or("").trim();
        let week = WeekKey::parse(field(wi)).map_err(|e| err(e.to_string()))?;
        let dwelling = DwellingType::parse(field(ti)).map_err(|e| err(e.to_string()))?;
        let state = State::parse(field(si)).map_err(|e| err(e.to_string()))?;
        let urban_class = UrbanClass::parse(field(ui)).map_err(|e| err(e.to_string()))?;
        let count: u64 = field(ci)
            .parse()
            .map_err(|_| err(format!("bad count '{}'", field(ci))))?;
        let exposure: f64 = field(ei)
            .parse()
            .map_err(|_| err(format!("bad exposure '{}'", field(ei))))?;
        if exposure <= 0.0 || !exposure.is_finite() {
            return Err(err(format!("exposure must be positive, got {exposure}")));
        }
        cells.push(PanelCell { week, dwelling, state, urban_class, count, exposure });
    }
    Ok(cells)
}

/// How many listings ended up in cells; used by conservation checks.
pub fn total_count(cells: &[PanelCell]) -> u64 {
    cells.iter().map(|c| c.count).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::types::{DatasetTag, LocationKey};

    fn pop_all(n: f64) -> Population {
        Population::constant(State::ALL.iter().map(|s| (*s, n)).collect())
    }

    fn rec(id: &str, date: &str, state: State, urban: UrbanClass) -> ListingRecord {
        ListingRecord {
            id: id.into(),
            tag: DatasetTag::Deeds,
            price_eur: 300_000.0,
            observed_on: NaiveDate::parse_from_str(date, "%Y-%m-%d").unwrap(),
            dwelling: DwellingType::Apartment,
            location: LocationKey::new(state, format!("{state}-d1"), urban, 3).unwrap(),
            hedonics: None,
        }
    }

    #[test]
    fn empty_input_with_zero_fill_gives_the_full_grid() {
        let cov = (
            NaiveDate::from_ymd_opt(2020, 2, 3).unwrap(),
            NaiveDate::from_ymd_opt(2020, 2, 10).unwrap(),
        );
        let cells = weekly_cell_counts(
            &[],
            &pop_all(1000.0),
            PanelOptions { zero_fill: true, coverage: Some(cov) },
        )
        .unwrap();
        // One ISO week, 2 dwelling types x 9 states x 4 urban classes.
        assert_eq!(cells.len(), 72);
        assert!(cells.iter().all(|c| c.count == 0 && c.exposure == 1000.0));
    }

    #[test]
    fn zero_fill_over_empty_input_without_coverage_is_an_error() {
        let err = weekly_cell_counts(&[], &pop_all(1.0), PanelOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn counts_accumulate_and_are_conserved() {
        let records = vec![
            rec("a", "2020-02-03", State::Vienna, UrbanClass::Urban),
            rec("b", "2020-02-05", State::Vienna, UrbanClass::Urban),
            rec("c", "2020-02-09", State::Vienna, UrbanClass::Urban),
            rec("d", "2020-02-04", State::Tyrol, UrbanClass::Rural),
        ];
        let cells =
            weekly_cell_counts(&records, &pop_all(500.0), PanelOptions::default()).unwrap();
        assert_eq!(total_count(&cells) as usize, records.len());
        let vienna = cells
            .iter()
            .find(|c| c.state == State::Vienna && c.count > 0)
            .unwrap();
        assert_eq!(vienna.count, 3);
        assert_eq!(vienna.week, WeekKey { iso_year: 2020, week: 6 });
    }

    #[test]
    fn no_zero_fill_keeps_only_observed_cells() {
        let records = vec![rec("a", "2020-02-03", State::Vienna, UrbanClass::Urban)];
        let cells = weekly_cell_counts(
            &records,
            &pop_all(500.0),
            PanelOptions { zero_fill: false, coverage: None },
        )
        .unwrap();
        assert_eq!(cells.len(), 1);
        assert_eq!(cells[0].count, 1);
    }

    #[test]
    fn missing_population_is_a_config_error_naming_the_state() {
        let mut pop = Population::default();
        pop.set_constant(State::Vienna, 1000.0);
        let records = vec![rec("a", "2020-02-03", State::Tyrol, UrbanClass::Rural)];
        let err = weekly_cell_counts(
            &records,
            &pop,
            PanelOptions { zero_fill: false, coverage: None },
        )
        .unwrap_err();
        match err {
            Error::Config(msg) => assert!(msg.contains("Tyrol"), "message was: {msg}"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn annual_figures_override_the_constant() {
        let mut pop = pop_all(100.0);
        pop.set_year(State::Vienna, 2020, 250.0);
        assert_eq!(pop.exposure(State::Vienna, 2020), Some(250.0));
        assert_eq!(pop.exposure(State::Vienna, 2021), Some(100.0));
        assert_eq!(pop.exposure(State::Tyrol, 2020), Some(100.0));
    }

    #[test]
    fn mixed_tags_are_refused() {
        let mut a = rec("a", "2020-02-03", State::Vienna, UrbanClass::Urban);
        a.tag = DatasetTag::Adverts;
        let d = rec("b", "2020-02-03", State::Vienna, UrbanClass::Urban);
        let err = weekly_cell_counts(&[a, d], &pop_all(1.0), PanelOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn cell_files_round_trip() {
        let cov = (
            NaiveDate::from_ymd_opt(2020, 2, 3).unwrap(),
            NaiveDate::from_ymd_opt(2020, 2, 17).unwrap(),
        );
        let records = vec![rec("a", "2020-02-05", State::Vienna, UrbanClass::Urban)];
        let cells = weekly_cell_counts(
            &records,
            &pop_all(1907.0),
            PanelOptions { zero_fill: true, coverage: Some(cov) },
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cells.csv");
        write_cells(&path, &cells).unwrap();
        let back = read_cells(&path).unwrap();
        assert_eq!(cells, back);
    }
}
