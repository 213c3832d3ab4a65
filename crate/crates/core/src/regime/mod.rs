//! Regime calendars: named half-open date intervals, optionally scoped to a
//! subset of states, grouped into families (lockdowns, lending standards,
//! policy rate). The default calendars encode the Austrian 2020-2023 record
//! and also ship as plain CSV under `data/calendars/` so they can be
//! swapped out without recompiling.

mod label;
mod series;

pub use label::{assign_split_label, label_spans, spans_of_label, LabelSpan, SplitTimeLabel};
pub use series::{
    join_cells, join_records, mortality_rate, moving_average, ContextualSeries, Frequency,
    RegionKey, RegionLevel, DEFAULT_MA_WINDOW, DEFAULT_MORTALITY_EPOCH,
};

use crate::data::State;
use crate::error::{Error, Result};
use chrono::NaiveDate;
use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RegimeFamily {
    Lockdowns,
    LendingStandards,
    PolicyRate,
}

impl RegimeFamily {
    pub fn as_str(self) -> &'static str {
        match self {
            RegimeFamily::Lockdowns => "lockdowns",
            RegimeFamily::LendingStandards => "lending-standards",
            RegimeFamily::PolicyRate => "policy-rate",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "lockdowns" => Ok(RegimeFamily::Lockdowns),
            "lending-standards" => Ok(RegimeFamily::LendingStandards),
            "policy-rate" => Ok(RegimeFamily::PolicyRate),
            _ => Err(Error::Config(format!("unknown regime family '{s}'"))),
        }
    }

    /// Lending standards and the policy rate are phase regimes: their
    /// intervals must tile the whole coverage window without gaps.
    fn is_phased(self) -> bool {
        !matches!(self, RegimeFamily::Lockdowns)
    }
}

impl fmt::Display for RegimeFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One named regime interval. `start` is inclusive, `end` exclusive. An
/// empty scope means nation-wide.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegimeInterval {
    pub name: String,
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub scope: BTreeSet<State>,
    /// True when the interval originally extended past the calendar
    /// coverage and was cut back to it.
    pub clipped_end: bool,
}

impl RegimeInterval {
    pub fn national(name: &str, start: NaiveDate, end: NaiveDate) -> Self {
        RegimeInterval { name: name.into(), start, end, scope: BTreeSet::new(), clipped_end: false }
    }

    pub fn regional(name: &str, start: NaiveDate, end: NaiveDate, states: &[State]) -> Self {
        RegimeInterval {
            name: name.into(),
            start,
            end,
            scope: states.iter().copied().collect(),
            clipped_end: false,
        }
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date < self.end
    }

    pub fn applies_to(&self, state: State) -> bool {
        self.scope.is_empty() || self.scope.contains(&state)
    }

    fn scopes_intersect(&self, other: &RegimeInterval) -> bool {
        if self.scope.is_empty() || other.scope.is_empty() {
            return true;
        }
        self.scope.intersection(&other.scope).next().is_some()
    }
}

/// A family of intervals over a coverage window (also half-open).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegimeCalendar {
    pub family: RegimeFamily,
    pub coverage: (NaiveDate, NaiveDate),
    /// Sorted by start date, then name.
    pub intervals: Vec<RegimeInterval>,
}

impl RegimeCalendar {
    /// Validates and normalises: intervals are clipped to coverage (flagged),
    /// sorted, and checked for overlap within intersecting scopes; phase
    /// families must tile the coverage window.
    pub fn new(
        family: RegimeFamily,
        coverage: (NaiveDate, NaiveDate),
        intervals: Vec<RegimeInterval>,
    ) -> Result<Self> {
        if coverage.0 >= coverage.1 {
            return Err(Error::Config(format!(
                "calendar coverage start {} not before end {}",
                coverage.0, coverage.1
            )));
        }
        let mut cleaned = Vec::with_capacity(intervals.len());
        for mut iv in intervals {
            if iv.start >= iv.end {
                return Err(Error::Config(format!(
                    "interval '{}' has start {} not before end {}",
                    iv.name, iv.start, iv.end
                )));
            }
            if iv.start < coverage.0 || iv.start >= coverage.1 {
                return Err(Error::Config(format!(
                    "interval '{}' starts at {} outside coverage [{}, {})",
                    iv.name, iv.start, coverage.0, coverage.1
                )));
            }
            if iv.end > coverage.1 {
                iv.end = coverage.1;
                iv.clipped_end = true;
            }
            cleaned.push(iv);
        }
        cleaned.sort_by(|a, b| (a.start, &a.name).cmp(&(b.start, &b.name)));

        for i in 0..cleaned.len() {
            for j in (i + 1)..cleaned.len() {
                let (a, b) = (&cleaned[i], &cleaned[j]);
                let overlap_in_time = a.start < b.end && b.start < a.end;
                if overlap_in_time && a.scopes_intersect(b) {
                    return Err(Error::Config(format!(
                        "intervals '{}' and '{}' overlap for a shared scope",
                        a.name, b.name
                    )));
                }
            }
        }

        if family.is_phased() {
            if cleaned.is_empty() {
                return Err(Error::Config(format!(
                    "phase family {family} needs intervals tiling its coverage"
                )));
            }
            if cleaned.iter().any(|iv| !iv.scope.is_empty()) {
                return Err(Error::Config(format!(
                    "phase family {family} intervals must be nation-wide"
                )));
            }
            let mut cursor = coverage.0;
            for iv in &cleaned {
                if iv.start != cursor {
                    return Err(Error::Config(format!(
                        "phase family {family} has a gap before '{}' (expected start {cursor})",
                        iv.name
                    )));
                }
                cursor = iv.end;
            }
            if cursor != coverage.1 {
                return Err(Error::Config(format!(
                    "phase family {family} leaves a gap at the end (covered to {cursor})"
                )));
            }
        }

        Ok(RegimeCalendar { family, coverage, intervals: cleaned })
    }

    pub fn in_coverage(&self, date: NaiveDate) -> bool {
        self.coverage.0 <= date && date < self.coverage.1
    }

    /// The interval active for `state` at `date`, if any. Overlap validation
    /// guarantees there is at most one.
    pub fn active_at(&self, date: NaiveDate, state: State) -> Option<&RegimeInterval> {
        self.intervals
            .iter()
            .find(|iv| iv.contains(date) && iv.applies_to(state))
    }

    /// Like [`active_at`](Self::active_at) but only considering nation-wide
    /// intervals; the national view of a calendar with regional entries.
    pub fn active_nationally_at(&self, date: NaiveDate) -> Option<&RegimeInterval> {
        self.intervals
            .iter()
            .find(|iv| iv.contains(date) && iv.scope.is_empty())
    }

    pub fn interval(&self, name: &str) -> Option<&RegimeInterval> {
        self.intervals.iter().find(|iv| iv.name == name)
    }

    /// Nation-wide pandemic containment periods. Coverage ends with the
    /// modelling window (mid-2022); see
    /// [`default_lockdowns_to_legal_end`](Self::default_lockdowns_to_legal_end)
    /// for the variant running to the legal end of measures.
    pub fn default_lockdowns() -> Self {
        Self::lockdowns_with_coverage(d(2019, 1, 1), d(2022, 7, 1))
    }

    /// Same intervals, coverage extended to the legal end of containment
    /// measures (mid-2023).
    pub fn default_lockdowns_to_legal_end() -> Self {
        Self::lockdowns_with_coverage(d(2019, 1, 1), d(2023, 7, 1))
    }

    fn lockdowns_with_coverage(start: NaiveDate, end: NaiveDate) -> Self {
        RegimeCalendar::new(
            RegimeFamily::Lockdowns,
            (start, end),
            vec![
                RegimeInterval::national("lockdown-1", d(2020, 3, 16), d(2020, 4, 14)),
                RegimeInterval::national("lockdown-2", d(2020, 11, 17), d(2020, 12, 7)),
                RegimeInterval::national("lockdown-3", d(2020, 12, 26), d(2021, 2, 8)),
                RegimeInterval::regional(
                    "regional-lockdown-1",
                    d(2021, 4, 1),
                    d(2021, 4, 19),
                    &[State::Burgenland],
                ),
                RegimeInterval::regional(
                    "regional-lockdown-2",
                    d(2021, 4, 1),
                    d(2021, 5, 3),
                    &[State::Vienna, State::LowerAustria],
                ),
                RegimeInterval::national("lockdown-4", d(2021, 11, 22), d(2021, 12, 12)),
            ],
        )
        .expect("built-in lockdown calendar is valid")
    }

    /// Three phases of the borrower-based lending measure: before its
    /// announcement, between announcement and coming into force, and in
    /// force (runs past the coverage window and is clipped to it).
    pub fn default_lending_standards() -> Self {
        RegimeCalendar::new(
            RegimeFamily::LendingStandards,
            (d(2021, 1, 1), d(2023, 4, 1)),
            vec![
                RegimeInterval::national("pre-announcement", d(2021, 1, 1), d(2021, 12, 13)),
                RegimeInterval::national("announcement", d(2021, 12, 13), d(2022, 8, 1)),
                RegimeInterval::national("enactment", d(2022, 8, 1), d(2025, 7, 1)),
            ],
        )
        .expect("built-in lending-standards calendar is valid")
    }

    /// Phases of the reference interest rate: negative/zero, the first
    /// hike, and the high plateau (clipped to coverage).
    pub fn default_policy_rate() -> Self {
        RegimeCalendar::new(
            RegimeFamily::PolicyRate,
            (d(2021, 1, 1), d(2023, 4, 1)),
            vec![
                RegimeInterval::national("low", d(2021, 1, 1), d(2022, 7, 27)),
                RegimeInterval::national("first-increase", d(2022, 7, 27), d(2022, 12, 21)),
                RegimeInterval::national("high", d(2022, 12, 21), d(2024, 6, 13)),
            ],
        )
        .expect("built-in policy-rate calendar is valid")
    }

    pub fn default_for(family: RegimeFamily) -> Self {
        match family {
            RegimeFamily::Lockdowns => Self::default_lockdowns(),
            RegimeFamily::LendingStandards => Self::default_lending_standards(),
            RegimeFamily::PolicyRate => Self::default_policy_rate(),
        }
    }

    /// Reads `family,name,start,end,scope` rows (scope empty for national,
    /// else semicolon-separated state names). End dates in the file are
    /// exclusive, exactly as stored here. All rows must belong to one
    /// family; coverage comes from the caller because the file only lists
    /// the intervals.
    pub fn from_csv(path: &Path, coverage: (NaiveDate, NaiveDate)) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
        let mut family: Option<RegimeFamily> = None;
        let mut intervals = Vec::new();
        for (i, row) in reader.records().enumerate() {
            let err = |msg: String| Error::Data(format!("calendar row {}: {msg}", i + 1));
            let row = row.map_err(|e| err(e.to_string()))?;
            let field = |j: usize| row.get(j).unwrap_or("").trim();
            let fam = RegimeFamily::parse(field(0)).map_err(|e| err(e.to_string()))?;
            match family {
                None => family = Some(fam),
                Some(f) if f != fam => {
                    return Err(err(format!("mixed families {f} and {fam} in one calendar")))
                }
                Some(_) => {}
            }
            let name = field(1).to_string();
            if name.is_empty() {
                return Err(err("empty interval name".into()));
            }
            let start = parse_date(field(2)).map_err(|e| err(e.to_string()))?;
            let end = parse_date(field(3)).map_err(|e| err(e.to_string()))?;
            let mut scope = BTreeSet::new();
            for part in field(4).split(';').filter(|p| !p.trim().is_empty()) {
                scope.insert(State::parse(part).map_err(|e| err(e.to_string()))?);
            }
            intervals.push(RegimeInterval { name, start, end, scope, clipped_end: false });
        }
        let family = family.ok_or_else(|| Error::Data("calendar file has no intervals".into()))?;
        RegimeCalendar::new(family, coverage, intervals)
    }

    /// Writes the calendar in the format [`from_csv`](Self::from_csv) reads.
    pub fn to_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["family", "name", "start", "end", "scope"])?;
        for iv in &self.intervals {
            let scope = iv
                .scope
                .iter()
                .map(|s| s.as_str())
                .collect::<Vec<_>>()
                .join(";");
            w.write_record([
                self.family.as_str(),
                &iv.name,
                &iv.start.to_string(),
                &iv.end.to_string(),
                &scope,
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn parse_date(s: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d")
        .map_err(|_| Error::Config(format!("not an ISO date: '{s}'")))
}

fn d(y: i32, m: u32, day: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, day).expect("builtin calendar dates are valid")
}
