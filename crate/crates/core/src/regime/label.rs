//! Split time labels: calendar quarters cut at regime boundaries.
//!
//! A plain quarterly dummy averages over everything that happened inside
//! the quarter; the split label keeps the quarter but separates the days
//! under a regime from the days outside it, so a four-week lockdown gets
//! its own coefficient instead of being smeared over thirteen weeks.

use super::{RegimeCalendar, RegimeInterval};
use crate::data::State;
use crate::error::{Error, Result};
use crate::time::Quarter;
use chrono::NaiveDate;
use std::fmt;

pub const NO_REGIME: &str = "none";

/// Quarter plus regime status, e.g. `2020Q1:lockdown-1` or `2020Q3:none`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SplitTimeLabel {
    pub quarter: Quarter,
    pub status: String,
}

impl SplitTimeLabel {
    pub fn new(quarter: Quarter, status: impl Into<String>) -> Self {
        SplitTimeLabel { quarter, status: status.into() }
    }

    pub fn is_regime(&self) -> bool {
        self.status != NO_REGIME
    }

    pub fn parse(s: &str) -> Result<Self> {
        let (q, status) = s
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("bad split label '{s}', expected QUARTER:status")))?;
        if status.is_empty() {
            return Err(Error::Config(format!("empty regime status in split label '{s}'")));
        }
        Ok(SplitTimeLabel { quarter: Quarter::parse(q)?, status: status.to_string() })
    }
}

impl fmt::Display for SplitTimeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.quarter, self.status)
    }
}

/// Labels one observation. The date must fall inside the calendar coverage;
/// the state decides which scoped intervals apply.
pub fn assign_split_label(
    date: NaiveDate,
    state: State,
    calendar: &RegimeCalendar,
) -> Result<SplitTimeLabel> {
    if !calendar.in_coverage(date) {
        return Err(Error::Data(format!(
            "date {date} outside calendar coverage [{}, {})",
            calendar.coverage.0, calendar.coverage.1
        )));
    }
    let status = calendar
        .active_at(date, state)
        .map(|iv| iv.name.as_str())
        .unwrap_or(NO_REGIME);
    Ok(SplitTimeLabel::new(Quarter::of(date), status))
}

/// A maximal run of days sharing one label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSpan {
    pub label: SplitTimeLabel,
    pub start: NaiveDate,
    /// Exclusive.
    pub end: NaiveDate,
}

/// Walks the coverage window and emits the consecutive label spans seen by
/// a given state (or by the national view when `state` is `None`, which
/// ignores regionally scoped intervals). Spans within one quarter that are
/// interrupted by a regime produce repeated labels, one span each.
pub fn label_spans(calendar: &RegimeCalendar, state: Option<State>) -> Vec<LabelSpan> {
    let (start, end) = calendar.coverage;
    let mut boundaries: Vec<NaiveDate> = vec![start, end];
    let mut q = Quarter::of(start);
    loop {
        let qs = q.start();
        if qs >= end {
            break;
        }
        if qs > start {
            boundaries.push(qs);
        }
        q = q.next();
    }
    for iv in &calendar.intervals {
        let relevant = match state {
            Some(s) => iv.applies_to(s),
            None => iv.scope.is_empty(),
        };
        if relevant {
            boundaries.push(iv.start);
            boundaries.push(iv.end.min(end));
        }
    }
    boundaries.sort();
    boundaries.dedup();

    let active = |date: NaiveDate| -> Option<&RegimeInterval> {
        match state {
            Some(s) => calendar.active_at(date, s),
            None => calendar.active_nationally_at(date),
        }
    };

    let mut spans: Vec<LabelSpan> = Vec::new();
    for w in boundaries.windows(2) {
        let (s, e) = (w[0], w[1]);
        let status = active(s).map(|iv| iv.name.as_str()).unwrap_or(NO_REGIME);
        let label = SplitTimeLabel::new(Quarter::of(s), status);
        spans.push(LabelSpan { label, start: s, end: e });
    }
    spans
}

/// The spans belonging to one label, for plotting a step function from fit
/// coefficients. A label interrupted mid-quarter (regime starts and ends
/// inside the quarter) owns two spans.
pub fn spans_of_label(
    calendar: &RegimeCalendar,
    label: &SplitTimeLabel,
    state: Option<State>,
) -> Vec<LabelSpan> {
    label_spans(calendar, state)
        .into_iter()
        .filter(|s| s.label == *label)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::time::Quarter;

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    #[test]
    fn labels_inside_and_outside_regimes() {
        let cal = RegimeCalendar::default_lockdowns();
        let l = assign_split_label(d(2020, 3, 20), State::Styria, &cal).unwrap();
        assert_eq!(l.to_string(), "2020Q1:lockdown-1");
        let l = assign_split_label(d(2020, 7, 15), State::Styria, &cal).unwrap();
        assert_eq!(l.to_string(), "2020Q3:none");
    }

    #[test]
    fn regional_scope_differs_by_state() {
        let cal = RegimeCalendar::default_lockdowns();
        let date = d(2021, 4, 10);
        let styria = assign_split_label(date, State::Styria, &cal).unwrap();
        assert_eq!(styria.status, NO_REGIME);
        let vienna = assign_split_label(date, State::Vienna, &cal).unwrap();
        assert_eq!(vienna.status, "regional-lockdown-2");
    }

    #[test]
    fn out_of_coverage_is_an_error() {
        let cal = RegimeCalendar::default_lockdowns();
        assert!(assign_split_label(d(2018, 12, 31), State::Vienna, &cal).is_err());
        assert!(assign_split_label(d(2022, 7, 1), State::Vienna, &cal).is_err());
    }

    #[test]
    fn spans_partition_coverage_for_any_state() {
        let cal = RegimeCalendar::default_lockdowns();
        for state in [Some(State::Vienna), Some(State::Styria), None] {
            let spans = label_spans(&cal, state);
            assert_eq!(spans.first().unwrap().start, cal.coverage.0);
            assert_eq!(spans.last().unwrap().end, cal.coverage.1);
            for w in spans.windows(2) {
                assert_eq!(w[0].end, w[1].start, "spans must be contiguous");
            }
            // Each span is labelled consistently with pointwise assignment.
            for span in &spans {
                if let Some(s) = state {
                    let got = assign_split_label(span.start, s, &cal).unwrap();
                    assert_eq!(got, span.label);
                }
            }
        }
    }

    #[test]
    fn interrupted_quarter_yields_two_spans_for_one_label() {
        // The fourth lockdown sits strictly inside 2021Q4, so "2021Q4:none"
        // appears before and after it.
        let cal = RegimeCalendar::default_lockdowns();
        let label = SplitTimeLabel::new(Quarter { year: 2021, q: 4 }, NO_REGIME);
        let spans = spans_of_label(&cal, &label, Some(State::Styria));
        assert_eq!(spans.len(), 2);
        assert_eq!(spans[0].start, d(2021, 10, 1));
        assert_eq!(spans[0].end, d(2021, 11, 22));
        assert_eq!(spans[1].start, d(2021, 12, 12));
        assert_eq!(spans[1].end, d(2022, 1, 1));
    }

    #[test]
    fn label_string_round_trip() {
        let l = SplitTimeLabel::new(Quarter { year: 2020, q: 1 }, "lockdown-1");
        assert_eq!(SplitTimeLabel::parse(&l.to_string()).unwrap(), l);
        assert!(SplitTimeLabel::parse("2020Q1").is_err());
    }
}
