//! Calendar quarters and ISO weeks.
//!
//! Both are used as grouping keys all over the crate: quarters for time
//! dummies and year-over-year ratios, ISO weeks for the count panel and the
//! seasonal cycle. Thin wrappers around chrono keep parsing/formatting and
//! ordering in one place.

use crate::error::{Error, Result};
use chrono::{Datelike, Months, NaiveDate, Weekday};
use std::fmt;

/// Calendar quarter, e.g. 2020Q1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Quarter {
    pub year: i32,
    /// 1 through 4.
    pub q: u8,
}

impl Quarter {
    pub fn of(date: NaiveDate) -> Self {
        Quarter {
            year: date.year(),
            q: ((date.month0() / 3) + 1) as u8,
        }
    }

    pub fn start(self) -> NaiveDate {
        NaiveDate::from_ymd_opt(self.year, (self.q as u32 - 1) * 3 + 1, 1)
            .expect("quarter start is a valid date")
    }

    /// First day of the following quarter.
    pub fn end_exclusive(self) -> NaiveDate {
        self.next().start()
    }

    pub fn next(self) -> Self {
        if self.q == 4 {
            Quarter { year: self.year + 1, q: 1 }
        } else {
            Quarter { year: self.year, q: self.q + 1 }
        }
    }

    /// Same quarter one year earlier.
    pub fn year_earlier(self) -> Self {
        Quarter { year: self.year - 1, q: self.q }
    }

    /// All quarters from `self` up to and including `last`.
    pub fn range_inclusive(self, last: Quarter) -> Vec<Quarter> {
        let mut out = Vec::new();
        let mut cur = self;
        while cur <= last {
            out.push(cur);
            cur = cur.next();
        }
        out
    }

    pub fn parse(s: &str) -> Result<Self> {
        let (y, q) = s
            .split_once('Q')
            .ok_or_else(|| Error::Config(format!("bad quarter label '{s}', expected e.g. 2020Q1")))?;
        let year: i32 = y
            .parse()
            .map_err(|_| Error::Config(format!("bad year in quarter label '{s}'")))?;
        let q: u8 = q
            .parse()
            .map_err(|_| Error::Config(format!("bad quarter number in label '{s}'")))?;
        if !(1..=4).contains(&q) {
            return Err(Error::Config(format!("quarter number out of range in '{s}'")));
        }
        Ok(Quarter { year, q })
    }
}

impl fmt::Display for Quarter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}Q{}", self.year, self.q)
    }
}

/// ISO-8601 week, e.g. 2020-W07. Ordering is chronological because the ISO
/// year is the first field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct WeekKey {
    pub iso_year: i32,
    /// 1 through 52 or 53.
    pub week: u32,
}

impl WeekKey {
    pub fn of(date: NaiveDate) -> Self {
        let iw = date.iso_week();
        WeekKey { iso_year: iw.year(), week: iw.week() }
    }

    /// Monday of the week.
    pub fn start(self) -> NaiveDate {
        NaiveDate::from_isoywd_opt(self.iso_year, self.week, Weekday::Mon)
            .expect("ISO week key built from a valid date")
    }

    pub fn next(self) -> Self {
        WeekKey::of(self.start() + chrono::Days::new(7))
    }

    /// All weeks that intersect [first, last_exclusive).
    pub fn range(first: NaiveDate, last_exclusive: NaiveDate) -> Vec<WeekKey> {
        let mut out = Vec::new();
        let mut cur = WeekKey::of(first);
        while cur.start() < last_exclusive {
            out.push(cur);
            cur = cur.next();
        }
        out
    }

    /// Week number used as the time variable of the seasonal cycle. The
    /// period of a yearly cycle on this variable is 52 (the odd 53rd week
    /// wraps onto week 1's phase, which is what a periodic term wants).
    pub fn cycle_time(self) -> f64 {
        self.week as f64
    }

    pub fn parse(s: &str) -> Result<Self> {
        let (y, w) = s
            .split_once("-W")
            .ok_or_else(|| Error::Config(format!("bad week label '{s}', expected e.g. 2020-W07")))?;
        let iso_year: i32 = y
            .parse()
            .map_err(|_| Error::Config(format!("bad year in week label '{s}'")))?;
        let week: u32 = w
            .parse()
            .map_err(|_| Error::Config(format!("bad week number in label '{s}'")))?;
        if !(1..=53).contains(&week) {
            return Err(Error::Config(format!("week number out of range in '{s}'")));
        }
        Ok(WeekKey { iso_year, week })
    }
}

impl fmt::Display for WeekKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-W{:02}", self.iso_year, self.week)
    }
}

/// Shift a date back by whole calendar months, clamping the day when the
/// target month is shorter (chrono semantics).
pub fn lag_months(date: NaiveDate, months: u32) -> NaiveDate {
    date.checked_sub_months(Months::new(months))
        .expect("lagged date stays in range")
}

/// First day of the month containing `date`.
pub fn month_start(date: NaiveDate) -> NaiveDate {
    NaiveDate::from_ymd_opt(date.year(), date.month(), 1).expect("month start is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    #[test]
    fn quarter_roundtrip_and_bounds() {
        let q = Quarter::of(d("2020-03-20"));
        assert_eq!(q, Quarter { year: 2020, q: 1 });
        assert_eq!(q.to_string(), "2020Q1");
        assert_eq!(Quarter::parse("2020Q1").unwrap(), q);
        assert_eq!(q.start(), d("2020-01-01"));
        assert_eq!(q.end_exclusive(), d("2020-04-01"));
        assert_eq!(q.year_earlier(), Quarter { year: 2019, q: 1 });
        assert_eq!(Quarter { year: 2020, q: 4 }.next(), Quarter { year: 2021, q: 1 });
    }

    #[test]
    fn quarter_parse_rejects_garbage() {
        assert!(Quarter::parse("2020Q5").is_err());
        assert!(Quarter::parse("2020-1").is_err());
        assert!(Quarter::parse("xQ1").is_err());
    }

    #[test]
    fn iso_week_of_year_boundary() {
        // 2021-01-01 is a Friday and belongs to ISO week 2020-W53.
        let w = WeekKey::of(d("2021-01-01"));
        assert_eq!(w, WeekKey { iso_year: 2020, week: 53 });
        assert_eq!(w.to_string(), "2020-W53");
        assert_eq!(WeekKey::parse("2020-W53").unwrap(), w);
        assert_eq!(w.start(), d("2020-12-28"));
    }

    #[test]
    fn week_range_covers_partial_weeks() {
        let weeks = WeekKey::range(d("2020-01-01"), d("2020-01-15"));
        // Jan 1 2020 is a Wednesday in 2020-W01; window end mid 2020-W03.
        assert_eq!(
            weeks,
            vec![
                WeekKey { iso_year: 2020, week: 1 },
                WeekKey { iso_year: 2020, week: 2 },
                WeekKey { iso_year: 2020, week: 3 },
            ]
        );
    }

    #[test]
    fn month_lag_clamps_day() {
        assert_eq!(lag_months(d("2022-10-15"), 3), d("2022-07-15"));
        assert_eq!(lag_months(d("2022-05-31"), 3), d("2022-02-28"));
        assert_eq!(month_start(d("2022-07-19")), d("2022-07-01"));
    }
}
