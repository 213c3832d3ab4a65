//! Contextual covariate series (mobility, mortality, rates, price levels)
//! and the operations the models need: centred moving averages, mortality
//! rates from death counts, and joining series onto observations with a
//! publication lag. Missing values stay missing; nothing is zero-filled
//! silently.

use crate::data::{ListingRecord, LocationKey, PanelCell, State};
use crate::error::{Error, Result};
use crate::time::{lag_months, month_start};
use chrono::NaiveDate;
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

pub const DEFAULT_MA_WINDOW: usize = 15;

/// First confirmed fatality; mortality is defined as zero before it.
pub const DEFAULT_MORTALITY_EPOCH: NaiveDate = match NaiveDate::from_ymd_opt(2020, 3, 12) {
    Some(d) => d,
    None => panic!("constant date is valid"),
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Frequency {
    Daily,
    Monthly,
}

impl Frequency {
    pub fn as_str(self) -> &'static str {
        match self {
            Frequency::Daily => "daily",
            Frequency::Monthly => "monthly",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "daily" => Ok(Frequency::Daily),
            "monthly" => Ok(Frequency::Monthly),
            _ => Err(Error::Config(format!("unknown frequency '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionLevel {
    National,
    State,
    District,
}

impl RegionLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            RegionLevel::National => "national",
            RegionLevel::State => "state",
            RegionLevel::District => "district",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "national" => Ok(RegionLevel::National),
            "state" => Ok(RegionLevel::State),
            "district" => Ok(RegionLevel::District),
            _ => Err(Error::Config(format!("unknown region level '{s}'"))),
        }
    }
}

/// Region key at whatever granularity the series has.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum RegionKey {
    National,
    State(State),
    District(String),
}

impl fmt::Display for RegionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RegionKey::National => Ok(()),
            RegionKey::State(s) => f.write_str(s.as_str()),
            RegionKey::District(d) => f.write_str(d),
        }
    }
}

/// A named covariate series at daily or monthly frequency and national,
/// state, or district granularity, with a join lag in whole months.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextualSeries {
    pub name: String,
    pub frequency: Frequency,
    pub level: RegionLevel,
    pub lag_months: u32,
    values: BTreeMap<(RegionKey, NaiveDate), f64>,
}

impl ContextualSeries {
    pub fn new(
        name: impl Into<String>,
        frequency: Frequency,
        level: RegionLevel,
        lag_months: u32,
    ) -> Self {
        ContextualSeries {
            name: name.into(),
            frequency,
            level,
            lag_months,
            values: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Inserts one value. Monthly dates are normalised to the first of the
    /// month; the region must match the series level.
    pub fn insert(&mut self, region: RegionKey, date: NaiveDate, value: f64) -> Result<()> {
        self.check_region(&region)?;
        if !value.is_finite() {
            return Err(Error::Data(format!(
                "series '{}': non-finite value at {date}",
                self.name
            )));
        }
        let date = match self.frequency {
            Frequency::Daily => date,
            Frequency::Monthly => month_start(date),
        };
        self.values.insert((region, date), value);
        Ok(())
    }

    fn check_region(&self, region: &RegionKey) -> Result<()> {
        let ok = matches!(
            (self.level, region),
            (RegionLevel::National, RegionKey::National)
                | (RegionLevel::State, RegionKey::State(_))
                | (RegionLevel::District, RegionKey::District(_))
        );
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "series '{}' is {}-level, got a {} key",
                self.name,
                self.level.as_str(),
                match region {
                    RegionKey::National => "national",
                    RegionKey::State(_) => "state",
                    RegionKey::District(_) => "district",
                }
            )))
        }
    }

    /// Raw lookup without lag.
    pub fn get(&self, region: &RegionKey, date: NaiveDate) -> Option<f64> {
        let date = match self.frequency {
            Frequency::Daily => date,
            Frequency::Monthly => month_start(date),
        };
        self.values.get(&(region.clone(), date)).copied()
    }

    /// The value an observation at `date` in `location` sees: the series
    /// value `lag_months` earlier at the matching granularity. `None` when
    /// the series has no value there (the caller keeps the gap visible).
    pub fn value_for(&self, date: NaiveDate, location: &LocationKey) -> Option<f64> {
        let region = match self.level {
            RegionLevel::National => RegionKey::National,
            RegionLevel::State => RegionKey::State(location.state),
            RegionLevel::District => RegionKey::District(location.district.clone()),
        };
        self.get(&region, lag_months(date, self.lag_months))
    }

    /// Like [`value_for`](Self::value_for) at state granularity, for panel
    /// cells; refuses district-level series because cells do not know their
    /// district.
    pub fn value_for_state(&self, date: NaiveDate, state: State) -> Result<Option<f64>> {
        let region = match self.level {
            RegionLevel::National => RegionKey::National,
            RegionLevel::State => RegionKey::State(state),
            RegionLevel::District => {
                return Err(Error::Config(format!(
                    "series '{}' is district-level and cannot join state-level cells",
                    self.name
                )))
            }
        };
        Ok(self.get(&region, lag_months(date, self.lag_months)))
    }

    /// Iterates (region, date, value) in key order.
    pub fn iter(&self) -> impl Iterator<Item = (&RegionKey, NaiveDate, f64)> {
        self.values.iter().map(|((r, d), v)| (r, *d, *v))
    }

    /// Rescales all values to [0, 1] by the global min/max. Errors on a
    /// constant series (the scale would be undefined).
    pub fn normalize_unit_interval(&self) -> Result<ContextualSeries> {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for (_, _, v) in self.iter() {
            min = min.min(v);
            max = max.max(v);
        }
        if self.is_empty() {
            return Err(Error::Data(format!("series '{}' is empty", self.name)));
        }
        if min == max {
            return Err(Error::Domain(format!(
                "series '{}' is constant; unit-interval scaling undefined",
                self.name
            )));
        }
        let mut out = self.clone();
        for v in out.values.values_mut() {
            *v = (*v - min) / (max - min);
        }
        Ok(out)
    }

    /// Reads the series format: a first line `#name=...;frequency=...;
    /// region_level=...;lag_months=N`, then `date,region,value` rows with
    /// an empty region column for national series.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut lines = text.lines();
        let meta = lines
            .next()
            .ok_or_else(|| Error::Schema("series file is empty".into()))?;
        let meta = meta
            .strip_prefix('#')
            .ok_or_else(|| Error::Schema("series file must start with a '#key=value;...' line".into()))?;
        let mut name = None;
        let mut frequency = None;
        let mut level = None;
        let mut lag = 0u32;
        for part in meta.split(';') {
            let Some((k, v)) = part.split_once('=') else { continue };
            match k.trim() {
                "name" => name = Some(v.trim().to_string()),
                "frequency" => frequency = Some(Frequency::parse(v)?),
                "region_level" => level = Some(RegionLevel::parse(v)?),
                "lag_months" => {
                    lag = v.trim().parse().map_err(|_| {
                        Error::Schema(format!("bad lag_months '{}' in series header", v.trim()))
                    })?
                }
                other => {
                    return Err(Error::Schema(format!(
                        "unknown key '{other}' in series header"
                    )))
                }
            }
        }
        let name = name.ok_or_else(|| Error::Schema("series header missing name".into()))?;
        let frequency =
            frequency.ok_or_else(|| Error::Schema("series header missing frequency".into()))?;
        let level =
            level.ok_or_else(|| Error::Schema("series header missing region_level".into()))?;
        let mut series = ContextualSeries::new(name, frequency, level, lag);

        let body: String = lines.collect::<Vec<_>>().join("\n");
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(body.as_bytes());
        for (i, row) in reader.records().enumerate() {
            let err = |msg: String| Error::Data(format!("series row {}: {msg}", i + 1));
            let row = row.map_err(|e| err(e.to_string()))?;
            let field = |j: usize| row.get(j).unwrap_or("").trim();
            let date = super::parse_date(field(0)).map_err(|e| err(e.to_string()))?;
            let region = match level {
                RegionLevel::National => {
                    if !field(1).is_empty() {
                        return Err(err("national series must leave the region empty".into()));
                    }
                    RegionKey::National
                }
                RegionLevel::State => {
                    RegionKey::State(State::parse(field(1)).map_err(|e| err(e.to_string()))?)
                }
                RegionLevel::District => {
                    if field(1).is_empty() {
                        return Err(err("district series needs a region".into()));
                    }
                    RegionKey::District(field(1).to_string())
                }
            };
            let value: f64 = field(2)
                .parse()
                .map_err(|_| err(format!("bad value '{}'", field(2))))?;
            series.insert(region, date, value).map_err(|e| err(e.to_string()))?;
        }
        Ok(series)
    }

    /// Writes the format [`from_csv`](Self::from_csv) reads.
    pub fn to_csv(&self, path: &Path) -> Result<()> {
        use std::io::Write;
        let mut f = std::fs::File::create(path)?;
        writeln!(
            f,
            "#name={};frequency={};region_level={};lag_months={}",
            self.name,
            self.frequency.as_str(),
            self.level.as_str(),
            self.lag_months
        )?;
        writeln!(f, "date,region,value")?;
        // Sort by date first so the file reads chronologically.
        let mut rows: Vec<(&RegionKey, NaiveDate, f64)> = self.iter().collect();
        rows.sort_by(|a, b| (a.1, a.0).cmp(&(b.1, b.0)));
        for (region, date, value) in rows {
            writeln!(f, "{date},{region},{value}")?;
        }
        Ok(())
    }
}

/// Centred moving average with truncated edges, per region. The window must
/// be odd so the centre is a real observation; near the edges the average
/// runs over whatever part of the window exists. Daily series only.
pub fn moving_average(series: &ContextualSeries, window: usize) -> Result<ContextualSeries> {
    if series.frequency != Frequency::Daily {
        return Err(Error::Config(format!(
            "moving average needs a daily series, '{}' is {}",
            series.name,
            series.frequency.as_str()
        )));
    }
    if window == 0 || window % 2 == 0 {
        return Err(Error::Config(format!(
            "moving-average window must be odd and positive, got {window}"
        )));
    }
    let half = (window / 2) as i64;

    let mut by_region: BTreeMap<&RegionKey, Vec<(NaiveDate, f64)>> = BTreeMap::new();
    for (region, date, value) in series.iter() {
        by_region.entry(region).or_default().push((date, value));
    }

    let mut out = ContextualSeries::new(
        series.name.clone(),
        Frequency::Daily,
        series.level,
        series.lag_months,
    );
    for (region, points) in by_region {
        // BTreeMap iteration already sorts by date within a region.
        for (i, (date, _)) in points.iter().enumerate() {
            let lo = *date - chrono::Days::new(half as u64);
            let hi = *date + chrono::Days::new(half as u64);
            let mut sum = 0.0;
            let mut n = 0usize;
            // Window is small (15 by default); scan the neighbourhood.
            for (d, v) in points[i.saturating_sub(half as usize)..].iter() {
                if *d > hi {
                    break;
                }
                if *d >= lo {
                    sum += v;
                    n += 1;
                }
            }
            out.insert(region.clone(), *date, sum / n as f64)?;
        }
    }
    Ok(out)
}

/// Deaths per 1,000 inhabitants by district and day. Input is a daily
/// district-level count series; `population` maps district names to
/// persons. Dates before `epoch` are forced to zero (the series is defined
/// as zero before the first recorded event).
pub fn mortality_rate(
    deaths: &ContextualSeries,
    population: &BTreeMap<String, f64>,
    epoch: NaiveDate,
) -> Result<ContextualSeries> {
    if deaths.frequency != Frequency::Daily || deaths.level != RegionLevel::District {
        return Err(Error::Config(format!(
            "mortality needs a daily district-level death-count series, '{}' is {} {}",
            deaths.name,
            deaths.frequency.as_str(),
            deaths.level.as_str()
        )));
    }
    let mut out = ContextualSeries::new(
        format!("{}_per_1000", deaths.name),
        Frequency::Daily,
        RegionLevel::District,
        deaths.lag_months,
    );
    for (region, date, count) in deaths.iter() {
        let RegionKey::District(district) = region else { unreachable!("level checked") };
        if count < 0.0 {
            return Err(Error::Data(format!(
                "negative death count {count} for {district} on {date}"
            )));
        }
        let rate = if date < epoch {
            0.0
        } else {
            let pop = population.get(district).ok_or_else(|| {
                Error::Config(format!("no population figure for district '{district}'"))
            })?;
            if *pop <= 0.0 {
                return Err(Error::Config(format!(
                    "population for district '{district}' must be positive"
                )));
            }
            1000.0 * count / pop
        };
        out.insert(region.clone(), date, rate)?;
    }
    Ok(out)
}

/// Joins a series onto listings: one `Option<f64>` per record, `None` where
/// the (lagged) series has no value. Gaps are the caller's to handle; they
/// are never silently zeroed.
pub fn join_records(records: &[ListingRecord], series: &ContextualSeries) -> Vec<Option<f64>> {
    records
        .iter()
        .map(|r| series.value_for(r.observed_on, &r.location))
        .collect()
}

/// Joins a series onto panel cells by the Monday of each cell's week.
/// District-level series are a configuration error here: cells only know
/// their state.
pub fn join_cells(cells: &[PanelCell], series: &ContextualSeries) -> Result<Vec<Option<f64>>> {
    cells
        .iter()
        .map(|c| series.value_for_state(c.week.start(), c.state))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{DatasetTag, DwellingType, UrbanClass};

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    fn daily_national(values: &[(NaiveDate, f64)]) -> ContextualSeries {
        let mut s = ContextualSeries::new("toy", Frequency::Daily, RegionLevel::National, 0);
        for (date, v) in values {
            s.insert(RegionKey::National, *date, *v).unwrap();
        }
        s
    }

    /// Brute-force oracle: mean over all dates within +-half days.
    fn window_mean(values: &[(NaiveDate, f64)], at: NaiveDate, half: i64) -> f64 {
        let lo = at - chrono::Days::new(half as u64);
        let hi = at + chrono::Days::new(half as u64);
        let picked: Vec<f64> = values
            .iter()
            .filter(|(d, _)| *d >= lo && *d <= hi)
            .map(|(_, v)| *v)
            .collect();
        picked.iter().sum::<f64>() / picked.len() as f64
    }

    #[test]
    fn moving_average_truncates_edges() {
        let vals: Vec<(NaiveDate, f64)> = (0..5)
            .map(|i| (d(2020, 1, 1) + chrono::Days::new(i), (i + 1) as f64))
            .collect();
        let s = daily_national(&vals);
        let ma = moving_average(&s, 3).unwrap();
        let got: Vec<f64> = ma.iter().map(|(_, _, v)| v).collect();
        assert_eq!(got, vec![1.5, 2.0, 3.0, 4.0, 4.5]);
    }

    #[test]
    fn moving_average_matches_brute_force_oracle_with_gaps() {
        // Irregular dates: the window sees only what exists.
        let vals = vec![
            (d(2020, 1, 1), 4.0),
            (d(2020, 1, 2), 8.0),
            (d(2020, 1, 5), 1.0),
            (d(2020, 1, 6), 3.0),
            (d(2020, 1, 12), 10.0),
        ];
        let s = daily_national(&vals);
        let ma = moving_average(&s, 5).unwrap();
        for (_, date, got) in ma.iter() {
            let want = window_mean(&vals, date, 2);
            assert!((got - want).abs() < 1e-12, "at {date}: {got} vs {want}");
        }
    }

    #[test]
    fn moving_average_rejects_even_windows_and_monthly_series() {
        let s = daily_national(&[(d(2020, 1, 1), 1.0)]);
        assert!(moving_average(&s, 4).is_err());
        assert!(moving_average(&s, 0).is_err());
        let m = ContextualSeries::new("m", Frequency::Monthly, RegionLevel::National, 0);
        assert!(moving_average(&m, 3).is_err());
    }

    #[test]
    fn mortality_is_zero_before_epoch_and_scaled_after() {
        let mut deaths =
            ContextualSeries::new("deaths", Frequency::Daily, RegionLevel::District, 0);
        let graz = RegionKey::District("Graz".into());
        deaths.insert(graz.clone(), d(2020, 3, 1), 5.0).unwrap();
        deaths.insert(graz.clone(), d(2020, 3, 15), 3.0).unwrap();
        let pop: BTreeMap<String, f64> = [("Graz".to_string(), 300_000.0)].into();
        let rate = mortality_rate(&deaths, &pop, DEFAULT_MORTALITY_EPOCH).unwrap();
        assert_eq!(rate.get(&graz, d(2020, 3, 1)), Some(0.0));
        let after = rate.get(&graz, d(2020, 3, 15)).unwrap();
        assert!((after - 1000.0 * 3.0 / 300_000.0).abs() < 1e-15);
        assert_eq!(rate.name, "deaths_per_1000");
    }

    #[test]
    fn mortality_rejects_negative_counts_and_unknown_districts() {
        let mut deaths =
            ContextualSeries::new("deaths", Frequency::Daily, RegionLevel::District, 0);
        deaths
            .insert(RegionKey::District("Graz".into()), d(2020, 4, 1), -1.0)
            .unwrap();
        let pop: BTreeMap<String, f64> = [("Graz".to_string(), 1000.0)].into();
        assert!(matches!(
            mortality_rate(&deaths, &pop, DEFAULT_MORTALITY_EPOCH),
            Err(Error::Data(_))
        ));

        let mut deaths2 =
            ContextualSeries::new("deaths", Frequency::Daily, RegionLevel::District, 0);
        deaths2
            .insert(RegionKey::District("Linz".into()), d(2020, 4, 1), 1.0)
            .unwrap();
        assert!(matches!(
            mortality_rate(&deaths2, &pop, DEFAULT_MORTALITY_EPOCH),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn monthly_join_respects_the_lag() {
        let mut s = ContextualSeries::new("rate", Frequency::Monthly, RegionLevel::National, 3);
        s.insert(RegionKey::National, d(2022, 7, 1), 1.9).unwrap();
        let loc = LocationKey::new(State::Vienna, "Wien-1", UrbanClass::Urban, 1).unwrap();
        // Observed mid-October with a three-month lag: July's value.
        assert_eq!(s.value_for(d(2022, 10, 15), &loc), Some(1.9));
        // Before the series starts: missing, not zero.
        assert_eq!(s.value_for(d(2022, 9, 15), &loc), None);
    }

    #[test]
    fn district_series_refuse_cell_joins() {
        let s = ContextualSeries::new("x", Frequency::Daily, RegionLevel::District, 0);
        let cells = vec![PanelCell {
            week: crate::time::WeekKey { iso_year: 2020, week: 10 },
            dwelling: DwellingType::House,
            state: State::Tyrol,
            urban_class: UrbanClass::Rural,
            count: 0,
            exposure: 1.0,
        }];
        assert!(matches!(join_cells(&cells, &s), Err(Error::Config(_))));
    }

    #[test]
    fn join_records_flags_gaps() {
        let mut s = ContextualSeries::new("mob", Frequency::Daily, RegionLevel::State, 0);
        s.insert(RegionKey::State(State::Tyrol), d(2020, 5, 4), 0.4).unwrap();
        let rec = ListingRecord {
            id: "a".into(),
            tag: DatasetTag::Adverts,
            price_eur: 200_000.0,
            observed_on: d(2020, 5, 4),
            dwelling: DwellingType::House,
            location: LocationKey::new(State::Tyrol, "Innsbruck", UrbanClass::Regional, 2)
                .unwrap(),
            hedonics: None,
        };
        let mut rec2 = rec.clone();
        rec2.id = "b".into();
        rec2.observed_on = d(2020, 5, 5);
        let joined = join_records(&[rec, rec2], &s);
        assert_eq!(joined, vec![Some(0.4), None]);
    }

    #[test]
    fn unit_interval_scaling() {
        let s = daily_national(&[(d(2020, 1, 1), 2.0), (d(2020, 1, 2), 6.0), (d(2020, 1, 3), 4.0)]);
        let n = s.normalize_unit_interval().unwrap();
        let got: Vec<f64> = n.iter().map(|(_, _, v)| v).collect();
        assert_eq!(got, vec![0.0, 1.0, 0.5]);
        let c = daily_national(&[(d(2020, 1, 1), 2.0), (d(2020, 1, 2), 2.0)]);
        assert!(matches!(c.normalize_unit_interval(), Err(Error::Domain(_))));
    }

    #[test]
    fn series_file_round_trip() {
        let mut s = ContextualSeries::new("mobility", Frequency::Daily, RegionLevel::State, 0);
        s.insert(RegionKey::State(State::Vienna), d(2020, 3, 1), -0.31).unwrap();
        s.insert(RegionKey::State(State::Tyrol), d(2020, 3, 1), -0.22).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mobility.csv");
        s.to_csv(&path).unwrap();
        let back = ContextualSeries::from_csv(&path).unwrap();
        assert_eq!(s, back);
    }
}
