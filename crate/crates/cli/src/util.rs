//! Helpers shared across subcommands: resolved-config emission, flag
//! parsing that maps onto core types, and input loading.

use crate::stage::digest_bytes;
use chrono::NaiveDate;
use dwellfit_core::data::{
    load_listings, ColumnMap, DatasetTag, ListingRecord, PanelCell, Rejection,
};
use dwellfit_core::design::{ContextualMode, ContextualTermSpec, HedonicTerm};
use dwellfit_core::regime::{
    join_cells, join_records, moving_average, ContextualSeries, RegimeCalendar, RegimeFamily,
};
use dwellfit_core::{Error, Result};
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// The effective settings after merging, written as
/// `resolved_config.toml`; its digest is the manifest's `config-digest`.
#[derive(Serialize)]
#[serde(rename_all = "kebab-case")]
struct ResolvedDoc<'a, T: Serialize> {
    command: &'a str,
    out: String,
    #[serde(flatten)]
    settings: &'a T,
}

/// Renders the resolved configuration and returns `(text, digest)`.
pub fn resolved_config<T: Serialize>(
    command: &str,
    out: &Path,
    settings: &T,
) -> Result<(String, String)> {
    let doc = ResolvedDoc { command, out: out.display().to_string(), settings };
    let text = toml::to_string_pretty(&doc)
        .map_err(|e| Error::Config(format!("cannot serialise resolved config: {e}")))?;
    let digest = digest_bytes(text.as_bytes());
    Ok((text, digest))
}

/// Both-or-neither coverage flags, start strictly before end.
pub fn parse_coverage(
    start: Option<NaiveDate>,
    end: Option<NaiveDate>,
) -> Result<Option<(NaiveDate, NaiveDate)>> {
    match (start, end) {
        (None, None) => Ok(None),
        (Some(s), Some(e)) if s < e => Ok(Some((s, e))),
        (Some(s), Some(e)) => Err(Error::Config(format!(
            "coverage start {s} must be before its exclusive end {e}"
        ))),
        _ => Err(Error::Config(
            "--coverage-start and --coverage-end must be given together".into(),
        )),
    }
}

/// `full` (whole hedonic set), `location` (dwelling type, urban class,
/// accessibility: the terms deeds still carry), or `none`.
pub fn parse_hedonics(s: &str) -> Result<Vec<HedonicTerm>> {
    match s.trim().to_ascii_lowercase().as_str() {
        "full" => Ok(HedonicTerm::full_set()),
        "location" => Ok(vec![
            HedonicTerm::Dwelling,
            HedonicTerm::UrbanClass,
            HedonicTerm::Accessibility,
        ]),
        "none" => Ok(Vec::new()),
        other => Err(Error::Config(format!(
            "unknown hedonic set '{other}' (expected full, location, or none)"
        ))),
    }
}

/// Default hedonic set for a stage: deeds carry no dwelling profile.
pub fn default_hedonics(tag: DatasetTag) -> &'static str {
    if tag.requires_hedonics() {
        "full"
    } else {
        "location"
    }
}

/// Repeatable `key=value` metadata pairs.
pub fn parse_meta(items: &[String]) -> Result<Vec<(String, String)>> {
    items
        .iter()
        .map(|item| {
            item.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .filter(|(k, _)| !k.is_empty())
                .ok_or_else(|| Error::Config(format!("--meta wants key=value, got '{item}'")))
        })
        .collect()
}

/// Comma-separated quantile cut points.
pub fn parse_boundaries(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad quantile boundary '{}'", p.trim())))
        })
        .collect()
}

/// Picks the regime calendar from the `--calendar-*` flags: an explicit
/// file (clipped to the coverage window, which it then requires), else a
/// built-in family, else none.
pub fn build_calendar(
    family: Option<&str>,
    end: Option<&str>,
    file: Option<&Path>,
    coverage: Option<(NaiveDate, NaiveDate)>,
) -> Result<Option<RegimeCalendar>> {
    if let Some(path) = file {
        let coverage = coverage.ok_or_else(|| {
            Error::Config(
                "--calendar-file needs --coverage-start/--coverage-end to bound the calendar"
                    .into(),
            )
        })?;
        return RegimeCalendar::from_csv(path, coverage).map(Some);
    }
    let Some(family) = family else {
        if end.is_some() {
            return Err(Error::Config(
                "--calendar-end only makes sense with --calendar-family lockdowns".into(),
            ));
        }
        return Ok(None);
    };
    let family = RegimeFamily::parse(family)?;
    let calendar = match (family, end.map(|e| e.trim().to_ascii_lowercase())) {
        (RegimeFamily::Lockdowns, Some(e)) if e == "legal" => {
            RegimeCalendar::default_lockdowns_to_legal_end()
        }
        (RegimeFamily::Lockdowns, Some(e)) if e == "model" => RegimeCalendar::default_lockdowns(),
        (RegimeFamily::Lockdowns, Some(e)) => {
            return Err(Error::Config(format!(
                "unknown calendar end '{e}' (expected model or legal)"
            )))
        }
        (other, Some(_)) => {
            return Err(Error::Config(format!(
                "--calendar-end only applies to lockdowns, not {}",
                other.as_str()
            )))
        }
        (family, None) => RegimeCalendar::default_for(family),
    };
    Ok(Some(calendar))
}

/// One `--contextual` request: `name:path:mode[:unit][:ma=N]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextualRequest {
    pub name: String,
    pub path: PathBuf,
    pub mode: ContextualMode,
    pub unit: bool,
    pub moving_average: Option<usize>,
}

fn parse_contextual_mode(s: &str) -> Result<ContextualMode> {
    match s.trim().to_ascii_lowercase().as_str() {
        "main" => Ok(ContextualMode::Main),
        "by-quarter" => Ok(ContextualMode::ByQuarter),
        "by-regime" => Ok(ContextualMode::ByRegimeStatus),
        other => Err(Error::Config(format!(
            "unknown contextual mode '{other}' (expected main, by-quarter, or by-regime)"
        ))),
    }
}

impl ContextualRequest {
    pub fn parse(spec: &str) -> Result<ContextualRequest> {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() < 3 {
            return Err(Error::Config(format!(
                "--contextual wants name:path:mode[:unit][:ma=N], got '{spec}'"
            )));
        }
        let name = parts[0].trim();
        if name.is_empty() {
            return Err(Error::Config(format!("--contextual '{spec}' has an empty name")));
        }
        let mut request = ContextualRequest {
            name: name.to_string(),
            path: PathBuf::from(parts[1].trim()),
            mode: parse_contextual_mode(parts[2])?,
            unit: false,
            moving_average: None,
        };
        for extra in &parts[3..] {
            let extra = extra.trim();
            if extra.eq_ignore_ascii_case("unit") {
                request.unit = true;
            } else if let Some(n) = extra.strip_prefix("ma=") {
                let window: usize = n.parse().map_err(|_| {
                    Error::Config(format!("bad moving-average window '{n}' in '{spec}'"))
                })?;
                request.moving_average = Some(window);
            } else {
                return Err(Error::Config(format!(
                    "unknown contextual option '{extra}' in '{spec}' (expected unit or ma=N)"
                )));
            }
        }
        Ok(request)
    }

    /// Loads the series and applies the requested transforms: the moving
    /// average first (a smoother over raw values), then unit-interval
    /// normalization (a presentation rescale of whatever is left).
    pub fn load(&self) -> Result<ContextualSeries> {
        let mut series = ContextualSeries::from_csv(&self.path)?;
        if let Some(window) = self.moving_average {
            series = moving_average(&series, window)?;
        }
        if self.unit {
            series = series.normalize_unit_interval()?;
        }
        Ok(series)
    }
}

/// Parses every `--contextual` spec; callers digest the paths before
/// loading.
pub fn parse_contextual(specs: &[String]) -> Result<Vec<ContextualRequest>> {
    specs.iter().map(|s| ContextualRequest::parse(s)).collect()
}

/// Loads and joins contextual requests against listing records. Gaps stay
/// `None`; the design layer rejects them with the offending row.
pub fn contextual_for_records(
    requests: &[ContextualRequest],
    records: &[ListingRecord],
) -> Result<(BTreeMap<String, Vec<Option<f64>>>, Vec<ContextualTermSpec>)> {
    let mut values = BTreeMap::new();
    let mut terms = Vec::new();
    for request in requests {
        let series = request.load()?;
        values.insert(request.name.clone(), join_records(records, &series));
        terms.push(ContextualTermSpec { name: request.name.clone(), mode: request.mode });
    }
    Ok((values, terms))
}

/// Same for panel cells; a week the series cannot cover is an error.
pub fn contextual_for_cells(
    requests: &[ContextualRequest],
    cells: &[PanelCell],
) -> Result<(BTreeMap<String, Vec<Option<f64>>>, Vec<ContextualTermSpec>)> {
    let mut values = BTreeMap::new();
    let mut terms = Vec::new();
    for request in requests {
        let series = request.load()?;
        values.insert(request.name.clone(), join_cells(cells, &series)?);
        terms.push(ContextualTermSpec { name: request.name.clone(), mode: request.mode });
    }
    Ok((values, terms))
}

/// Loads one stage of listings, reporting rejected rows on stderr.
pub fn load_stage(
    path: &Path,
    tag: DatasetTag,
    coverage: Option<(NaiveDate, NaiveDate)>,
) -> Result<(Vec<ListingRecord>, Vec<Rejection>)> {
    let outcome = load_listings(path, tag, &ColumnMap::default(), coverage)?;
    if !outcome.rejections.is_empty() {
        eprintln!(
            "{}: {} rows rejected (first: row {}: {})",
            path.display(),
            outcome.rejections.len(),
            outcome.rejections[0].row,
            outcome.rejections[0].reason
        );
    }
    Ok((outcome.records, outcome.rejections))
}

/// `row,reason` CSV of rejected input rows.
pub fn rejections_csv(rejections: &[Rejection]) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record(["row", "reason"])
        .map_err(|e| Error::Data(format!("cannot write rejections: {e}")))?;
    for r in rejections {
        writer
            .write_record([r.row.to_string(), r.reason.clone()])
            .map_err(|e| Error::Data(format!("cannot write rejections: {e}")))?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::Data(format!("cannot write rejections: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Data(format!("rejections not UTF-8: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn contextual_spec_parses_with_options() {
        let r = ContextualRequest::parse("mobility:data/mob.csv:by-regime:unit:ma=7").unwrap();
        assert_eq!(r.name, "mobility");
        assert_eq!(r.path, PathBuf::from("data/mob.csv"));
        assert_eq!(r.mode, ContextualMode::ByRegimeStatus);
        assert!(r.unit);
        assert_eq!(r.moving_average, Some(7));

        assert!(ContextualRequest::parse("just-a-name").is_err());
        assert!(ContextualRequest::parse("n:p:bogus-mode").is_err());
        assert!(ContextualRequest::parse("n:p:main:wat").is_err());
    }

    #[test]
    fn coverage_needs_both_ends_in_order() {
        let d = |s: &str| s.parse::<NaiveDate>().unwrap();
        assert_eq!(parse_coverage(None, None).unwrap(), None);
        assert!(parse_coverage(Some(d("2020-01-06")), None).is_err());
        assert!(parse_coverage(Some(d("2021-01-04")), Some(d("2020-01-06"))).is_err());
        assert!(parse_coverage(Some(d("2020-01-06")), Some(d("2021-01-04"))).unwrap().is_some());
    }

    #[test]
    fn hedonic_sets_parse() {
        assert_eq!(parse_hedonics("full").unwrap(), HedonicTerm::full_set());
        assert_eq!(parse_hedonics("location").unwrap().len(), 3);
        assert!(parse_hedonics("none").unwrap().is_empty());
        assert!(parse_hedonics("some").is_err());
    }

    #[test]
    fn meta_pairs_parse() {
        let pairs = parse_meta(&["run_id=sim-1-x".into(), "note=a b".into()]).unwrap();
        assert_eq!(pairs[0], ("run_id".to_string(), "sim-1-x".to_string()));
        assert_eq!(pairs[1].1, "a b");
        assert!(parse_meta(&["no-equals".into()]).is_err());
    }

    #[test]
    fn built_in_calendars_resolve() {
        let model = build_calendar(Some("lockdowns"), Some("model"), None, None)
            .unwrap()
            .unwrap();
        let legal = build_calendar(Some("lockdowns"), Some("legal"), None, None)
            .unwrap()
            .unwrap();
        assert!(legal.coverage.1 > model.coverage.1);
        assert!(build_calendar(None, None, None, None).unwrap().is_none());
        assert!(build_calendar(None, Some("model"), None, None).is_err());
        assert!(build_calendar(Some("policy-rate"), Some("legal"), None, None).is_err());
    }
}
