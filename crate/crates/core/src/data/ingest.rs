//! Listing ingestion from delimited text.
//!
//! A missing column is fatal (schema error); a bad value in a row is not:
//! the row goes into the rejection list with its row number and a reason,
//! and loading continues. Nothing is dropped silently.

use super::types::{
    parse_bool, AgeClass, Condition, DatasetTag, DwellingType, HedonicProfile, ListingRecord,
    LocationKey, OpenSpace, Rooms, State, UrbanClass,
};
use crate::error::{Error, Result};
use chrono::NaiveDate;
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

/// Maps logical fields to column names in the input file. Defaults are the
/// names the simulator writes, so simulated markets round-trip without any
/// configuration.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct ColumnMap {
    pub id: String,
    pub price: String,
    pub date: String,
    pub dwelling: String,
    pub state: String,
    pub district: String,
    pub urban_class: String,
    pub accessibility: String,
    pub log_area: String,
    pub rooms: String,
    pub age_class: String,
    pub renovated: String,
    pub open_space: String,
    pub basement: String,
    pub parking: String,
    pub air_conditioning: String,
    pub step_free: String,
    pub wellness: String,
    pub condition: String,
    pub log_plot_price: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap {
            id: "id".into(),
            price: "price".into(),
            date: "date".into(),
            dwelling: "dwelling".into(),
            state: "state".into(),
            district: "district".into(),
            urban_class: "urban_class".into(),
            accessibility: "accessibility".into(),
            log_area: "log_area".into(),
            rooms: "rooms".into(),
            age_class: "age_class".into(),
            renovated: "renovated".into(),
            open_space: "open_space".into(),
            basement: "basement".into(),
            parking: "parking".into(),
            air_conditioning: "air_conditioning".into(),
            step_free: "step_free".into(),
            wellness: "wellness".into(),
            condition: "condition".into(),
            log_plot_price: "log_plot_price".into(),
        }
    }
}

/// A row that failed validation. `row` counts data rows from 1; the header
/// is not counted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    pub row: usize,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct LoadOutcome {
    pub records: Vec<ListingRecord>,
    pub rejections: Vec<Rejection>,
}

/// Column indices resolved against a header, with the hedonic block being
/// optional for deeds.
struct Layout {
    id: usize,
    price: usize,
    date: usize,
    dwelling: usize,
    state: usize,
    district: usize,
    urban_class: usize,
    accessibility: usize,
    hedonics: Option<HedonicLayout>,
}

struct HedonicLayout {
    log_area: usize,
    rooms: usize,
    age_class: usize,
    renovated: usize,
    open_space: usize,
    basement: usize,
    parking: usize,
    air_conditioning: usize,
    step_free: usize,
    wellness: usize,
    condition: usize,
    log_plot_price: Option<usize>,
}

impl Layout {
    fn resolve(headers: &csv::StringRecord, columns: &ColumnMap, tag: DatasetTag) -> Result<Self> {
        let index = |name: &str| headers.iter().position(|h| h.trim() == name);
        let required = |name: &str| {
            index(name).ok_or_else(|| Error::Schema(format!("missing required column '{name}'")))
        };

        let hedonic_names = [
            &columns.log_area,
            &columns.rooms,
            &columns.age_class,
            &columns.renovated,
            &columns.open_space,
            &columns.basement,
            &columns.parking,
            &columns.air_conditioning,
            &columns.step_free,
            &columns.wellness,
            &columns.condition,
        ];
        let any_hedonic = hedonic_names.iter().any(|n| index(n).is_some());
        let hedonics = if tag.requires_hedonics() || any_hedonic {
            // For adverts every hedonic column must be there; for deeds the
            // block is all-or-nothing so a half-present block is caught here
            // rather than producing rejections on every row.
            Some(HedonicLayout {
                log_area: required(&columns.log_area)?,
                rooms: required(&columns.rooms)?,
                age_class: required(&columns.age_class)?,
                renovated: required(&columns.renovated)?,
                open_space: required(&columns.open_space)?,
                basement: required(&columns.basement)?,
                parking: required(&columns.parking)?,
                air_conditioning: required(&columns.air_conditioning)?,
                step_free: required(&columns.step_free)?,
                wellness: required(&columns.wellness)?,
                condition: required(&columns.condition)?,
                log_plot_price: index(&columns.log_plot_price),
            })
        } else {
            None
        };

        Ok(Layout {
            id: required(&columns.id)?,
            price: required(&columns.price)?,
            date: required(&columns.date)?,
            dwelling: required(&columns.dwelling)?,
            state: required(&columns.state)?,
            district: required(&columns.district)?,
            urban_class: required(&columns.urban_class)?,
            accessibility: required(&columns.accessibility)?,
            hedonics,
        })
    }
}

/// Loads one dataset from a delimited file (comma or semicolon, sniffed
/// from the header line). Rows with invalid values are rejected with their
/// row number, as are duplicate ids, districts that contradict the
/// first-seen district-to-state mapping, and dates outside `coverage`
/// (half-open) when one is given.
pub fn load_listings(
    path: &Path,
    tag: DatasetTag,
    columns: &ColumnMap,
    coverage: Option<(NaiveDate, NaiveDate)>,
) -> Result<LoadOutcome> {
    let text = std::fs::read_to_string(path)?;
    load_listings_str(&text, tag, columns, coverage)
}

/// Same as [`load_listings`] but over in-memory text; the file variant and
/// the tests share this.
pub fn load_listings_str(
    text: &str,
    tag: DatasetTag,
    columns: &ColumnMap,
    coverage: Option<(NaiveDate, NaiveDate)>,
) -> Result<LoadOutcome> {
    let first_line = text.lines().next().unwrap_or("");
    if first_line.is_empty() {
        return Err(Error::Schema("input file is empty".into()));
    }
    let delimiter = sniff_delimiter(first_line);

    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .flexible(false)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::Schema(format!("cannot read header: {e}")))?
        .clone();
    let layout = Layout::resolve(&headers, columns, tag)?;

    let mut records = Vec::new();
    let mut rejections = Vec::new();
    let mut seen_ids: BTreeSet<String> = BTreeSet::new();
    let mut district_state: BTreeMap<String, State> = BTreeMap::new();

    for (i, row) in reader.records().enumerate() {
        let row_no = i + 1;
        let mut reject = |reason: String| rejections.push(Rejection { row: row_no, reason });
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                reject(format!("unreadable row: {e}"));
                continue;
            }
        };
        match parse_row(&row, &layout, tag, coverage) {
            Ok(rec) => {
                if !seen_ids.insert(rec.id.clone()) {
                    reject(format!("duplicate id '{}'", rec.id));
                    continue;
                }
                match district_state.get(&rec.location.district) {
                    Some(first) if *first != rec.location.state => {
                        reject(format!(
                            "district '{}' already mapped to state {} but row says {}",
                            rec.location.district, first, rec.location.state
                        ));
                        continue;
                    }
                    Some(_) => {}
                    None => {
                        district_state
                            .insert(rec.location.district.clone(), rec.location.state);
                    }
                }
                records.push(rec);
            }
            Err(reason) => reject(reason),
        }
    }

    Ok(LoadOutcome { records, rejections })
}

fn sniff_delimiter(header_line: &str) -> u8 {
    let commas = header_line.matches(',').count();
    let semis = header_line.matches(';').count();
    if semis > commas {
        b';'
    } else {
        b','
    }
}

fn parse_row(
    row: &csv::StringRecord,
    layout: &Layout,
    tag: DatasetTag,
    coverage: Option<(NaiveDate, NaiveDate)>,
) -> std::result::Result<ListingRecord, String> {
    let field = |idx: usize| row.get(idx).unwrap_or("").trim();

    let id = field(layout.id).to_string();
    if id.is_empty() {
        return Err("id: empty".into());
    }

    let price_raw = field(layout.price);
    let price_eur: f64 = price_raw
        .parse()
        .map_err(|_| format!("price: not a number '{price_raw}'"))?;
    if !price_eur.is_finite() || price_eur <= 0.0 {
        return Err(format!("price: must be finite and positive, got '{price_raw}'"));
    }

    let date_raw = field(layout.date);
    let observed_on = NaiveDate::parse_from_str(date_raw, "%Y-%m-%d")
        .map_err(|_| format!("date: not an ISO date '{date_raw}'"))?;
    if let Some((start, end)) = coverage {
        if observed_on < start || observed_on >= end {
            return Err(format!(
                "date: {observed_on} outside coverage [{start}, {end})"
            ));
        }
    }

    let dwelling = DwellingType::parse(field(layout.dwelling)).map_err(|e| format!("dwelling: {e}"))?;
    let state = State::parse(field(layout.state)).map_err(|e| format!("state: {e}"))?;
    let district = field(layout.district).to_string();
    if district.is_empty() {
        return Err("district: empty".into());
    }
    let urban_class =
        UrbanClass::parse(field(layout.urban_class)).map_err(|e| format!("urban_class: {e}"))?;
    let accessibility_raw = field(layout.accessibility);
    let accessibility: u8 = accessibility_raw
        .parse()
        .map_err(|_| format!("accessibility: not an integer '{accessibility_raw}'"))?;
    let location = LocationKey::new(state, district, urban_class, accessibility)
        .map_err(|e| format!("accessibility: {e}"))?;

    let hedonics = match &layout.hedonics {
        None => None,
        Some(h) => {
            let blank = field(h.log_area).is_empty();
            if blank && !tag.requires_hedonics() {
                None
            } else {
                Some(parse_hedonics(row, h)?)
            }
        }
    };
    if tag.requires_hedonics() && hedonics.is_none() {
        return Err("hedonics: required for this dataset tag".into());
    }

    Ok(ListingRecord { id, tag, price_eur, observed_on, dwelling, location, hedonics })
}

fn parse_hedonics(
    row: &csv::StringRecord,
    h: &HedonicLayout,
) -> std::result::Result<HedonicProfile, String> {
    let field = |idx: usize| row.get(idx).unwrap_or("").trim();

    let log_area_raw = field(h.log_area);
    let log_area: f64 = log_area_raw
        .parse()
        .map_err(|_| format!("log_area: not a number '{log_area_raw}'"))?;
    if !log_area.is_finite() {
        return Err(format!("log_area: not finite '{log_area_raw}'"));
    }

    let log_plot_price = match h.log_plot_price {
        None => None,
        Some(idx) => {
            let raw = field(idx);
            if raw.is_empty() {
                None
            } else {
                let v: f64 = raw
                    .parse()
                    .map_err(|_| format!("log_plot_price: not a number '{raw}'"))?;
                if !v.is_finite() {
                    return Err(format!("log_plot_price: not finite '{raw}'"));
                }
                Some(v)
            }
        }
    };

    Ok(HedonicProfile {
        log_area,
        rooms: Rooms::parse(field(h.rooms)).map_err(|e| format!("rooms: {e}"))?,
        age_class: AgeClass::parse(field(h.age_class)).map_err(|e| format!("age_class: {e}"))?,
        renovated: parse_bool(field(h.renovated)).map_err(|e| format!("renovated: {e}"))?,
        open_space: OpenSpace::parse(field(h.open_space)).map_err(|e| format!("open_space: {e}"))?,
        basement: parse_bool(field(h.basement)).map_err(|e| format!("basement: {e}"))?,
        parking: parse_bool(field(h.parking)).map_err(|e| format!("parking: {e}"))?,
        air_conditioning: parse_bool(field(h.air_conditioning))
            .map_err(|e| format!("air_conditioning: {e}"))?,
        step_free: parse_bool(field(h.step_free)).map_err(|e| format!("step_free: {e}"))?,
        wellness: parse_bool(field(h.wellness)).map_err(|e| format!("wellness: {e}"))?,
        condition: Condition::parse(field(h.condition)).map_err(|e| format!("condition: {e}"))?,
        log_plot_price,
    })
}

/// Writes the rejection sidecar: one line per rejected row, `row,reason`.
pub fn write_rejections(path: &Path, rejections: &[Rejection]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["row", "reason"]).map_err(io_err)?;
    for r in rejections {
        w.write_record([r.row.to_string(), r.reason.clone()]).map_err(io_err)?;
    }
    w.flush()?;
    Ok(())
}

fn io_err(e: csv::Error) -> Error {
    Error::Data(format!("cannot write output: {e}"))
}
