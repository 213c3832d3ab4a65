//! Writing simulated datasets in the exact shape the ingest layer reads,
//! so simulate → write → load is the identity on records.

use crate::data::{DatasetTag, ListingRecord};
use crate::error::{Error, Result};
use std::path::Path;

/// Header written for adverts and brokered adverts; deeds get only the
/// first eight columns. Matches the ingest layer's default column map.
const FULL_HEADER: [&str; 20] = [
    "id",
    "price",
    "date",
    "dwelling",
    "state",
    "district",
    "urban_class",
    "accessibility",
    "log_area",
    "rooms",
    "age_class",
    "renovated",
    "open_space",
    "basement",
    "parking",
    "air_conditioning",
    "step_free",
    "wellness",
    "condition",
    "log_plot_price",
];

const BASE_COLUMNS: usize = 8;

/// Serializes listings to delimited text. Hedonic columns are written
/// exactly when the dataset stage carries them; a record whose hedonics
/// disagree with its stage is an error rather than a silently ragged file.
pub fn listings_to_csv_string(records: &[ListingRecord], tag: DatasetTag) -> Result<String> {
    let with_hedonics = tag.requires_hedonics();
    let mut writer = csv::WriterBuilder::new().from_writer(Vec::new());
    if with_hedonics {
        writer.write_record(FULL_HEADER)?;
    } else {
        writer.write_record(&FULL_HEADER[..BASE_COLUMNS])?;
    }
    for r in records {
        if r.tag != tag {
            return Err(Error::Data(format!(
                "record '{}' is tagged {} but the file is for {}",
                r.id, r.tag, tag
            )));
        }
        let mut row: Vec<String> = vec![
            r.id.clone(),
            r.price_eur.to_string(),
            r.observed_on.format("%Y-%m-%d").to_string(),
            r.dwelling.to_string(),
            r.location.state.to_string(),
            r.location.district.clone(),
            r.location.urban_class.to_string(),
            r.location.accessibility.to_string(),
        ];
        if with_hedonics {
            let h = r.hedonics.as_ref().ok_or_else(|| {
                Error::Data(format!("record '{}' lacks hedonics required by {}", r.id, tag))
            })?;
            let flag = |b: bool| if b { "1" } else { "0" }.to_string();
            row.extend([
                h.log_area.to_string(),
                h.rooms.as_str().to_string(),
                h.age_class.as_str().to_string(),
                flag(h.renovated),
                h.open_space.as_str().to_string(),
                flag(h.basement),
                flag(h.parking),
                flag(h.air_conditioning),
                flag(h.step_free),
                flag(h.wellness),
                h.condition.as_str().to_string(),
                h.log_plot_price.map(|v| v.to_string()).unwrap_or_default(),
            ]);
        } else if r.hedonics.is_some() {
            return Err(Error::Data(format!(
                "record '{}' carries hedonics but {} files do not",
                r.id, tag
            )));
        }
        writer.write_record(&row)?;
    }
    let bytes =
        writer.into_inner().map_err(|e| Error::Data(format!("csv buffer failure: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Data(format!("non-utf8 csv output: {e}")))
}

/// Writes one staged dataset file.
pub fn write_listings(path: &Path, records: &[ListingRecord], tag: DatasetTag) -> Result<()> {
    std::fs::write(path, listings_to_csv_string(records, tag)?)?;
    Ok(())
}
