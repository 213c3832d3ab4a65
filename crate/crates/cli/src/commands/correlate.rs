//! `dwellfit correlate`: Pearson correlation test between two series
//! joined by period label.

use crate::settings::{require, CorrelateOpts};
use crate::stage::{Inputs, Stage};
use crate::util::resolved_config;
use dwellfit_core::stats::{pearson_test, Alternative};
use dwellfit_core::{Error, Result};
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Serialize)]
#[serde(rename_all = "kebab-case")]
struct Resolved {
    series_a: String,
    series_b: String,
    alternative: String,
}

#[derive(Serialize)]
#[serde(rename_all = "kebab-case")]
struct CorrelationDoc {
    n: usize,
    r: f64,
    t: f64,
    df: usize,
    p_value: f64,
    alternative: String,
    /// Labels shared by both series, in first-series order.
    labels: Vec<String>,
}

/// Reads `label,value[,...]` rows, skipping `#` comment lines (the format
/// `index.csv` artifacts use; any two-column CSV works).
fn read_series(path: &Path) -> Result<Vec<(String, f64)>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read series '{}': {e}", path.display())))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::Schema(format!("series '{}': {e}", path.display())))?
        .clone();
    if headers.get(0) != Some("label") || headers.get(1) != Some("value") {
        return Err(Error::Schema(format!(
            "series '{}' must start with label,value columns, got '{}'",
            path.display(),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record =
            record.map_err(|e| Error::Data(format!("series '{}' row {}: {e}", path.display(), i + 1)))?;
        let label = record.get(0).unwrap_or("").trim().to_string();
        let raw = record.get(1).unwrap_or("").trim();
        let value: f64 = raw.parse().map_err(|_| {
            Error::Data(format!(
                "series '{}' row {}: bad value '{raw}'",
                path.display(),
                i + 1
            ))
        })?;
        if label.is_empty() {
            return Err(Error::Data(format!(
                "series '{}' row {}: empty label",
                path.display(),
                i + 1
            )));
        }
        rows.push((label, value));
    }
    Ok(rows)
}

pub fn run(opts: CorrelateOpts, out: &Path) -> Result<()> {
    let path_a = require(opts.series_a.clone(), "series-a")?;
    let path_b = require(opts.series_b.clone(), "series-b")?;
    let alternative = Alternative::parse(opts.alternative.as_deref().unwrap_or("two-sided"))?;

    let resolved = Resolved {
        series_a: path_a.display().to_string(),
        series_b: path_b.display().to_string(),
        alternative: alternative.as_str().to_string(),
    };
    let (config_text, config_digest) = resolved_config("correlate", out, &resolved)?;

    let mut inputs = Inputs::new();
    inputs.add(&path_a)?;
    inputs.add(&path_b)?;

    let series_a = read_series(&path_a)?;
    let series_b = read_series(&path_b)?;
    let mut lookup_b: BTreeMap<&str, f64> = BTreeMap::new();
    for (label, value) in &series_b {
        if lookup_b.insert(label.as_str(), *value).is_some() {
            return Err(Error::Data(format!(
                "series '{}' repeats label '{label}'",
                path_b.display()
            )));
        }
    }

    let mut labels = Vec::new();
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut seen_a = BTreeMap::new();
    for (label, value) in &series_a {
        if seen_a.insert(label.as_str(), ()).is_some() {
            return Err(Error::Data(format!(
                "series '{}' repeats label '{label}'",
                path_a.display()
            )));
        }
        if let Some(&vb) = lookup_b.get(label.as_str()) {
            labels.push(label.clone());
            x.push(*value);
            y.push(vb);
        }
    }
    if labels.len() < 3 {
        return Err(Error::Data(format!(
            "only {} labels shared by the two series; the test needs at least 3",
            labels.len()
        )));
    }

    let result = pearson_test(&x, &y, alternative)?;
    let doc = CorrelationDoc {
        n: result.n,
        r: result.r,
        t: result.t,
        df: result.df,
        p_value: result.p_value,
        alternative: alternative.as_str().to_string(),
        labels,
    };

    let mut stage = Stage::new(out)?;
    stage.write(
        "correlation.toml",
        toml::to_string_pretty(&doc)
            .map_err(|e| Error::Config(format!("cannot serialise correlation: {e}")))?,
    )?;
    stage.write("resolved_config.toml", &config_text)?;

    eprintln!(
        "correlate: n {}, r {:.4}, t {:.4}, df {}, p {:.6} ({})",
        doc.n,
        doc.r,
        doc.t,
        doc.df,
        doc.p_value,
        doc.alternative
    );

    stage.promote("correlate", config_digest, inputs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    #[test]
    fn read_series_accepts_index_artifacts_and_plain_csv() {
        let dir = tempfile::tempdir().unwrap();
        let indexed = dir.path().join("index.csv");
        let mut f = std::fs::File::create(&indexed).unwrap();
        writeln!(f, "# kind=price-time-dummy base=2020Q1 name=").unwrap();
        writeln!(f, "label,value,spans").unwrap();
        writeln!(f, "2020Q1,1,2020-01-01..2020-04-01").unwrap();
        writeln!(f, "2020Q2,1.02,2020-04-01..2020-07-01").unwrap();
        drop(f);
        let rows = read_series(&indexed).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1], ("2020Q2".to_string(), 1.02));

        let plain = dir.path().join("plain.csv");
        std::fs::write(&plain, "label,value\na,1\nb,2\n").unwrap();
        assert_eq!(read_series(&plain).unwrap().len(), 2);

        let bad = dir.path().join("bad.csv");
        std::fs::write(&bad, "quarter,ratio\na,1\n").unwrap();
        assert!(read_series(&bad).is_err());
    }
}
