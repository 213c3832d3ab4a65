//! `dwellfit quantity-index`: year-over-year quarterly count ratios.

use crate::settings::QuantityIndexOpts;
use crate::stage::{Inputs, Stage};
use crate::util::{parse_coverage, rejections_csv, resolved_config};
use chrono::NaiveDate;
use dwellfit_core::data::{
    read_cells, weekly_cell_counts, DatasetTag, PanelCell, PanelOptions, Population, State,
};
use dwellfit_core::indices::{quarterly_counts, yoy_quantity_index};
use dwellfit_core::{Error, Result};
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

#[derive(Serialize)]
#[serde(rename_all = "kebab-case")]
struct Resolved {
    #[serde(skip_serializing_if = "Option::is_none")]
    input: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tag: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    population: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cells: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    coverage_start: Option<NaiveDate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    coverage_end: Option<NaiveDate>,
}

pub fn run(opts: QuantityIndexOpts, out: &Path) -> Result<()> {
    let coverage = parse_coverage(opts.coverage_start, opts.coverage_end)?;
    let resolved = Resolved {
        input: opts.input.as_ref().map(|p| p.display().to_string()),
        tag: opts.input.as_ref().map(|_| opts.tag.clone().unwrap_or_else(|| "adverts".into())),
        population: opts.population.as_ref().map(|p| p.display().to_string()),
        cells: opts.cells.as_ref().map(|p| p.display().to_string()),
        coverage_start: coverage.map(|c| c.0),
        coverage_end: coverage.map(|c| c.1),
    };
    let (config_text, config_digest) = resolved_config("quantity-index", out, &resolved)?;

    let mut inputs = Inputs::new();
    let (cells, rejections): (Vec<PanelCell>, _) = match (&opts.cells, &opts.input) {
        (Some(_), Some(_)) => {
            return Err(Error::Config(
                "--cells and --input are alternatives; give exactly one".into(),
            ))
        }
        (Some(path), None) => {
            inputs.add(path)?;
            (read_cells(path)?, Vec::new())
        }
        (None, Some(path)) => {
            let tag = DatasetTag::parse(opts.tag.as_deref().unwrap_or("adverts"))?;
            inputs.add(path)?;
            // Counting needs no exposure, so population is optional: a
            // constant stands in when none is given.
            let population = match &opts.population {
                Some(p) => {
                    inputs.add(p)?;
                    Population::from_csv(p)?
                }
                None => Population::constant(
                    State::ALL.iter().map(|s| (*s, 1.0)).collect::<BTreeMap<_, _>>(),
                ),
            };
            let (records, rejections) = crate::util::load_stage(path, tag, coverage)?;
            let cells = weekly_cell_counts(
                &records,
                &population,
                PanelOptions { zero_fill: false, coverage },
            )?;
            (cells, rejections)
        }
        (None, None) => {
            return Err(Error::Config(
                "missing input: pass --input (listings) or --cells (panel)".into(),
            ))
        }
    };

    let counts = quarterly_counts(&cells);
    let series = yoy_quantity_index::<f64>(&counts)?;

    let mut counts_csv = String::from("quarter,count\n");
    for (quarter, count) in &counts {
        let _ = writeln!(counts_csv, "{quarter},{count}");
    }

    let mut stage = Stage::new(out)?;
    stage.write("counts.csv", counts_csv)?;
    stage.write("index.csv", series.to_csv_string())?;
    if !rejections.is_empty() {
        stage.write("rejections.csv", rejections_csv(&rejections)?)?;
    }
    stage.write("resolved_config.toml", &config_text)?;

    eprintln!(
        "quantity-index: {} quarters counted, {} year-over-year ratios",
        counts.len(),
        series.points.len()
    );
    for note in &series.notes {
        eprintln!("quantity-index: note: {note}");
    }

    stage.promote("quantity-index", config_digest, inputs)
}
