//! `dwellfit segments`: price-quantile segments with per-segment indices
//! from one joint hierarchical fit.

use crate::artifact::{coefficients_csv, FitArtifact};
use crate::commands::fit_price::hlm_options;
use crate::settings::{require, SegmentsOpts};
use crate::stage::{Inputs, Stage};
use crate::util::{
    default_hedonics, parse_boundaries, parse_coverage, parse_hedonics, parse_meta,
    rejections_csv, resolved_config,
};
use chrono::NaiveDate;
use dwellfit_core::data::{trim_prices, DatasetTag, DEFAULT_LOWER_EUR, DEFAULT_UPPER_EUR};
use dwellfit_core::design::{PriceModelSpec, References, TimeAxisKind};
use dwellfit_core::indices::{price_quantile_segments, segment_indices};
use dwellfit_core::Result;
use serde::Serialize;
use std::path::Path;

#[derive(Serialize)]
#[serde(rename_all = "kebab-case")]
struct Resolved {
    input: String,
    tag: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    coverage_start: Option<NaiveDate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    coverage_end: Option<NaiveDate>,
    trim: bool,
    trim_lower: f64,
    trim_upper: f64,
    boundaries: Vec<f64>,
    hedonics: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    meta: Vec<String>,
}

/// `segments.toml`: how the segmentation fell out.
#[derive(Serialize)]
#[serde(rename_all = "kebab-case")]
struct SegmentsDoc {
    /// Requested cumulative shares.
    boundaries: Vec<f64>,
    /// Realized EUR cut prices (order statistics at the shares).
    cut_prices: Vec<f64>,
    /// Records per segment, cheapest first.
    counts: Vec<usize>,
}

pub fn run(opts: SegmentsOpts, out: &Path) -> Result<()> {
    let input = require(opts.input.clone(), "input")?;
    let tag = DatasetTag::parse(opts.tag.as_deref().unwrap_or("adverts"))?;
    let coverage = parse_coverage(opts.coverage_start, opts.coverage_end)?;
    let trim = !opts.no_trim;
    let trim_lower = opts.trim_lower.unwrap_or(DEFAULT_LOWER_EUR);
    let trim_upper = opts.trim_upper.unwrap_or(DEFAULT_UPPER_EUR);
    let boundaries = parse_boundaries(opts.boundaries.as_deref().unwrap_or("0.2,0.8"))?;
    let hedonics_name = opts
        .hedonics
        .clone()
        .unwrap_or_else(|| default_hedonics(tag).to_string());
    let hedonic_terms = parse_hedonics(&hedonics_name)?;
    let meta = parse_meta(&opts.meta)?;
    let options = hlm_options(
        opts.max_nm_iters,
        opts.nm_tol,
        opts.grad_tol,
        opts.polish_rounds,
        opts.start_ratio,
    );

    let resolved = Resolved {
        input: input.display().to_string(),
        tag: tag.as_str().to_string(),
        coverage_start: coverage.map(|c| c.0),
        coverage_end: coverage.map(|c| c.1),
        trim,
        trim_lower,
        trim_upper,
        boundaries: boundaries.clone(),
        hedonics: hedonics_name,
        meta: opts.meta.clone(),
    };
    let (config_text, config_digest) = resolved_config("segments", out, &resolved)?;

    let mut inputs = Inputs::new();
    inputs.add(&input)?;

    let (records, rejections) = crate::util::load_stage(&input, tag, coverage)?;
    let (records, n_trimmed) = if trim {
        trim_prices(records, trim_lower, trim_upper)?
    } else {
        (records, 0)
    };
    let prices: Vec<f64> = records.iter().map(|r| r.price_eur).collect();
    let (segment_of_row, cut_prices) = price_quantile_segments(&prices, &boundaries)?;
    let n_segments = boundaries.len() + 1;
    let mut counts = vec![0usize; n_segments];
    for &s in &segment_of_row {
        counts[s] += 1;
    }

    let spec = PriceModelSpec {
        hedonics: hedonic_terms,
        time: TimeAxisKind::Quarterly,
        contextual: Vec::new(),
        references: References::default(),
    };
    let (series, mut fit) =
        segment_indices::<f64>(&records, &segment_of_row, n_segments, &spec, &options)?;
    fit.metadata.insert("tag".into(), tag.as_str().to_string());
    fit.metadata.insert("rejected-rows".into(), rejections.len().to_string());
    fit.metadata.insert("trimmed-records".into(), n_trimmed.to_string());
    for (key, value) in meta {
        fit.metadata.insert(key, value);
    }

    let doc = SegmentsDoc { boundaries, cut_prices, counts };

    let mut stage = Stage::new(out)?;
    for (k, segment_series) in series.iter().enumerate() {
        stage.write(&format!("segment-{k}.csv"), segment_series.to_csv_string())?;
    }
    stage.write("coefficients.csv", coefficients_csv(&fit.coefficients, false))?;
    stage.write("fit.toml", FitArtifact::from_price(&fit).to_toml_string()?)?;
    stage.write(
        "segments.toml",
        toml::to_string_pretty(&doc)
            .map_err(|e| dwellfit_core::Error::Config(format!("cannot serialise segments: {e}")))?,
    )?;
    if !rejections.is_empty() {
        stage.write("rejections.csv", rejections_csv(&rejections)?)?;
    }
    stage.write("resolved_config.toml", &config_text)?;

    eprintln!(
        "segments: {} records into {} segments (counts {:?}, cuts {:?})",
        fit.n_obs, n_segments, doc.counts, doc.cut_prices
    );
    eprintln!("segments: loglik {:.4}, bic {:.4}", fit.loglik, fit.bic);

    stage.promote("segments", config_digest, inputs)
}
