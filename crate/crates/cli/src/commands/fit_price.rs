//! `dwellfit fit-price`: the hierarchical hedonic price model.

use crate::artifact::{coefficients_csv, FitArtifact};
use crate::settings::{require, FitPriceOpts};
use crate::stage::{Inputs, Stage};
use crate::util::{
    build_calendar, contextual_for_records, default_hedonics, parse_contextual, parse_coverage,
    parse_hedonics, parse_meta, rejections_csv, resolved_config,
};
use chrono::NaiveDate;
use dwellfit_core::data::{trim_prices, DatasetTag, DEFAULT_LOWER_EUR, DEFAULT_UPPER_EUR};
use dwellfit_core::design::{build_price_design, PriceModelSpec, References, TimeAxisKind};
use dwellfit_core::hlm::{fit_hlm, HlmOptions};
use dwellfit_core::Result;
use serde::Serialize;
use std::path::Path;

#[derive(Serialize)]
#[serde(rename_all = "kebab-case")]
struct HlmDoc {
    start_ratio: f64,
    ratio_floor: f64,
    max_nm_iters: usize,
    nm_tol: f64,
    polish_rounds: usize,
    fd_step: f64,
    grad_tol: f64,
}

impl From<&HlmOptions> for HlmDoc {
    fn from(o: &HlmOptions) -> Self {
        HlmDoc {
            start_ratio: o.start_ratio,
            ratio_floor: o.ratio_floor,
            max_nm_iters: o.max_nm_iters,
            nm_tol: o.nm_tol,
            polish_rounds: o.polish_rounds,
            fd_step: o.fd_step,
            grad_tol: o.grad_tol,
        }
    }
}

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
    hedonics: String,
    time: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    calendar_family: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    calendar_end: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    calendar_file: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    contextual: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    meta: Vec<String>,
    hlm: HlmDoc,
}

/// Applies flag overrides on top of the solver defaults.
pub fn hlm_options(
    max_nm_iters: Option<usize>,
    nm_tol: Option<f64>,
    grad_tol: Option<f64>,
    polish_rounds: Option<usize>,
    start_ratio: Option<f64>,
) -> HlmOptions {
    let mut options = HlmOptions::default();
    if let Some(v) = max_nm_iters {
        options.max_nm_iters = v;
    }
    if let Some(v) = nm_tol {
        options.nm_tol = v;
    }
    if let Some(v) = grad_tol {
        options.grad_tol = v;
    }
    if let Some(v) = polish_rounds {
        options.polish_rounds = v;
    }
    if let Some(v) = start_ratio {
        options.start_ratio = v;
    }
    options
}

pub fn run(opts: FitPriceOpts, out: &Path) -> Result<()> {
    let input = require(opts.input.clone(), "input")?;
    let tag = DatasetTag::parse(opts.tag.as_deref().unwrap_or("adverts"))?;
    let coverage = parse_coverage(opts.coverage_start, opts.coverage_end)?;
    let trim = !opts.no_trim;
    let trim_lower = opts.trim_lower.unwrap_or(DEFAULT_LOWER_EUR);
    let trim_upper = opts.trim_upper.unwrap_or(DEFAULT_UPPER_EUR);
    let hedonics_name = opts
        .hedonics
        .clone()
        .unwrap_or_else(|| default_hedonics(tag).to_string());
    let hedonic_terms = parse_hedonics(&hedonics_name)?;
    let time = TimeAxisKind::parse(opts.time.as_deref().unwrap_or("quarterly"))?;
    let meta = parse_meta(&opts.meta)?;
    let options = hlm_options(
        opts.max_nm_iters,
        opts.nm_tol,
        opts.grad_tol,
        opts.polish_rounds,
        opts.start_ratio,
    );
    let contextual_requests = parse_contextual(&opts.contextual)?;

    let resolved = Resolved {
        input: input.display().to_string(),
        tag: tag.as_str().to_string(),
        coverage_start: coverage.map(|c| c.0),
        coverage_end: coverage.map(|c| c.1),
        trim,
        trim_lower,
        trim_upper,
        hedonics: hedonics_name,
        time: time.as_str().to_string(),
        calendar_family: opts.calendar_family.clone(),
        calendar_end: opts.calendar_end.clone(),
        calendar_file: opts.calendar_file.as_ref().map(|p| p.display().to_string()),
        contextual: opts.contextual.clone(),
        meta: opts.meta.clone(),
        hlm: HlmDoc::from(&options),
    };
    let (config_text, config_digest) = resolved_config("fit-price", out, &resolved)?;

    let mut inputs = Inputs::new();
    inputs.add(&input)?;
    if let Some(path) = &opts.calendar_file {
        inputs.add(path)?;
    }
    for request in &contextual_requests {
        inputs.add(&request.path)?;
    }

    let (records, rejections) = crate::util::load_stage(&input, tag, coverage)?;
    let (records, n_trimmed) = if trim {
        trim_prices(records, trim_lower, trim_upper)?
    } else {
        (records, 0)
    };
    let calendar = build_calendar(
        opts.calendar_family.as_deref(),
        opts.calendar_end.as_deref(),
        opts.calendar_file.as_deref(),
        coverage,
    )?;
    let (contextual_values, contextual_terms) =
        contextual_for_records(&contextual_requests, &records)?;

    let spec = PriceModelSpec {
        hedonics: hedonic_terms,
        time,
        contextual: contextual_terms,
        references: References::default(),
    };
    let design = build_price_design::<f64>(&records, &spec, calendar.as_ref(), &contextual_values)?;
    let mut fit = fit_hlm(&design, &options)?;
    fit.metadata.insert("tag".into(), tag.as_str().to_string());
    fit.metadata.insert("rejected-rows".into(), rejections.len().to_string());
    fit.metadata.insert("trimmed-records".into(), n_trimmed.to_string());
    for (key, value) in meta {
        fit.metadata.insert(key, value);
    }

    let mut stage = Stage::new(out)?;
    stage.write("coefficients.csv", coefficients_csv(&fit.coefficients, false))?;
    stage.write("fit.toml", FitArtifact::from_price(&fit).to_toml_string()?)?;
    if !rejections.is_empty() {
        stage.write("rejections.csv", rejections_csv(&rejections)?)?;
    }
    stage.write("resolved_config.toml", &config_text)?;

    eprintln!(
        "fit-price: {} records ({} rejected, {} trimmed) in {} districts / {} states",
        fit.n_obs,
        rejections.len(),
        n_trimmed,
        fit.n_districts,
        fit.n_states
    );
    eprintln!(
        "fit-price: loglik {:.4}, bic {:.4}, variance state {:.6} district {:.6} residual {:.6}",
        fit.loglik, fit.bic, fit.variance.state, fit.variance.district, fit.variance.residual
    );
    for note in &fit.convergence.boundary {
        eprintln!("fit-price: note: {note}");
    }

    stage.promote("fit-price", config_digest, inputs)
}
