//! `dwellfit fit-count`: the Negative-Binomial count model over the
//! weekly panel.

use crate::artifact::{coefficients_csv, FitArtifact};
use crate::settings::{require, FitCountOpts};
use crate::stage::{Inputs, Stage};
use crate::util::{
    build_calendar, contextual_for_cells, parse_contextual, parse_coverage, parse_meta,
    rejections_csv, resolved_config,
};
use chrono::NaiveDate;
use dwellfit_core::data::{
    read_cells, total_count, weekly_cell_counts, write_cells, DatasetTag, PanelCell, PanelOptions,
    Population,
};
use dwellfit_core::design::{build_count_design, CountModelSpec, CycleSpec, References, TimeAxisKind};
use dwellfit_core::nb::{extract_cycle, fit_nb_glm, NbOptions};
use dwellfit_core::{CyclicalTrend, Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Serialize)]
#[serde(rename_all = "kebab-case")]
struct NbDoc {
    max_outer: usize,
    max_irls: usize,
    max_dispersion_steps: usize,
    tol_loglik: f64,
    dispersion_cap: f64,
}

impl From<&NbOptions> for NbDoc {
    fn from(o: &NbOptions) -> Self {
        NbDoc {
            max_outer: o.max_outer,
            max_irls: o.max_irls,
            max_dispersion_steps: o.max_dispersion_steps,
            tol_loglik: o.tol_loglik,
            dispersion_cap: o.dispersion_cap,
        }
    }
}

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
    zero_fill: bool,
    time: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    calendar_family: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    calendar_end: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    calendar_file: Option<String>,
    cycle: String,
    cycle_period: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    frozen_cycle: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    contextual: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    meta: Vec<String>,
    nb: NbDoc,
}

/// `cycle.toml`: the estimated (or echoed frozen) seasonal cycle. Only
/// `beta-cos`, `beta-sin` and `period` are read back by `--frozen-cycle`;
/// the rest are derived conveniences.
#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct CycleDoc {
    pub beta_cos: f64,
    pub beta_sin: f64,
    pub period: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<f64>,
    /// Week of the seasonal maximum, in [0, period).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub peak_week: Option<f64>,
    /// Week of the seasonal minimum, in [0, period).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trough_week: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

impl CycleDoc {
    pub fn from_trend(trend: &CyclicalTrend, source: &str) -> CycleDoc {
        CycleDoc {
            beta_cos: trend.beta_cos,
            beta_sin: trend.beta_sin,
            period: trend.period,
            amplitude: Some(trend.amplitude()),
            phase: Some(trend.phase()),
            peak_week: Some(trend.peak_time()),
            trough_week: Some(trend.trough_time()),
            source: Some(source.to_string()),
        }
    }

    pub fn trend(&self) -> CyclicalTrend {
        CyclicalTrend { beta_cos: self.beta_cos, beta_sin: self.beta_sin, period: self.period }
    }

    pub fn load(path: &Path) -> Result<CycleDoc> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read cycle file '{}': {e}", path.display()))
        })?;
        toml::from_str(&text)
            .map_err(|e| Error::Config(format!("cycle file '{}': {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("cannot serialise cycle: {e}")))
    }
}

fn nb_options(opts: &FitCountOpts) -> NbOptions {
    let mut options = NbOptions::default();
    if let Some(v) = opts.max_outer {
        options.max_outer = v;
    }
    if let Some(v) = opts.max_irls {
        options.max_irls = v;
    }
    if let Some(v) = opts.tol_loglik {
        options.tol_loglik = v;
    }
    if let Some(v) = opts.dispersion_cap {
        options.dispersion_cap = v;
    }
    options
}

/// Builds the panel this fit runs on, either read back from a cells file
/// or aggregated from listings.
fn assemble_cells(
    opts: &FitCountOpts,
    coverage: Option<(NaiveDate, NaiveDate)>,
    inputs: &mut Inputs,
) -> Result<(Vec<PanelCell>, Vec<dwellfit_core::data::Rejection>)> {
    match (&opts.cells, &opts.input) {
        (Some(_), Some(_)) => Err(Error::Config(
            "--cells and --input are alternatives; give exactly one".into(),
        )),
        (Some(path), None) => {
            inputs.add(path)?;
            Ok((read_cells(path)?, Vec::new()))
        }
        (None, Some(path)) => {
            let tag = DatasetTag::parse(opts.tag.as_deref().unwrap_or("adverts"))?;
            let population_path = require(opts.population.clone(), "population")?;
            inputs.add(path)?;
            inputs.add(&population_path)?;
            let population = Population::from_csv(&population_path)?;
            let (records, rejections) = crate::util::load_stage(path, tag, coverage)?;
            let cells = weekly_cell_counts(
                &records,
                &population,
                PanelOptions { zero_fill: !opts.no_zero_fill, coverage },
            )?;
            Ok((cells, rejections))
        }
        (None, None) => Err(Error::Config(
            "missing input: pass --input (listings) or --cells (panel)".into(),
        )),
    }
}

pub fn run(opts: FitCountOpts, out: &Path) -> Result<()> {
    let coverage = parse_coverage(opts.coverage_start, opts.coverage_end)?;
    let time = TimeAxisKind::parse(opts.time.as_deref().unwrap_or("quarterly"))?;
    let cycle_period = opts.cycle_period.unwrap_or(52.0);
    let cycle_name = opts.cycle.clone().unwrap_or_else(|| "estimate".to_string());
    let meta = parse_meta(&opts.meta)?;
    let options = nb_options(&opts);
    let contextual_requests = parse_contextual(&opts.contextual)?;

    let resolved = Resolved {
        input: opts.input.as_ref().map(|p| p.display().to_string()),
        tag: opts.input.as_ref().map(|_| opts.tag.clone().unwrap_or_else(|| "adverts".into())),
        population: opts.population.as_ref().map(|p| p.display().to_string()),
        cells: opts.cells.as_ref().map(|p| p.display().to_string()),
        coverage_start: coverage.map(|c| c.0),
        coverage_end: coverage.map(|c| c.1),
        zero_fill: !opts.no_zero_fill,
        time: time.as_str().to_string(),
        calendar_family: opts.calendar_family.clone(),
        calendar_end: opts.calendar_end.clone(),
        calendar_file: opts.calendar_file.as_ref().map(|p| p.display().to_string()),
        cycle: cycle_name.clone(),
        cycle_period,
        frozen_cycle: opts.frozen_cycle.as_ref().map(|p| p.display().to_string()),
        contextual: opts.contextual.clone(),
        meta: opts.meta.clone(),
        nb: NbDoc::from(&options),
    };
    let (config_text, config_digest) = resolved_config("fit-count", out, &resolved)?;

    let mut inputs = Inputs::new();
    if let Some(path) = &opts.calendar_file {
        inputs.add(path)?;
    }
    for request in &contextual_requests {
        inputs.add(&request.path)?;
    }

    let cycle = match cycle_name.trim().to_ascii_lowercase().as_str() {
        "estimate" => CycleSpec::Estimate { period: cycle_period },
        "off" => {
            if opts.frozen_cycle.is_some() {
                return Err(Error::Config("--frozen-cycle conflicts with --cycle off".into()));
            }
            CycleSpec::Off
        }
        "frozen" => {
            let path = require(opts.frozen_cycle.clone(), "frozen-cycle")?;
            inputs.add(&path)?;
            CycleSpec::Frozen(CycleDoc::load(&path)?.trend())
        }
        other => {
            return Err(Error::Config(format!(
                "unknown cycle treatment '{other}' (expected estimate, off, or frozen)"
            )))
        }
    };

    let (cells, rejections) = assemble_cells(&opts, coverage, &mut inputs)?;
    let calendar = build_calendar(
        opts.calendar_family.as_deref(),
        opts.calendar_end.as_deref(),
        opts.calendar_file.as_deref(),
        coverage,
    )?;
    let (contextual_values, contextual_terms) =
        contextual_for_cells(&contextual_requests, &cells)?;

    let spec = CountModelSpec {
        time,
        cycle,
        contextual: contextual_terms,
        references: References::default(),
    };
    let design = build_count_design::<f64>(&cells, &spec, calendar.as_ref(), &contextual_values)?;
    let frozen_trend = design.frozen_cycle.clone();
    let mut fit = fit_nb_glm(&design, &options)?;
    fit.metadata.insert("rejected-rows".into(), rejections.len().to_string());
    if matches!(spec.cycle, CycleSpec::Estimate { .. }) {
        fit.metadata.insert("cycle-period".into(), cycle_period.to_string());
    }
    for (key, value) in meta {
        fit.metadata.insert(key, value);
    }

    let cycle_doc = match &spec.cycle {
        CycleSpec::Estimate { period } => {
            Some(CycleDoc::from_trend(&extract_cycle(&fit, *period)?, "estimated"))
        }
        CycleSpec::Frozen(_) => {
            frozen_trend.as_ref().map(|t| CycleDoc::from_trend(t, "frozen"))
        }
        CycleSpec::Off => None,
    };

    let mut stage = Stage::new(out)?;
    write_cells(&stage.path("cells.csv"), &cells)?;
    stage.register("cells.csv")?;
    stage.write("coefficients.csv", coefficients_csv(&fit.coefficients, true))?;
    stage.write("fit.toml", FitArtifact::from_count(&fit).to_toml_string()?)?;
    if let Some(doc) = &cycle_doc {
        stage.write("cycle.toml", doc.to_toml_string()?)?;
    }
    if !rejections.is_empty() {
        stage.write("rejections.csv", rejections_csv(&rejections)?)?;
    }
    stage.write("resolved_config.toml", &config_text)?;

    eprintln!(
        "fit-count: {} cells, {} listings counted, loglik {:.4}, bic {:.4}",
        fit.n_obs,
        total_count(&cells),
        fit.loglik,
        fit.bic
    );
    eprintln!(
        "fit-count: dispersion {:.4}{}",
        fit.dispersion,
        if fit.dispersion_capped { " (capped: effectively Poisson)" } else { "" }
    );
    if let Some(doc) = &cycle_doc {
        eprintln!(
            "fit-count: cycle amplitude {:.4}, peak week {:.1}, trough week {:.1} ({})",
            doc.amplitude.unwrap_or(f64::NAN),
            doc.peak_week.unwrap_or(f64::NAN),
            doc.trough_week.unwrap_or(f64::NAN),
            doc.source.as_deref().unwrap_or("?")
        );
    }
    for note in &fit.convergence.boundary {
        eprintln!("fit-count: note: {note}");
    }

    stage.promote("fit-count", config_digest, inputs)
}
