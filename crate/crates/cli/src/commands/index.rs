//! `dwellfit index`: price index from a fitted model's time dummies.

use crate::artifact::FitArtifact;
use crate::settings::{require, IndexOpts};
use crate::stage::{Inputs, Stage};
use crate::util::resolved_config;
use dwellfit_core::indices::{index_from_dummies, IndexKind};
use dwellfit_core::{Error, Result};
use serde::Serialize;
use std::path::Path;

#[derive(Serialize)]
#[serde(rename_all = "kebab-case")]
struct Resolved {
    fit: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    base: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rebase: Option<String>,
}

pub fn run(opts: IndexOpts, out: &Path) -> Result<()> {
    let fit_path = require(opts.fit.clone(), "fit")?;
    let resolved = Resolved {
        fit: fit_path.display().to_string(),
        base: opts.base.clone(),
        rebase: opts.rebase.clone(),
    };
    let (config_text, config_digest) = resolved_config("index", out, &resolved)?;

    let mut inputs = Inputs::new();
    inputs.add(&fit_path)?;

    let artifact = FitArtifact::load(&fit_path)?;
    let time = artifact.time_axis()?.ok_or_else(|| {
        Error::Config("fit artifact has no time axis; was the model built with time dummies?".into())
    })?;
    let coefficients = artifact.coefficients();
    let mut series =
        index_from_dummies::<f64>(&coefficients, &time, opts.base.as_deref(), IndexKind::PriceTimeDummy)?;
    if let Some(new_base) = &opts.rebase {
        series = series.rebase(new_base)?;
    }

    let mut stage = Stage::new(out)?;
    stage.write("index.csv", series.to_csv_string())?;
    stage.write("resolved_config.toml", &config_text)?;

    eprintln!(
        "index: {} periods on a {} axis, base {}",
        series.points.len(),
        time.kind.as_str(),
        series.base_label
    );

    stage.promote("index", config_digest, inputs)
}
