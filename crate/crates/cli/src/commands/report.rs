//! `dwellfit report`: score fitted models against a simulation's ground
//! truth.

use crate::artifact::FitArtifact;
use crate::settings::{require, ReportOpts};
use crate::stage::{Inputs, Stage};
use crate::util::resolved_config;
use dwellfit_core::sim::{oracle_check, GroundTruth, OracleOptions};
use dwellfit_core::{Error, Result};
use serde::Serialize;
use std::path::Path;

#[derive(Serialize)]
#[serde(rename_all = "kebab-case")]
struct Resolved {
    ground_truth: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    price_fit: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    count_fit: Option<String>,
    z_limit: f64,
    rel_limit: f64,
}

#[derive(Serialize)]
#[serde(rename_all = "kebab-case")]
struct ReportDoc {
    run_id: String,
    n_parameters: usize,
    n_flagged: usize,
    z_limit: f64,
    rel_limit: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    flagged: Vec<String>,
}

pub fn run(opts: ReportOpts, out: &Path) -> Result<()> {
    let truth_path = require(opts.ground_truth.clone(), "ground-truth")?;
    if opts.price_fit.is_none() && opts.count_fit.is_none() {
        return Err(Error::Config(
            "nothing to score: pass --price-fit and/or --count-fit".into(),
        ));
    }
    let options = OracleOptions {
        z_limit: opts.z_limit.unwrap_or(OracleOptions::default().z_limit),
        rel_limit: opts.rel_limit.unwrap_or(OracleOptions::default().rel_limit),
    };

    let resolved = Resolved {
        ground_truth: truth_path.display().to_string(),
        price_fit: opts.price_fit.as_ref().map(|p| p.display().to_string()),
        count_fit: opts.count_fit.as_ref().map(|p| p.display().to_string()),
        z_limit: options.z_limit,
        rel_limit: options.rel_limit,
    };
    let (config_text, config_digest) = resolved_config("report", out, &resolved)?;

    let mut inputs = Inputs::new();
    inputs.add(&truth_path)?;
    let truth = GroundTruth::from_toml_file(&truth_path)?;

    let price_fit = match &opts.price_fit {
        Some(path) => {
            inputs.add(path)?;
            Some(FitArtifact::load(path)?.to_price()?)
        }
        None => None,
    };
    let count_fit = match &opts.count_fit {
        Some(path) => {
            inputs.add(path)?;
            Some(FitArtifact::load(path)?.to_count()?)
        }
        None => None,
    };

    let report = oracle_check(&truth, price_fit.as_ref(), count_fit.as_ref(), options)?;
    let doc = ReportDoc {
        run_id: report.run_id.clone(),
        n_parameters: report.rows.len(),
        n_flagged: report.n_flagged(),
        z_limit: options.z_limit,
        rel_limit: options.rel_limit,
        flagged: report.flagged().map(|r| r.parameter.clone()).collect(),
    };

    let mut stage = Stage::new(out)?;
    stage.write("oracle_report.csv", report.to_csv_string())?;
    stage.write(
        "report.toml",
        toml::to_string_pretty(&doc)
            .map_err(|e| Error::Config(format!("cannot serialise report: {e}")))?,
    )?;
    stage.write("resolved_config.toml", &config_text)?;

    eprintln!(
        "report: run {}, {} of {} parameters flagged (|z| > {} or relative error > {})",
        doc.run_id, doc.n_flagged, doc.n_parameters, doc.z_limit, doc.rel_limit
    );
    for row in report.flagged() {
        match (row.estimate, row.z) {
            (Some(est), Some(z)) => eprintln!(
                "report: flagged {}: truth {:.6}, estimate {:.6}, z {:.2}",
                row.parameter, row.truth, est, z
            ),
            (Some(est), None) => eprintln!(
                "report: flagged {}: truth {:.6}, estimate {:.6}",
                row.parameter, row.truth, est
            ),
            _ => eprintln!("report: flagged {}: missing from the fit", row.parameter),
        }
    }

    stage.promote("report", config_digest, inputs)
}
