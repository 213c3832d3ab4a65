//! `dwellfit` — staged housing-market data to fitted models, indices and
//! reports, one command per run.
//!
//! Every command reads its settings from an optional `--config` TOML file
//! with flags overriding field by field, writes all data artifacts to
//! `--out` (promoted atomically, manifest last), and keeps diagnostics on
//! stderr. Exit statuses: 0 success, 1 configuration/schema/data errors,
//! 2 numerical non-convergence.

mod artifact;
mod commands;
mod settings;
mod stage;
mod util;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Parser)]
#[command(
    name = "dwellfit",
    version,
    about = "Hierarchical price and count models over staged housing-market data",
    propagate_version = true
)]
struct Cli {
    /// Run-configuration TOML; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Output directory for artifacts (or top-level `out` in the config
    /// file).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a seeded synthetic market: adverts, brokered adverts,
    /// deeds, population and ground truth.
    Simulate(settings::SimulateOpts),
    /// Fit the hierarchical hedonic price model to one listings stage.
    FitPrice(settings::FitPriceOpts),
    /// Fit the Negative-Binomial count model to the weekly panel.
    FitCount(settings::FitCountOpts),
    /// Build a price index from a fitted model's time dummies.
    Index(settings::IndexOpts),
    /// Build the year-over-year quantity index from quarterly counts.
    QuantityIndex(settings::QuantityIndexOpts),
    /// Split listings into price segments and fit per-segment indices.
    Segments(settings::SegmentsOpts),
    /// Pearson correlation test between two series, joined by label.
    Correlate(settings::CorrelateOpts),
    /// Score fitted models against a simulation's ground truth.
    Report(settings::ReportOpts),
}

fn run(cli: Cli) -> dwellfit_core::Result<()> {
    let file = settings::load_run_file(cli.config.as_deref())?;
    let out = settings::require(cli.out.or(file.out.clone()), "out")?;
    match cli.command {
        Command::Simulate(opts) => commands::simulate::run(opts.merged(file.simulate), &out),
        Command::FitPrice(opts) => commands::fit_price::run(opts.merged(file.fit_price), &out),
        Command::FitCount(opts) => commands::fit_count::run(opts.merged(file.fit_count), &out),
        Command::Index(opts) => commands::index::run(opts.merged(file.index), &out),
        Command::QuantityIndex(opts) => {
            commands::quantity::run(opts.merged(file.quantity_index), &out)
        }
        Command::Segments(opts) => commands::segments::run(opts.merged(file.segments), &out),
        Command::Correlate(opts) => commands::correlate::run(opts.merged(file.correlate), &out),
        Command::Report(opts) => commands::report::run(opts.merged(file.report), &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            // Help and version requests are successes; everything else is
            // a configuration error in this tool's exit-code scheme.
            let requested = matches!(
                e.kind(),
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion
            );
            let _ = e.print();
            return if requested { ExitCode::SUCCESS } else { ExitCode::from(1) };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_convergence_failure() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
