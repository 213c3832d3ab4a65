//! Run configuration: one optional TOML file of record plus flag
//! overrides, flags winning field by field.
//!
//! Every subcommand's options live in one struct that serves as both the
//! clap argument group and the file section, so `--help` and the file
//! format cannot drift apart. List-valued options (`contextual`, `meta`)
//! are replaced wholesale when any flag instance is given; boolean
//! switches combine with OR (a file cannot un-set a flag, nor vice versa).

use chrono::NaiveDate;
use dwellfit_core::{Error, Result};
use serde::Deserialize;
use std::path::{Path, PathBuf};

macro_rules! take_opt {
    ($self:ident, $file:ident: $($f:ident),* $(,)?) => {
        $( if $self.$f.is_none() { $self.$f = $file.$f; } )*
    };
}

macro_rules! take_vec {
    ($self:ident, $file:ident: $($f:ident),* $(,)?) => {
        $( if $self.$f.is_empty() { $self.$f = $file.$f; } )*
    };
}

macro_rules! take_flag {
    ($self:ident, $file:ident: $($f:ident),* $(,)?) => {
        $( $self.$f = $self.$f || $file.$f; )*
    };
}

/// The file of record. Top-level `out` is the default output directory;
/// each section holds one command's settings.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct RunFile {
    pub out: Option<PathBuf>,
    pub simulate: SimulateOpts,
    pub fit_price: FitPriceOpts,
    pub fit_count: FitCountOpts,
    pub index: IndexOpts,
    pub quantity_index: QuantityIndexOpts,
    pub segments: SegmentsOpts,
    pub correlate: CorrelateOpts,
    pub report: ReportOpts,
}

pub fn load_run_file(path: Option<&Path>) -> Result<RunFile> {
    let Some(path) = path else { return Ok(RunFile::default()) };
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::Config(format!("cannot read config file '{}': {e}", path.display()))
    })?;
    toml::from_str(&text)
        .map_err(|e| Error::Config(format!("config file '{}': {e}", path.display())))
}

/// A required setting that neither a flag nor the file supplied.
pub fn require<T>(value: Option<T>, flag: &str) -> Result<T> {
    value.ok_or_else(|| {
        Error::Config(format!("missing required setting: pass --{flag} or set '{flag}' in the config file"))
    })
}

#[derive(Debug, Default, Clone, clap::Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct SimulateOpts {
    /// Market configuration TOML; omitted = built-in default market.
    #[arg(long)]
    pub market: Option<PathBuf>,
    /// Overrides the seed in the market configuration.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl SimulateOpts {
    pub fn merged(mut self, file: SimulateOpts) -> SimulateOpts {
        take_opt!(self, file: market, seed);
        self
    }
}

#[derive(Debug, Default, Clone, clap::Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct FitPriceOpts {
    /// Listings CSV to fit.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Dataset stage: adverts | brokered-adverts | deeds.
    #[arg(long)]
    pub tag: Option<String>,
    /// Keep only records dated on or after this (with --coverage-end).
    #[arg(long)]
    pub coverage_start: Option<NaiveDate>,
    /// Exclusive end of the accepted date window.
    #[arg(long)]
    pub coverage_end: Option<NaiveDate>,
    /// Disable the price trim.
    #[arg(long)]
    pub no_trim: bool,
    /// Lower price bound in EUR (default 100000).
    #[arg(long)]
    pub trim_lower: Option<f64>,
    /// Upper price bound in EUR (default 5000000).
    #[arg(long)]
    pub trim_upper: Option<f64>,
    /// Hedonic term set: full | location | none (default full, or
    /// location for deeds, which carry no dwelling profile).
    #[arg(long)]
    pub hedonics: Option<String>,
    /// Time axis: quarterly | split | none (default quarterly).
    #[arg(long)]
    pub time: Option<String>,
    /// Built-in regime calendar: lockdowns | lending-standards | policy-rate.
    #[arg(long)]
    pub calendar_family: Option<String>,
    /// Lockdown calendar coverage: model (mid-2022) | legal (mid-2023).
    #[arg(long)]
    pub calendar_end: Option<String>,
    /// Regime calendar CSV (family,name,start,end,scope); needs the
    /// coverage flags. Overrides --calendar-family.
    #[arg(long)]
    pub calendar_file: Option<PathBuf>,
    /// Contextual series: name:path:mode[:unit][:ma=N], mode one of
    /// main | by-quarter | by-regime. Repeatable.
    #[arg(long)]
    pub contextual: Vec<String>,
    /// Simplex iteration budget for the variance search.
    #[arg(long)]
    pub max_nm_iters: Option<usize>,
    /// Simplex spread tolerance.
    #[arg(long)]
    pub nm_tol: Option<f64>,
    /// Gradient norm under which the fit counts as converged.
    #[arg(long)]
    pub grad_tol: Option<f64>,
    /// Newton polish rounds after the simplex search.
    #[arg(long)]
    pub polish_rounds: Option<usize>,
    /// Starting value for both variance ratios.
    #[arg(long)]
    pub start_ratio: Option<f64>,
    /// Extra key=value pairs stored in the fit metadata. Repeatable.
    #[arg(long)]
    pub meta: Vec<String>,
}

impl FitPriceOpts {
    pub fn merged(mut self, file: FitPriceOpts) -> FitPriceOpts {
        take_opt!(self, file:
            input, tag, coverage_start, coverage_end, trim_lower, trim_upper,
            hedonics, time, calendar_family, calendar_end, calendar_file,
            max_nm_iters, nm_tol, grad_tol, polish_rounds, start_ratio);
        take_vec!(self, file: contextual, meta);
        take_flag!(self, file: no_trim);
        self
    }
}

#[derive(Debug, Default, Clone, clap::Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct FitCountOpts {
    /// Listings CSV to aggregate into the weekly panel.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Dataset stage of --input: adverts | brokered-adverts | deeds.
    #[arg(long)]
    pub tag: Option<String>,
    /// Population CSV (state,year,persons; year '*' = constant). Needed
    /// with --input.
    #[arg(long)]
    pub population: Option<PathBuf>,
    /// Pre-aggregated panel CSV (week,type,state,urban_class,count,exposure);
    /// alternative to --input.
    #[arg(long)]
    pub cells: Option<PathBuf>,
    /// Panel window start (Monday); defaults to the span of the data.
    #[arg(long)]
    pub coverage_start: Option<NaiveDate>,
    /// Exclusive panel window end.
    #[arg(long)]
    pub coverage_end: Option<NaiveDate>,
    /// Drop structural-zero cells instead of keeping them.
    #[arg(long)]
    pub no_zero_fill: bool,
    /// Time axis: quarterly | split | none (default quarterly).
    #[arg(long)]
    pub time: Option<String>,
    /// Built-in regime calendar: lockdowns | lending-standards | policy-rate.
    #[arg(long)]
    pub calendar_family: Option<String>,
    /// Lockdown calendar coverage: model (mid-2022) | legal (mid-2023).
    #[arg(long)]
    pub calendar_end: Option<String>,
    /// Regime calendar CSV; needs the coverage flags.
    #[arg(long)]
    pub calendar_file: Option<PathBuf>,
    /// Seasonal cycle: estimate | off | frozen (default estimate).
    #[arg(long)]
    pub cycle: Option<String>,
    /// Cycle period in weeks (default 52).
    #[arg(long)]
    pub cycle_period: Option<f64>,
    /// cycle.toml from an earlier fit; required with --cycle frozen.
    #[arg(long)]
    pub frozen_cycle: Option<PathBuf>,
    /// Contextual series: name:path:mode[:unit][:ma=N]. Repeatable.
    #[arg(long)]
    pub contextual: Vec<String>,
    /// Outer round budget for the coefficient/dispersion alternation.
    #[arg(long)]
    pub max_outer: Option<usize>,
    /// Inner IRLS iteration budget.
    #[arg(long)]
    pub max_irls: Option<usize>,
    /// Log-likelihood change under which the alternation stops.
    #[arg(long)]
    pub tol_loglik: Option<f64>,
    /// Dispersion above which counts are treated as effectively Poisson.
    #[arg(long)]
    pub dispersion_cap: Option<f64>,
    /// Extra key=value pairs stored in the fit metadata. Repeatable.
    #[arg(long)]
    pub meta: Vec<String>,
}

impl FitCountOpts {
    pub fn merged(mut self, file: FitCountOpts) -> FitCountOpts {
        take_opt!(self, file:
            input, tag, population, cells, coverage_start, coverage_end,
            time, calendar_family, calendar_end, calendar_file,
            cycle, cycle_period, frozen_cycle,
            max_outer, max_irls, tol_loglik, dispersion_cap);
        take_vec!(self, file: contextual, meta);
        take_flag!(self, file: no_zero_fill);
        self
    }
}

#[derive(Debug, Default, Clone, clap::Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct IndexOpts {
    /// fit.toml of a model with a time axis.
    #[arg(long)]
    pub fit: Option<PathBuf>,
    /// Base period label (default: the model's reference period).
    #[arg(long)]
    pub base: Option<String>,
    /// Re-express the finished series against this period.
    #[arg(long)]
    pub rebase: Option<String>,
}

impl IndexOpts {
    pub fn merged(mut self, file: IndexOpts) -> IndexOpts {
        take_opt!(self, file: fit, base, rebase);
        self
    }
}

#[derive(Debug, Default, Clone, clap::Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct QuantityIndexOpts {
    /// Listings CSV to count.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Dataset stage of --input: adverts | brokered-adverts | deeds.
    #[arg(long)]
    pub tag: Option<String>,
    /// Population CSV; optional (counting needs no exposure).
    #[arg(long)]
    pub population: Option<PathBuf>,
    /// Pre-aggregated panel CSV; alternative to --input.
    #[arg(long)]
    pub cells: Option<PathBuf>,
    /// Panel window start (Monday); defaults to the span of the data.
    #[arg(long)]
    pub coverage_start: Option<NaiveDate>,
    /// Exclusive panel window end.
    #[arg(long)]
    pub coverage_end: Option<NaiveDate>,
}

impl QuantityIndexOpts {
    pub fn merged(mut self, file: QuantityIndexOpts) -> QuantityIndexOpts {
        take_opt!(self, file: input, tag, population, cells, coverage_start, coverage_end);
        self
    }
}

#[derive(Debug, Default, Clone, clap::Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct SegmentsOpts {
    /// Listings CSV to segment and fit.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Dataset stage: adverts | brokered-adverts | deeds.
    #[arg(long)]
    pub tag: Option<String>,
    /// Keep only records dated on or after this (with --coverage-end).
    #[arg(long)]
    pub coverage_start: Option<NaiveDate>,
    /// Exclusive end of the accepted date window.
    #[arg(long)]
    pub coverage_end: Option<NaiveDate>,
    /// Disable the price trim.
    #[arg(long)]
    pub no_trim: bool,
    /// Lower price bound in EUR (default 100000).
    #[arg(long)]
    pub trim_lower: Option<f64>,
    /// Upper price bound in EUR (default 5000000).
    #[arg(long)]
    pub trim_upper: Option<f64>,
    /// Cumulative quantile cut points in (0,1), comma-separated
    /// (default "0.2,0.8": cheap / middle / dear).
    #[arg(long)]
    pub boundaries: Option<String>,
    /// Hedonic term set: full | location | none.
    #[arg(long)]
    pub hedonics: Option<String>,
    /// Simplex iteration budget for the variance search.
    #[arg(long)]
    pub max_nm_iters: Option<usize>,
    /// Simplex spread tolerance.
    #[arg(long)]
    pub nm_tol: Option<f64>,
    /// Gradient norm under which the fit counts as converged.
    #[arg(long)]
    pub grad_tol: Option<f64>,
    /// Newton polish rounds after the simplex search.
    #[arg(long)]
    pub polish_rounds: Option<usize>,
    /// Starting value for both variance ratios.
    #[arg(long)]
    pub start_ratio: Option<f64>,
    /// Extra key=value pairs stored in the fit metadata. Repeatable.
    #[arg(long)]
    pub meta: Vec<String>,
}

impl SegmentsOpts {
    pub fn merged(mut self, file: SegmentsOpts) -> SegmentsOpts {
        take_opt!(self, file:
            input, tag, coverage_start, coverage_end, trim_lower, trim_upper,
            boundaries, hedonics, max_nm_iters, nm_tol, grad_tol,
            polish_rounds, start_ratio);
        take_vec!(self, file: meta);
        take_flag!(self, file: no_trim);
        self
    }
}

#[derive(Debug, Default, Clone, clap::Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct CorrelateOpts {
    /// First series (index CSV: '#' comments, then label,value[,spans]).
    #[arg(long)]
    pub series_a: Option<PathBuf>,
    /// Second series, joined to the first by label.
    #[arg(long)]
    pub series_b: Option<PathBuf>,
    /// Test alternative: two-sided | greater | less (default two-sided).
    #[arg(long)]
    pub alternative: Option<String>,
}

impl CorrelateOpts {
    pub fn merged(mut self, file: CorrelateOpts) -> CorrelateOpts {
        take_opt!(self, file: series_a, series_b, alternative);
        self
    }
}

#[derive(Debug, Default, Clone, clap::Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct ReportOpts {
    /// ground_truth.toml from a simulate run.
    #[arg(long)]
    pub ground_truth: Option<PathBuf>,
    /// fit.toml of a price model to score.
    #[arg(long)]
    pub price_fit: Option<PathBuf>,
    /// fit.toml of a count model to score.
    #[arg(long)]
    pub count_fit: Option<PathBuf>,
    /// |z| above which a parameter with a standard error is flagged
    /// (default 3).
    #[arg(long)]
    pub z_limit: Option<f64>,
    /// Relative error above which a parameter without a standard error is
    /// flagged (default 0.5).
    #[arg(long)]
    pub rel_limit: Option<f64>,
}

impl ReportOpts {
    pub fn merged(mut self, file: ReportOpts) -> ReportOpts {
        take_opt!(self, file: ground_truth, price_fit, count_fit, z_limit, rel_limit);
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_values() {
        let file: RunFile = toml::from_str(
            r#"
            out = "runs/base"
            [fit-price]
            input = "a.csv"
            tag = "adverts"
            trim-lower = 50000.0
            no-trim = false
            contextual = ["m:mob.csv:main"]
            "#,
        )
        .unwrap();
        let flags = FitPriceOpts {
            tag: Some("deeds".into()),
            ..FitPriceOpts::default()
        };
        let merged = flags.merged(file.fit_price);
        assert_eq!(merged.input.as_deref(), Some(Path::new("a.csv")));
        assert_eq!(merged.tag.as_deref(), Some("deeds"));
        assert_eq!(merged.trim_lower, Some(50000.0));
        assert_eq!(merged.contextual, vec!["m:mob.csv:main".to_string()]);
        assert!(!merged.no_trim);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = toml::from_str::<RunFile>("[fit-price]\ninputt = \"a.csv\"\n");
        assert!(err.is_err());
    }

    #[test]
    fn flag_lists_replace_file_lists() {
        let file = FitPriceOpts {
            contextual: vec!["a:1.csv:main".into(), "b:2.csv:main".into()],
            ..FitPriceOpts::default()
        };
        let flags = FitPriceOpts {
            contextual: vec!["c:3.csv:by-quarter".into()],
            ..FitPriceOpts::default()
        };
        assert_eq!(flags.merged(file).contextual, vec!["c:3.csv:by-quarter".to_string()]);
    }

    #[test]
    fn require_names_the_flag() {
        let err = require(None::<u32>, "input").unwrap_err();
        assert!(err.to_string().contains("--input"));
    }
}
