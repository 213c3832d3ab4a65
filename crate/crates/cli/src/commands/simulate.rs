//! `dwellfit simulate`: seeded synthetic market generation.

use crate::settings::SimulateOpts;
use crate::stage::{Inputs, Stage};
use crate::util::resolved_config;
use dwellfit_core::data::DatasetTag;
use dwellfit_core::sim::{listings_to_csv_string, simulate_market, MarketConfig};
use dwellfit_core::Result;
use serde::Serialize;
use std::fmt::Write as _;
use std::path::Path;

#[derive(Serialize)]
#[serde(rename_all = "kebab-case")]
struct Resolved {
    #[serde(skip_serializing_if = "Option::is_none")]
    market: Option<String>,
    seed: u64,
}

pub fn run(opts: SimulateOpts, out: &Path) -> Result<()> {
    let mut inputs = Inputs::new();
    let mut config = match &opts.market {
        Some(path) => {
            inputs.add(path)?;
            MarketConfig::from_toml_file(path)?
        }
        None => MarketConfig::default(),
    };
    if let Some(seed) = opts.seed {
        config.seed = seed;
    }

    let resolved = Resolved {
        market: opts.market.as_ref().map(|p| p.display().to_string()),
        seed: config.seed,
    };
    let (config_text, config_digest) = resolved_config("simulate", out, &resolved)?;

    let market = simulate_market(&config)?;

    let mut stage = Stage::new(out)?;
    stage.write("adverts.csv", listings_to_csv_string(&market.adverts, DatasetTag::Adverts)?)?;
    stage.write(
        "brokered.csv",
        listings_to_csv_string(&market.brokered, DatasetTag::BrokeredAdverts)?,
    )?;
    stage.write("deeds.csv", listings_to_csv_string(&market.deeds, DatasetTag::Deeds)?)?;
    stage.write("ground_truth.toml", market.ground_truth.to_toml_string()?)?;
    stage.write("population.csv", population_csv(&config))?;
    if let Some(calendar) = config.shock_calendar()? {
        calendar.to_csv(&stage.path("calendar.csv"))?;
        stage.register("calendar.csv")?;
    }
    stage.write("resolved_config.toml", &config_text)?;

    eprintln!(
        "simulate: seed {} -> {} adverts, {} brokered, {} deeds (run {})",
        config.seed,
        market.adverts.len(),
        market.brokered.len(),
        market.deeds.len(),
        market.ground_truth.run_id
    );

    stage.promote("simulate", config_digest, inputs)
}

/// Constant per-state population figures in the `state,year,persons`
/// format the panel loader reads (`*` = every year).
fn population_csv(config: &MarketConfig) -> String {
    let mut out = String::from("state,year,persons\n");
    let mut states = config.states.clone();
    states.sort_by_key(|s| s.state.index());
    for s in &states {
        let _ = writeln!(out, "{},*,{}", s.state, s.population);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn population_csv_lists_every_state_once() {
        let config = MarketConfig::default();
        let text = population_csv(&config);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "state,year,persons");
        assert_eq!(lines.len(), 1 + config.states.len());
        assert!(lines.iter().any(|l| l.starts_with("Vienna,*,")));
    }
}
