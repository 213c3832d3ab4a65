//! Seeded synthetic-market generator.
//!
//! Produces the three staged datasets (adverts, brokered adverts, deeds)
//! under a fully known data-generating process — nested Gaussian log
//! prices, negative-binomial weekly counts with a seasonal cycle, staged
//! sampling with realistic lags — plus injectable market shocks, a
//! ground-truth sidecar, and a checker that scores fitted models against
//! the truth. The same seed always yields byte-identical output; states
//! generate on independent random streams so the result does not depend on
//! iteration order.

pub mod config;
pub mod generate;
pub mod nested;
pub mod oracle;
pub mod output;

pub use config::{
    default_states, CountProcess, MarketConfig, PriceProcess, ShockKind, ShockSpec, StateConfig,
    DAYS_PER_QUARTER,
};
pub use generate::{simulate_market, SimulatedMarket};
pub use nested::{nested_gaussian, NestedGaussianConfig};
pub use oracle::{oracle_check, GroundTruth, OracleOptions, OracleReport, OracleRow};
pub use output::{listings_to_csv_string, write_listings};
