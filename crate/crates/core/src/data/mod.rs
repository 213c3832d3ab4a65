//! Staged market micro-data: domain types, delimited-text ingestion with
//! per-row rejection reporting, price trimming, and aggregation of listings
//! into the weekly count panel.

mod ingest;
mod panel;
mod trim;
mod types;

pub use ingest::{load_listings, load_listings_str, write_rejections, ColumnMap, LoadOutcome, Rejection};
pub use panel::{
    read_cells, total_count, weekly_cell_counts, write_cells, PanelOptions, Population,
    CELL_HEADER,
};
pub use trim::{trim_prices, DEFAULT_LOWER_EUR, DEFAULT_UPPER_EUR};
pub use types::{
    AgeClass, Condition, DatasetTag, DwellingType, HedonicProfile, ListingRecord, LocationKey,
    OpenSpace, PanelCell, Rooms, State, UrbanClass,
};
