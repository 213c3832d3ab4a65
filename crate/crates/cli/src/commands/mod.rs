pub mod correlate;
pub mod fit_count;
pub mod fit_price;
pub mod index;
pub mod quantity;
pub mod report;
pub mod segments;
pub mod simulate;
