//! Price trimming. Records outside the closed band [lower, upper] are
//! dropped before modelling; the defaults mirror the usual micro-data
//! cleaning band of 100k to 5M euros.

use super::types::ListingRecord;
use crate::error::{Error, Result};

pub const DEFAULT_LOWER_EUR: f64 = 100_000.0;
pub const DEFAULT_UPPER_EUR: f64 = 5_000_000.0;

/// Keeps records with `lower <= price <= upper` (bounds inclusive) and
/// reports how many were removed. Applying the same band twice removes
/// nothing the second time.
pub fn trim_prices(
    records: Vec<ListingRecord>,
    lower: f64,
    upper: f64,
) -> Result<(Vec<ListingRecord>, usize)> {
    if !(lower.is_finite() && upper.is_finite()) || lower < 0.0 {
        return Err(Error::Config(format!(
            "trim bounds must be finite and non-negative, got [{lower}, {upper}]"
        )));
    }
    if lower >= upper {
        return Err(Error::Config(format!(
            "trim lower bound {lower} must be below upper bound {upper}"
        )));
    }
    let before = records.len();
    let retained: Vec<ListingRecord> = records
        .into_iter()
        .filter(|r| r.price_eur >= lower && r.price_eur <= upper)
        .collect();
    let removed = before - retained.len();
    Ok((retained, removed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::types::{DatasetTag, DwellingType, LocationKey, State, UrbanClass};
    use chrono::NaiveDate;

    fn rec(id: &str, price: f64) -> ListingRecord {
        ListingRecord {
            id: id.into(),
            tag: DatasetTag::Deeds,
            price_eur: price,
            observed_on: NaiveDate::from_ymd_opt(2020, 5, 1).unwrap(),
            dwelling: DwellingType::House,
            location: LocationKey::new(State::Styria, "Graz", UrbanClass::Urban, 2).unwrap(),
            hedonics: None,
        }
    }

    #[test]
    fn bounds_are_inclusive() {
        let records = vec![
            rec("a", 99_999.99),
            rec("b", 100_000.0),
            rec("c", 5_000_000.0),
            rec("d", 5_000_000.01),
        ];
        let (kept, removed) =
            trim_prices(records, DEFAULT_LOWER_EUR, DEFAULT_UPPER_EUR).unwrap();
        assert_eq!(removed, 2);
        let ids: Vec<_> = kept.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, vec!["b", "c"]);
    }

    #[test]
    fn trimming_is_idempotent() {
        let records = vec![rec("a", 50_000.0), rec("b", 200_000.0), rec("c", 9_000_000.0)];
        let (once, removed1) =
            trim_prices(records, DEFAULT_LOWER_EUR, DEFAULT_UPPER_EUR).unwrap();
        assert_eq!(removed1, 2);
        let (twice, removed2) =
            trim_prices(once.clone(), DEFAULT_LOWER_EUR, DEFAULT_UPPER_EUR).unwrap();
        assert_eq!(removed2, 0);
        assert_eq!(once, twice);
    }

    #[test]
    fn inverted_or_silly_bounds_are_config_errors() {
        assert!(trim_prices(vec![], 10.0, 10.0).is_err());
        assert!(trim_prices(vec![], 100.0, 50.0).is_err());
        assert!(trim_prices(vec![], -1.0, 50.0).is_err());
        assert!(trim_prices(vec![], 0.0, f64::INFINITY).is_err());
    }
}
