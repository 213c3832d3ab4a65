//! Price and quantity indices derived from fitted models.
//!
//! Price indices come from time-dummy coefficients: the value at period t
//! is `exp(delta_t - delta_base)`, so the base period is exactly 1 and the
//! series is invariant to which period the model dropped. Quantity indices
//! are year-over-year count ratios. Segment indices re-run the price model
//! with segment-specific time dummies and report one series per segment,
//! each against its own base.

use crate::data::{ListingRecord, PanelCell};
use crate::design::{
    add_hedonics, check_full_rank, DesignBuilder, PriceDesign, PriceModelSpec, TimeAxisInfo,
    TimePoint,
};
use crate::error::{Error, Result};
use crate::fit::Coefficient;
use crate::hlm::{fit_hlm, HlmFit, HlmOptions};
use crate::scalar::Scalar;
use crate::time::Quarter;
use chrono::NaiveDate;
use nalgebra::DVector;
use std::collections::BTreeMap;
use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexKind {
    /// From time-dummy coefficients of a price model.
    PriceTimeDummy,
    /// Year-over-year count ratios.
    QuantityYoY,
    /// Per-segment price index against the segment's own base.
    SegmentRelative,
}

impl IndexKind {
    pub fn as_str(self) -> &'static str {
        match self {
            IndexKind::PriceTimeDummy => "price-time-dummy",
            IndexKind::QuantityYoY => "quantity-yoy",
            IndexKind::SegmentRelative => "segment-relative",
        }
    }
}

/// One period of an index series. A split label interrupted by a regime
/// owns several date spans.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexPoint<T: Scalar> {
    pub label: String,
    pub spans: Vec<(NaiveDate, NaiveDate)>,
    pub value: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexSeries<T: Scalar> {
    pub kind: IndexKind,
    /// Optional series name (e.g. the segment it describes).
    pub name: String,
    pub base_label: String,
    pub points: Vec<IndexPoint<T>>,
    /// Human-readable caveats (periods skipped for lack of a look-back
    /// quarter and the like).
    pub notes: Vec<String>,
}

impl<T: Scalar> IndexSeries<T> {
    pub fn value(&self, label: &str) -> Option<T> {
        self.points.iter().find(|p| p.label == label).map(|p| p.value)
    }

    /// Re-expresses the series against a different base period.
    pub fn rebase(&self, new_base: &str) -> Result<IndexSeries<T>> {
        let base_value = self.value(new_base).ok_or_else(|| {
            Error::Config(format!(
                "cannot rebase to '{new_base}': series has labels {}",
                self.labels().join(", ")
            ))
        })?;
        if base_value <= T::zero() {
            return Err(Error::Domain(format!(
                "cannot rebase to '{new_base}': value {} is not positive",
                base_value.f64()
            )));
        }
        let points = self
            .points
            .iter()
            .map(|p| IndexPoint {
                label: p.label.clone(),
                spans: p.spans.clone(),
                value: if p.label == new_base { T::one() } else { p.value / base_value },
            })
            .collect();
        Ok(IndexSeries {
            kind: self.kind,
            name: self.name.clone(),
            base_label: new_base.to_string(),
            points,
            notes: self.notes.clone(),
        })
    }

    pub fn labels(&self) -> Vec<String> {
        self.points.iter().map(|p| p.label.clone()).collect()
    }

    /// Serialises as `label,value,spans` CSV, spans as
    /// `start..end` pairs joined with `;` (ends exclusive).
    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# kind={} base={} name={}", self.kind.as_str(), self.base_label, self.name);
        for note in &self.notes {
            let _ = writeln!(out, "# note: {note}");
        }
        let _ = writeln!(out, "label,value,spans");
        for p in &self.points {
            let spans = p
                .spans
                .iter()
                .map(|(s, e)| format!("{s}..{e}"))
                .collect::<Vec<_>>()
                .join(";");
            let _ = writeln!(out, "{},{},{}", p.label, p.value.f64(), spans);
        }
        out
    }

    /// Combines the labels of one quarter of a split-axis series into a
    /// single quarter value: a duration-weighted geometric mean, the
    /// natural average for ratio-scale values. Returns `None` when the
    /// quarter has no points.
    pub fn quarter_geometric_mean(&self, quarter: Quarter) -> Option<T> {
        let prefix = format!("{quarter}:");
        let mut weight_sum = T::zero();
        let mut log_sum = T::zero();
        let mut seen = false;
        for p in &self.points {
            if !(p.label.starts_with(&prefix) || p.label == quarter.to_string()) {
                continue;
            }
            let days: i64 = p
                .spans
                .iter()
                .map(|(s, e)| (*e - *s).num_days())
                .sum();
            let w = T::of(days as f64);
            weight_sum += w;
            log_sum += w * p.value.ln();
            seen = true;
        }
        if !seen || weight_sum <= T::zero() {
            return None;
        }
        Some((log_sum / weight_sum).exp())
    }
}

/// Builds a price index from the time-dummy coefficients of a fit.
/// `base_label` defaults to the model's dropped reference period; naming a
/// period that is not on the axis is an error listing what is.
pub fn index_from_dummies<T: Scalar>(
    coefficients: &[Coefficient<T>],
    time: &TimeAxisInfo,
    base_label: Option<&str>,
    kind: IndexKind,
) -> Result<IndexSeries<T>> {
    if time.points.is_empty() {
        return Err(Error::Config("time axis has no periods".into()));
    }
    let reference = &time.points[0];
    let base = match base_label {
        None => reference.label.clone(),
        Some(b) => {
            if time.point(b).is_none() {
                return Err(Error::Config(format!(
                    "base period '{b}' is not on the time axis; available: {}",
                    time.points.iter().map(|p| p.label.as_str()).collect::<Vec<_>>().join(", ")
                )));
            }
            b.to_string()
        }
    };
    let delta = |p: &TimePoint| -> Result<T> {
        match p.column {
            None => Ok(T::zero()),
            Some(_) => {
                let name = format!("{}={}", crate::design::TIME_FACTOR, p.label);
                crate::fit::find_coefficient(coefficients, &name)
                    .map(|c| c.estimate)
                    .ok_or_else(|| {
                        Error::Config(format!("fit has no coefficient '{name}'"))
                    })
            }
        }
    };
    let delta_base = delta(time.point(&base).expect("validated"))?;
    let mut points = Vec::with_capacity(time.points.len());
    for p in &time.points {
        let value = if p.label == base { T::one() } else { (delta(p)? - delta_base).exp() };
        points.push(IndexPoint { label: p.label.clone(), spans: p.spans.clone(), value });
    }
    Ok(IndexSeries { kind, name: String::new(), base_label: base, points, notes: Vec::new() })
}

/// Aggregates panel cells to quarterly counts (cells are dated by the
/// Monday of their week).
pub fn quarterly_counts(cells: &[PanelCell]) -> BTreeMap<Quarter, u64> {
    let mut out: BTreeMap<Quarter, u64> = BTreeMap::new();
    for c in cells {
        *out.entry(Quarter::of(c.week.start())).or_insert(0) += c.count;
    }
    out
}

/// Year-over-year quantity index: each quarter's count divided by the
/// count four quarters earlier. Quarters in the first year of the range
/// have no look-back and are reported in the series notes instead of as
/// points; a zero look-back count is an error, not an infinite index.
pub fn yoy_quantity_index<T: Scalar>(counts: &BTreeMap<Quarter, u64>) -> Result<IndexSeries<T>> {
    if counts.is_empty() {
        return Err(Error::Data("no quarterly counts to index".into()));
    }
    let mut points = Vec::new();
    let mut notes = Vec::new();
    for (&q, &c) in counts {
        let back = q.year_earlier();
        match counts.get(&back) {
            None => notes.push(format!("{q}: no {back} count in range; skipped")),
            Some(0) => {
                return Err(Error::Domain(format!(
                    "quantity index undefined at {q}: count for {back} is zero"
                )))
            }
            Some(&b) => points.push(IndexPoint {
                label: q.to_string(),
                spans: vec![(q.start(), q.end_exclusive())],
                value: T::of(c as f64) / T::of(b as f64),
            }),
        }
    }
    if points.is_empty() {
        return Err(Error::Data(
            "count range shorter than one year: no quarter has a look-back".into(),
        ));
    }
    let base = points[0].label.clone();
    Ok(IndexSeries {
        kind: IndexKind::QuantityYoY,
        name: String::new(),
        base_label: base,
        points,
        notes,
    })
}

/// Splits prices into quantile segments. `boundaries` are cumulative
/// shares in (0, 1), strictly increasing; `k` boundaries make `k + 1`
/// segments. The cut for share q is the order statistic at position
/// ceil(q n) (1-based), and ties go to the lower segment, so identical
/// prices always land in the same segment.
pub fn price_quantile_segments(
    prices: &[f64],
    boundaries: &[f64],
) -> Result<(Vec<usize>, Vec<f64>)> {
    if prices.is_empty() {
        return Err(Error::Data("no prices to segment".into()));
    }
    if boundaries.is_empty() {
        return Err(Error::Config("need at least one quantile boundary".into()));
    }
    for w in boundaries.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::Config(format!(
                "quantile boundaries must be strictly increasing, got {} then {}",
                w[0], w[1]
            )));
        }
    }
    if boundaries[0] <= 0.0 || *boundaries.last().unwrap() >= 1.0 {
        return Err(Error::Config("quantile boundaries must lie strictly inside (0, 1)".into()));
    }
    if let Some(bad) = prices.iter().find(|p| !p.is_finite()) {
        return Err(Error::Data(format!("non-finite price {bad}")));
    }
    let n = prices.len();
    let mut sorted: Vec<f64> = prices.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let cuts: Vec<f64> = boundaries
        .iter()
        .map(|q| {
            let pos = (q * n as f64).ceil() as usize; // 1-based order statistic
            sorted[pos.clamp(1, n) - 1]
        })
        .collect();
    let segments = prices
        .iter()
        .map(|&p| cuts.iter().position(|&c| p <= c).unwrap_or(cuts.len()))
        .collect();
    Ok((segments, cuts))
}

/// One price index per segment from a joint hierarchical fit with
/// segment-specific quarterly time dummies. Within each segment the time
/// levels are the quarters that segment actually covers, and each series
/// is based at its segment's earliest quarter. Returns the series in
/// segment order plus the underlying fit.
pub fn segment_indices<T: Scalar>(
    records: &[ListingRecord],
    segment_of_row: &[usize],
    n_segments: usize,
    spec: &PriceModelSpec,
    options: &HlmOptions,
) -> Result<(Vec<IndexSeries<T>>, HlmFit<T>)> {
    if records.is_empty() {
        return Err(Error::Data("cannot build segment indices from zero records".into()));
    }
    if segment_of_row.len() != records.len() {
        return Err(Error::Design(format!(
            "{} segment assignments for {} records",
            segment_of_row.len(),
            records.len()
        )));
    }
    if let Some(&bad) = segment_of_row.iter().find(|&&s| s >= n_segments) {
        return Err(Error::Design(format!(
            "segment {bad} out of range for {n_segments} segments"
        )));
    }
    let n = records.len();
    let needs_profile = !spec.hedonics.is_empty();
    if needs_profile {
        if let Some(bad) = records.iter().find(|r| r.hedonics.is_none()) {
            return Err(Error::Config(format!(
                "record '{}' has no hedonic attributes; segment indices need a reduced term set",
                bad.id
            )));
        }
    }

    let mut b: DesignBuilder<T> = DesignBuilder::new(n);
    b.intercept();
    add_hedonics(&mut b, records, spec)?;

    // Segment main effects.
    let seg_levels: Vec<String> = (0..n_segments).map(|k| k.to_string()).collect();
    b.factor("segment", segment_of_row, &seg_levels, 0)?;

    // Per-segment quarterly dummies over the quarters each segment covers.
    let quarters: Vec<Quarter> =
        records.iter().map(|r| Quarter::of(r.observed_on)).collect();
    let mut seg_quarters: Vec<Vec<Quarter>> = vec![Vec::new(); n_segments];
    for (i, &k) in segment_of_row.iter().enumerate() {
        seg_quarters[k].push(quarters[i]);
    }
    let mut axes: Vec<Vec<Quarter>> = Vec::with_capacity(n_segments);
    for (k, qs) in seg_quarters.iter_mut().enumerate() {
        if qs.is_empty() {
            return Err(Error::Data(format!("segment {k} has no records")));
        }
        qs.sort();
        qs.dedup();
        axes.push(qs.clone());
    }
    let mut coef_name = vec![BTreeMap::new(); n_segments];
    for (k, axis) in axes.iter().enumerate() {
        for &q in axis.iter().skip(1) {
            let name = format!("time[{k}]={q}");
            let col: Vec<f64> = (0..n)
                .map(|i| {
                    if segment_of_row[i] == k && quarters[i] == q {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect();
            b.numeric(&name, &col)?;
            coef_name[k].insert(q, name);
        }
    }

    let y = DVector::from_iterator(n, records.iter().map(|r| T::of(r.log_price())));
    let (x, names, reference_levels) = b.into_parts();
    check_full_rank(&x, &names)?;
    let design = PriceDesign {
        y,
        x,
        names,
        reference_levels,
        grouping: crate::design::Grouping::from_records(records),
        time: None,
    };
    let fit = fit_hlm(&design, options)?;

    let mut series = Vec::with_capacity(n_segments);
    for (k, axis) in axes.iter().enumerate() {
        let mut points = Vec::with_capacity(axis.len());
        for (j, &q) in axis.iter().enumerate() {
            let value = if j == 0 {
                T::one()
            } else {
                let name = &coef_name[k][&q];
                let c = fit.coefficient(name).ok_or_else(|| {
                    Error::Config(format!("fit has no coefficient '{name}'"))
                })?;
                c.estimate.exp()
            };
            points.push(IndexPoint {
                label: q.to_string(),
                spans: vec![(q.start(), q.end_exclusive())],
                value,
            });
        }
        series.push(IndexSeries {
            kind: IndexKind::SegmentRelative,
            name: format!("segment-{k}"),
            base_label: axis[0].to_string(),
            points,
            notes: Vec::new(),
        });
    }
    Ok((series, fit))
}

/// Builds the quarterly or split price index straight from a fitted price
/// model, using the axis recorded on the fit.
pub fn price_index_from_fit<T: Scalar>(
    fit: &HlmFit<T>,
    base_label: Option<&str>,
) -> Result<IndexSeries<T>> {
    let time = fit.time.as_ref().ok_or_else(|| {
        Error::Config("fit has no time axis; was the model built with time dummies?".into())
    })?;
    index_from_dummies(&fit.coefficients, time, base_label, IndexKind::PriceTimeDummy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{
        DatasetTag, DwellingType, HedonicProfile, LocationKey, State, UrbanClass,
    };
    use crate::design::TimeAxisKind;
    use crate::time::WeekKey;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    fn axis(labels: &[(&str, Option<usize>)]) -> TimeAxisInfo {
        let mut points = Vec::new();
        for (i, (label, col)) in labels.iter().enumerate() {
            let start = d(2020, 1 + 3 * (i as u32 % 4), 1);
            points.push(TimePoint {
                label: label.to_string(),
                spans: vec![(start, start + chrono::Days::new(90))],
                column: *col,
            });
        }
        TimeAxisInfo { kind: TimeAxisKind::Quarterly, points }
    }

    fn coef(name: &str, est: f64) -> Coefficient<f64> {
        Coefficient { name: name.into(), estimate: est, se: 0.01 }
    }

    #[test]
    fn index_base_is_exactly_one_and_values_are_exp_deltas() {
        let time = axis(&[("2020Q1", None), ("2020Q2", Some(5)), ("2020Q3", Some(6))]);
        let coeffs = vec![coef("time=2020Q2", 0.05), coef("time=2020Q3", -0.02)];
        let s: IndexSeries<f64> =
            index_from_dummies(&coeffs, &time, None, IndexKind::PriceTimeDummy).unwrap();
        assert_eq!(s.base_label, "2020Q1");
        assert_eq!(s.value("2020Q1").unwrap(), 1.0);
        assert!((s.value("2020Q2").unwrap() - 0.05f64.exp()).abs() < 1e-15);
        assert!((s.value("2020Q3").unwrap() - (-0.02f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn rebasing_moves_the_unit_and_round_trips() {
        let time = axis(&[("2020Q1", None), ("2020Q2", Some(5)), ("2020Q3", Some(6))]);
        let coeffs = vec![coef("time=2020Q2", 0.05), coef("time=2020Q3", -0.02)];
        let s: IndexSeries<f64> =
            index_from_dummies(&coeffs, &time, None, IndexKind::PriceTimeDummy).unwrap();
        let r = s.rebase("2020Q3").unwrap();
        assert_eq!(r.value("2020Q3").unwrap(), 1.0);
        assert!((r.value("2020Q1").unwrap() - 0.02f64.exp()).abs() < 1e-15);
        let back = r.rebase("2020Q1").unwrap();
        for p in &s.points {
            assert!((back.value(&p.label).unwrap() - p.value).abs() < 1e-12, "{}", p.label);
        }
    }

    #[test]
    fn unknown_base_lists_available_labels() {
        let time = axis(&[("2020Q1", None), ("2020Q2", Some(5))]);
        let coeffs = vec![coef("time=2020Q2", 0.05)];
        let err = index_from_dummies::<f64>(&coeffs, &time, Some("2021Q1"), IndexKind::PriceTimeDummy)
            .unwrap_err();
        match err {
            Error::Config(msg) => {
                assert!(msg.contains("2020Q1") && msg.contains("2020Q2"), "{msg}")
            }
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn direct_base_choice_equals_rebase() {
        let time = axis(&[("2020Q1", None), ("2020Q2", Some(5)), ("2020Q3", Some(6))]);
        let coeffs = vec![coef("time=2020Q2", 0.05), coef("time=2020Q3", -0.02)];
        let s: IndexSeries<f64> =
            index_from_dummies(&coeffs, &time, None, IndexKind::PriceTimeDummy).unwrap();
        let direct: IndexSeries<f64> =
            index_from_dummies(&coeffs, &time, Some("2020Q2"), IndexKind::PriceTimeDummy)
                .unwrap();
        let via_rebase = s.rebase("2020Q2").unwrap();
        for p in &direct.points {
            assert!(
                (via_rebase.value(&p.label).unwrap() - p.value).abs() < 1e-14,
                "{}",
                p.label
            );
        }
    }

    // ---- year-over-year quantity index ------------------------------------

    fn q(y: i32, qq: u8) -> Quarter {
        Quarter::parse(&format!("{y}Q{qq}")).unwrap()
    }

    #[test]
    fn yoy_index_is_the_count_ratio_and_skips_the_first_year() {
        let counts: BTreeMap<Quarter, u64> = [
            (q(2019, 1), 100),
            (q(2019, 2), 110),
            (q(2019, 3), 120),
            (q(2019, 4), 130),
            (q(2020, 1), 90),
            (q(2020, 2), 121),
        ]
        .into();
        let s: IndexSeries<f64> = yoy_quantity_index(&counts).unwrap();
        assert_eq!(s.points.len(), 2);
        assert!((s.value("2020Q1").unwrap() - 0.9).abs() < 1e-15);
        assert!((s.value("2020Q2").unwrap() - 1.1).abs() < 1e-15);
        assert_eq!(s.notes.len(), 4, "{:?}", s.notes);
        assert!(s.notes[0].contains("2019Q1"));
    }

    #[test]
    fn yoy_zero_lookback_is_a_domain_error() {
        let counts: BTreeMap<Quarter, u64> =
            [(q(2019, 1), 0), (q(2020, 1), 50)].into();
        let err = yoy_quantity_index::<f64>(&counts).unwrap_err();
        assert!(matches!(err, Error::Domain(_)), "{err:?}");
    }

    #[test]
    fn yoy_too_short_range_is_an_error() {
        let counts: BTreeMap<Quarter, u64> =
            [(q(2019, 1), 10), (q(2019, 2), 11)].into();
        let err = yoy_quantity_index::<f64>(&counts).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn quarterly_counts_bucket_weeks_by_their_monday() {
        let mk = |iso_year: i32, week: u32, count: u64| PanelCell {
            week: WeekKey { iso_year, week },
            dwelling: DwellingType::House,
            state: State::Tyrol,
            urban_class: UrbanClass::Rural,
            count,
            exposure: 1.0,
        };
        // 2020-W14 starts 2020-03-30: a week straddling the quarter edge
        // counts in Q1 because its Monday is in March.
        let counts = quarterly_counts(&[mk(2020, 13, 5), mk(2020, 14, 7), mk(2020, 15, 11)]);
        assert_eq!(counts[&q(2020, 1)], 12);
        assert_eq!(counts[&q(2020, 2)], 11);
    }

    // ---- price quantile segments ------------------------------------------

    #[test]
    fn ten_distinct_prices_split_2_6_2() {
        let prices: Vec<f64> = (1..=10).map(|i| 100_000.0 * i as f64).collect();
        let (seg, cuts) = price_quantile_segments(&prices, &[0.2, 0.8]).unwrap();
        let count = |k: usize| seg.iter().filter(|&&s| s == k).count();
        assert_eq!((count(0), count(1), count(2)), (2, 6, 2));
        assert_eq!(cuts, vec![200_000.0, 800_000.0]);
    }

    #[test]
    fn identical_prices_all_land_in_the_bottom_segment() {
        let prices = vec![250_000.0; 9];
        let (seg, _) = price_quantile_segments(&prices, &[0.2, 0.8]).unwrap();
        assert!(seg.iter().all(|&s| s == 0));
    }

    #[test]
    fn ties_at_the_cut_go_to_the_lower_segment() {
        // Five copies of the cut value; the cut itself is 200 and every
        // 200 must land below it.
        let prices = vec![100.0, 200.0, 200.0, 200.0, 200.0, 200.0, 300.0, 400.0, 500.0, 600.0];
        let (seg, cuts) = price_quantile_segments(&prices, &[0.5]).unwrap();
        assert_eq!(cuts, vec![200.0]);
        for (p, s) in prices.iter().zip(&seg) {
            if *p <= 200.0 {
                assert_eq!(*s, 0, "price {p}");
            } else {
                assert_eq!(*s, 1, "price {p}");
            }
        }
    }

    #[test]
    fn bad_boundaries_are_rejected() {
        let prices = vec![1.0, 2.0, 3.0];
        assert!(price_quantile_segments(&prices, &[]).is_err());
        assert!(price_quantile_segments(&prices, &[0.8, 0.2]).is_err());
        assert!(price_quantile_segments(&prices, &[0.0]).is_err());
        assert!(price_quantile_segments(&prices, &[1.0]).is_err());
    }

    // ---- segment indices ---------------------------------------------------

    fn profile() -> HedonicProfile {
        HedonicProfile {
            log_area: 4.6,
            rooms: crate::data::Rooms::Three,
            age_class: crate::data::AgeClass::Y11to20,
            renovated: false,
            open_space: crate::data::OpenSpace::None,
            basement: false,
            parking: false,
            air_conditioning: false,
            step_free: false,
            wellness: false,
            condition: crate::data::Condition::Unclassified,
            log_plot_price: None,
        }
    }

    #[test]
    fn segment_indices_recover_distinct_growth_paths() {
        // Three segments with per-quarter log growth 0, +0.02, -0.01 over
        // six quarters; group effects and noise on top.
        let growth = [0.0, 0.02, -0.01];
        let n_per = 30;
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let noise = Normal::new(0.0, 0.03).unwrap();
        let states = [State::Tyrol, State::Salzburg];
        let mut records = Vec::new();
        let mut segments = Vec::new();
        for (k, g) in growth.iter().enumerate() {
            for t in 0..6usize {
                let quarter_start = q(2020, 1 + (t % 4) as u8);
                let date = if t < 4 {
                    quarter_start.start() + chrono::Days::new(10)
                } else {
                    q(2021, 1 + (t - 4) as u8).start() + chrono::Days::new(10)
                };
                for j in 0..n_per {
                    let state = states[j % 2];
                    let district = format!("{state}-d{}", j % 4);
                    let base_log = 12.0 + 0.3 * k as f64 + 0.05 * ((j % 4) as f64 - 1.5);
                    let lp = base_log + g * t as f64 + noise.sample(&mut rng);
                    records.push(ListingRecord {
                        id: format!("r{k}-{t}-{j}"),
                        tag: DatasetTag::Adverts,
                        price_eur: lp.exp(),
                        observed_on: date,
                        dwelling: DwellingType::Apartment,
                        location: LocationKey::new(state, district, UrbanClass::Urban, 1)
                            .unwrap(),
                        hedonics: Some(profile()),
                    });
                    segments.push(k);
                }
            }
        }
        let spec = PriceModelSpec {
            hedonics: Vec::new(),
            time: TimeAxisKind::Quarterly,
            contextual: Vec::new(),
            references: Default::default(),
        };
        let (series, fit) = segment_indices::<f64>(
            &records,
            &segments,
            3,
            &spec,
            &HlmOptions::default(),
        )
        .unwrap();
        assert!(fit.convergence.converged);
        assert_eq!(series.len(), 3);
        for (k, s) in series.iter().enumerate() {
            assert_eq!(s.points.len(), 6);
            assert_eq!(s.points[0].value, 1.0);
            // Fitted per-quarter growth from the last point: value =
            // exp(5 g), so g_hat = ln(value)/5.
            let g_hat = s.points[5].value.ln() / 5.0;
            assert!(
                (g_hat - growth[k]).abs() < 0.005,
                "segment {k}: g_hat = {g_hat}, want {}",
                growth[k]
            );
        }
    }

    #[test]
    fn quarter_geometric_mean_weights_by_days() {
        let s = IndexSeries::<f64> {
            kind: IndexKind::PriceTimeDummy,
            name: String::new(),
            base_label: "2021Q2:none".into(),
            points: vec![
                IndexPoint {
                    label: "2021Q2:none".into(),
                    spans: vec![
                        (d(2021, 4, 1), d(2021, 5, 1)),
                        (d(2021, 6, 1), d(2021, 7, 1)),
                    ],
                    value: 1.0,
                },
                IndexPoint {
                    label: "2021Q2:lockdown-x".into(),
                    spans: vec![(d(2021, 5, 1), d(2021, 6, 1))],
                    value: 0.9,
                },
            ],
            notes: Vec::new(),
        };
        let m = s.quarter_geometric_mean(q(2021, 2)).unwrap();
        // 60 days at 1.0, 31 days at 0.9.
        let expect = ((60.0 * 1.0f64.ln() + 31.0 * 0.9f64.ln()) / 91.0).exp();
        assert!((m - expect).abs() < 1e-12, "{m} vs {expect}");
        assert!(s.quarter_geometric_mean(q(2022, 1)).is_none());
    }
}
