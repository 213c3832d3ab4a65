//! Market generation. One seeded generator per state (independent streams
//! of the same keyed generator), so output is identical however states are
//! iterated, and the per-listing draw schedule is fixed — runs differing
//! only in shock settings consume identical random sequences and stay
//! pairable record-for-record.

use super::config::{MarketConfig, ShockKind, StateConfig};
use super::oracle::GroundTruth;
use crate::data::{
    AgeClass, Condition, DatasetTag, DwellingType, HedonicProfile, ListingRecord, LocationKey,
    OpenSpace, Rooms, State, UrbanClass,
};
use crate::error::{Error, Result};
use crate::nb::CyclicalTrend;
use crate::time::{Quarter, WeekKey};
use chrono::{Days, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson};

/// Everything one simulation run produces. Record vectors are ordered by
/// state, then week, then cell, then draw order — a pure function of the
/// configuration.
#[derive(Debug, Clone)]
pub struct SimulatedMarket {
    pub adverts: Vec<ListingRecord>,
    pub brokered: Vec<ListingRecord>,
    pub deeds: Vec<ListingRecord>,
    pub ground_truth: GroundTruth,
}

/// Group intercepts actually used by a run (after optional
/// standardization), in config-state order.
#[derive(Debug, Clone)]
pub(crate) struct GroupEffects {
    pub state: Vec<f64>,
    /// `district[state_position][district_number]`.
    pub district: Vec<Vec<f64>>,
}

impl GroupEffects {
    /// Population variance (divisor `n`) of the realized effects, the
    /// quantity maximum likelihood estimates.
    pub fn realized_variances(&self) -> (f64, f64) {
        let flat: Vec<f64> = self.district.iter().flatten().copied().collect();
        (pop_variance(&self.state), pop_variance(&flat))
    }
}

fn pop_variance(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
}

/// Rescales raw standard-normal draws to sample mean zero and population
/// variance exactly `sigma2`. Degenerate inputs (one value, no spread)
/// collapse to zero, which is the only mean-zero choice.
pub(crate) fn standardize(raw: &mut [f64], sigma2: f64) {
    let n = raw.len();
    if n == 0 {
        return;
    }
    let mean = raw.iter().sum::<f64>() / n as f64;
    let var = raw.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
    if n == 1 || var == 0.0 {
        raw.iter_mut().for_each(|x| *x = 0.0);
        return;
    }
    let scale = (sigma2 / var).sqrt();
    raw.iter_mut().for_each(|x| *x = (*x - mean) * scale);
}

/// District variant: centers each state's draws (so no state mean carries
/// district contamination — realized covariance between levels is exactly
/// zero) and rescales the pooled population variance to `sigma2`.
pub(crate) fn standardize_districts(per_state: &mut [Vec<f64>], sigma2: f64) {
    let mut count = 0usize;
    for v in per_state.iter_mut() {
        if v.is_empty() {
            continue;
        }
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter_mut().for_each(|x| *x -= m);
        count += v.len();
    }
    if count == 0 {
        return;
    }
    // Per-state means are zero now, so the pooled mean is too.
    let var = per_state.iter().flatten().map(|x| x * x).sum::<f64>() / count as f64;
    if var == 0.0 {
        return;
    }
    let scale = (sigma2 / var).sqrt();
    per_state.iter_mut().flatten().for_each(|x| *x *= scale);
}

/// Stream 0 of the keyed generator: group intercepts, states first, then
/// every district in state order. Listing streams start at 1.
pub(crate) fn draw_group_effects(config: &MarketConfig) -> GroupEffects {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(0);
    let sd_state = config.price.sigma2_state.sqrt();
    let sd_district = config.price.sigma2_district.sqrt();

    let mut state_raw: Vec<f64> = (0..config.states.len()).map(|_| std_normal(&mut rng)).collect();
    let mut district_raw: Vec<Vec<f64>> = config
        .states
        .iter()
        .map(|sc| (0..sc.districts).map(|_| std_normal(&mut rng)).collect())
        .collect();

    if config.standardize_group_effects {
        standardize(&mut state_raw, config.price.sigma2_state);
        standardize_districts(&mut district_raw, config.price.sigma2_district);
        GroupEffects { state: state_raw, district: district_raw }
    } else {
        GroupEffects {
            state: state_raw.into_iter().map(|z| z * sd_state).collect(),
            district: district_raw
                .into_iter()
                .map(|v| v.into_iter().map(|z| z * sd_district).collect())
                .collect(),
        }
    }
}

fn std_normal<R: Rng>(rng: &mut R) -> f64 {
    rand_distr::StandardNormal.sample(rng)
}

/// Negative binomial via its gamma–Poisson mixture: mean `mu`, dispersion
/// `a`; variance `mu + mu²/a`.
fn nb_draw<R: Rng>(rng: &mut R, mu: f64, a: f64) -> u64 {
    if mu <= 0.0 {
        return 0;
    }
    let g = Gamma::new(a, mu / a).expect("validated parameters").sample(rng);
    poisson_draw(rng, g)
}

fn poisson_draw<R: Rng>(rng: &mut R, lambda: f64) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    let draw: f64 = Poisson::new(lambda).expect("positive finite rate").sample(rng);
    draw as u64
}

/// Gamma(shape 2) day count with the given mean, rounded to whole days.
fn lag_days<R: Rng>(rng: &mut R, mean: f64) -> u64 {
    let d = Gamma::new(2.0, mean / 2.0).expect("positive mean").sample(rng);
    d.round().max(0.0) as u64
}

/// Districts of one state with their urban classes; classes cycle through
/// the four levels in order.
pub(crate) struct StatePlan {
    pub config: StateConfig,
    pub district_names: Vec<String>,
    /// District numbers per class, for uniform district choice within a
    /// (state, class) cell.
    pub districts_of_class: Vec<Vec<usize>>,
}

pub(crate) fn plan_state(sc: &StateConfig) -> StatePlan {
    let n = sc.districts as usize;
    let mut district_names = Vec::with_capacity(n);
    let mut districts_of_class: Vec<Vec<usize>> = vec![Vec::new(); UrbanClass::ALL.len()];
    for d in 0..n {
        district_names.push(format!("{}-D{:02}", sc.state, d + 1));
        districts_of_class[d % UrbanClass::ALL.len()].push(d);
    }
    StatePlan { config: sc.clone(), district_names, districts_of_class }
}

/// True count-model linear predictor for one cell, exposure included.
fn count_eta(
    config: &MarketConfig,
    cycle: &CyclicalTrend<f64>,
    state: State,
    population: f64,
    dwelling: DwellingType,
    class: UrbanClass,
    week: WeekKey,
) -> f64 {
    let terms = &config.counts.terms;
    let mut eta = *terms.get("(Intercept)").unwrap_or(&0.0);
    if let Some(v) = terms.get(&format!("dwelling={dwelling}")) {
        eta += v;
    }
    if let Some(v) = terms.get(&format!("state={state}")) {
        eta += v;
    }
    if let Some(v) = terms.get(&format!("urban_class={class}")) {
        eta += v;
    }
    // Cells are dated by their week's Monday, exactly as the count design
    // does it, so quarter terms line up with the fitted dummies.
    if let Some(v) = terms.get(&format!("time={}", Quarter::of(week.start()))) {
        eta += v;
    }
    eta + cycle.eval(week.cycle_time()) + population.ln()
}

/// One listing's full attribute block. Every field is drawn for every
/// listing — fields that do not apply are discarded — so the number of
/// draws per listing never depends on the listing itself.
struct DrawnListing {
    date: NaiveDate,
    district: usize,
    hedonics: HedonicProfile,
    epsilon: f64,
    u_supply: f64,
    u_broker: f64,
    time_on_market: u64,
    u_demand: f64,
    deed_lag: u64,
}

fn draw_listing<R: Rng>(
    rng: &mut R,
    config: &MarketConfig,
    dwelling: DwellingType,
    week: WeekKey,
    district_pool: &[usize],
) -> DrawnListing {
    let lo = week.start().max(config.coverage_start);
    let hi = (week.start() + Days::new(7)).min(config.coverage_end);
    let span = (hi - lo).num_days().max(1) as u64;
    let date = lo + Days::new(rng.random_range(0..span));

    let district = district_pool[rng.random_range(0..district_pool.len())];

    let (area_mean, area_sd) = match dwelling {
        DwellingType::House => (115f64.ln(), 0.35),
        DwellingType::Apartment => (72f64.ln(), 0.30),
    };
    let log_area = area_mean + area_sd * std_normal(rng);

    let rooms_weights: &[f64] = match dwelling {
        DwellingType::House => &[0.05, 0.20, 0.35, 0.40],
        DwellingType::Apartment => &[0.25, 0.40, 0.25, 0.10],
    };
    let rooms = Rooms::ALL[categorical(rng, rooms_weights)];
    let age_class =
        AgeClass::ALL[categorical(rng, &[0.12, 0.16, 0.12, 0.12, 0.16, 0.14, 0.12, 0.06])];
    let renovated = rng.random::<f64>() < 0.22;
    let open_weights: &[f64] = match dwelling {
        DwellingType::House => &[0.15, 0.25, 0.60],
        DwellingType::Apartment => &[0.45, 0.35, 0.20],
    };
    let open_space = OpenSpace::ALL[categorical(rng, open_weights)];
    let basement = rng.random::<f64>() < 0.45;
    let parking = rng.random::<f64>() < 0.50;
    let air_conditioning = rng.random::<f64>() < 0.06;
    let step_free = rng.random::<f64>() < 0.30;
    let wellness = rng.random::<f64>() < 0.07;
    let condition = Condition::ALL[categorical(rng, &[0.18, 0.22, 0.08, 0.52])];
    // Drawn unconditionally to keep the schedule fixed; meaningful only
    // for houses.
    let plot_draw = 90_000f64.ln() + 0.5 * std_normal(rng);
    let log_plot_price =
        if dwelling == DwellingType::House { Some(plot_draw) } else { None };

    let epsilon = config.price.sigma2_resid.sqrt() * std_normal(rng);
    let u_supply = rng.random::<f64>();
    let u_broker = rng.random::<f64>();
    let time_on_market = lag_days(rng, config.time_on_market_mean_days);
    let u_demand = rng.random::<f64>();
    let deed_lag = lag_days(rng, config.deed_lag_mean_days);

    DrawnListing {
        date,
        district,
        hedonics: HedonicProfile {
            log_area,
            rooms,
            age_class,
            renovated,
            open_space,
            basement,
            parking,
            air_conditioning,
            step_free,
            wellness,
            condition,
            log_plot_price,
        },
        epsilon,
        u_supply,
        u_broker,
        time_on_market,
        u_demand,
        deed_lag,
    }
}

fn categorical<R: Rng>(rng: &mut R, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        u -= w;
        if u < 0.0 {
            return i;
        }
    }
    weights.len() - 1
}

/// True hedonic contribution of a profile under the configured fixed
/// effects, using the same column names the design builder emits.
fn hedonic_value(config: &MarketConfig, dwelling: DwellingType, h: &HedonicProfile) -> f64 {
    let fixed = &config.price.fixed;
    let get = |name: &str| fixed.get(name).copied().unwrap_or(0.0);
    let mut v = get("(Intercept)");
    v += get("log_area") * h.log_area;
    v += get(&format!("dwelling={dwelling}"));
    v += get(&format!("rooms={}", h.rooms.as_str()));
    v += get(&format!("age_class={}", h.age_class.as_str()));
    if h.renovated {
        v += get("renovated");
    }
    v += get(&format!("open_space={}", h.open_space.as_str()));
    if h.basement {
        v += get("basement");
    }
    if h.parking {
        v += get("parking");
    }
    if h.air_conditioning {
        v += get("air_conditioning");
    }
    if h.step_free {
        v += get("step_free");
    }
    if h.wellness {
        v += get("wellness");
    }
    v += get(&format!("condition={}", h.condition.as_str()));
    if let Some(lpp) = h.log_plot_price {
        v += get("log_plot_price") * lpp;
    }
    v
}

fn location_value(config: &MarketConfig, class: UrbanClass, accessibility: u8) -> f64 {
    let fixed = &config.price.fixed;
    let get = |name: &str| fixed.get(name).copied().unwrap_or(0.0);
    get(&format!("urban_class={class}")) + get(&format!("accessibility={accessibility}"))
}

/// Combined probability that at least one matching thinning shock removes
/// an event at `date`: `1 − Π(1 − pᵢ)` over active matching shocks.
fn thinning_probability(
    config: &MarketConfig,
    kind: ShockKind,
    date: NaiveDate,
    state: State,
    dwelling: DwellingType,
) -> f64 {
    let mut keep = 1.0;
    for s in &config.shocks {
        if s.kind == kind && s.applies(date, state, dwelling) {
            keep *= 1.0 - s.magnitude;
        }
    }
    1.0 - keep
}

/// Accessibility is a fixed district attribute: anchored at a class-typical
/// level, with successive districts of the same class alternating one level
/// worse. The within-class variation keeps the accessibility dummies
/// linearly independent of the urban-class dummies.
fn accessibility_of(class: UrbanClass, district: usize) -> u8 {
    let base = match class {
        UrbanClass::Urban => 1,
        UrbanClass::LargelyUrban => 2,
        UrbanClass::Regional => 3,
        UrbanClass::Rural => 4,
    };
    // Districts are assigned to classes round-robin, so `district / 4` is
    // this district's position within its class.
    (base + ((district / UrbanClass::ALL.len()) % 2) as u8).min(5)
}

struct StateOutput {
    adverts: Vec<ListingRecord>,
    brokered: Vec<ListingRecord>,
    deeds: Vec<ListingRecord>,
    n_extra: u64,
}

fn generate_state(
    config: &MarketConfig,
    plan: &StatePlan,
    state_effect: f64,
    district_effects: &[f64],
) -> StateOutput {
    let sc = &plan.config;
    let state = sc.state;
    let cycle = config.counts.cycle();
    let a = config.counts.dispersion;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1 + state.index() as u64);

    let mut out = StateOutput {
        adverts: Vec::new(),
        brokered: Vec::new(),
        deeds: Vec::new(),
        n_extra: 0,
    };
    let mut advert_no: u64 = 0;
    let mut extra_no: u64 = 0;
    let s_idx = state.index();

    for week in WeekKey::range(config.coverage_start, config.coverage_end) {
        for dwelling in DwellingType::ALL {
            for (class_idx, class) in UrbanClass::ALL.iter().enumerate() {
                let pool = &plan.districts_of_class[class_idx];
                if pool.is_empty() {
                    continue;
                }
                let mu =
                    count_eta(config, &cycle, state, sc.population, dwelling, *class, week).exp();
                let n_listings = nb_draw(&mut rng, mu, a);

                for _ in 0..n_listings {
                    let drawn = draw_listing(&mut rng, config, dwelling, week, pool);
                    advert_no += 1;

                    let p_supply = thinning_probability(
                        config,
                        ShockKind::SupplyThinning,
                        drawn.date,
                        state,
                        dwelling,
                    );
                    if drawn.u_supply < p_supply {
                        continue; // never advertised; draws already consumed
                    }

                    let accessibility = accessibility_of(*class, drawn.district);
                    let log_price = hedonic_value(config, dwelling, &drawn.hedonics)
                        + location_value(config, *class, accessibility)
                        + config.price_time_effect(drawn.date, state, dwelling)
                        + state_effect
                        + district_effects[drawn.district]
                        + drawn.epsilon;
                    let location = LocationKey {
                        state,
                        district: plan.district_names[drawn.district].clone(),
                        urban_class: *class,
                        accessibility,
                    };
                    let advert = ListingRecord {
                        id: format!("A-{s_idx}-{advert_no:07}"),
                        tag: DatasetTag::Adverts,
                        price_eur: log_price.exp(),
                        observed_on: drawn.date,
                        dwelling,
                        location,
                        hedonics: Some(drawn.hedonics),
                    };

                    if drawn.u_broker < config.brokered_share {
                        let agreement = drawn.date + Days::new(drawn.time_on_market);
                        let in_coverage = agreement < config.coverage_end;
                        let p_demand = thinning_probability(
                            config,
                            ShockKind::DemandThinning,
                            agreement,
                            state,
                            dwelling,
                        );
                        if in_coverage && drawn.u_demand >= p_demand {
                            let mut b = advert.clone();
                            b.id = format!("B-{s_idx}-{advert_no:07}");
                            b.tag = DatasetTag::BrokeredAdverts;
                            b.observed_on = agreement;
                            let mut d = b.clone();
                            d.id = format!("D-{s_idx}-{advert_no:07}");
                            d.tag = DatasetTag::Deeds;
                            d.observed_on = agreement + Days::new(drawn.deed_lag);
                            d.hedonics = None;
                            out.brokered.push(b);
                            out.deeds.push(d);
                        }
                    }
                    out.adverts.push(advert);
                }

                // Non-advertised transactions: deeds beyond the brokered
                // flow, so registered counts strictly exceed brokered ones
                // on average. Dated by agreement directly.
                let extra_mean = config.deed_extra_share * config.brokered_share * mu;
                let n_extras = poisson_draw(&mut rng, extra_mean);
                for _ in 0..n_extras {
                    let drawn = draw_listing(&mut rng, config, dwelling, week, pool);
                    extra_no += 1;
                    let agreement = drawn.date;
                    let p_demand = thinning_probability(
                        config,
                        ShockKind::DemandThinning,
                        agreement,
                        state,
                        dwelling,
                    );
                    if drawn.u_demand < p_demand {
                        continue;
                    }
                    let accessibility = accessibility_of(*class, drawn.district);
                    let log_price = hedonic_value(config, dwelling, &drawn.hedonics)
                        + location_value(config, *class, accessibility)
                        + config.price_time_effect(agreement, state, dwelling)
                        + state_effect
                        + district_effects[drawn.district]
                        + drawn.epsilon;
                    out.deeds.push(ListingRecord {
                        id: format!("X-{s_idx}-{extra_no:07}"),
                        tag: DatasetTag::Deeds,
                        price_eur: log_price.exp(),
                        observed_on: agreement + Days::new(drawn.deed_lag),
                        dwelling,
                        location: LocationKey {
                            state,
                            district: plan.district_names[drawn.district].clone(),
                            urban_class: *class,
                            accessibility,
                        },
                        hedonics: None,
                    });
                    out.n_extra += 1;
                }
            }
        }
    }
    out
}

/// Generates the three staged datasets and the ground-truth record for one
/// configuration. The configuration is validated first; the same
/// configuration always produces the same market.
pub fn simulate_market(config: &MarketConfig) -> Result<SimulatedMarket> {
    let mut config = config.clone();
    config.validate()?;
    let config = &config;

    let effects = draw_group_effects(config);
    let plans: Vec<StatePlan> = config.states.iter().map(plan_state).collect();

    let mut adverts = Vec::new();
    let mut brokered = Vec::new();
    let mut deeds = Vec::new();
    let mut n_extra = 0u64;
    for (pos, plan) in plans.iter().enumerate() {
        let mut part = generate_state(config, plan, effects.state[pos], &effects.district[pos]);
        adverts.append(&mut part.adverts);
        brokered.append(&mut part.brokered);
        deeds.append(&mut part.deeds);
        n_extra += part.n_extra;
    }

    if adverts.is_empty() {
        return Err(Error::Data(
            "configuration produced zero adverts; raise the count intercept or extend coverage"
                .into(),
        ));
    }

    let ground_truth = GroundTruth::new(
        config,
        &effects,
        adverts.len() as u64,
        brokered.len() as u64,
        deeds.len() as u64,
        n_extra,
    );

    Ok(SimulatedMarket { adverts, brokered, deeds, ground_truth })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn small_config() -> MarketConfig {
        let mut cfg = MarketConfig::default();
        cfg.coverage_start = NaiveDate::from_ymd_opt(2020, 1, 6).unwrap();
        cfg.coverage_end = NaiveDate::from_ymd_opt(2020, 7, 6).unwrap();
        cfg.states.truncate(3);
        cfg
    }

    #[test]
    fn same_seed_reproduces_the_market() {
        let cfg = small_config();
        let a = simulate_market(&cfg).unwrap();
        let b = simulate_market(&cfg).unwrap();
        assert_eq!(a.adverts, b.adverts);
        assert_eq!(a.brokered, b.brokered);
        assert_eq!(a.deeds, b.deeds);
        assert_eq!(a.ground_truth.run_id, b.ground_truth.run_id);
    }

    #[test]
    fn different_seeds_differ() {
        let cfg = small_config();
        let mut cfg2 = cfg.clone();
        cfg2.seed = 2;
        let a = simulate_market(&cfg).unwrap();
        let b = simulate_market(&cfg2).unwrap();
        assert_ne!(a.adverts, b.adverts);
        assert_ne!(a.ground_truth.run_id, b.ground_truth.run_id);
    }

    #[test]
    fn state_order_in_config_does_not_matter() {
        let cfg = small_config();
        let mut reversed = cfg.clone();
        reversed.states.reverse();
        let a = simulate_market(&cfg).unwrap();
        let b = simulate_market(&reversed).unwrap();
        assert_eq!(a.adverts, b.adverts);
        assert_eq!(a.deeds, b.deeds);
    }

    #[test]
    fn stage_nesting_and_date_ordering_hold() {
        let m = simulate_market(&small_config()).unwrap();
        assert!(!m.brokered.is_empty());
        assert!(m.deeds.len() > m.brokered.len(), "extras make deeds exceed brokered");

        let adverts_by_suffix: BTreeMap<&str, &ListingRecord> =
            m.adverts.iter().map(|r| (r.id.trim_start_matches('A'), r)).collect();
        let deeds_by_suffix: BTreeMap<&str, &ListingRecord> = m
            .deeds
            .iter()
            .filter(|r| r.id.starts_with('D'))
            .map(|r| (r.id.trim_start_matches('D'), r))
            .collect();
        for b in &m.brokered {
            let suffix = b.id.trim_start_matches('B');
            let advert = adverts_by_suffix.get(suffix).expect("brokered ⊆ adverts");
            let deed = deeds_by_suffix.get(suffix).expect("brokered ⊆ deeds");
            assert!(advert.observed_on <= b.observed_on);
            assert!(b.observed_on <= deed.observed_on);
            assert_eq!(advert.price_eur, b.price_eur);
            assert_eq!(b.price_eur, deed.price_eur);
            assert!(deed.hedonics.is_none());
            assert!(b.hedonics.is_some());
        }
        // Every advert and brokered record is dated inside coverage.
        let cfg = small_config();
        for r in m.adverts.iter().chain(&m.brokered) {
            assert!(r.observed_on >= cfg.coverage_start && r.observed_on < cfg.coverage_end);
        }
    }

    #[test]
    fn demand_thinning_removes_the_configured_share() {
        let mut base = small_config();
        base.seed = 11;
        base.deed_extra_share = 0.0;
        let mut thinned = base.clone();
        thinned.shocks.push(super::super::config::ShockSpec {
            kind: ShockKind::DemandThinning,
            name: "thin".into(),
            start: NaiveDate::from_ymd_opt(2020, 3, 2).unwrap(),
            end: NaiveDate::from_ymd_opt(2020, 6, 1).unwrap(),
            magnitude: 0.3,
            states: vec![],
            dwelling: None,
        });
        let a = simulate_market(&base).unwrap();
        let b = simulate_market(&thinned).unwrap();
        // Adverts are untouched by demand thinning.
        assert_eq!(a.adverts, b.adverts);

        let window = |r: &ListingRecord| {
            r.observed_on >= NaiveDate::from_ymd_opt(2020, 3, 2).unwrap()
                && r.observed_on < NaiveDate::from_ymd_opt(2020, 6, 1).unwrap()
        };
        let base_in: Vec<_> = a.brokered.iter().filter(|r| window(r)).collect();
        let thin_in = b.brokered.iter().filter(|r| window(r)).count();
        let ratio = thin_in as f64 / base_in.len() as f64;
        // Coupled coins make the survivors a Binomial(n, 0.7) subsample.
        let n = base_in.len() as f64;
        let sd = (0.7 * 0.3 / n).sqrt();
        assert!(
            (ratio - 0.7).abs() < 4.0 * sd,
            "ratio {ratio} from {n} window records (sd {sd})"
        );
        // Outside the window nothing changes.
        let base_out: Vec<_> = a.brokered.iter().filter(|r| !window(r)).collect();
        let thin_out = b.brokered.iter().filter(|r| !window(r)).count();
        assert_eq!(base_out.len(), thin_out);
    }

    #[test]
    fn supply_thinning_removes_adverts() {
        let mut base = small_config();
        base.seed = 12;
        let mut thinned = base.clone();
        thinned.shocks.push(super::super::config::ShockSpec {
            kind: ShockKind::SupplyThinning,
            name: "thin".into(),
            start: NaiveDate::from_ymd_opt(2020, 3, 2).unwrap(),
            end: NaiveDate::from_ymd_opt(2020, 6, 1).unwrap(),
            magnitude: 0.4,
            states: vec![],
            dwelling: None,
        });
        let a = simulate_market(&base).unwrap();
        let b = simulate_market(&thinned).unwrap();
        let window = |r: &ListingRecord| {
            r.observed_on >= NaiveDate::from_ymd_opt(2020, 3, 2).unwrap()
                && r.observed_on < NaiveDate::from_ymd_opt(2020, 6, 1).unwrap()
        };
        let base_in = a.adverts.iter().filter(|r| window(r)).count() as f64;
        let thin_in = b.adverts.iter().filter(|r| window(r)).count() as f64;
        let ratio = thin_in / base_in;
        let sd = (0.6 * 0.4 / base_in).sqrt();
        assert!((ratio - 0.6).abs() < 4.0 * sd, "ratio {ratio}");
        // Thinned adverts are a strict subset of the baseline ones.
        let ids: std::collections::BTreeSet<&str> =
            a.adverts.iter().map(|r| r.id.as_str()).collect();
        assert!(b.adverts.iter().all(|r| ids.contains(r.id.as_str())));
    }

    #[test]
    fn immediate_shift_moves_only_window_prices() {
        let mut base = small_config();
        base.seed = 13;
        let mut shifted = base.clone();
        shifted.shocks.push(super::super::config::ShockSpec {
            kind: ShockKind::ImmediatePriceShift,
            name: "dip".into(),
            start: NaiveDate::from_ymd_opt(2020, 3, 2).unwrap(),
            end: NaiveDate::from_ymd_opt(2020, 6, 1).unwrap(),
            magnitude: -0.05,
            states: vec![],
            dwelling: None,
        });
        let a = simulate_market(&base).unwrap();
        let b = simulate_market(&shifted).unwrap();
        assert_eq!(a.adverts.len(), b.adverts.len());
        for (ra, rb) in a.adverts.iter().zip(&b.adverts) {
            assert_eq!(ra.id, rb.id);
            let diff = rb.log_price() - ra.log_price();
            let in_window = ra.observed_on >= NaiveDate::from_ymd_opt(2020, 3, 2).unwrap()
                && ra.observed_on < NaiveDate::from_ymd_opt(2020, 6, 1).unwrap();
            if in_window {
                assert!((diff + 0.05).abs() < 1e-12, "in-window diff {diff}");
            } else {
                assert!(diff.abs() < 1e-12, "out-of-window diff {diff}");
            }
        }
    }

    #[test]
    fn standardized_effects_hit_the_targets_exactly() {
        let mut cfg = small_config();
        cfg.standardize_group_effects = true;
        let effects = draw_group_effects(&cfg);
        let (vs, vd) = effects.realized_variances();
        assert!((vs - cfg.price.sigma2_state).abs() < 1e-12, "state {vs}");
        assert!((vd - cfg.price.sigma2_district).abs() < 1e-12, "district {vd}");
        let mean_s: f64 = effects.state.iter().sum::<f64>() / effects.state.len() as f64;
        assert!(mean_s.abs() < 1e-12);
        // Each state's districts are centered, so state means carry no
        // district contamination.
        for per_state in &effects.district {
            let m: f64 = per_state.iter().sum::<f64>() / per_state.len() as f64;
            assert!(m.abs() < 1e-12, "district mean {m}");
        }
    }

    #[test]
    fn weekly_counts_have_nb_scale_overdispersion() {
        // With a = 4 and mean μ per cell, var/mean ≈ 1 + μ/a; check the
        // pooled Vienna-urban-house cell series is clearly overdispersed.
        let mut cfg = MarketConfig::default();
        cfg.seed = 21;
        cfg.states = vec![StateConfig {
            state: State::Vienna,
            districts: 4,
            population: 1_900_000.0,
        }];
        cfg.counts.cycle_amplitude = 0.0; // stationary mean for the check
        let m = simulate_market(&cfg).unwrap();
        let mut counts: BTreeMap<WeekKey, f64> = BTreeMap::new();
        for r in &m.adverts {
            if r.dwelling == DwellingType::House
                && r.location.urban_class == UrbanClass::Urban
            {
                *counts.entry(WeekKey::of(r.observed_on)).or_insert(0.0) += 1.0;
            }
        }
        let v: Vec<f64> = counts.values().copied().collect();
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        let expected_ratio = 1.0 + mean / cfg.counts.dispersion;
        let ratio = var / mean;
        assert!(
            ratio > 1.0 + 0.3 * (expected_ratio - 1.0),
            "variance/mean {ratio} vs expected {expected_ratio} (mean {mean})"
        );
    }
}
