//! Negative-Binomial count model with log link and exposure offset.
//!
//! The response is a weekly listing count per cell, the offset is
//! log(population), so the linear predictor models a per-person rate. The
//! NB2 parametrisation is used throughout: `Var(y) = mu + mu^2 / a`, so a
//! larger dispersion parameter `a` means closer to Poisson. Estimation
//! alternates IRLS steps for the regression coefficients with Newton steps
//! for `ln a`, which is the standard alternating scheme for this model.

use crate::design::{CountDesign, CYCLE_COS, CYCLE_SIN};
use crate::error::{Error, Result};
use crate::fit::{bic, find_coefficient, Coefficient, ConvergenceReport};
use crate::scalar::Scalar;
use crate::special::{digamma, ln_gamma};
use nalgebra::{DMatrix, DVector};
use std::collections::BTreeMap;

/// Log of the NB2 probability mass at count `y` with mean `mu > 0` and
/// dispersion `a > 0`.
pub fn nb_log_pmf<T: Scalar>(y: u64, mu: T, a: T) -> T {
    let yt = T::of(y as f64);
    // ln Gamma(y+a) - ln Gamma(a) - ln Gamma(y+1)
    //   - a ln(1 + mu/a) + y (ln mu - ln(a + mu))
    // The ln_1p form keeps the `a` term accurate when a >> mu.
    ln_gamma(yt + a) - ln_gamma(a) - ln_gamma(yt + T::one()) - a * (mu / a).ln_1p()
        + yt * (mu.ln() - (a + mu).ln())
}

/// A fitted annual cycle `b_cos cos(2 pi t / T) + b_sin sin(2 pi t / T)`
/// on the week-number clock `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct CyclicalTrend<T: Scalar> {
    pub beta_cos: T,
    pub beta_sin: T,
    /// Cycle length in the units of `t` (weeks per year).
    pub period: T,
}

impl<T: Scalar> CyclicalTrend<T> {
    pub fn eval(&self, t: T) -> T {
        let w = T::two_pi() * t / self.period;
        self.beta_cos * w.cos() + self.beta_sin * w.sin()
    }

    /// Peak-to-centre height: the cycle equals
    /// `amplitude * cos(2 pi (t - peak_time) / period)`.
    pub fn amplitude(&self) -> T {
        (self.beta_cos * self.beta_cos + self.beta_sin * self.beta_sin).sqrt()
    }

    /// Phase in radians, in [0, 2 pi).
    pub fn phase(&self) -> T {
        let phi = self.beta_sin.atan2(self.beta_cos);
        if phi < T::zero() {
            phi + T::two_pi()
        } else {
            phi
        }
    }

    /// Time of the cycle maximum, in [0, period).
    pub fn peak_time(&self) -> T {
        self.period * self.phase() / T::two_pi()
    }

    /// Time of the cycle minimum, in [0, period).
    pub fn trough_time(&self) -> T {
        let t = self.peak_time() + self.period / T::of(2.0);
        if t >= self.period {
            t - self.period
        } else {
            t
        }
    }
}

/// Controls for the alternating NB fit. Convergence is declared when one
/// outer round (coefficients, then dispersion) changes the log-likelihood
/// by less than `tol_loglik * (1 + |loglik|)`.
#[derive(Debug, Clone)]
pub struct NbOptions {
    pub max_outer: usize,
    pub max_irls: usize,
    pub max_dispersion_steps: usize,
    pub tol_loglik: f64,
    /// Above this the fit is flagged as effectively Poisson.
    pub dispersion_cap: f64,
}

impl Default for NbOptions {
    fn default() -> Self {
        NbOptions {
            max_outer: 200,
            max_irls: 100,
            max_dispersion_steps: 50,
            tol_loglik: 1e-10,
            dispersion_cap: 1e8,
        }
    }
}

/// A fitted count model.
#[derive(Debug, Clone)]
pub struct NbFit<T: Scalar> {
    pub coefficients: Vec<Coefficient<T>>,
    /// NB2 dispersion `a`; larger is closer to Poisson.
    pub dispersion: T,
    /// True when the dispersion hit the cap (counts carry no detectable
    /// overdispersion).
    pub dispersion_capped: bool,
    pub loglik: f64,
    /// BIC with `k = p + 1` free parameters: the regression coefficients
    /// plus the dispersion (counted even when capped, for comparability).
    pub bic: f64,
    pub n_obs: usize,
    pub convergence: ConvergenceReport,
    pub time: Option<crate::design::TimeAxisInfo>,
    pub reference_levels: Vec<(String, String)>,
    pub metadata: BTreeMap<String, String>,
}

impl<T: Scalar> NbFit<T> {
    pub fn coefficient(&self, name: &str) -> Option<&Coefficient<T>> {
        find_coefficient(&self.coefficients, name)
    }
}

/// Multiplicative effect on the expected count of a one-unit move in a
/// regressor: `exp(coefficient)`.
pub fn incidence_rate_ratio<T: Scalar>(coefficient: T) -> T {
    coefficient.exp()
}

/// Fits the NB model on a prepared design.
pub fn fit_nb_glm<T: Scalar>(design: &CountDesign<T>, options: &NbOptions) -> Result<NbFit<T>> {
    let n = design.y.len();
    let p = design.x.ncols();
    if design.x.nrows() != n || design.offset.len() != n {
        return Err(Error::Design(format!(
            "design dimensions disagree: {n} counts, {} rows, {} offsets",
            design.x.nrows(),
            design.offset.len()
        )));
    }
    if n <= p {
        return Err(Error::Design(format!(
            "{n} observations cannot identify {p} coefficients plus a dispersion"
        )));
    }
    if design.y.iter().all(|&y| y == 0) {
        return Err(Error::Data(
            "all counts are zero; the count model cannot be identified".into(),
        ));
    }

    let x = &design.x;
    let offset = &design.offset;
    let y: DVector<T> = DVector::from_iterator(n, design.y.iter().map(|&v| T::of(v as f64)));
    let cap = T::of(options.dispersion_cap);
    let floor = T::of(1e-6);

    // Start from the classic GLM initialiser: regress log(y + 0.5) - offset
    // on X with unit weights.
    let z0 = DVector::from_fn(n, |i, _| (y[i] + T::of(0.5)).ln() - offset[i]);
    let ones = DVector::from_element(n, T::one());
    let (xtwx0, xtwz0) = weighted_normal_eq(x, &ones, &z0);
    let mut beta = xtwx0
        .cholesky()
        .ok_or_else(|| {
            Error::Design("normal equations are not positive definite at the start".into())
        })?
        .solve(&xtwz0);

    // Poisson warm-up for the mean, then a method-of-moments dispersion
    // start; non-positive moment estimates mean no overdispersion signal.
    let mut a = cap;
    for _ in 0..options.max_irls.min(25) {
        let (new_beta, _) = irls_step(x, offset, &y, &beta, a)?;
        let delta = (&new_beta - &beta).norm();
        beta = new_beta;
        if delta.f64() < 1e-10 {
            break;
        }
    }
    {
        let mu = mean_vector(x, offset, &beta);
        let mut num = T::zero();
        let mut den = T::zero();
        for i in 0..n {
            num += mu[i] * mu[i];
            den += (y[i] - mu[i]) * (y[i] - mu[i]) - mu[i];
        }
        if den > T::zero() {
            a = (num / den).clamp(floor, cap);
        }
    }

    let mut loglik = loglik_at(x, offset, design.y.as_slice(), &beta, a);
    let mut outer = 0;
    let mut converged = false;
    // Convergence needs a full outer round that leaves the log-likelihood
    // still, so at least two rounds always run.
    while outer < options.max_outer {
        outer += 1;
        let ll_round_start = loglik;
        // Coefficient rounds at the current dispersion.
        for _ in 0..options.max_irls {
            let (new_beta, _) = irls_step(x, offset, &y, &beta, a)?;
            let new_ll = loglik_at(x, offset, design.y.as_slice(), &new_beta, a);
            let improved = new_ll.f64().is_finite()
                && new_ll.f64() >= loglik.f64() - 1e-12 * (1.0 + loglik.f64().abs());
            if improved {
                let delta = (new_ll - loglik).f64().abs();
                beta = new_beta;
                loglik = new_ll;
                if delta <= options.tol_loglik * (1.0 + loglik.f64().abs()) {
                    break;
                }
            } else {
                // Step halving towards the previous iterate.
                let mut t = T::of(0.5);
                let mut accepted = false;
                for _ in 0..30 {
                    let cand = &beta + (&new_beta - &beta) * t;
                    let cand_ll = loglik_at(x, offset, design.y.as_slice(), &cand, a);
                    if cand_ll.f64().is_finite() && cand_ll > loglik {
                        beta = cand;
                        loglik = cand_ll;
                        accepted = true;
                        break;
                    }
                    t *= T::of(0.5);
                }
                if !accepted {
                    break;
                }
            }
        }
        // Dispersion rounds at the current coefficients.
        let mu = mean_vector(x, offset, &beta);
        for _ in 0..options.max_dispersion_steps {
            let g_theta = dispersion_score_theta(design.y.as_slice(), &mu, a);
            if g_theta.f64().abs() < 1e-9 * (n as f64) {
                break;
            }
            if a >= cap && g_theta > T::zero() {
                break; // pinned at the cap, score still pushing up
            }
            if a <= floor && g_theta < T::zero() {
                break;
            }
            let h = T::of(1e-4);
            let theta = a.ln();
            let g_plus = dispersion_score_theta(design.y.as_slice(), &mu, (theta + h).exp());
            let g_minus = dispersion_score_theta(design.y.as_slice(), &mu, (theta - h).exp());
            let hess = (g_plus - g_minus) / (h + h);
            let mut step = if hess < T::zero() { -g_theta / hess } else { g_theta.signum() * T::of(0.5) };
            step = step.clamp(T::of(-2.0), T::of(2.0));
            let mut accepted = false;
            for _ in 0..30 {
                let cand = (theta + step).exp().clamp(floor, cap);
                let cand_ll = loglik_at(x, offset, design.y.as_slice(), &beta, cand);
                if cand_ll.f64().is_finite()
                    && cand_ll.f64() >= loglik.f64() - 1e-12 * (1.0 + loglik.f64().abs())
                {
                    a = cand;
                    loglik = cand_ll;
                    accepted = true;
                    break;
                }
                step *= T::of(0.5);
            }
            if !accepted {
                break;
            }
        }
        if outer > 1
            && (loglik - ll_round_start).f64().abs()
                <= options.tol_loglik * (1.0 + loglik.f64().abs())
        {
            converged = true;
            break;
        }
    }

    let mu = mean_vector(x, offset, &beta);
    let score = score_vector(x, &y, &mu, a);
    let g_theta = dispersion_score_theta(design.y.as_slice(), &mu, a);
    // The dispersion score flattens out near the boundaries, so Newton can
    // stall a whisker short of them; treat the last percent as pinned.
    let capped = a >= cap * T::of(0.99);
    let at_floor = a <= floor * T::of(1.01);
    let mut score_norm = score.norm().f64();
    if !(capped || at_floor) {
        score_norm = (score_norm * score_norm + g_theta.f64() * g_theta.f64()).sqrt();
    }
    if !converged {
        return Err(Error::NoConvergence {
            iterations: outer,
            detail: format!(
                "count model: log-likelihood still moving after {outer} outer rounds \
                 (score norm {score_norm:.3e})"
            ),
        });
    }

    // Standard errors from the expected information at the optimum,
    // conditional on the fitted dispersion.
    let w = DVector::from_fn(mu.len(), |i, _| mu[i] * a / (mu[i] + a));
    let (xtwx, _) = weighted_normal_eq(x, &w, &DVector::zeros(n));
    let chol = xtwx.cholesky().ok_or_else(|| {
        Error::Design("information matrix is not positive definite at the optimum".into())
    })?;
    let cov = chol.inverse();

    let coefficients: Vec<Coefficient<T>> = design
        .names
        .iter()
        .enumerate()
        .map(|(j, name)| Coefficient {
            name: name.clone(),
            estimate: beta[j],
            se: cov[(j, j)].sqrt(),
        })
        .collect();

    let mut boundary = Vec::new();
    if capped {
        boundary.push(format!(
            "dispersion at cap {:.1e}: counts are effectively Poisson",
            options.dispersion_cap
        ));
    }
    if at_floor {
        boundary.push("dispersion at floor 1e-6: extreme overdispersion".into());
    }

    let k = p + 1;
    let ll = loglik.f64();
    Ok(NbFit {
        coefficients,
        dispersion: a,
        dispersion_capped: capped,
        loglik: ll,
        bic: bic(ll, k, n),
        n_obs: n,
        convergence: ConvergenceReport {
            converged,
            iterations: outer,
            score_norm,
            boundary,
            detail: format!("alternating IRLS/Newton, {outer} outer rounds"),
        },
        time: design.time.clone(),
        reference_levels: design.reference_levels.clone(),
        metadata: design.metadata.clone(),
    })
}

/// Pulls the fitted seasonal cycle out of a fit that estimated cos/sin
/// columns.
pub fn extract_cycle<T: Scalar>(fit: &NbFit<T>, period: T) -> Result<CyclicalTrend<T>> {
    let c = fit.coefficient(CYCLE_COS).ok_or_else(|| {
        Error::Config(format!("fit has no '{CYCLE_COS}' term; was the cycle estimated?"))
    })?;
    let s = fit.coefficient(CYCLE_SIN).ok_or_else(|| {
        Error::Config(format!("fit has no '{CYCLE_SIN}' term; was the cycle estimated?"))
    })?;
    Ok(CyclicalTrend { beta_cos: c.estimate, beta_sin: s.estimate, period })
}

/// Evaluates the model log-likelihood at arbitrary coefficients (in the
/// design's column order) and dispersion — the objective the fit
/// maximises, exposed so external checks can probe the surface around a
/// reported optimum.
pub fn nb_loglik<T: Scalar>(
    design: &CountDesign<T>,
    coefficients: &[T],
    dispersion: T,
) -> Result<T> {
    if coefficients.len() != design.x.ncols() {
        return Err(Error::Design(format!(
            "{} coefficients for a design with {} columns",
            coefficients.len(),
            design.x.ncols()
        )));
    }
    if dispersion <= T::zero() {
        return Err(Error::Domain("dispersion must be positive".into()));
    }
    let beta = DVector::from_column_slice(coefficients);
    Ok(loglik_at(&design.x, &design.offset, &design.y, &beta, dispersion))
}

fn mean_vector<T: Scalar>(x: &DMatrix<T>, offset: &DVector<T>, beta: &DVector<T>) -> DVector<T> {
    let mut eta = x * beta;
    eta += offset;
    // Clamp the linear predictor so a wild intermediate step cannot
    // overflow exp(); step halving then recovers.
    DVector::from_fn(eta.len(), |i, _| eta[i].clamp(T::of(-300.0), T::of(300.0)).exp())
}

fn loglik_at<T: Scalar>(
    x: &DMatrix<T>,
    offset: &DVector<T>,
    counts: &[u64],
    beta: &DVector<T>,
    a: T,
) -> T {
    let mu = mean_vector(x, offset, beta);
    let mut ll = T::zero();
    for (i, &yi) in counts.iter().enumerate() {
        ll += nb_log_pmf(yi, mu[i], a);
    }
    ll
}

/// One IRLS step for the coefficients at fixed dispersion; returns the new
/// coefficient vector and the weights used.
fn irls_step<T: Scalar>(
    x: &DMatrix<T>,
    offset: &DVector<T>,
    y: &DVector<T>,
    beta: &DVector<T>,
    a: T,
) -> Result<(DVector<T>, DVector<T>)> {
    let n = y.len();
    let mut eta = x * beta;
    eta += offset;
    let mu = DVector::from_fn(n, |i, _| eta[i].clamp(T::of(-300.0), T::of(300.0)).exp());
    let w = DVector::from_fn(n, |i, _| mu[i] * a / (mu[i] + a));
    let z = DVector::from_fn(n, |i, _| (eta[i] - offset[i]) + (y[i] - mu[i]) / mu[i]);
    let (xtwx, xtwz) = weighted_normal_eq(x, &w, &z);
    let new_beta = xtwx
        .cholesky()
        .ok_or_else(|| {
            Error::Design(
                "weighted normal equations are not positive definite; \
                 the design may be near-collinear"
                    .into(),
            )
        })?
        .solve(&xtwz);
    Ok((new_beta, w))
}

/// Score for the coefficients: `X' (a (y - mu) / (mu + a))`.
fn score_vector<T: Scalar>(
    x: &DMatrix<T>,
    y: &DVector<T>,
    mu: &DVector<T>,
    a: T,
) -> DVector<T> {
    let r = DVector::from_fn(y.len(), |i, _| a * (y[i] - mu[i]) / (mu[i] + a));
    x.transpose() * r
}

/// d loglik / d ln(a), using the analytic digamma form of d loglik / d a.
fn dispersion_score_theta<T: Scalar>(counts: &[u64], mu: &DVector<T>, a: T) -> T {
    let mut g = T::zero();
    for (i, &yi) in counts.iter().enumerate() {
        let yt = T::of(yi as f64);
        g += digamma(a + yt) - digamma(a) - (mu[i] / a).ln_1p() + T::one()
            - (a + yt) / (mu[i] + a);
    }
    a * g
}

/// Accumulates `X' diag(w) X` and `X' diag(w) z` column pair by column
/// pair, which stays cache-friendly in column-major storage.
fn weighted_normal_eq<T: Scalar>(
    x: &DMatrix<T>,
    w: &DVector<T>,
    z: &DVector<T>,
) -> (DMatrix<T>, DVector<T>) {
    let n = x.nrows();
    let p = x.ncols();
    let mut xtwx = DMatrix::zeros(p, p);
    let mut xtwz = DVector::zeros(p);
    for j in 0..p {
        let cj = x.column(j);
        let mut sz = T::zero();
        for i in 0..n {
            sz += cj[i] * w[i] * z[i];
        }
        xtwz[j] = sz;
        for k in j..p {
            let ck = x.column(k);
            let mut s = T::zero();
            for i in 0..n {
                s += cj[i] * w[i] * ck[i];
            }
            xtwx[(j, k)] = s;
            xtwx[(k, j)] = s;
        }
    }
    (xtwx, xtwz)
}

/// Fits the count model with an estimated cycle, then returns the fit and
/// the frozen trend for later models. The spec must request cycle
/// estimation.
pub fn fit_cycle_then_freeze<T: Scalar>(
    cells: &[crate::data::PanelCell],
    spec: &crate::design::CountModelSpec<T>,
    calendar: Option<&crate::regime::RegimeCalendar>,
    contextual: &BTreeMap<String, Vec<Option<f64>>>,
    options: &NbOptions,
) -> Result<(NbFit<T>, CyclicalTrend<T>)> {
    let period = match &spec.cycle {
        crate::design::CycleSpec::Estimate { period } => T::of(*period),
        _ => {
            return Err(Error::Config(
                "fit_cycle_then_freeze needs a spec that estimates the cycle".into(),
            ))
        }
    };
    let design = crate::design::build_count_design(cells, spec, calendar, contextual)?;
    let fit = fit_nb_glm(&design, options)?;
    let trend = extract_cycle(&fit, period)?;
    Ok((fit, trend))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{DwellingType, PanelCell, State, UrbanClass};
    use crate::design::{build_count_design, CountModelSpec, CycleSpec, TimeAxisKind};
    use crate::time::WeekKey;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Gamma, Poisson};

    // ---- log-pmf oracles -------------------------------------------------

    #[test]
    fn log_pmf_matches_geometric_closed_form() {
        // With a = 1 the NB is geometric: p(y) = (a/(a+mu)) (mu/(a+mu))^y.
        let lp0: f64 = nb_log_pmf(0, 2.0, 1.0);
        assert!((lp0 - (1.0f64 / 3.0).ln()).abs() < 1e-12, "lp0 = {lp0}");
        let lp3: f64 = nb_log_pmf(3, 2.0, 1.0);
        let expect = (1.0f64 / 3.0).ln() + 3.0 * (2.0f64 / 3.0).ln();
        assert!((lp3 - expect).abs() < 1e-12, "lp3 = {lp3}");
    }

    #[test]
    fn log_pmf_sums_to_one() {
        let total: f64 = (0..500).map(|y| nb_log_pmf(y, 2.0f64, 1.5).exp()).sum();
        assert!((total - 1.0).abs() < 1e-9, "total = {total}");
    }

    #[test]
    fn log_pmf_approaches_poisson_at_large_dispersion() {
        // Poisson(3) at y = 2: -3 + 2 ln 3 - ln 2.
        let poisson = -3.0 + 2.0 * 3.0f64.ln() - 2.0f64.ln();
        let lp: f64 = nb_log_pmf(2, 3.0, 1e8);
        assert!((lp - poisson).abs() < 1e-6, "lp = {lp}, poisson = {poisson}");
    }

    // ---- cycle geometry --------------------------------------------------

    #[test]
    fn cycle_extrema_match_grid_search() {
        let trend = CyclicalTrend { beta_cos: -0.085f64, beta_sin: 0.055, period: 52.0 };
        let peak = trend.peak_time();
        let trough = trend.trough_time();
        // Late May and late November on the week clock.
        assert!((21.2..21.3).contains(&peak), "peak = {peak}");
        assert!((47.2..47.3).contains(&trough), "trough = {trough}");
        assert!((trend.amplitude() - 0.010_25f64.sqrt()).abs() < 1e-12);
        // Cross-check against a fine grid.
        let mut best_t = 0.0;
        let mut best_v = f64::NEG_INFINITY;
        let mut t = 0.0;
        while t < 52.0 {
            let v = trend.eval(t);
            if v > best_v {
                best_v = v;
                best_t = t;
            }
            t += 0.001;
        }
        assert!((best_t - peak).abs() < 0.01, "grid peak {best_t} vs formula {peak}");
    }

    #[test]
    fn cycle_amplitude_phase_identity() {
        let trend = CyclicalTrend { beta_cos: 0.3f64, beta_sin: -0.7, period: 52.0 };
        let a = trend.amplitude();
        let peak = trend.peak_time();
        for i in 0..520 {
            let t = i as f64 * 0.1;
            let direct = trend.eval(t);
            let via_phase = a * (std::f64::consts::TAU * (t - peak) / 52.0).cos();
            assert!((direct - via_phase).abs() < 1e-12, "t = {t}");
        }
    }

    // ---- fitting ----------------------------------------------------------

    fn cell(week: WeekKey, dwelling: DwellingType, urban: UrbanClass, count: u64, exposure: f64) -> PanelCell {
        PanelCell { week, dwelling, state: State::Tyrol, urban_class: urban, count, exposure }
    }

    fn plain_spec() -> CountModelSpec<f64> {
        CountModelSpec {
            time: TimeAxisKind::None,
            cycle: CycleSpec::Off,
            contextual: Vec::new(),
            references: Default::default(),
        }
    }

    fn week(iso_year: i32, w: u32) -> WeekKey {
        WeekKey { iso_year, week: w }
    }

    #[test]
    fn intercept_only_fit_recovers_log_mean_count() {
        let counts = [1u64, 2, 3, 6, 2, 4];
        let cells: Vec<PanelCell> = counts
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                cell(week(2020, 1 + i as u32), DwellingType::House, UrbanClass::Rural, c, 1.0)
            })
            .collect();
        let design = build_count_design(&cells, &plain_spec(), None, &BTreeMap::new()).unwrap();
        assert_eq!(design.names, vec!["(Intercept)"], "single-level factors are absorbed");
        let fit = fit_nb_glm(&design, &NbOptions::default()).unwrap();
        let mean = counts.iter().sum::<u64>() as f64 / counts.len() as f64;
        let b0 = fit.coefficient("(Intercept)").unwrap().estimate;
        assert!((b0 - mean.ln()).abs() < 1e-8, "b0 = {b0}, ln mean = {}", mean.ln());
        assert!(fit.convergence.converged);
    }

    #[test]
    fn loglik_evaluator_agrees_with_fit_and_peaks_at_optimum() {
        let counts = [1u64, 2, 3, 6, 2, 4];
        let cells: Vec<PanelCell> = counts
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                cell(week(2020, 1 + i as u32), DwellingType::House, UrbanClass::Rural, c, 1.0)
            })
            .collect();
        let design = build_count_design(&cells, &plain_spec(), None, &BTreeMap::new()).unwrap();
        let fit = fit_nb_glm(&design, &NbOptions::default()).unwrap();
        let beta: Vec<f64> = fit.coefficients.iter().map(|c| c.estimate).collect();
        let at_fit = nb_loglik(&design, &beta, fit.dispersion).unwrap();
        assert!((at_fit - fit.loglik).abs() < 1e-10, "{at_fit} vs {}", fit.loglik);
        // Moving any parameter away from the optimum must not raise it.
        let nudged = nb_loglik(&design, &[beta[0] + 0.05], fit.dispersion).unwrap();
        assert!(nudged < at_fit, "nudged {nudged} >= optimum {at_fit}");
        assert!(nb_loglik(&design, &[], fit.dispersion).is_err(), "wrong length accepted");
        assert!(nb_loglik(&design, &beta, 0.0).is_err(), "zero dispersion accepted");
    }

    #[test]
    fn doubling_exposure_shifts_intercept_by_ln_two() {
        let counts = [5u64, 9, 7, 11, 6, 8, 10, 7];
        let make = |exposure: f64| -> f64 {
            let cells: Vec<PanelCell> = counts
                .iter()
                .enumerate()
                .map(|(i, &c)| {
                    cell(week(2020, 1 + i as u32), DwellingType::House, UrbanClass::Rural, c, exposure)
                })
                .collect();
            let design =
                build_count_design(&cells, &plain_spec(), None, &BTreeMap::new()).unwrap();
            let fit = fit_nb_glm(&design, &NbOptions::default()).unwrap();
            fit.coefficient("(Intercept)").unwrap().estimate
        };
        let b1 = make(1000.0);
        let b2 = make(2000.0);
        assert!((b1 - (b2 + 2.0f64.ln())).abs() < 1e-8, "b1 = {b1}, b2 = {b2}");
    }

    #[test]
    fn constant_counts_pin_dispersion_at_cap() {
        let cells: Vec<PanelCell> = (0..40)
            .map(|i| {
                let c = if i % 8 == 0 { 4 } else { 3 };
                cell(week(2020, 1 + i), DwellingType::House, UrbanClass::Rural, c, 1.0)
            })
            .collect();
        let design = build_count_design(&cells, &plain_spec(), None, &BTreeMap::new()).unwrap();
        let fit = fit_nb_glm(&design, &NbOptions::default()).unwrap();
        assert!(fit.dispersion_capped, "dispersion = {}", fit.dispersion);
        assert!(fit
            .convergence
            .boundary
            .iter()
            .any(|b| b.contains("Poisson")), "boundary notes: {:?}", fit.convergence.boundary);
    }

    #[test]
    fn all_zero_counts_are_rejected() {
        let cells: Vec<PanelCell> = (0..10)
            .map(|i| cell(week(2020, 1 + i), DwellingType::House, UrbanClass::Rural, 0, 1.0))
            .collect();
        let design = build_count_design(&cells, &plain_spec(), None, &BTreeMap::new()).unwrap();
        let err = fit_nb_glm(&design, &NbOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn tiny_iteration_budget_reports_no_convergence() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let gamma = Gamma::new(4.0, 0.25).unwrap();
        let cells: Vec<PanelCell> = (0..200)
            .map(|i| {
                let mu = 30.0 * (1.0 + 0.3 * ((i % 7) as f64 / 7.0));
                let lambda: f64 = mu * gamma.sample(&mut rng);
                let y = Poisson::new(lambda.max(1e-9)).unwrap().sample(&mut rng) as u64;
                cell(week(2020 + (i / 52) as i32, 1 + (i % 52)), DwellingType::House, UrbanClass::Rural, y, 1.0)
            })
            .collect();
        let design = build_count_design(&cells, &plain_spec(), None, &BTreeMap::new()).unwrap();
        let opts = NbOptions { max_outer: 1, max_irls: 1, max_dispersion_steps: 1, ..Default::default() };
        let err = fit_nb_glm(&design, &opts).unwrap_err();
        assert!(err.is_convergence_failure(), "got {err:?}");
    }

    /// Seeded Gamma-Poisson panel with a known cycle, dwelling and urban
    /// effects; the fit must recover them and leave a near-zero score.
    fn synthetic_cells() -> Vec<PanelCell> {
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        let a_true = 8.0;
        let gamma = Gamma::new(a_true, 1.0 / a_true).unwrap();
        let urban_effects = [0.0, -0.2, -0.35, -0.5];
        let mut cells = Vec::new();
        for year in [2020i32, 2021] {
            for w in 1..=52u32 {
                for (di, dwelling) in DwellingType::ALL.iter().enumerate() {
                    for (ui, urban) in UrbanClass::ALL.iter().enumerate() {
                        let t = w as f64;
                        let eta = -9.0
                            + 0.4 * (di as f64)
                            + urban_effects[ui]
                            + 0.1 * (std::f64::consts::TAU * t / 52.0).cos()
                            + 0.06 * (std::f64::consts::TAU * t / 52.0).sin()
                            + 750_000.0f64.ln();
                        let lambda = eta.exp() * gamma.sample(&mut rng);
                        let y = Poisson::new(lambda.max(1e-9)).unwrap().sample(&mut rng) as u64;
                        cells.push(cell(week(year, w), *dwelling, *urban, y, 750_000.0));
                    }
                }
            }
        }
        cells
    }

    #[test]
    fn recovers_known_cycle_and_effects() {
        let cells = synthetic_cells();
        let spec: CountModelSpec<f64> = CountModelSpec {
            time: TimeAxisKind::None,
            cycle: CycleSpec::Estimate { period: 52.0 },
            ..CountModelSpec::default()
        };
        let design = build_count_design(&cells, &spec, None, &BTreeMap::new()).unwrap();
        let fit = fit_nb_glm(&design, &NbOptions::default()).unwrap();
        assert!(fit.convergence.converged);
        assert!(
            fit.convergence.score_norm < 1e-5,
            "score norm = {}",
            fit.convergence.score_norm
        );
        let b0 = fit.coefficient("(Intercept)").unwrap().estimate;
        let bc = fit.coefficient(CYCLE_COS).unwrap().estimate;
        let bs = fit.coefficient(CYCLE_SIN).unwrap().estimate;
        let bd = fit.coefficient("dwelling=apartment").unwrap().estimate;
        assert!((b0 + 9.0).abs() < 0.1, "b0 = {b0}");
        assert!((bc - 0.1).abs() < 0.06, "b_cos = {bc}");
        assert!((bs - 0.06).abs() < 0.06, "b_sin = {bs}");
        assert!((bd - 0.4).abs() < 0.1, "b_dwelling = {bd}");
        assert!(
            fit.dispersion > 5.0 && fit.dispersion < 13.0,
            "dispersion = {}",
            fit.dispersion
        );
        assert!(!fit.dispersion_capped);
        // Standard errors are positive and small relative to effects.
        for c in &fit.coefficients {
            assert!(c.se > 0.0 && c.se < 0.2, "{}: se = {}", c.name, c.se);
        }
    }

    #[test]
    fn freezing_the_cycle_reproduces_the_joint_fit() {
        let cells = synthetic_cells();
        let spec: CountModelSpec<f64> = CountModelSpec {
            time: TimeAxisKind::None,
            cycle: CycleSpec::Estimate { period: 52.0 },
            ..CountModelSpec::default()
        };
        let (joint, trend) =
            fit_cycle_then_freeze(&cells, &spec, None, &BTreeMap::new(), &NbOptions::default())
                .unwrap();
        let frozen_spec = CountModelSpec {
            time: TimeAxisKind::None,
            cycle: CycleSpec::Frozen(trend.clone()),
            ..CountModelSpec::default()
        };
        let design = build_count_design(&cells, &frozen_spec, None, &BTreeMap::new()).unwrap();
        assert!(!design.names.iter().any(|n| n == CYCLE_COS || n == CYCLE_SIN));
        let refit = fit_nb_glm(&design, &NbOptions::default()).unwrap();
        for c in &refit.coefficients {
            let original = joint.coefficient(&c.name).unwrap();
            assert!(
                (c.estimate - original.estimate).abs() < 1e-6,
                "{}: {} vs {}",
                c.name,
                c.estimate,
                original.estimate
            );
        }
        let rel = (refit.dispersion - joint.dispersion).abs() / joint.dispersion;
        assert!(rel < 1e-4, "dispersion {} vs {}", refit.dispersion, joint.dispersion);
    }

    #[test]
    fn incidence_rate_ratio_is_exp() {
        let irr: f64 = incidence_rate_ratio(-0.309);
        assert!((irr - 0.734_181).abs() < 1e-5, "irr = {irr}");
        assert!((incidence_rate_ratio(0.0f64) - 1.0).abs() < 1e-15);
    }
}
