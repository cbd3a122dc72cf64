//! ABC rejection with regression projections.
//!
//! A pilot run from the prior fits, for every free parameter, a relaxed
//! Lasso of the parameter on `T(x) - T(x_obs)`. The fitted values
//! `theta_hat_j(x)` define the distance
//!
//! ```text
//! chi(x) = sum_j (theta_hat_j(x) - theta_hat_j(x_obs))^2 / var(theta_hat_j)
//! ```
//!
//! whose 1% pilot quantile is the tolerance for rejection sampling.
//!
//! Every attempt `a` of a loop draws from its own generator seeded by
//! `(master, stream, a)`. Attempts run in fixed-size batches and are merged
//! in index order, so results do not depend on the number of workers.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PointPattern;
use crate::params::ModelKind;
use crate::prior::PriorSpec;
use crate::regression::{relaxed_lasso_fit, LassoSettings, ProjectionModel, RegressionData};
use crate::samplers::Simulator;
use crate::seeding::{derive_seed, stream, task_rng, SimRng};
use crate::summaries::{summary_vector, SummaryConfig, SummaryVector};

pub const BATCH: usize = 256;

pub(crate) enum Outcome<T> {
    Keep(T),
    /// Counts toward the target but is dropped.
    Exclude,
    Fail,
}

#[derive(Debug)]
pub(crate) struct Collected<T> {
    pub items: Vec<T>,
    pub attempts: usize,
    pub failures: usize,
    pub excluded: usize,
}

/// Run attempts `0, 1, ...` in batches until `target` attempts have been
/// kept or excluded, or `max_attempts` is reached. `abort` sees
/// `(attempts, failures)` after each batch.
pub(crate) fn collect_batched<T, F, A>(target: usize, max_attempts: usize, f: F, abort: A) -> Result<Collected<T>>
where
    T: Send,
    F: Fn(usize) -> Result<Outcome<T>> + Sync,
    A: Fn(usize, usize) -> Option<Error>,
{
    let mut out = Collected { items: Vec::with_capacity(target), attempts: 0, failures: 0, excluded: 0 };
    let mut next = 0;
    while out.items.len() + out.excluded < target && next < max_attempts {
        let end = (next + BATCH).min(max_attempts);
        let results: Vec<Result<Outcome<T>>> = (next..end).into_par_iter().map(&f).collect();
        for r in results {
            if out.items.len() + out.excluded == target {
                break;
            }
            out.attempts += 1;
            match r? {
                Outcome::Keep(t) => out.items.push(t),
                Outcome::Exclude => out.excluded += 1,
                Outcome::Fail => out.failures += 1,
            }
        }
        next = end;
        if let Some(e) = abort(out.attempts, out.failures) {
            return Err(e);
        }
    }
    Ok(out)
}

/// Prior-predictive draws passing the `n > m` screen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PilotSet {
    pub kind: ModelKind,
    pub params: Vec<Vec<f64>>,
    pub summaries: Vec<SummaryVector>,
    /// Screened draws dropped for non-finite summaries.
    pub excluded: usize,
    pub screen_failures: usize,
    pub attempts: usize,
}

impl PilotSet {
    pub fn len(&self) -> usize {
        self.params.len()
    }
    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }
}

/// Draw `theta` from the prior, simulate, screen on `n > m`.
fn prior_predictive<S: Simulator>(
    kind: ModelKind,
    prior: &PriorSpec,
    sim: &S,
    m: usize,
    rng: &mut SimRng,
) -> Result<Option<(Vec<f64>, PointPattern)>> {
    let theta = prior.sample_free(kind, rng)?;
    let x = sim.simulate(&theta, rng)?;
    Ok((x.len() > m).then_some((theta, x)))
}

fn screen_abort(m: usize) -> impl Fn(usize, usize) -> Option<Error> {
    move |attempts, failures| {
        (2 * failures > attempts).then_some(Error::ScreenFailure { failed: failures, total: attempts, m })
    }
}

#[allow(clippy::too_many_arguments)]
pub fn run_pilot<S: Simulator>(
    kind: ModelKind,
    prior: &PriorSpec,
    sim: &S,
    summary: &SummaryConfig,
    k_pilot: usize,
    m: usize,
    seed: u64,
) -> Result<PilotSet> {
    if k_pilot == 0 {
        return Err(Error::InvalidParameter("k_pilot must be >= 1".into()));
    }
    if sim.dim() != kind.dim() {
        return Err(Error::Mismatch("simulator and model dimensions differ".into()));
    }
    let got = collect_batched(
        k_pilot,
        usize::MAX,
        |a| {
            let mut rng = task_rng(seed, &[stream::PILOT, a as u64]);
            Ok(match prior_predictive(kind, prior, sim, m, &mut rng)? {
                None => Outcome::Fail,
                Some((theta, x)) => {
                    let t = summary_vector(&x, summary)?;
                    if t.finite {
                        Outcome::Keep((theta, t))
                    } else {
                        Outcome::Exclude
                    }
                }
            })
        },
        screen_abort(m),
    )
    .map_err(|e| e.context("abc::run_pilot"))?;
    if got.excluded > 0 {
        log::info!("pilot: excluded {} draws with non-finite summaries", got.excluded);
    }
    let (params, summaries) = got.items.into_iter().unzip();
    Ok(PilotSet {
        kind,
        params,
        summaries,
        excluded: got.excluded,
        screen_failures: got.failures,
        attempts: got.attempts,
    })
}

/// One projection per free parameter, regressors `T - T_obs`.
pub fn fit_projections(
    pilot: &PilotSet,
    t_obs: &SummaryVector,
    lasso: &LassoSettings,
    seed: u64,
) -> Result<Vec<ProjectionModel>> {
    if !t_obs.finite {
        return Err(Error::InvalidParameter("observed summary vector has non-finite entries".into()));
    }
    let rows: Vec<Vec<f64>> = pilot
        .summaries
        .iter()
        .map(|t| t.values.iter().zip(&t_obs.values).map(|(a, b)| a - b).collect())
        .collect();
    (0..pilot.kind.dim())
        .map(|j| {
            let y: Vec<f64> = pilot.params.iter().map(|p| p[j]).collect();
            let data = RegressionData::from_rows(&rows, &y)?;
            relaxed_lasso_fit(&data, lasso, derive_seed(seed, &[stream::CV_FOLDS, j as u64]))
                .map_err(|e| e.context("regression"))
        })
        .collect()
}

/// Weighted squared distance between projected summaries. Degenerate
/// projections are left out; non-finite summaries are infinitely far.
pub fn chi_distance(projections: &[ProjectionModel], t: &SummaryVector, t_obs: &SummaryVector) -> f64 {
    if !t.finite {
        return f64::INFINITY;
    }
    let diff: Vec<f64> = t.values.iter().zip(&t_obs.values).map(|(a, b)| a - b).collect();
    let zero = vec![0.0; diff.len()];
    projections
        .iter()
        .filter(|p| !p.is_degenerate())
        .map(|p| (p.predict(&diff) - p.predict(&zero)).powi(2) / p.fitted_variance)
        .sum()
}

/// Lower empirical quantile: the order statistic at 1-based index
/// `ceil(q k)`, at least the first.
pub fn choose_epsilon(distances: &[f64], q: f64) -> Result<f64> {
    if distances.is_empty() {
        return Err(Error::InsufficientData("no pilot distances".into()));
    }
    let mut d = distances.to_vec();
    d.sort_by(f64::total_cmp);
    let idx = ((q * d.len() as f64).ceil() as usize).clamp(1, d.len());
    Ok(d[idx - 1])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbcPosterior {
    pub kind: ModelKind,
    pub samples: Vec<Vec<f64>>,
    pub epsilon: f64,
    pub attempts: usize,
    /// True when the attempt budget ran out before `k_abc` acceptances.
    pub shortfall: bool,
}

impl AbcPosterior {
    pub fn len(&self) -> usize {
        self.samples.len()
    }
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s[j]).collect()
    }
}

#[allow(clippy::too_many_arguments)]
pub fn abc_rejection<S: Simulator>(
    kind: ModelKind,
    prior: &PriorSpec,
    sim: &S,
    summary: &SummaryConfig,
    projections: &[ProjectionModel],
    t_obs: &SummaryVector,
    epsilon: f64,
    k_abc: usize,
    m: usize,
    max_attempts: usize,
    seed: u64,
) -> Result<AbcPosterior> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon must be > 0, got {epsilon}")));
    }
    let got = collect_batched(
        k_abc,
        max_attempts,
        |a| {
            let mut rng = task_rng(seed, &[stream::REJECTION, a as u64]);
            Ok(match prior_predictive(kind, prior, sim, m, &mut rng)? {
                Some((theta, x)) => {
                    let t = summary_vector(&x, summary)?;
                    if chi_distance(projections, &t, t_obs) < epsilon {
                        Outcome::Keep(theta)
                    } else {
                        Outcome::Fail
                    }
                }
                None => Outcome::Fail,
            })
        },
        |_, _| None,
    )
    .map_err(|e| e.context("abc::abc_rejection"))?;
    let shortfall = got.items.len() < k_abc;
    if shortfall {
        log::warn!("ABC budget of {max_attempts} attempts exhausted with {} of {k_abc} accepted", got.items.len());
    }
    Ok(AbcPosterior { kind, samples: got.items, epsilon, attempts: got.attempts, shortfall })
}

/// Algorithm settings; defaults are the full-scale values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbcSettings {
    pub k_pilot: usize,
    pub k_abc: usize,
    pub m: usize,
    pub quantile: f64,
    /// Attempt budget as a multiple of `k_abc`.
    pub budget_factor: usize,
    pub lasso: LassoSettings,
    pub summary: SummaryConfig,
}

impl Default for AbcSettings {
    fn default() -> Self {
        Self {
            k_pilot: 10_000,
            k_abc: 1_000,
            m: 10,
            quantile: 0.01,
            budget_factor: 1_000,
            lasso: LassoSettings::default(),
            summary: SummaryConfig::default(),
        }
    }
}

/// Everything produced by one run of the algorithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbcFit {
    pub t_obs: SummaryVector,
    pub pilot_size: usize,
    pub pilot_excluded: usize,
    pub pilot_screen_failures: usize,
    pub projections: Vec<ProjectionModel>,
    pub posterior: AbcPosterior,
}

pub fn fit_abc<S: Simulator>(
    observed: &PointPattern,
    kind: ModelKind,
    prior: &PriorSpec,
    sim: &S,
    settings: &AbcSettings,
    seed: u64,
) -> Result<AbcFit> {
    prior.validate()?;
    let t_obs = summary_vector(observed, &settings.summary)?;
    let pilot = run_pilot(kind, prior, sim, &settings.summary, settings.k_pilot, settings.m, seed)?;
    let projections = fit_projections(&pilot, &t_obs, &settings.lasso, seed)?;
    let distances: Vec<f64> = pilot.summaries.iter().map(|t| chi_distance(&projections, t, &t_obs)).collect();
    let epsilon = choose_epsilon(&distances, settings.quantile)?;
    log::info!("pilot of {} draws, epsilon = {epsilon:.6e}", pilot.len());
    // A zero tolerance cannot accept anything under a strict comparison.
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter("all projections are degenerate; epsilon is 0".into()));
    }
    let budget = settings.budget_factor.saturating_mul(settings.k_abc);
    let posterior = abc_rejection(
        kind,
        prior,
        sim,
        &settings.summary,
        &projections,
        &t_obs,
        epsilon,
        settings.k_abc,
        settings.m,
        budget,
        seed,
    )?;
    Ok(AbcFit {
        t_obs,
        pilot_size: pilot.len(),
        pilot_excluded: pilot.excluded,
        pilot_screen_failures: pilot.screen_failures,
        projections,
        posterior,
    })
}

/// Sample quantile with linear interpolation between order statistics
/// (`x[(k-1)p]`, zero-based, on the sorted sample).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalSummary {
    pub name: String,
    pub mean: f64,
    pub median: f64,
    pub q025: f64,
    pub q25: f64,
    pub q75: f64,
    pub q975: f64,
}

pub fn marginal_summary(name: &str, x: &[f64]) -> Result<MarginalSummary> {
    if x.is_empty() {
        return Err(Error::InsufficientData("empty sample".into()));
    }
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(MarginalSummary {
        name: name.to_string(),
        mean: x.iter().sum::<f64>() / x.len() as f64,
        median: quantile_sorted(&s, 0.5),
        q025: quantile_sorted(&s, 0.025),
        q25: quantile_sorted(&s, 0.25),
        q75: quantile_sorted(&s, 0.75),
        q975: quantile_sorted(&s, 0.975),
    })
}

pub fn posterior_summary(posterior: &AbcPosterior) -> Result<Vec<MarginalSummary>> {
    posterior
        .kind
        .free_params()
        .iter()
        .enumerate()
        .map(|(j, p)| marginal_summary(p.name(), &posterior.column(j)))
        .collect()
}

/// Gaussian kernel density estimate on an evenly spaced grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kde {
    pub bandwidth: f64,
    pub x: Vec<f64>,
    pub density: Vec<f64>,
}

impl Kde {
    /// Grid location of the highest density.
    pub fn mode(&self) -> f64 {
        let mut best = 0;
        for i in 1..self.x.len() {
            if self.density[i] > self.density[best] {
                best = i;
            }
        }
        self.x[best]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Bandwidth {
    SheatherJones,
    Silverman,
}

pub const KDE_POINTS: usize = 512;

fn sample_sd(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0)).sqrt()
}

fn robust_scale(x: &[f64]) -> f64 {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&s, 0.75) - quantile_sorted(&s, 0.25);
    sample_sd(x).min(iqr / 1.349)
}

pub fn silverman_bandwidth(x: &[f64]) -> f64 {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&s, 0.75) - quantile_sorted(&s, 0.25);
    let sd = sample_sd(x);
    let lo = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * lo * (x.len() as f64).powf(-0.2)
}

/// Sheather-Jones solve-the-equation bandwidth with exact pairwise
/// functional estimates. `None` when no root can be bracketed.
pub fn sheather_jones_bandwidth(x: &[f64]) -> Option<f64> {
    let n = x.len();
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let scale = robust_scale(x);
    if !(scale > 0.0) {
        return None;
    }
    let norm = (2.0 * std::f64::consts::PI).sqrt();
    let mut d2 = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            d2.push((x[i] - x[j]).powi(2));
        }
    }
    let phi4 = |h: f64| {
        let s: f64 = d2
            .iter()
            .map(|&d| {
                let u = d / (h * h);
                (-u / 2.0).exp() * (u * u - 6.0 * u + 3.0)
            })
            .sum();
        (2.0 * s + 3.0 * nf) / (nf * (nf - 1.0) * h.powi(5) * norm)
    };
    let phi6 = |h: f64| {
        let s: f64 = d2
            .iter()
            .map(|&d| {
                let u = d / (h * h);
                (-u / 2.0).exp() * (u * u * u - 15.0 * u * u + 45.0 * u - 15.0)
            })
            .sum();
        (2.0 * s - 15.0 * nf) / (nf * (nf - 1.0) * h.powi(7) * norm)
    };
    let a = 1.24 * scale * nf.powf(-1.0 / 7.0);
    let b = 1.23 * scale * nf.powf(-1.0 / 9.0);
    let c1 = 1.0 / (2.0 * std::f64::consts::PI.sqrt() * nf);
    let td = -phi6(b);
    if !(td.is_finite() && td > 0.0) {
        return None;
    }
    let alph2 = 1.357 * (phi4(a) / td).powf(1.0 / 7.0);
    if !alph2.is_finite() {
        return None;
    }
    let f = |h: f64| (c1 / phi4(alph2 * h.powf(5.0 / 7.0))).powf(0.2) - h;
    let hmax = 1.144 * scale * nf.powf(-0.2);
    let (mut lo, mut hi) = (0.1 * hmax, hmax);
    let mut tries = 1;
    while f(lo) * f(hi) > 0.0 {
        if tries > 99 {
            return None;
        }
        if tries % 2 == 1 {
            hi *= 1.2;
        } else {
            lo /= 1.2;
        }
        tries += 1;
    }
    let (mut flo, tol) = (f(lo), 1e-10 * hmax);
    if !flo.is_finite() {
        return None;
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if !fm.is_finite() {
            return None;
        }
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

pub fn kde_1d(samples: &[f64], rule: Bandwidth) -> Result<Kde> {
    if samples.len() < 2 {
        return Err(Error::InsufficientData("KDE needs at least 2 samples".into()));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("KDE sample has non-finite values".into()));
    }
    let (min, max) = samples.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if min == max {
        log::warn!("KDE sample is a point mass at {min}");
        return Err(Error::InsufficientData(format!("zero-variance sample (point mass at {min})")));
    }
    let h = match rule {
        Bandwidth::SheatherJones => sheather_jones_bandwidth(samples).unwrap_or_else(|| {
            log::warn!("Sheather-Jones bandwidth failed; using Silverman's rule");
            silverman_bandwidth(samples)
        }),
        Bandwidth::Silverman => silverman_bandwidth(samples),
    };
    let h = if h > 0.0 { h } else { sample_sd(samples) * (samples.len() as f64).powf(-0.2) };
    let (lo, hi) = (min - 3.0 * h, max + 3.0 * h);
    let step = (hi - lo) / (KDE_POINTS - 1) as f64;
    let norm = 1.0 / (samples.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let x: Vec<f64> = (0..KDE_POINTS).map(|i| lo + i as f64 * step).collect();
    let density = x
        .iter()
        .map(|&g| samples.iter().map(|&s| (-0.5 * ((g - s) / h).powi(2)).exp()).sum::<f64>() * norm)
        .collect();
    Ok(Kde { bandwidth: h, x, density })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Window;
    use crate::samplers::{ModelSimulator, SimSettings};
    use crate::seeding::rng_from_seed;
    use rand_distr::{Distribution, StandardNormal};

    fn toy_projection(intercept: f64, coefs: Vec<f64>, var: f64) -> ProjectionModel {
        let support = (0..coefs.len()).filter(|&j| coefs[j] != 0.0).collect();
        ProjectionModel {
            intercept,
            std_coefficients: coefs.clone(),
            coefficients: coefs,
            support,
            lambda: 0.0,
            fitted_variance: var,
        }
    }

    #[test]
    fn chi_by_hand() {
        let p = vec![toy_projection(2.0, vec![1.0, 0.0, -2.0], 4.0), toy_projection(-1.0, vec![0.0, 0.5, 0.0], 0.25)];
        let t_obs = SummaryVector::new(vec![1.0, 2.0, 3.0]);
        let t = SummaryVector::new(vec![1.5, 1.0, 2.0]);
        // Differences (0.5, -1, -1): projections move by 2.5 and -0.5.
        let expect = 2.5f64.powi(2) / 4.0 + 0.25 / 0.25;
        assert!((chi_distance(&p, &t, &t_obs) - expect).abs() < 1e-12);
        assert_eq!(chi_distance(&p, &t_obs, &t_obs), 0.0);
        let mut with_degenerate = p.clone();
        with_degenerate.push(toy_projection(3.0, vec![0.0; 3], 0.0));
        assert_eq!(chi_distance(&with_degenerate, &t, &t_obs), chi_distance(&p, &t, &t_obs));
    }

    #[test]
    fn chi_invariant_to_response_units() {
        let p = vec![toy_projection(2.0, vec![1.0, -3.0], 4.0)];
        let c = 37.5;
        let q = vec![toy_projection(2.0 * c, vec![c, -3.0 * c], 4.0 * c * c)];
        let t_obs = SummaryVector::new(vec![0.2, 0.1]);
        let t = SummaryVector::new(vec![1.0, -0.4]);
        let (a, b) = (chi_distance(&p, &t, &t_obs), chi_distance(&q, &t, &t_obs));
        assert!((a - b).abs() < 1e-12 * a);
    }

    #[test]
    fn epsilon_order_statistic() {
        let d: Vec<f64> = (1..=100).rev().map(f64::from).collect();
        assert_eq!(choose_epsilon(&d, 0.01).unwrap(), 1.0);
        assert_eq!(choose_epsilon(&[3.0; 17], 0.01).unwrap(), 3.0);
        let d: Vec<f64> = (1..=1000).map(f64::from).collect();
        assert_eq!(choose_epsilon(&d, 0.01).unwrap(), 10.0);
        let mut rng = rng_from_seed(0);
        for k in [1usize, 7, 99, 101, 2000] {
            let d: Vec<f64> = (0..k).map(|_| StandardNormal.sample(&mut rng)).collect();
            let eps = choose_epsilon(&d, 0.01).unwrap();
            let below = d.iter().filter(|&&x| x < eps).count();
            assert!(below as f64 <= 0.01 * k as f64);
        }
    }

    #[test]
    fn summaries_of_small_samples() {
        let s = marginal_summary("a", &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!((s.mean, s.median), (2.5, 2.5));
        let s = marginal_summary("a", &[7.0; 9]).unwrap();
        assert_eq!((s.mean, s.median, s.q025, s.q975), (7.0, 7.0, 7.0, 7.0));
        let mut rng = rng_from_seed(1);
        let x: Vec<f64> = (0..101).map(|_| StandardNormal.sample(&mut rng)).collect();
        let s = marginal_summary("a", &x).unwrap();
        let mut sorted = x.clone();
        sorted.sort_by(f64::total_cmp);
        assert_eq!(s.median, sorted[50]);
        assert_eq!(s.q25, sorted[25]);
    }

    #[test]
    fn kde_properties() {
        let mut rng = rng_from_seed(2);
        let x: Vec<f64> = (0..10_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let kde = kde_1d(&x, Bandwidth::SheatherJones).unwrap();
        assert!(kde.mode().abs() < 0.1);
        let step = kde.x[1] - kde.x[0];
        let integral: f64 = kde.density.windows(2).map(|w| 0.5 * (w[0] + w[1]) * step).sum();
        assert!((integral - 1.0).abs() < 1e-3);

        let half: Vec<f64> = (0..200).map(|_| StandardNormal.sample(&mut rng)).collect();
        let sym: Vec<f64> = half.iter().chain(half.iter().map(|v| -v).collect::<Vec<_>>().iter()).copied().collect();
        let kde = kde_1d(&sym, Bandwidth::SheatherJones).unwrap();
        let n = kde.density.len();
        for i in 0..n {
            assert!((kde.density[i] - kde.density[n - 1 - i]).abs() < 1e-6);
        }
        assert!(kde_1d(&[1.0; 5], Bandwidth::SheatherJones).is_err());
    }

    #[test]
    fn sheather_jones_reference_values() {
        // Independent NumPy/SciPy evaluation of the same equation, brentq root.
        let x: Vec<f64> = (1..=20).map(|i| (i as f64).sqrt() + if i % 3 == 0 { 1.0 } else { 0.0 }).collect();
        let h = sheather_jones_bandwidth(&x).unwrap();
        assert!((h - 0.727_965_255_361_520_9).abs() < 1e-8, "{h}");
        // Scale equivariance is exact for this estimator.
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v + 10.0).collect();
        let hy = sheather_jones_bandwidth(&y).unwrap();
        assert!((hy - 3.0 * h).abs() < 1e-6 * hy);
    }

    fn cheap_settings() -> SimSettings {
        let mut s = SimSettings::new(Window::unit_square());
        s.nx = 16;
        s.ny = 16;
        s.burnin = 2_000;
        s
    }

    #[test]
    fn pilot_is_deterministic_and_screened() {
        let sim = ModelSimulator { kind: ModelKind::Strauss, settings: cheap_settings() };
        let prior = PriorSpec::p1();
        let cfg = SummaryConfig::default();
        let a = run_pilot(ModelKind::Strauss, &prior, &sim, &cfg, 40, 10, 11).unwrap();
        let b = run_pilot(ModelKind::Strauss, &prior, &sim, &cfg, 40, 10, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len() + a.excluded, 40);
        assert!(a.summaries.iter().all(|t| t.finite && t.values[0] > 10f64.ln()));
    }

    #[test]
    fn pilot_aborts_on_empty_patterns() {
        let sim = ModelSimulator { kind: ModelKind::Lgcp, settings: cheap_settings() };
        let mut prior = PriorSpec::p1();
        prior.mu = crate::prior::PriorEntry::uniform(-20.5, -19.5);
        let err = run_pilot(ModelKind::Lgcp, &prior, &sim, &SummaryConfig::default(), 50, 10, 1).unwrap_err();
        let mut e = &err;
        while let Error::Context { source, .. } = e {
            e = source;
        }
        assert!(matches!(e, Error::ScreenFailure { .. }), "{err}");
    }

    #[test]
    fn budget_exhaustion_sets_shortfall() {
        let sim = ModelSimulator { kind: ModelKind::Lgcp, settings: cheap_settings() };
        let prior = PriorSpec::p1();
        let cfg = SummaryConfig::default();
        let p = vec![toy_projection(0.0, vec![1.0; 56], 1.0)];
        let t_obs = SummaryVector::new(vec![0.0; 56]);
        let post =
            abc_rejection(ModelKind::Lgcp, &prior, &sim, &cfg, &p, &t_obs, 1e-300, 5, 10, 30, 3).unwrap();
        assert!(post.shortfall);
        assert_eq!(post.attempts, 30);
        assert!(post.is_empty());
    }

    #[test]
    fn collect_batched_is_index_ordered() {
        let got = collect_batched(
            300,
            usize::MAX,
            |a| Ok(if a % 3 == 0 { Outcome::Fail } else if a % 7 == 0 { Outcome::Exclude } else { Outcome::Keep(a) }),
            |_, _| None,
        )
        .unwrap();
        assert!(got.items.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(got.items.len() + got.excluded, 300);
        assert_eq!(got.attempts, got.items.len() + got.excluded + got.failures);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let again = pool
            .install(|| {
                collect_batched(
                    300,
                    usize::MAX,
                    |a| Ok(if a % 3 == 0 { Outcome::Fail } else if a % 7 == 0 { Outcome::Exclude } else { Outcome::Keep(a) }),
                    |_, _| None,
                )
            })
            .unwrap();
        assert_eq!(got.items, again.items);
    }
}
