//! Point process simulators.
//!
//! Given a field realization `z`, the LGCP-Strauss process is the
//! inhomogeneous Strauss process with unnormalized density
//! `prod exp(z(x_i)) * gamma^{s_R(x)}` relative to the unit-rate Poisson
//! process. It is simulated by birth-death Metropolis-Hastings: with
//! probability 1/2 a birth is proposed from the density `exp(z) / I_z`,
//! otherwise a uniformly chosen point is proposed for death. The
//! Hastings ratios are
//!
//! ```text
//! birth of u:  gamma^t(u, x) * I_z / (n + 1)
//! death of xi: n / (I_z * gamma^t(xi, x \ xi))
//! ```
//!
//! with `t` the number of R-close neighbours and `0^0 = 1`.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point, PointPattern, Window};
use crate::grf::{self, ExpDensity, GridField};
use crate::params::{ModelKind, ModelParams};
use crate::seeding::SimRng;

pub const DEFAULT_BURNIN: usize = 20_000;
const MAX_INDEX_CELLS: usize = 128;

/// Bucket grid supporting insertion and removal, with cells at least R wide.
#[derive(Debug, Clone)]
struct DynamicIndex {
    x0: f64,
    y0: f64,
    cw: f64,
    ch: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<u32>>,
    /// `(bucket, slot)` of each point.
    loc: Vec<(u32, u32)>,
}

impl DynamicIndex {
    fn new(window: &Window, r: f64) -> Self {
        let axis = |len: f64| ((len / r).floor().min(MAX_INDEX_CELLS as f64) as usize).max(1);
        let (nx, ny) = (axis(window.width()), axis(window.height()));
        Self {
            x0: window.xmin(),
            y0: window.ymin(),
            cw: window.width() / nx as f64,
            ch: window.height() / ny as f64,
            nx,
            ny,
            buckets: vec![Vec::new(); nx * ny],
            loc: Vec::new(),
        }
    }

    #[inline]
    fn coords(&self, p: &Point) -> (usize, usize) {
        let cx = (((p.x - self.x0) / self.cw) as usize).min(self.nx - 1);
        let cy = (((p.y - self.y0) / self.ch) as usize).min(self.ny - 1);
        (cx, cy)
    }

    fn push(&mut self, p: &Point) {
        let (cx, cy) = self.coords(p);
        let b = cy * self.nx + cx;
        let idx = self.loc.len() as u32;
        self.loc.push((b as u32, self.buckets[b].len() as u32));
        self.buckets[b].push(idx);
    }

    /// Mirror `Vec::swap_remove(idx)` on the point list.
    fn swap_remove(&mut self, idx: usize) {
        let (b, slot) = self.loc[idx];
        let bucket = &mut self.buckets[b as usize];
        bucket.swap_remove(slot as usize);
        if let Some(&moved) = bucket.get(slot as usize) {
            self.loc[moved as usize].1 = slot;
        }
        let last = self.loc.len() - 1;
        if idx != last {
            let (lb, lslot) = self.loc[last];
            self.buckets[lb as usize][lslot as usize] = idx as u32;
            self.loc[idx] = (lb, lslot);
        }
        self.loc.pop();
    }

    /// Points within `r` of `u`, skipping index `skip`.
    #[inline]
    fn count_within(&self, points: &[Point], u: &Point, r2: f64, skip: Option<usize>) -> usize {
        let (cx, cy) = self.coords(u);
        let mut count = 0;
        for y in cy.saturating_sub(1)..=(cy + 1).min(self.ny - 1) {
            for x in cx.saturating_sub(1)..=(cx + 1).min(self.nx - 1) {
                for &i in &self.buckets[y * self.nx + x] {
                    if Some(i as usize) != skip && u.dist2(&points[i as usize]) <= r2 {
                        count += 1;
                    }
                }
            }
        }
        count
    }
}

/// State of the birth-death chain.
#[derive(Debug, Clone)]
pub struct MHState {
    window: Window,
    points: Vec<Point>,
    r: f64,
    r2: f64,
    close_pairs: usize,
    index: DynamicIndex,
}

impl MHState {
    pub fn new(init: &PointPattern, r: f64) -> Result<Self> {
        if !(r > 0.0) {
            return Err(Error::InvalidParameter(format!("R must be > 0, got {r}")));
        }
        let window = *init.window();
        let mut state = Self {
            window,
            points: Vec::with_capacity(init.len()),
            r,
            r2: r * r,
            close_pairs: 0,
            index: DynamicIndex::new(&window, r),
        };
        for p in init.points() {
            state.close_pairs += state.index.count_within(&state.points, p, state.r2, None);
            state.index.push(p);
            state.points.push(*p);
        }
        Ok(state)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
    /// Number of R-close pairs, maintained incrementally.
    pub fn close_pairs(&self) -> usize {
        self.close_pairs
    }
    pub fn radius(&self) -> f64 {
        self.r
    }
    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn to_pattern(&self) -> PointPattern {
        PointPattern::from_trusted(self.window, self.points.clone())
    }

    fn insert(&mut self, u: Point, t: usize) {
        self.index.push(&u);
        self.points.push(u);
        self.close_pairs += t;
    }

    fn remove(&mut self, idx: usize, t: usize) {
        self.index.swap_remove(idx);
        self.points.swap_remove(idx);
        self.close_pairs -= t;
    }
}

/// `t * ln(gamma)` with `0^0 = 1`; `None` encodes `gamma^t = 0`.
#[inline]
fn log_interaction(gamma: f64, t: usize) -> Option<f64> {
    if t == 0 {
        Some(0.0)
    } else if gamma == 0.0 {
        None
    } else {
        Some(t as f64 * gamma.ln())
    }
}

/// Field-dependent quantities reused across MH steps.
#[derive(Debug, Clone)]
pub struct ChainTarget<'a> {
    density: ExpDensity<'a>,
    log_iz: f64,
    gamma: f64,
}

impl<'a> ChainTarget<'a> {
    pub fn new(field: &'a GridField, gamma: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::InvalidParameter(format!("gamma must lie in [0, 1], got {gamma}")));
        }
        Ok(Self { density: ExpDensity::new(field), log_iz: grf::log_integrate_exp(field), gamma })
    }

    /// Birth acceptance probability for a proposal with `t` close neighbours.
    pub fn birth_acceptance(&self, n: usize, t: usize) -> f64 {
        match log_interaction(self.gamma, t) {
            None => 0.0,
            Some(li) => (li + self.log_iz - ((n + 1) as f64).ln()).exp().min(1.0),
        }
    }

    /// Death acceptance probability in a pattern of `n` points.
    pub fn death_acceptance(&self, n: usize, t: usize) -> f64 {
        match log_interaction(self.gamma, t) {
            None => 1.0,
            Some(li) => ((n as f64).ln() - self.log_iz - li).exp().min(1.0),
        }
    }
}

/// One birth-death transition. Returns whether the proposal was accepted.
pub fn mh_step<R: Rng + ?Sized>(state: &mut MHState, target: &ChainTarget<'_>, rng: &mut R) -> bool {
    let n = state.len();
    if rng.random::<f64>() < 0.5 {
        let u = target.density.sample(rng);
        let t = state.index.count_within(&state.points, &u, state.r2, None);
        let a = target.birth_acceptance(n, t);
        if rng.random::<f64>() < a {
            state.insert(u, t);
            return true;
        }
    } else if n > 0 {
        let idx = rng.random_range(0..n);
        let xi = state.points[idx];
        let t = state.index.count_within(&state.points, &xi, state.r2, Some(idx));
        let a = target.death_acceptance(n, t);
        if rng.random::<f64>() < a {
            state.remove(idx, t);
            return true;
        }
    }
    // A death proposed on the empty pattern is a rejected move.
    false
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub n: usize,
    pub close_pairs: usize,
}

/// Apply `n_iters` transitions starting from `init`.
pub fn run_chain<R: Rng + ?Sized>(
    field: &GridField,
    gamma: f64,
    r: f64,
    n_iters: usize,
    init: &PointPattern,
    rng: &mut R,
    record_trace: bool,
) -> Result<(PointPattern, Vec<TraceRecord>)> {
    if init.window() != field.window() {
        return Err(Error::Mismatch("initial pattern and field use different windows".into()));
    }
    let target = ChainTarget::new(field, gamma)?;
    let mut state = MHState::new(init, r)?;
    let mut trace = Vec::with_capacity(if record_trace { n_iters } else { 0 });
    for iter in 1..=n_iters {
        mh_step(&mut state, &target, rng);
        if record_trace {
            trace.push(TraceRecord { iter, n: state.len(), close_pairs: state.close_pairs });
        }
        #[cfg(debug_assertions)]
        if iter % 1000 == 0 {
            debug_assert_eq!(
                state.close_pairs,
                crate::geometry::close_pair_count(&state.to_pattern(), r),
                "incremental close-pair count drifted"
            );
        }
    }
    Ok((state.to_pattern(), trace))
}

/// Poisson process with intensity `exp(z)`.
pub fn simulate_poisson<R: Rng + ?Sized>(field: &GridField, rng: &mut R) -> PointPattern {
    let density = ExpDensity::new(field);
    let mean = density.integral();
    let n = if mean > 0.0 && mean.is_finite() {
        Poisson::new(mean).map(|d| d.sample(rng) as usize).unwrap_or(0)
    } else {
        0
    };
    let points = (0..n).map(|_| density.sample(rng)).collect();
    PointPattern::from_trusted(*field.window(), points)
}

/// Simulation settings shared by all model simulators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimSettings {
    pub window: Window,
    pub nx: usize,
    pub ny: usize,
    pub burnin: usize,
}

impl SimSettings {
    pub fn new(window: Window) -> Self {
        Self { window, nx: grf::DEFAULT_GRID, ny: grf::DEFAULT_GRID, burnin: DEFAULT_BURNIN }
    }
}

/// Field draw followed by `burnin` MH transitions from the empty pattern.
pub fn simulate_lgcp_strauss<R: Rng + ?Sized>(
    theta: &ModelParams,
    settings: &SimSettings,
    rng: &mut R,
) -> Result<PointPattern> {
    theta.validate()?;
    let field = grf::simulate_grf(&settings.window, settings.nx, settings.ny, theta.mu, theta.sigma2, theta.s, rng)?;
    let empty = PointPattern::empty(settings.window);
    Ok(run_chain(&field, theta.gamma, theta.r, settings.burnin, &empty, rng, false)?.0)
}

/// Exact LGCP draw: field, then Poisson given the field.
pub fn simulate_lgcp<R: Rng + ?Sized>(
    mu: f64,
    sigma2: f64,
    s: f64,
    settings: &SimSettings,
    rng: &mut R,
) -> Result<PointPattern> {
    let field = grf::simulate_grf(&settings.window, settings.nx, settings.ny, mu, sigma2, s, rng)?;
    Ok(simulate_poisson(&field, rng))
}

/// Homogeneous Strauss process via the chain on a constant field.
pub fn simulate_strauss<R: Rng + ?Sized>(
    mu: f64,
    gamma: f64,
    r: f64,
    window: &Window,
    burnin: usize,
    rng: &mut R,
) -> Result<PointPattern> {
    let field = GridField::constant(*window, 2, 2, mu)?;
    let empty = PointPattern::empty(*window);
    Ok(run_chain(&field, gamma, r, burnin, &empty, rng, false)?.0)
}

/// Draw a pattern from `kind` with free parameters `free`.
pub fn simulate_model<R: Rng + ?Sized>(
    kind: ModelKind,
    free: &[f64],
    settings: &SimSettings,
    rng: &mut R,
) -> Result<PointPattern> {
    let p = kind.expand(free)?;
    match kind {
        ModelKind::LgcpStrauss => simulate_lgcp_strauss(&p, settings, rng),
        ModelKind::Lgcp => simulate_lgcp(p.mu, p.sigma2, p.s, settings, rng),
        ModelKind::Strauss => simulate_strauss(p.mu, p.gamma, p.r, &settings.window, settings.burnin, rng),
    }
}

/// Anything that turns a parameter vector into a point pattern.
pub trait Simulator: Sync {
    fn dim(&self) -> usize;
    fn simulate(&self, theta: &[f64], rng: &mut SimRng) -> Result<PointPattern>;
}

/// Simulator for one of the three model families.
#[derive(Debug, Clone, Copy)]
pub struct ModelSimulator {
    pub kind: ModelKind,
    pub settings: SimSettings,
}

impl Simulator for ModelSimulator {
    fn dim(&self) -> usize {
        self.kind.dim()
    }
    fn simulate(&self, theta: &[f64], rng: &mut SimRng) -> Result<PointPattern> {
        simulate_model(self.kind, theta, &self.settings, rng)
    }
}

/// Two traces on one field: from the empty pattern and from a Poisson
/// realization with intensity `exp(z)`, the two extreme starting states.
pub fn burnin_traces<R: Rng + ?Sized>(
    theta: &ModelParams,
    settings: &SimSettings,
    n_iters: usize,
    rng: &mut R,
) -> Result<(Vec<TraceRecord>, Vec<TraceRecord>)> {
    let field = grf::simulate_grf(&settings.window, settings.nx, settings.ny, theta.mu, theta.sigma2, theta.s, rng)?;
    let empty = PointPattern::empty(settings.window);
    let (_, from_empty) = run_chain(&field, theta.gamma, theta.r, n_iters, &empty, rng, true)?;
    let poisson = simulate_poisson(&field, rng);
    let (_, from_poisson) = run_chain(&field, theta.gamma, theta.r, n_iters, &poisson, rng, true)?;
    Ok((from_empty, from_poisson))
}
