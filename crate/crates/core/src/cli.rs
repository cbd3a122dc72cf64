//! Command-line orchestration: configuration, ingestion, worker pool and
//! artifact emission. `main` only forwards to [`run`].
//!
//! Every run writes into one output directory: result CSVs, JSON reports
//! and `manifest.json`. A `.partial` marker exists while the run is in
//! progress and stays behind if it fails or ends short of its target.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::abc::{self, kde_1d, AbcPosterior, AbcSettings, Bandwidth};
use crate::envelopes::{combined_envelope, posterior_predictive_curves, CurveSet, EnvelopeResult, Statistic};
use crate::error::{Error, Result};
use crate::geometry::{PointPattern, Window};
use crate::io::{self, PriorConfig};
use crate::modelchoice::{build_reference_table, choose_model, train_chooser, ForestSettings};
use crate::params::ModelKind;
use crate::regression::LassoSettings;
use crate::samplers::{self, ModelSimulator, SimSettings};
use crate::seeding::{stream, task_rng};
use crate::summaries::{self, SummaryConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_BUDGET: i32 = 2;

pub const PARTIAL_MARKER: &str = ".partial";

/// Resolved run configuration. Every field has a default, so no config
/// file is needed; a JSON file may set any subset and flags override it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; `None` uses every available core.
    pub workers: Option<usize>,
    pub out: PathBuf,
    pub model: ModelKind,
    pub prior: PriorConfig,
    /// `[xmin, xmax, ymin, ymax]` for `simulate` and `trace`.
    pub window: [f64; 4],
    /// Free parameters of `model` for `simulate` and `trace`.
    pub theta: Option<Vec<f64>>,
    pub pattern: Option<PathBuf>,
    pub posterior: Option<PathBuf>,
    pub m: usize,
    pub burnin: usize,
    pub grid: usize,
    pub r_count: usize,
    pub r_fraction: f64,
    pub quadrat_orders: Vec<usize>,
    pub k_pilot: usize,
    pub k_abc: usize,
    pub quantile: f64,
    pub budget_factor: usize,
    pub lasso: LassoSettings,
    pub trace_iters: usize,
    pub level: f64,
    pub n_reference: usize,
    pub n_trees: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let abc = AbcSettings::default();
        let summary = SummaryConfig::default();
        Self {
            seed: 1,
            workers: None,
            out: PathBuf::from("out"),
            model: ModelKind::LgcpStrauss,
            prior: PriorConfig::Preset("p1".into()),
            window: [0.0, 1.0, 0.0, 1.0],
            theta: None,
            pattern: None,
            posterior: None,
            m: abc.m,
            burnin: samplers::DEFAULT_BURNIN,
            grid: crate::grf::DEFAULT_GRID,
            r_count: summary.m,
            r_fraction: summary.r_fraction,
            quadrat_orders: summary.quadrat_orders,
            k_pilot: abc.k_pilot,
            k_abc: abc.k_abc,
            quantile: abc.quantile,
            budget_factor: abc.budget_factor,
            lasso: abc.lasso,
            trace_iters: samplers::DEFAULT_BURNIN,
            level: 0.95,
            n_reference: 30_000,
            n_trees: 500,
        }
    }
}

impl RunConfig {
    pub fn summary(&self) -> SummaryConfig {
        SummaryConfig { m: self.r_count, r_fraction: self.r_fraction, quadrat_orders: self.quadrat_orders.clone() }
    }

    pub fn abc_settings(&self) -> AbcSettings {
        AbcSettings {
            k_pilot: self.k_pilot,
            k_abc: self.k_abc,
            m: self.m,
            quantile: self.quantile,
            budget_factor: self.budget_factor,
            lasso: self.lasso,
            summary: self.summary(),
        }
    }

    pub fn sim_settings(&self, window: Window) -> SimSettings {
        SimSettings { window, nx: self.grid, ny: self.grid, burnin: self.burnin }
    }

    pub fn window(&self) -> Result<Window> {
        let [a, b, c, d] = self.window;
        Window::new(a, b, c, d)
    }

    pub fn validate(&self) -> Result<()> {
        self.summary().validate()?;
        self.prior.resolve()?;
        self.window()?;
        if self.grid < 2 {
            return Err(Error::InvalidParameter("grid must be >= 2".into()));
        }
        if !(self.quantile > 0.0 && self.quantile <= 1.0) {
            return Err(Error::InvalidParameter("quantile must lie in (0, 1]".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidParameter("level must lie in (0, 1)".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::InvalidParameter("workers must be >= 1".into()));
        }
        Ok(())
    }

    fn pattern_path(&self) -> Result<&Path> {
        self.pattern.as_deref().ok_or_else(|| Error::InvalidParameter("--pattern is required".into()))
    }
}

#[derive(Debug, Parser)]
#[command(name = "lgcp-strauss", version, about = "Simulation, ABC inference and model checking for LGCP-Strauss processes")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default)]
pub struct GlobalArgs {
    /// Master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (results do not depend on it).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// lgcp-strauss, lgcp or strauss.
    #[arg(long, global = true)]
    pub model: Option<ModelKind>,
    /// Prior preset (p1, p2, p3, oak) or path to a JSON prior.
    #[arg(long, global = true)]
    pub prior: Option<String>,
    /// Minimum point count screen: simulations need n > m.
    #[arg(long, global = true)]
    pub m: Option<usize>,
    #[arg(long, global = true)]
    pub burnin: Option<usize>,
    /// GRF grid cells per side.
    #[arg(long, global = true)]
    pub grid: Option<usize>,
    /// xmin,xmax,ymin,ymax
    #[arg(long, global = true, value_delimiter = ',', num_args = 1, allow_hyphen_values = true)]
    pub window: Option<Vec<f64>>,
    /// Number of r values for L.
    #[arg(long, global = true)]
    pub r_count: Option<usize>,
    /// Largest r as a fraction of the shorter window side.
    #[arg(long, global = true)]
    pub r_fraction: Option<f64>,
    /// Quadrat orders, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    pub quadrats: Option<Vec<usize>>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one pattern from the model.
    Simulate {
        /// Free parameters of the model, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        theta: Option<Vec<f64>>,
    },
    /// Summary vector and functional summaries of a pattern.
    Summarize {
        #[arg(long)]
        pattern: Option<PathBuf>,
    },
    /// Burn-in traces from the empty pattern and from a Poisson pattern.
    Trace {
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        theta: Option<Vec<f64>>,
        #[arg(long)]
        iters: Option<usize>,
    },
    /// Pilot run and projection regressions for an observed pattern.
    Pilot {
        #[arg(long)]
        pattern: Option<PathBuf>,
        #[arg(long)]
        k_pilot: Option<usize>,
    },
    /// Full ABC fit: pilot, projections, tolerance and rejection sampling.
    Fit {
        #[arg(long)]
        pattern: Option<PathBuf>,
        #[arg(long)]
        k_pilot: Option<usize>,
        #[arg(long)]
        k_abc: Option<usize>,
        #[arg(long)]
        quantile: Option<f64>,
        #[arg(long)]
        budget_factor: Option<usize>,
    },
    /// Posterior-predictive combined global envelope test on L and J.
    Envelope {
        #[arg(long)]
        pattern: Option<PathBuf>,
        #[arg(long)]
        posterior: Option<PathBuf>,
        #[arg(long)]
        level: Option<f64>,
    },
    /// Random-forest model choice among LGCP-Strauss, LGCP and Strauss.
    Choose {
        #[arg(long)]
        pattern: Option<PathBuf>,
        #[arg(long)]
        n_reference: Option<usize>,
        #[arg(long)]
        trees: Option<usize>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate { .. } => "simulate",
            Command::Summarize { .. } => "summarize",
            Command::Trace { .. } => "trace",
            Command::Pilot { .. } => "pilot",
            Command::Fit { .. } => "fit",
            Command::Envelope { .. } => "envelope",
            Command::Choose { .. } => "choose",
        }
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

/// Config file (if any) with flags applied on top.
pub fn resolve_config(global: &GlobalArgs, command: &Command) -> Result<RunConfig> {
    let mut cfg = match &global.config {
        Some(p) => serde_json::from_str(&fs::read_to_string(p)?)?,
        None => RunConfig::default(),
    };
    set(&mut cfg.seed, global.seed);
    if global.workers.is_some() {
        cfg.workers = global.workers;
    }
    set(&mut cfg.out, global.out.clone());
    set(&mut cfg.model, global.model);
    if let Some(p) = &global.prior {
        cfg.prior = if Path::new(p).is_file() {
            PriorConfig::Spec(io::read_prior(Path::new(p))?)
        } else {
            PriorConfig::Preset(p.clone())
        };
    }
    set(&mut cfg.m, global.m);
    set(&mut cfg.burnin, global.burnin);
    set(&mut cfg.grid, global.grid);
    if let Some(w) = &global.window {
        cfg.window = w
            .as_slice()
            .try_into()
            .map_err(|_| Error::InvalidParameter("--window needs xmin,xmax,ymin,ymax".into()))?;
    }
    set(&mut cfg.r_count, global.r_count);
    set(&mut cfg.r_fraction, global.r_fraction);
    set(&mut cfg.quadrat_orders, global.quadrats.clone());
    match command {
        Command::Simulate { theta } => {
            if theta.is_some() {
                cfg.theta = theta.clone();
            }
        }
        Command::Summarize { pattern } => {
            if pattern.is_some() {
                cfg.pattern = pattern.clone();
            }
        }
        Command::Trace { theta, iters } => {
            if theta.is_some() {
                cfg.theta = theta.clone();
            }
            set(&mut cfg.trace_iters, *iters);
        }
        Command::Pilot { pattern, k_pilot } => {
            if pattern.is_some() {
                cfg.pattern = pattern.clone();
            }
            set(&mut cfg.k_pilot, *k_pilot);
        }
        Command::Fit { pattern, k_pilot, k_abc, quantile, budget_factor } => {
            if pattern.is_some() {
                cfg.pattern = pattern.clone();
            }
            set(&mut cfg.k_pilot, *k_pilot);
            set(&mut cfg.k_abc, *k_abc);
            set(&mut cfg.quantile, *quantile);
            set(&mut cfg.budget_factor, *budget_factor);
        }
        Command::Envelope { pattern, posterior, level } => {
            if pattern.is_some() {
                cfg.pattern = pattern.clone();
            }
            if posterior.is_some() {
                cfg.posterior = posterior.clone();
            }
            set(&mut cfg.level, *level);
        }
        Command::Choose { pattern, n_reference, trees } => {
            if pattern.is_some() {
                cfg.pattern = pattern.clone();
            }
            set(&mut cfg.n_reference, *n_reference);
            set(&mut cfg.n_trees, *trees);
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// What a subcommand produced, for the manifest.
#[derive(Debug, Default)]
pub struct RunReport {
    pub artifacts: Vec<String>,
    /// Counts of dropped or failed draws, by stage.
    pub exclusions: BTreeMap<String, usize>,
    /// The run ended short of its target (attempt budget exhausted).
    pub shortfall: bool,
}

struct Emitter<'a> {
    dir: &'a Path,
    report: RunReport,
}

impl Emitter<'_> {
    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        io::write_atomic(&self.dir.join(name), contents.as_bytes())?;
        self.report.artifacts.push(name.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write(name, &s)
    }

    fn exclude(&mut self, what: &str, n: usize) {
        self.report.exclusions.insert(what.to_string(), n);
    }
}

fn theta_for(cfg: &RunConfig) -> Result<Vec<f64>> {
    let theta = cfg.theta.clone().ok_or_else(|| {
        Error::InvalidParameter(format!(
            "--theta is required: {} values ({})",
            cfg.model.dim(),
            cfg.model.free_params().iter().map(|p| p.name()).collect::<Vec<_>>().join(",")
        ))
    })?;
    cfg.model.expand(&theta)?;
    Ok(theta)
}

fn read_observed(cfg: &RunConfig) -> Result<PointPattern> {
    io::read_pattern(cfg.pattern_path()?).map_err(|e| e.context("ingest"))
}

#[derive(Serialize)]
struct NamedValue<'a> {
    name: &'a str,
    value: f64,
}

#[derive(Serialize)]
struct ProjectionReport {
    parameter: &'static str,
    intercept: f64,
    lambda: f64,
    support: Vec<String>,
    std_coefficients: Vec<f64>,
    fitted_variance: f64,
}

fn projection_reports(kind: ModelKind, cfg: &SummaryConfig, p: &[crate::regression::ProjectionModel]) -> Vec<ProjectionReport> {
    let names = cfg.names();
    kind.free_params()
        .iter()
        .zip(p)
        .map(|(param, pm)| ProjectionReport {
            parameter: param.name(),
            intercept: pm.intercept,
            lambda: pm.lambda,
            support: pm.support.iter().map(|&j| names[j].clone()).collect(),
            std_coefficients: pm.support.iter().map(|&j| pm.std_coefficients[j]).collect(),
            fitted_variance: pm.fitted_variance,
        })
        .collect()
}

fn cmd_simulate(cfg: &RunConfig, out: &mut Emitter) -> Result<()> {
    let theta = theta_for(cfg)?;
    let settings = cfg.sim_settings(cfg.window()?);
    let mut rng = task_rng(cfg.seed, &[stream::OBSERVED]);
    let x = samplers::simulate_model(cfg.model, &theta, &settings, &mut rng).map_err(|e| e.context("samplers"))?;
    log::info!("simulated {} points", x.len());
    out.write("pattern.csv", &io::pattern_to_csv(&x))
}

fn cmd_summarize(cfg: &RunConfig, out: &mut Emitter) -> Result<()> {
    let x = read_observed(cfg)?;
    let scfg = cfg.summary();
    let t = summaries::summary_vector(&x, &scfg).map_err(|e| e.context("summaries"))?;
    out.write("summary.csv", &io::summary_to_csv(&t, &scfg))?;
    let names = scfg.names();
    let named: Vec<NamedValue> = names.iter().zip(&t.values).map(|(n, &v)| NamedValue { name: n, value: v }).collect();
    out.json("summary.json", &named)?;
    let r = summaries::default_r_grid(x.window(), cfg.r_count, cfg.r_fraction);
    out.write("K.csv", &io::curve_to_csv(&summaries::k_function(&x, &r)?))?;
    out.write("L.csv", &io::curve_to_csv(&summaries::l_function(&x, &r)?))?;
    out.write("F.csv", &io::curve_to_csv(&summaries::empty_space_f(&x, &r)?))?;
    out.write("G.csv", &io::curve_to_csv(&summaries::nearest_neighbour_g(&x, &r)?))?;
    let rj = summaries::j_r_grid(&x, cfg.r_count, cfg.r_fraction);
    out.write("J.csv", &io::curve_to_csv(&summaries::j_of_pattern(&x, &rj)?))
}

fn cmd_trace(cfg: &RunConfig, out: &mut Emitter) -> Result<()> {
    let theta = cfg.model.expand(&theta_for(cfg)?)?;
    let settings = cfg.sim_settings(cfg.window()?);
    let mut rng = task_rng(cfg.seed, &[stream::TRACE]);
    let (empty, poisson) = samplers::burnin_traces(&theta, &settings, cfg.trace_iters, &mut rng)?;
    out.write("trace.csv", &io::traces_to_csv(&[("empty", &empty), ("poisson", &poisson)]))
}

fn cmd_pilot(cfg: &RunConfig, out: &mut Emitter) -> Result<()> {
    let x = read_observed(cfg)?;
    let prior = cfg.prior.resolve()?;
    let scfg = cfg.summary();
    let sim = ModelSimulator { kind: cfg.model, settings: cfg.sim_settings(*x.window()) };
    let t_obs = summaries::summary_vector(&x, &scfg)?;
    let pilot = abc::run_pilot(cfg.model, &prior, &sim, &scfg, cfg.k_pilot, cfg.m, cfg.seed)?;
    out.exclude("pilot_non_finite", pilot.excluded);
    out.exclude("pilot_screen_failures", pilot.screen_failures);
    let projections = abc::fit_projections(&pilot, &t_obs, &cfg.lasso, cfg.seed)?;
    let distances: Vec<f64> = pilot.summaries.iter().map(|t| abc::chi_distance(&projections, t, &t_obs)).collect();
    let epsilon = abc::choose_epsilon(&distances, cfg.quantile)?;

    let names = scfg.names();
    let mut csv: Vec<String> = cfg.model.free_params().iter().map(|p| p.name().to_string()).collect();
    csv.extend(names.iter().cloned());
    csv.push("distance".into());
    let mut text = csv.join(",") + "\n";
    for ((theta, t), d) in pilot.params.iter().zip(&pilot.summaries).zip(&distances) {
        let row: Vec<String> = theta.iter().chain(&t.values).chain(std::iter::once(d)).map(f64::to_string).collect();
        text += &row.join(",");
        text.push('\n');
    }
    out.write("pilot.csv", &text)?;
    out.json("projections.json", &projection_reports(cfg.model, &scfg, &projections))?;
    out.json(
        "pilot.json",
        &serde_json::json!({
            "model": cfg.model,
            "size": pilot.len(),
            "attempts": pilot.attempts,
            "excluded": pilot.excluded,
            "screen_failures": pilot.screen_failures,
            "epsilon": epsilon,
        }),
    )
}

#[derive(Serialize)]
struct MarginalReport {
    #[serde(flatten)]
    summary: abc::MarginalSummary,
    mode: Option<f64>,
    bandwidth: Option<f64>,
}

fn cmd_fit(cfg: &RunConfig, out: &mut Emitter) -> Result<()> {
    let x = read_observed(cfg)?;
    let prior = cfg.prior.resolve()?;
    let settings = cfg.abc_settings();
    let sim = ModelSimulator { kind: cfg.model, settings: cfg.sim_settings(*x.window()) };
    let fit = abc::fit_abc(&x, cfg.model, &prior, &sim, &settings, cfg.seed)?;
    out.exclude("pilot_non_finite", fit.pilot_excluded);
    out.exclude("pilot_screen_failures", fit.pilot_screen_failures);
    out.report.shortfall = fit.posterior.shortfall;
    out.write("posterior.csv", &io::posterior_to_csv(&fit.posterior)?)?;
    out.json("projections.json", &projection_reports(cfg.model, &settings.summary, &fit.projections))?;
    let marginals: Vec<MarginalReport> = if fit.posterior.is_empty() {
        Vec::new()
    } else {
        abc::posterior_summary(&fit.posterior)?
            .into_iter()
            .enumerate()
            .map(|(j, summary)| {
                let kde = kde_1d(&fit.posterior.column(j), Bandwidth::SheatherJones).ok();
                MarginalReport {
                    summary,
                    mode: kde.as_ref().map(|k| k.mode()),
                    bandwidth: kde.as_ref().map(|k| k.bandwidth),
                }
            })
            .collect()
    };
    out.json(
        "fit.json",
        &serde_json::json!({
            "model": cfg.model,
            "epsilon": fit.posterior.epsilon,
            "accepted": fit.posterior.len(),
            "k_abc": cfg.k_abc,
            "attempts": fit.posterior.attempts,
            "shortfall": fit.posterior.shortfall,
            "pilot_size": fit.pilot_size,
            "pilot_excluded": fit.pilot_excluded,
            "pilot_screen_failures": fit.pilot_screen_failures,
            "marginals": marginals,
        }),
    )
}

fn cmd_envelope(cfg: &RunConfig, out: &mut Emitter) -> Result<()> {
    let x = read_observed(cfg)?;
    let path = cfg.posterior.as_deref().ok_or_else(|| Error::InvalidParameter("--posterior is required".into()))?;
    let rows = io::posterior_free_rows(&io::read_posterior(path)?, cfg.model)?;
    let posterior = AbcPosterior { kind: cfg.model, samples: rows, epsilon: f64::NAN, attempts: 0, shortfall: false };
    let sim = ModelSimulator { kind: cfg.model, settings: cfg.sim_settings(*x.window()) };
    let r_l = summaries::default_r_grid(x.window(), cfg.r_count, cfg.r_fraction);
    let r_j = summaries::j_r_grid(&x, cfg.r_count, cfg.r_fraction);
    let l = |p: &PointPattern| Ok(summaries::l_function(p, &r_l)?.minus_identity());
    let j = |p: &PointPattern| summaries::j_of_pattern(p, &r_j);
    let stats: [Statistic; 2] = [&l, &j];
    let (curves, dropped) =
        posterior_predictive_curves(&posterior, &sim, &stats, cfg.seed).map_err(|e| e.context("envelopes"))?;
    out.exclude("predictive_dropped", dropped);
    let sets = [CurveSet::from_curves(&l(&x)?, &curves[0])?, CurveSet::from_curves(&j(&x)?, &curves[1])?];
    let combined = combined_envelope(&sets, cfg.level)?;
    let verdict = |e: &EnvelopeResult| serde_json::json!({ "p_value": e.p_value, "rejected": e.rejected });
    for (name, e) in ["L", "J"].iter().zip(&combined.sets) {
        let mut buf = Vec::new();
        e.write_csv(&mut buf)?;
        out.write(&format!("envelope_{name}.csv"), &String::from_utf8(buf).expect("ascii"))?;
    }
    out.json(
        "verdict.json",
        &serde_json::json!({
            "p_value": combined.p_value,
            "rejected": combined.rejected,
            "level": cfg.level,
            "s": sets[0].s(),
            "dropped": dropped,
            "L": verdict(&combined.sets[0]),
            "J": verdict(&combined.sets[1]),
        }),
    )
}

fn cmd_choose(cfg: &RunConfig, out: &mut Emitter) -> Result<()> {
    let x = read_observed(cfg)?;
    let prior = cfg.prior.resolve()?;
    let scfg = cfg.summary();
    let t_obs = summaries::summary_vector(&x, &scfg)?;
    let table = build_reference_table(
        &ModelKind::ALL,
        &prior,
        &cfg.sim_settings(*x.window()),
        &scfg,
        cfg.n_reference,
        cfg.m,
        cfg.seed,
    )?;
    out.exclude("reference_non_finite", table.excluded);
    out.exclude("reference_screen_failures", table.screen_failures);
    let forest = ForestSettings { n_trees: cfg.n_trees, ..Default::default() };
    let chooser = train_chooser(&table, &forest, cfg.seed).map_err(|e| e.context("modelchoice"))?;
    let choice = choose_model(&chooser, &t_obs)?;
    let votes: BTreeMap<&str, f64> =
        chooser.models.iter().zip(&choice.vote_fractions).map(|(m, &v)| (m.name(), v)).collect();
    out.json(
        "choice.json",
        &serde_json::json!({
            "selected_model": choice.selected,
            "vote_fractions": votes,
            "posterior_probability": choice.posterior_probability,
            "oob_error": chooser.forest.oob_error,
            "n_excluded": table.excluded,
            "tie_broken": choice.tie_broken,
            "degenerate_forest": chooser.forest.degenerate,
        }),
    )
}

fn dispatch(cfg: &RunConfig, command: &Command, out: &mut Emitter) -> Result<()> {
    match command {
        Command::Simulate { .. } => cmd_simulate(cfg, out),
        Command::Summarize { .. } => cmd_summarize(cfg, out),
        Command::Trace { .. } => cmd_trace(cfg, out),
        Command::Pilot { .. } => cmd_pilot(cfg, out),
        Command::Fit { .. } => cmd_fit(cfg, out),
        Command::Envelope { .. } => cmd_envelope(cfg, out),
        Command::Choose { .. } => cmd_choose(cfg, out),
    }
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    subcommand: &'static str,
    status: String,
    seed: u64,
    streams: BTreeMap<&'static str, u64>,
    workers: usize,
    config: &'a RunConfig,
    artifacts: &'a [String],
    exclusions: &'a BTreeMap<String, usize>,
    started_unix: u64,
    finished_unix: u64,
}

fn streams() -> BTreeMap<&'static str, u64> {
    BTreeMap::from([
        ("observed", stream::OBSERVED),
        ("pilot", stream::PILOT),
        ("cv_folds", stream::CV_FOLDS),
        ("rejection", stream::REJECTION),
        ("predictive", stream::PREDICTIVE),
        ("reference", stream::REFERENCE),
        ("forest", stream::FOREST),
        ("trace", stream::TRACE),
    ])
}

/// Run a resolved configuration, writing artifacts and the manifest.
/// Returns the report, or the error after recording it in the manifest.
pub fn execute(cfg: &RunConfig, command: &Command) -> Result<RunReport> {
    let dir = cfg.out.as_path();
    fs::create_dir_all(dir)?;
    let marker = dir.join(PARTIAL_MARKER);
    fs::write(&marker, command.name())?;
    let started = unix_now();
    let workers = cfg.workers.unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("worker pool: {e}")))?;
    let mut out = Emitter { dir, report: RunReport::default() };
    let result = pool.install(|| dispatch(cfg, command, &mut out));
    let status = match &result {
        Ok(()) if out.report.shortfall => "partial: attempt budget exhausted".to_string(),
        Ok(()) => "complete".to_string(),
        Err(e) => format!("failed: {e}"),
    };
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        subcommand: command.name(),
        status,
        seed: cfg.seed,
        streams: streams(),
        workers,
        config: cfg,
        artifacts: &out.report.artifacts,
        exclusions: &out.report.exclusions,
        started_unix: started,
        finished_unix: unix_now(),
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    io::write_atomic(&dir.join("manifest.json"), text.as_bytes())?;
    result?;
    if !out.report.shortfall {
        fs::remove_file(&marker)?;
    }
    Ok(out.report)
}

/// Parse arguments, run, and map the outcome to an exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let cfg = match resolve_config(&cli.global, &cli.command) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INVALID;
        }
    };
    match execute(&cfg, &cli.command) {
        Ok(report) if report.shortfall => {
            eprintln!("warning: attempt budget exhausted; results in {} are partial", cfg.out.display());
            EXIT_BUDGET
        }
        Ok(_) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INVALID
        }
    }
}
