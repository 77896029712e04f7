//! Batch command-line front end.
//!
//! Every command reads one JSON [`RunConfig`], optionally overridden by
//! flags, and writes a single CSV or JSON document to the configured output
//! (stdout by default). Exit codes: 0 success, 1 failed validation, 2 bad
//! configuration, 3 numerical failure.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::generator::{BasisIndex, GeneratorMatrix};
use crate::heston::jacobi_heston_gap;
use crate::implied_vol::bs_price;
use crate::model::{InitialState, ModelParams};
use crate::moments::{hermite_moments, hermite_moments_multi, match_weight, MatchMode};
use crate::payoffs::{call_coeffs, PayoffKind, PayoffSpec};
use crate::pricing::{
    error_bound, likelihood_norm_mc, price_contract, price_cubature, price_series,
    resolve_weights, series_error_bound, CubatureSettings, WeightChoice, DEFAULT_ORDER,
    DEFAULT_ORDER_MULTI, Z_99,
};
use crate::simulate::{mc_price, write_path_csv, SimConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] Error),
    #[error("validation failed: {0}")]
    Validation(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Model(e) => match e {
                Error::InvalidParameter { .. }
                | Error::WeightTooNarrow { .. }
                | Error::DimensionTooLarge(_)
                | Error::InsufficientQuadrature { .. } => EXIT_CONFIG,
                _ => EXIT_NUMERICAL,
            },
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "jacobi", about = "Jacobi stochastic volatility pricer", version)]
pub struct Cli {
    /// Worker threads; 0 lets the runtime decide.
    #[arg(long, global = true, env = "JACOBI_THREADS", default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct Overrides {
    /// JSON run configuration.
    #[arg(long, short)]
    pub config: PathBuf,
    /// Output file; stdout when absent.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Truncation order.
    #[arg(long)]
    pub order: Option<usize>,
    /// Monte Carlo seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Series or cubature price as JSON.
    Price(Overrides),
    /// CSV of (k, price, iv) over the configured strikes.
    Smile(Overrides),
    /// Hermite moments as CSV.
    Moments(Overrides),
    /// Forward-start price as JSON.
    ForwardStart(Overrides),
    /// Asian cubature price as JSON.
    Asian(Overrides),
    /// Monte Carlo price as JSON.
    Simulate(Overrides),
    /// Wall-time CSV per truncation order.
    Bench(Overrides),
    /// Jacobi-to-Heston put gap along a v_max ladder, as CSV.
    HestonCompare(Overrides),
    /// Oracle checks; exits 1 when any fails.
    Validate(Overrides),
}

impl Command {
    fn overrides(&self) -> &Overrides {
        match self {
            Command::Price(o)
            | Command::Smile(o)
            | Command::Moments(o)
            | Command::ForwardStart(o)
            | Command::Asian(o)
            | Command::Simulate(o)
            | Command::Bench(o)
            | Command::HestonCompare(o)
            | Command::Validate(o) => o,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSettings {
    pub paths: usize,
    #[serde(default = "default_steps")]
    pub steps_per_unit_time: usize,
}

fn default_steps() -> usize {
    250
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorBoundSettings {
    /// Paths of the likelihood-norm estimator; the bound uses its upper 99% limit.
    pub paths: usize,
    #[serde(default = "default_steps")]
    pub steps_per_unit_time: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HestonSettings {
    #[serde(default = "default_ladder")]
    pub v_max_ladder: Vec<f64>,
    #[serde(default = "default_heston_v_min")]
    pub v_min: f64,
    #[serde(default = "default_heston_order")]
    pub order: usize,
}

fn default_ladder() -> Vec<f64> {
    vec![0.16, 0.32, 0.64, 1.28]
}
fn default_heston_v_min() -> f64 {
    1e-6
}
fn default_heston_order() -> usize {
    120
}

impl Default for HestonSettings {
    fn default() -> Self {
        HestonSettings {
            v_max_ladder: default_ladder(),
            v_min: default_heston_v_min(),
            order: default_heston_order(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSettings {
    #[serde(default = "default_bench_orders")]
    pub orders: Vec<usize>,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
}

fn default_bench_orders() -> Vec<usize> {
    (1..=10).map(|i| 5 * i).collect()
}
fn default_repeats() -> usize {
    3
}

impl Default for BenchSettings {
    fn default() -> Self {
        BenchSettings {
            orders: default_bench_orders(),
            repeats: default_repeats(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateSettings {
    #[serde(default = "default_validate_paths")]
    pub mc_paths: usize,
    /// Multiplies every threshold.
    #[serde(default = "one")]
    pub tolerance_scale: f64,
    #[serde(default = "default_true")]
    pub heston: bool,
}

fn default_validate_paths() -> usize {
    100_000
}
fn one() -> f64 {
    1.0
}
fn default_true() -> bool {
    true
}

impl Default for ValidateSettings {
    fn default() -> Self {
        ValidateSettings {
            mc_paths: default_validate_paths(),
            tolerance_scale: 1.0,
            heston: true,
        }
    }
}

/// One batch run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelParams,
    pub initial: InitialState,
    #[serde(default)]
    pub payoff: Option<PayoffSpec>,
    /// Log strikes of the smile.
    #[serde(default)]
    pub strikes: Vec<f64>,
    #[serde(default)]
    pub order: Option<usize>,
    #[serde(default)]
    pub weight: WeightChoice,
    #[serde(default)]
    pub cubature: CubatureSettings,
    #[serde(default)]
    pub simulation: Option<SimulationSettings>,
    #[serde(default)]
    pub error_bound: Option<ErrorBoundSettings>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Per-step CSV of path 0 for `simulate`.
    #[serde(default)]
    pub path_output: Option<PathBuf>,
    #[serde(default)]
    pub heston: HestonSettings,
    #[serde(default)]
    pub bench: BenchSettings,
    #[serde(default)]
    pub validate: ValidateSettings,
}

impl RunConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.initial
            .validate(&cfg.model)
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    fn apply(&mut self, o: &Overrides) {
        if let Some(out) = &o.output {
            self.output = Some(out.clone());
        }
        if o.order.is_some() {
            self.order = o.order;
        }
        if o.seed.is_some() {
            self.seed = o.seed;
        }
    }

    fn payoff(&self) -> CliResult<PayoffSpec> {
        let mut p = self
            .payoff
            .clone()
            .ok_or_else(|| CliError::Config("`payoff` is required".into()))?;
        // discounting always follows the model rate
        if p.rate != 0.0 && p.rate != self.model.r() {
            return Err(CliError::Config(format!(
                "payoff rate {} differs from model rate {}",
                p.rate,
                self.model.r()
            )));
        }
        p.rate = self.model.r();
        p.validate()?;
        Ok(p)
    }

    fn order_for(&self, payoff: &PayoffSpec) -> usize {
        let multi = payoff.dates().len() > 1;
        self.order
            .unwrap_or(if multi { DEFAULT_ORDER_MULTI } else { DEFAULT_ORDER })
    }

    fn seed(&self) -> CliResult<u64> {
        self.seed
            .ok_or_else(|| CliError::Config("`seed` is required for Monte Carlo".into()))
    }

    fn check_outputs(&self) -> CliResult<()> {
        for p in [&self.output, &self.path_output].into_iter().flatten() {
            let dir = match p.parent() {
                Some(d) if !d.as_os_str().is_empty() => d,
                _ => Path::new("."),
            };
            let meta = std::fs::metadata(dir)
                .map_err(|e| CliError::Config(format!("{}: {e}", dir.display())))?;
            if !meta.is_dir() || meta.permissions().readonly() {
                return Err(CliError::Config(format!(
                    "{} is not a writable directory",
                    dir.display()
                )));
            }
        }
        Ok(())
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> CliResult<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    let o = cli.command.overrides();
    let mut cfg = RunConfig::load(&o.config)?;
    cfg.apply(o);
    cfg.check_outputs()?;
    pool.install(|| dispatch(&cli.command, &cfg))
}

fn dispatch(cmd: &Command, cfg: &RunConfig) -> CliResult<()> {
    let mut buf = Vec::new();
    let outcome = match cmd {
        Command::Price(_) => cmd_price(cfg, &mut buf),
        Command::Smile(_) => cmd_smile(cfg, &mut buf),
        Command::Moments(_) => cmd_moments(cfg, &mut buf),
        Command::ForwardStart(_) => cmd_forward_start(cfg, &mut buf),
        Command::Asian(_) => cmd_asian(cfg, &mut buf),
        Command::Simulate(_) => cmd_simulate(cfg, &mut buf),
        Command::Bench(_) => cmd_bench(cfg, &mut buf),
        Command::HestonCompare(_) => cmd_heston_compare(cfg, &mut buf),
        Command::Validate(_) => cmd_validate(cfg, &mut buf),
    };
    // the validation report is written even when a check fails
    if outcome.is_ok() || matches!(outcome, Err(CliError::Validation(_))) {
        emit(cfg.output.as_deref(), &buf)?;
    }
    outcome
}

fn emit(path: Option<&Path>, bytes: &[u8]) -> CliResult<()> {
    let io = |e: std::io::Error| CliError::Model(Error::Io(e.to_string()));
    match path {
        Some(p) => {
            let mut f = BufWriter::new(File::create(p).map_err(io)?);
            f.write_all(bytes).map_err(io)?;
            f.flush().map_err(io)
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes).map_err(io)?;
            out.flush().map_err(io)
        }
    }
}

fn write_json<T: Serialize>(out: &mut Vec<u8>, value: &T) -> CliResult<()> {
    serde_json::to_writer_pretty(&mut *out, value)
        .map_err(|e| CliError::Model(Error::Io(e.to_string())))?;
    out.push(b'\n');
    Ok(())
}

fn fmt(v: f64) -> String {
    format!("{v:.17e}")
}

pub fn cmd_price(cfg: &RunConfig, out: &mut Vec<u8>) -> CliResult<()> {
    let payoff = cfg.payoff()?;
    let order = cfg.order_for(&payoff);
    let mut res = price_contract(
        &cfg.model,
        &cfg.initial,
        &payoff,
        &cfg.weight,
        order,
        &cfg.cubature,
    )?;
    if let Some(eb) = cfg.error_bound {
        let w = res.diagnostics.weights[0];
        let (est, se) = likelihood_norm_mc(
            &cfg.model,
            &cfg.initial,
            payoff.maturity,
            &w,
            eb.paths,
            cfg.seed()?,
            eb.steps_per_unit_time,
        )?;
        let upper = est + Z_99 * se;
        res.error_bound = Some(series_error_bound(
            &cfg.model,
            &cfg.initial,
            &payoff,
            &w,
            order,
            upper,
        )?);
        res.diagnostics.moments_norm_sq = Some(upper);
    }
    write_json(out, &res)
}

pub fn cmd_smile(cfg: &RunConfig, out: &mut Vec<u8>) -> CliResult<()> {
    let base = cfg.payoff()?;
    if !matches!(base.kind, PayoffKind::Call | PayoffKind::Put) {
        return Err(CliError::Config("smile needs a call or put payoff".into()));
    }
    if cfg.strikes.is_empty() {
        return Err(CliError::Config("smile needs `strikes`".into()));
    }
    let order = cfg.order_for(&base);
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut ivs = Vec::new();
    w.write_record(["k", "price", "iv"]).map_err(Error::from)?;
    for &k in &cfg.strikes {
        let payoff = PayoffSpec { log_strike: k, ..base.clone() };
        let r = price_contract(&cfg.model, &cfg.initial, &payoff, &cfg.weight, order, &cfg.cubature)?;
        let iv = r.iv.map(fmt).unwrap_or_default();
        if let Some(v) = r.iv {
            ivs.push(v);
        }
        w.write_record([fmt(k), fmt(r.price), iv]).map_err(Error::from)?;
    }
    let ok = crate::implied_vol::iv_bounds_check(&ivs, &cfg.model);
    w.write_record(["iv_bounds_check", "", if ok { "pass" } else { "fail" }])
        .map_err(Error::from)?;
    out.extend(w.into_inner().map_err(|e| Error::Io(e.to_string()))?);
    Ok(())
}

pub fn cmd_moments(cfg: &RunConfig, out: &mut Vec<u8>) -> CliResult<()> {
    let payoff = cfg.payoff()?;
    let order = cfg.order_for(&payoff);
    let grid = payoff.dates();
    let mut warnings = Vec::new();
    let weights = resolve_weights(&cfg.model, &cfg.initial, &grid, &cfg.weight, &mut warnings)?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    if grid.len() == 1 {
        hermite_moments(&cfg.model, &cfg.initial, &weights[0], grid[0], order)?.write_csv(&mut *out)?;
    } else {
        hermite_moments_multi(&cfg.model, &cfg.initial, &grid, &weights, order)?.write_csv(&mut *out)?;
    }
    Ok(())
}

pub fn cmd_forward_start(cfg: &RunConfig, out: &mut Vec<u8>) -> CliResult<()> {
    let payoff = cfg.payoff()?;
    if !matches!(payoff.kind, PayoffKind::ForwardStart | PayoffKind::ForwardStartReturn) {
        return Err(CliError::Config("forward-start needs a forward_start payoff".into()));
    }
    cmd_price(cfg, out)
}

pub fn cmd_asian(cfg: &RunConfig, out: &mut Vec<u8>) -> CliResult<()> {
    let payoff = cfg.payoff()?;
    if !matches!(payoff.kind, PayoffKind::AsianFixed | PayoffKind::AsianFloating) {
        return Err(CliError::Config("asian needs an asian_fixed or asian_floating payoff".into()));
    }
    let order = cfg.order_for(&payoff);
    let grid = payoff.dates();
    let mut warnings = Vec::new();
    let weights = resolve_weights(&cfg.model, &cfg.initial, &grid, &cfg.weight, &mut warnings)?;
    let l = hermite_moments_multi(&cfg.model, &cfg.initial, &grid, &weights, order)?;
    let mut res = price_cubature(&payoff, cfg.initial.x0, &l, &cfg.cubature, order)?;
    res.result.diagnostics.warnings.extend(warnings);
    write_json(out, &res)
}

#[derive(Serialize)]
struct SimulationReport {
    kind: PayoffKind,
    price: f64,
    std_error: f64,
    paths: usize,
    seed: u64,
    steps_per_unit_time: usize,
}

pub fn cmd_simulate(cfg: &RunConfig, out: &mut Vec<u8>) -> CliResult<()> {
    let payoff = cfg.payoff()?;
    let sim = cfg
        .simulation
        .ok_or_else(|| CliError::Config("`simulation` is required".into()))?;
    let seed = cfg.seed()?;
    let sc = SimConfig::new(sim.paths, seed).with_steps(sim.steps_per_unit_time);
    let est = mc_price(&payoff, &cfg.model, &cfg.initial, &sc)?;
    if let Some(p) = &cfg.path_output {
        let f = File::create(p).map_err(Error::from)?;
        write_path_csv(&cfg.model, &cfg.initial, &payoff.dates(), &sc, 0, BufWriter::new(f))?;
    }
    write_json(
        out,
        &SimulationReport {
            kind: payoff.kind,
            price: est.mean,
            std_error: est.std_error,
            paths: sim.paths,
            seed,
            steps_per_unit_time: sim.steps_per_unit_time,
        },
    )
}

fn best_time<T>(repeats: usize, mut f: impl FnMut() -> CliResult<T>) -> CliResult<f64> {
    let mut best = f64::INFINITY;
    for _ in 0..repeats.max(1) {
        let t0 = Instant::now();
        f()?;
        best = best.min(t0.elapsed().as_secs_f64());
    }
    Ok(best)
}

pub fn cmd_bench(cfg: &RunConfig, out: &mut Vec<u8>) -> CliResult<()> {
    let payoff = cfg.payoff.clone().unwrap_or(PayoffSpec {
        kind: PayoffKind::Call,
        log_strike: 0.0,
        maturity: 1.0 / 12.0,
        grid: Vec::new(),
        rate: cfg.model.r(),
    });
    let t = payoff.maturity;
    let w = resolve_weights(&cfg.model, &cfg.initial, &[t], &cfg.weight, &mut Vec::new())?[0];
    let reps = cfg.bench.repeats;
    let mut csv = csv::Writer::from_writer(Vec::new());
    csv.write_record(["n", "generator_s", "moments_s", "coefficients_s"])
        .map_err(Error::from)?;
    for &n in &cfg.bench.orders {
        let g = best_time(reps, || {
            let basis = BasisIndex::new(n)?;
            Ok(GeneratorMatrix::build(&cfg.model, &w, &basis))
        })?;
        let m = best_time(reps, || Ok(hermite_moments(&cfg.model, &cfg.initial, &w, t, n)?))?;
        let c = best_time(reps, || Ok(call_coeffs(&w, payoff.log_strike, payoff.rate, t, n)?))?;
        csv.write_record([n.to_string(), fmt(g), fmt(m), fmt(c)])
            .map_err(Error::from)?;
    }
    out.extend(csv.into_inner().map_err(|e| Error::Io(e.to_string()))?);
    Ok(())
}

pub fn cmd_heston_compare(cfg: &RunConfig, out: &mut Vec<u8>) -> CliResult<()> {
    let h = &cfg.heston;
    let (k, t) = match &cfg.payoff {
        Some(p) => (p.log_strike, p.maturity),
        None => (0.0, 1.0 / 12.0),
    };
    let first = *h
        .v_max_ladder
        .first()
        .ok_or_else(|| CliError::Config("empty v_max_ladder".into()))?;
    let base = cfg.model.with_bounds(h.v_min, first)?;
    let rungs = jacobi_heston_gap(&base, &cfg.initial, &h.v_max_ladder, k, t, h.order)?;
    let mut csv = csv::Writer::from_writer(Vec::new());
    csv.write_record(["v_max", "jacobi", "heston", "gap", "weight_mu", "weight_sigma"])
        .map_err(Error::from)?;
    for r in rungs {
        csv.write_record([
            fmt(r.v_max),
            fmt(r.jacobi),
            fmt(r.heston),
            fmt(r.gap),
            fmt(r.weight.mu),
            fmt(r.weight.sigma),
        ])
        .map_err(Error::from)?;
    }
    out.extend(csv.into_inner().map_err(|e| Error::Io(e.to_string()))?);
    Ok(())
}

/// One line of the validation report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub observed: f64,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub pass: bool,
    pub checks: Vec<Check>,
}

fn check(name: &str, observed: f64, threshold: f64) -> Check {
    Check {
        name: name.into(),
        observed,
        threshold,
        pass: observed <= threshold,
    }
}

/// Runs the oracle checks. Reference checks use fixed reference setups; the
/// remaining ones use the configured model and initial state.
pub fn validation_report(cfg: &RunConfig) -> CliResult<ValidationReport> {
    let s = cfg.validate.tolerance_scale;
    let mut checks = Vec::new();
    let t = cfg.payoff.as_ref().map_or(1.0 / 12.0, |p| p.maturity);

    // reference ATM implied volatility at N = 30
    let rp = ModelParams::reference();
    let rs = InitialState::new(&rp, 0.04, 0.0)?;
    let call = PayoffSpec::european(PayoffKind::Call, 0.0, 1.0 / 12.0, 0.0)?;
    let r30 = price_contract(&rp, &rs, &call, &WeightChoice::Matched, 30, &CubatureSettings::default())?;
    checks.push(check(
        "reference_atm_iv_n30",
        (r30.iv.unwrap_or(f64::NAN) - 0.1923).abs(),
        2e-4 * s,
    ));

    // Black-Scholes degenerate case
    let bp = rp.with_bounds(rp.v_min(), rp.theta())?;
    let bs0 = InitialState::new(&bp, rp.theta(), 0.0)?;
    let mut worst: f64 = 0.0;
    for k in [-0.1, 0.0, 0.1] {
        let c = PayoffSpec::european(PayoffKind::Call, k, 1.0 / 12.0, 0.0)?;
        let r = price_contract(&bp, &bs0, &c, &WeightChoice::Matched, 40, &CubatureSettings::default())?;
        let exact = bs_price(1.0, k, 0.0, 0.0, 1.0 / 12.0, rp.theta().sqrt());
        worst = worst.max((r.price - exact).abs());
    }
    checks.push(check("black_scholes_degenerate_n40", worst, 1e-8 * s));

    // moment identities under the configured model
    let (m, s0) = (&cfg.model, &cfg.initial);
    let w = resolve_weights(m, s0, &[t], &WeightChoice::Matched, &mut Vec::new())?[0];
    let l = hermite_moments(m, s0, &w, t, 50)?;
    checks.push(check("moment_l0", (l.values()[0] - 1.0).abs(), 1e-12 * s));
    if match_weight(m, s0, t, MatchMode::MeanVariance).is_ok() {
        let worst = l.values()[1].abs().max(l.values()[2].abs());
        checks.push(check("moment_l1_l2_matched", worst, 1e-10 * s));
    }

    // truncation bound with the Monte Carlo norm
    let seed = cfg.seed()?;
    let paths = cfg.validate.mc_paths;
    let f = call_coeffs(&w, 0.0, m.r(), t, 50)?;
    let series = price_series(&f, &l, 50)?;
    let (est, se) = likelihood_norm_mc(m, s0, t, &w, paths.max(1000), seed, 250)?;
    let mut excess = f64::NEG_INFINITY;
    for n in 0..=30 {
        let b = error_bound(&f, &l, est + Z_99 * se, n)?;
        excess = excess.max((series.price - series.partial_sums[n]).abs() - b);
    }
    checks.push(check("error_bound_holds_n30", excess, 0.0));

    // series against Monte Carlo, in standard errors
    let sc = SimConfig::new(paths.max(1), seed);
    let atm = PayoffSpec::european(PayoffKind::Call, 0.0, t, m.r())?;
    let mc = mc_price(&atm, m, s0, &sc)?;
    let r30 = price_series(&f, &l, 30)?.price;
    checks.push(check(
        "series_vs_monte_carlo_call",
        (r30 - mc.mean).abs() / mc.std_error.max(f64::MIN_POSITIVE),
        3.0 * s,
    ));

    // implied volatilities stay inside [sqrt(v_min), sqrt(v_max)]
    let lo = m.v_min().sqrt();
    let hi = m.v_max().sqrt();
    let mut outside: f64 = 0.0;
    for k in [-0.2, -0.1, 0.0, 0.1, 0.2] {
        for kind in [PayoffKind::Call, PayoffKind::Put] {
            let p = PayoffSpec::european(kind, k, t, m.r())?;
            let r = price_contract(m, s0, &p, &WeightChoice::Matched, 30, &CubatureSettings::default())?;
            if let Some(iv) = r.iv {
                outside = outside.max(lo - iv).max(iv - hi);
            }
        }
    }
    checks.push(check("iv_bounds", outside, 1e-6 * s));

    if cfg.validate.heston {
        let h = &cfg.heston;
        let base = m.with_bounds(h.v_min, h.v_max_ladder[0])?;
        let rungs = jacobi_heston_gap(&base, s0, &h.v_max_ladder, 0.0, t, h.order)?;
        let rise = rungs
            .windows(2)
            .map(|w| w[1].gap - w[0].gap)
            .fold(f64::NEG_INFINITY, f64::max);
        checks.push(check("heston_gap_nonincreasing", rise, 1e-5 * s));
        checks.push(check(
            "heston_final_gap",
            rungs.last().map_or(f64::NAN, |r| r.gap),
            1e-3 * s,
        ));
    }

    let pass = checks.iter().all(|c| c.pass);
    Ok(ValidationReport { pass, checks })
}

pub fn cmd_validate(cfg: &RunConfig, out: &mut Vec<u8>) -> CliResult<()> {
    let report = validation_report(cfg)?;
    write_json(out, &report)?;
    if report.pass {
        Ok(())
    } else {
        let failed: Vec<&str> = report
            .checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| c.name.as_str())
            .collect();
        Err(CliError::Validation(failed.join(", ")))
    }
}
