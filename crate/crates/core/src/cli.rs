//! The `diec` command line: rate certificates, curve sweeps, protocol simulation and
//! verification reports.
//!
//! Every command accepts its parameters as flags or from a JSON object passed with
//! `--config`; flags win over file values. Exit codes are 0 on success, 1 on invalid
//! input and 2 when a verification command finds a violation.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::chsh::{
    beta_from_omega, deterministic_strategy, optimal_strategy, BETA_MAX, OMEGA_CLASSICAL, OMEGA_MAX,
};
use crate::entropy::{bell_diag_entropy_bound, brute_force_max_entropy, g, optimal_spectrum};
use crate::optimize::linspace;
use crate::quantum::{
    bell_diagonal_entries, bell_off_diagonal, random_two_qubit_state, twirl, BellState,
    TwoQubitState,
};
use crate::rates::{
    asymptotic_rate, delta_for_completeness, optimize_curve, optimize_parameters, optimize_with,
    ErrorTargets, FixedParameters, GradientMode, ProtocolParams, RateCertificate,
};
use crate::reference::{finite_n_curve, ASYMPTOTIC_RATE, CONDITIONAL_BOUND, FINITE_N_RATES};
use crate::sim::{
    estimate_abort_probability, format_transcript, run_protocol, trial_seed,
    ClassicalDeterministic, DeviceModel, HonestIid, MemorySwitcher, Mode, NoisyDrift, RunOptions,
    SwitchRule,
};

pub const CURVE_HEADER: &str = "n,omega_exp,rate_raw,rate,gamma,eps_smo,delta_est,eta_opt";
pub const ENTROPY_CURVE_HEADER: &str = "omega,beta,conditional_bound";
pub const MODELS: &[&str] = &[
    "honest-iid",
    "classical-deterministic",
    "memory-switcher",
    "noisy-drift",
];

/// Largest allowed deviation between the brute-force and analytic entropy bounds.
pub const BOUND_TOLERANCE: f64 = 1e-3;
pub const TWIRL_OFF_DIAGONAL_TOL: f64 = 1e-12;
pub const TWIRL_FIXED_POINT_TOL: f64 = 1e-14;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] crate::Error),

    #[error("{0}")]
    Usage(String),

    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("invalid config file {path}: {source}")]
    Config {
        path: PathBuf,
        source: serde_json::Error,
    },

    #[error("verification failed: {0}")]
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Verification(_) => 2,
            _ => 1,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Debug, Parser)]
#[command(
    name = "diec",
    version,
    about = "Device-independent entanglement certification from CHSH statistics"
)]
pub struct Cli {
    /// Master seed for simulations and random test states.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// JSON file with parameter values; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Gradient term in the second-order correction: as-printed or eat-strict.
    #[arg(long, global = true, value_parser = parse_gradient_mode)]
    mode: Option<GradientMode>,

    /// Also emit full-precision `*_exact` values.
    #[arg(long, global = true)]
    exact: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Certified distillable-entanglement rate for one parameter set.
    Rate(RateArgs),
    /// Rate curves over grids of n and expected winning probability.
    Curve(CurveArgs),
    /// Conditional-entropy bound as a function of the winning probability.
    EntropyCurve(EntropyCurveArgs),
    /// Monte Carlo runs of the protocol against a device model.
    Simulate(SimulateArgs),
    /// Brute-force check of the Bell-diagonal entropy bound.
    VerifyBound(VerifyBoundArgs),
    /// Structural checks of the twirl on random two-qubit states.
    VerifyTwirl(VerifyTwirlArgs),
}

#[derive(Debug, Args)]
struct RateArgs {
    #[arg(long, value_parser = parse_count)]
    n: Option<u64>,
    #[arg(long)]
    omega_exp: Option<f64>,
    #[arg(long)]
    eps_dist: Option<f64>,
    #[arg(long)]
    eps_snd: Option<f64>,
    #[arg(long)]
    eps_cmp: Option<f64>,
    /// Fix the test probability instead of optimising it.
    #[arg(long)]
    gamma: Option<f64>,
    /// Fix the smoothing parameter instead of optimising it.
    #[arg(long)]
    eps_smo: Option<f64>,
    /// Fix the estimation tolerance instead of deriving it from eps_cmp.
    #[arg(long)]
    delta_est: Option<f64>,
}

#[derive(Debug, Args)]
struct CurveArgs {
    /// Comma-separated list of round counts.
    #[arg(long, value_delimiter = ',', value_parser = parse_count)]
    n_values: Vec<u64>,
    /// Comma-separated list of expected winning probabilities.
    #[arg(long, value_delimiter = ',')]
    omegas: Vec<f64>,
    /// Append the n → ∞ curve.
    #[arg(long)]
    asymptotic: bool,
    /// Emit only the n → ∞ curve.
    #[arg(long)]
    asymptotic_only: bool,
    /// per-curve (one test probability per n) or per-point.
    #[arg(long)]
    gamma_policy: Option<GammaPolicy>,
    #[arg(long)]
    eps_dist: Option<f64>,
    #[arg(long)]
    eps_snd: Option<f64>,
    #[arg(long)]
    eps_cmp: Option<f64>,
}

#[derive(Debug, Args)]
struct EntropyCurveArgs {
    #[arg(long, value_delimiter = ',')]
    omegas: Vec<f64>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// One of honest-iid, classical-deterministic, memory-switcher, noisy-drift.
    #[arg(long)]
    model: Option<String>,
    #[arg(long, value_parser = parse_count)]
    n: Option<u64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    omega_exp: Option<f64>,
    #[arg(long)]
    delta_est: Option<f64>,
    /// Derive delta_est from this completeness target when delta_est is absent.
    #[arg(long)]
    eps_cmp: Option<f64>,
    #[arg(long)]
    trials: Option<u64>,
    /// standard or modified.
    #[arg(long)]
    protocol: Option<String>,
    /// Werner noise of the honest source.
    #[arg(long)]
    xi: Option<f64>,
    /// Noise added per round by the drift model.
    #[arg(long)]
    xi_step: Option<f64>,
    /// Four output bits a(0) a(1) b(0) b(1) of the classical model, e.g. 0000.
    #[arg(long)]
    table: Option<String>,
    /// even-rounds, test-parity or after-loss.
    #[arg(long)]
    switch_rule: Option<String>,
    /// Where to write the transcript of trial 0.
    #[arg(long)]
    transcript: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VerifyBoundArgs {
    #[arg(long, value_delimiter = ',')]
    betas: Vec<f64>,
    #[arg(long)]
    grid_step: Option<f64>,
}

#[derive(Debug, Args)]
struct VerifyTwirlArgs {
    /// Number of random states.
    #[arg(long)]
    states: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum GammaPolicy {
    #[default]
    PerCurve,
    PerPoint,
}

/// Values read from `--config`; every field is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub mode: Option<GradientMode>,
    pub exact: Option<bool>,
    pub n: Option<f64>,
    pub n_values: Option<Vec<f64>>,
    pub omega_exp: Option<f64>,
    pub omegas: Option<Vec<f64>>,
    pub eps_dist: Option<f64>,
    pub eps_snd: Option<f64>,
    pub eps_cmp: Option<f64>,
    pub gamma: Option<f64>,
    pub eps_smo: Option<f64>,
    pub delta_est: Option<f64>,
    pub asymptotic: Option<bool>,
    pub asymptotic_only: Option<bool>,
    pub gamma_policy: Option<GammaPolicy>,
    pub model: Option<String>,
    pub trials: Option<u64>,
    pub protocol: Option<String>,
    pub xi: Option<f64>,
    pub xi_step: Option<f64>,
    pub table: Option<String>,
    pub switch_rule: Option<String>,
    pub transcript: Option<PathBuf>,
    pub betas: Option<Vec<f64>>,
    pub grid_step: Option<f64>,
    pub states: Option<usize>,
}

fn parse_gradient_mode(s: &str) -> std::result::Result<GradientMode, String> {
    s.parse().map_err(|e: crate::Error| e.to_string())
}

fn count_from_f64(v: f64) -> Option<u64> {
    (v.is_finite() && v >= 1.0 && v.fract() == 0.0 && v <= u64::MAX as f64).then_some(v as u64)
}

/// Accepts plain integers and exact scientific notation such as `1e10`.
pub fn parse_count(s: &str) -> std::result::Result<u64, String> {
    if let Ok(v) = s.parse::<u64>() {
        if v >= 1 {
            return Ok(v);
        }
    }
    s.parse::<f64>()
        .ok()
        .and_then(count_from_f64)
        .ok_or_else(|| format!("'{s}' is not a positive integer"))
}

fn config_count(name: &str, v: f64) -> CliResult<u64> {
    count_from_f64(v).ok_or_else(|| {
        usage(format!(
            "config value {name} = {v} is not a positive integer"
        ))
    })
}

/// Rounds to 6 significant digits and prints the shortest decimal form.
pub fn sig6(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let rounded: f64 = format!("{x:.5e}").parse().unwrap_or(x);
    if rounded == 0.0 {
        "0".into()
    } else {
        format!("{rounded}")
    }
}

fn num6(x: f64) -> Value {
    let rounded: f64 = format!("{x:.5e}").parse().unwrap_or(x);
    serde_json::Number::from_f64(rounded)
        .map(Value::Number)
        .unwrap_or(Value::Null)
}

fn num_exact(x: f64) -> Value {
    serde_json::Number::from_f64(x)
        .map(Value::Number)
        .unwrap_or(Value::Null)
}

/// Ordered JSON object whose real-valued entries are rounded, with optional `*_exact` twins.
struct Record {
    map: Map<String, Value>,
    exact: bool,
}

impl Record {
    fn new(exact: bool) -> Self {
        Self {
            map: Map::new(),
            exact,
        }
    }

    fn real(&mut self, key: &str, x: f64) -> &mut Self {
        self.map.insert(key.into(), num6(x));
        if self.exact {
            self.map.insert(format!("{key}_exact"), num_exact(x));
        }
        self
    }

    fn value(&mut self, key: &str, v: impl Into<Value>) -> &mut Self {
        self.map.insert(key.into(), v.into());
        self
    }

    fn into_value(self) -> Value {
        Value::Object(self.map)
    }
}

fn to_json(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values serialise");
    s.push('\n');
    s
}

struct Context {
    seed: u64,
    out: Option<PathBuf>,
    mode: GradientMode,
    exact: bool,
    config: RunConfig,
}

impl Context {
    fn targets(
        &self,
        eps_dist: Option<f64>,
        eps_snd: Option<f64>,
        eps_cmp: Option<f64>,
    ) -> CliResult<ErrorTargets> {
        let d = ErrorTargets::default();
        Ok(ErrorTargets::new(
            eps_dist.or(self.config.eps_dist).unwrap_or(d.eps_dist),
            eps_snd.or(self.config.eps_snd).unwrap_or(d.eps_snd),
            eps_cmp.or(self.config.eps_cmp).unwrap_or(d.eps_cmp),
        )?)
    }

    fn emit(&self, text: &str, stdout: &mut dyn Write) -> CliResult<()> {
        match &self.out {
            Some(path) => write_file(path, text),
            None => stdout
                .write_all(text.as_bytes())
                .map_err(|source| CliError::Write {
                    path: PathBuf::from("<stdout>"),
                    source,
                }),
        }
    }

    /// Full-precision sidecar for CSV outputs, written next to `--out`.
    fn emit_exact_sidecar(&self, rows: Vec<Value>) -> CliResult<()> {
        if !self.exact {
            return Ok(());
        }
        let Some(out) = &self.out else {
            return Err(usage(
                "--exact with a CSV command needs --out for the .exact.json sidecar",
            ));
        };
        let mut name = out.as_os_str().to_owned();
        name.push(".exact.json");
        write_file(Path::new(&name), &to_json(&Value::Array(rows)))
    }
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

fn load_config(path: &Path) -> CliResult<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| CliError::Config {
        path: path.to_path_buf(),
        source,
    })
}

/// Parses `args` (including the program name) and runs the command, writing to `stdout`
/// unless `--out` is given.
pub fn run<I, T>(args: I, stdout: &mut dyn Write) -> CliResult<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{e}");
                    Ok(())
                }
                _ => Err(usage(e.to_string().trim_end().to_string())),
            };
        }
    };
    let config = match &cli.config {
        Some(p) => load_config(p)?,
        None => RunConfig::default(),
    };
    let ctx = Context {
        seed: cli.seed.or(config.seed).unwrap_or(0),
        out: cli.out.clone().or_else(|| config.out.clone()),
        mode: cli.mode.or(config.mode).unwrap_or_default(),
        exact: cli.exact || config.exact.unwrap_or(false),
        config,
    };
    match cli.command {
        Command::Rate(a) => cmd_rate(&ctx, a, stdout),
        Command::Curve(a) => cmd_curve(&ctx, a, stdout),
        Command::EntropyCurve(a) => cmd_entropy_curve(&ctx, a, stdout),
        Command::Simulate(a) => cmd_simulate(&ctx, a, stdout),
        Command::VerifyBound(a) => cmd_verify_bound(&ctx, a, stdout),
        Command::VerifyTwirl(a) => cmd_verify_twirl(&ctx, a, stdout),
    }
}

/// Process entry point used by the `diec` binary.
pub fn main() -> ExitCode {
    let mut stdout = std::io::stdout().lock();
    match run(std::env::args_os(), &mut stdout) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = stdout.flush();
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn certificate_record(c: &RateCertificate, exact: bool) -> Value {
    let mut r = Record::new(exact);
    r.value("n", c.params.n)
        .real("omega_exp", c.params.omega_exp)
        .real("gamma", c.params.gamma)
        .real("delta_est", c.params.delta_est)
        .real("eps_dist", c.errors.eps_dist)
        .real("eps_snd", c.errors.eps_snd)
        .real("eps_cmp", c.errors.eps_cmp)
        .real("eps_smo", c.errors.eps_smo)
        .real("eta_opt", c.eta_opt_value)
        .real("pt_omega", c.pt_omega)
        .real("second_order_v", c.second_order_v)
        .real("log_l", c.log_l)
        .real("rate_raw", c.rate_raw)
        .real("rate", c.rate)
        .value("mode", c.mode.name());
    if let Some(d) = &c.diagnostic {
        r.value("diagnostic", d.clone());
    }
    r.into_value()
}

fn cmd_rate(ctx: &Context, a: RateArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let cfg = &ctx.config;
    let n = match a.n {
        Some(n) => n,
        None => config_count("n", cfg.n.ok_or_else(|| usage("rate needs --n"))?)?,
    };
    let omega = a
        .omega_exp
        .or(cfg.omega_exp)
        .ok_or_else(|| usage("rate needs --omega-exp"))?;
    let targets = ctx.targets(a.eps_dist, a.eps_snd, a.eps_cmp)?;
    let fixed = FixedParameters {
        gamma: a.gamma.or(cfg.gamma),
        eps_smo: a.eps_smo.or(cfg.eps_smo),
        delta_est: a.delta_est.or(cfg.delta_est),
    };
    let cert = optimize_with(n, omega, &targets, &fixed, ctx.mode)?;
    ctx.emit(&to_json(&certificate_record(&cert, ctx.exact)), stdout)
}

/// One row of the curve CSV; `n = None` marks the n → ∞ limit.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub n: Option<u64>,
    pub omega: f64,
    pub rate_raw: f64,
    pub rate: f64,
    pub gamma: f64,
    pub eps_smo: Option<f64>,
    pub delta_est: f64,
    pub eta_opt: f64,
}

impl CurveRow {
    pub fn from_certificate(c: &RateCertificate) -> Self {
        Self {
            n: Some(c.params.n),
            omega: c.params.omega_exp,
            rate_raw: c.rate_raw,
            rate: c.rate,
            gamma: c.params.gamma,
            eps_smo: Some(c.errors.eps_smo),
            delta_est: c.params.delta_est,
            eta_opt: c.eta_opt_value,
        }
    }

    pub fn asymptotic(omega: f64) -> crate::Result<Self> {
        let raw = asymptotic_rate(omega)?;
        Ok(Self {
            n: None,
            omega,
            rate_raw: raw,
            rate: raw.max(0.0),
            gamma: 0.0,
            eps_smo: None,
            delta_est: 0.0,
            eta_opt: g(omega)?,
        })
    }

    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.n
                .map_or_else(|| "asymptotic".to_string(), |n| n.to_string()),
            sig6(self.omega),
            sig6(self.rate_raw),
            sig6(self.rate),
            sig6(self.gamma),
            self.eps_smo.map(sig6).unwrap_or_default(),
            sig6(self.delta_est),
            sig6(self.eta_opt)
        )
    }

    fn exact(&self) -> Value {
        let mut m = Map::new();
        m.insert(
            "n".into(),
            self.n
                .map_or_else(|| Value::from("asymptotic"), Value::from),
        );
        for (k, v) in [
            ("omega_exp", Some(self.omega)),
            ("rate_raw", Some(self.rate_raw)),
            ("rate", Some(self.rate)),
            ("gamma", Some(self.gamma)),
            ("eps_smo", self.eps_smo),
            ("delta_est", Some(self.delta_est)),
            ("eta_opt", Some(self.eta_opt)),
        ] {
            m.insert(format!("{k}_exact"), v.map_or(Value::Null, num_exact));
        }
        Value::Object(m)
    }
}

/// Curve CSV with its header; rows are written in the given order.
pub fn curve_csv(rows: &[CurveRow]) -> String {
    let mut out = String::from(CURVE_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row.csv());
        out.push('\n');
    }
    out
}

fn cmd_curve(ctx: &Context, a: CurveArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let cfg = &ctx.config;
    let targets = ctx.targets(a.eps_dist, a.eps_snd, a.eps_cmp)?;
    let asymptotic_only = a.asymptotic_only || cfg.asymptotic_only.unwrap_or(false);
    let asymptotic = asymptotic_only || a.asymptotic || cfg.asymptotic.unwrap_or(false);
    let policy = a.gamma_policy.or(cfg.gamma_policy).unwrap_or_default();
    let ns: Vec<u64> = if asymptotic_only {
        Vec::new()
    } else if !a.n_values.is_empty() {
        a.n_values.clone()
    } else if let Some(v) = &cfg.n_values {
        v.iter()
            .map(|&x| config_count("n_values", x))
            .collect::<CliResult<_>>()?
    } else {
        FINITE_N_RATES.iter().map(|(n, _)| *n).collect()
    };
    let explicit: Option<Vec<f64>> = if !a.omegas.is_empty() {
        Some(a.omegas.clone())
    } else {
        cfg.omegas.clone()
    };
    if explicit.as_ref().is_some_and(Vec::is_empty) || (ns.is_empty() && !asymptotic) {
        return Err(usage("empty curve grid"));
    }
    let grid_for = |n: u64| -> Vec<f64> {
        let mut w = match &explicit {
            Some(v) => v.clone(),
            None => match finite_n_curve(n) {
                Some(c) => c.iter().map(|p| p.0).collect(),
                None => linspace(OMEGA_CLASSICAL, OMEGA_MAX, 41),
            },
        };
        w.sort_by(f64::total_cmp);
        w.dedup();
        w
    };
    let mut ns = ns;
    ns.sort_unstable();
    ns.dedup();

    let mut rows: Vec<CurveRow> = Vec::new();
    for &n in &ns {
        let omegas = grid_for(n);
        let certs = match policy {
            GammaPolicy::PerCurve => optimize_curve(n, &omegas, &targets, ctx.mode)?.certificates,
            GammaPolicy::PerPoint => omegas
                .par_iter()
                .map(|&w| optimize_parameters(n, w, &targets, ctx.mode))
                .collect::<crate::Result<Vec<_>>>()?,
        };
        rows.extend(certs.iter().map(CurveRow::from_certificate));
    }
    if asymptotic {
        let mut omegas = match &explicit {
            Some(v) => v.clone(),
            None => ASYMPTOTIC_RATE.iter().map(|p| p.0).collect(),
        };
        omegas.sort_by(f64::total_cmp);
        omegas.dedup();
        for w in omegas {
            rows.push(CurveRow::asymptotic(w)?);
        }
    }
    ctx.emit(&curve_csv(&rows), stdout)?;
    ctx.emit_exact_sidecar(rows.iter().map(CurveRow::exact).collect())
}

fn cmd_entropy_curve(ctx: &Context, a: EntropyCurveArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let mut omegas = if !a.omegas.is_empty() {
        a.omegas
    } else if let Some(v) = &ctx.config.omegas {
        v.clone()
    } else {
        CONDITIONAL_BOUND.iter().map(|p| p.0).collect()
    };
    if omegas.is_empty() {
        return Err(usage("empty omega grid"));
    }
    omegas.sort_by(f64::total_cmp);
    omegas.dedup();
    let mut out = String::from(ENTROPY_CURVE_HEADER);
    out.push('\n');
    let mut exact = Vec::new();
    for w in omegas {
        crate::error::check_range(
            "omega",
            w,
            OMEGA_CLASSICAL,
            OMEGA_MAX + 1e-12,
            "[0.75, (2+sqrt(2))/4]",
        )?;
        let beta = beta_from_omega(w).min(BETA_MAX);
        let bound = bell_diag_entropy_bound(beta)?.conditional_bound;
        out.push_str(&format!("{},{},{}\n", sig6(w), sig6(beta), sig6(bound)));
        let mut r = Record::new(true);
        r.map.insert("omega_exact".into(), num_exact(w));
        r.map.insert("beta_exact".into(), num_exact(beta));
        r.map
            .insert("conditional_bound_exact".into(), num_exact(bound));
        exact.push(r.into_value());
    }
    ctx.emit(&out, stdout)?;
    ctx.emit_exact_sidecar(exact)
}

fn parse_table(s: &str) -> CliResult<([u8; 2], [u8; 2])> {
    let bits: Vec<u8> = s
        .chars()
        .map(|c| match c {
            '0' => Ok(0),
            '1' => Ok(1),
            _ => Err(usage(format!(
                "table '{s}' must consist of the bits 0 and 1"
            ))),
        })
        .collect::<CliResult<_>>()?;
    if bits.len() != 4 {
        return Err(usage(format!(
            "table '{s}' must have four bits a0 a1 b0 b1"
        )));
    }
    Ok(([bits[0], bits[1]], [bits[2], bits[3]]))
}

fn parse_switch_rule(s: &str) -> CliResult<SwitchRule> {
    match s {
        "even-rounds" => Ok(SwitchRule::EvenRounds),
        "test-parity" => Ok(SwitchRule::TestParity),
        "after-loss" => Ok(SwitchRule::AfterLoss),
        other => Err(usage(format!(
            "unknown switch rule '{other}' (expected even-rounds, test-parity or after-loss)"
        ))),
    }
}

/// Builds a device model by name.
pub fn build_model(
    name: &str,
    xi: f64,
    xi_step: f64,
    table: ([u8; 2], [u8; 2]),
    rule: SwitchRule,
) -> CliResult<Box<dyn DeviceModel>> {
    Ok(match name {
        "honest-iid" => Box::new(HonestIid::werner(xi)?),
        "classical-deterministic" => Box::new(ClassicalDeterministic::new(table.0, table.1)?),
        "memory-switcher" => Box::new(MemorySwitcher::new(
            optimal_strategy(),
            deterministic_strategy(table.0, table.1),
            rule,
        )?),
        "noisy-drift" => Box::new(NoisyDrift::new(xi, xi_step)?),
        other => {
            return Err(usage(format!(
                "unknown model '{other}'; available models: {}",
                MODELS.join(", ")
            )))
        }
    })
}

fn cmd_simulate(ctx: &Context, a: SimulateArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let cfg = &ctx.config;
    let model_name = a
        .model
        .or_else(|| cfg.model.clone())
        .unwrap_or_else(|| "honest-iid".into());
    let n = match a.n {
        Some(n) => n,
        None => match cfg.n {
            Some(v) => config_count("n", v)?,
            None => 10_000,
        },
    };
    let gamma = a.gamma.or(cfg.gamma).unwrap_or(1.0);
    let omega_exp = a.omega_exp.or(cfg.omega_exp).unwrap_or(OMEGA_MAX);
    let delta = match a.delta_est.or(cfg.delta_est) {
        Some(d) => d,
        None => {
            let eps_cmp = a
                .eps_cmp
                .or(cfg.eps_cmp)
                .unwrap_or(ErrorTargets::default().eps_cmp);
            crate::error::check_range("eps_cmp", eps_cmp, f64::MIN_POSITIVE, 1.0, "(0, 1]")?;
            delta_for_completeness(n, eps_cmp)
        }
    };
    let trials = a.trials.or(cfg.trials).unwrap_or(100);
    if trials == 0 {
        return Err(usage("trials must be at least 1"));
    }
    let protocol: Mode = a
        .protocol
        .or_else(|| cfg.protocol.clone())
        .unwrap_or_else(|| "standard".into())
        .parse()?;
    let table = parse_table(
        &a.table
            .or_else(|| cfg.table.clone())
            .unwrap_or_else(|| "0000".into()),
    )?;
    let rule = parse_switch_rule(
        &a.switch_rule
            .or_else(|| cfg.switch_rule.clone())
            .unwrap_or_else(|| "even-rounds".into()),
    )?;
    let xi = a.xi.or(cfg.xi).unwrap_or(0.0);
    let xi_step = a.xi_step.or(cfg.xi_step).unwrap_or(0.0);
    let model = build_model(&model_name, xi, xi_step, table, rule)?;
    let params = ProtocolParams::relaxed(n, gamma, omega_exp, delta)?;

    if let Some(path) = a.transcript.or_else(|| cfg.transcript.clone()) {
        let t = run_protocol(
            model.as_ref(),
            &params,
            RunOptions::for_mode(protocol),
            trial_seed(ctx.seed, 0),
        )?;
        write_file(&path, &format_transcript(&t))?;
    }
    let est = estimate_abort_probability(model.as_ref(), &params, protocol, trials, ctx.seed)?;
    let mut r = Record::new(ctx.exact);
    r.value("model", model.name())
        .value("protocol", protocol.name())
        .value("seed", ctx.seed)
        .value("n", n)
        .real("gamma", gamma)
        .real("omega_exp", omega_exp)
        .real("delta_est", delta)
        .value("trials", trials)
        .value("aborts", est.aborts)
        .real("abort_estimate", est.estimate)
        .value(
            "interval",
            Value::Array(vec![num6(est.interval.0), num6(est.interval.1)]),
        );
    if ctx.exact {
        r.value(
            "interval_exact",
            Value::Array(vec![num_exact(est.interval.0), num_exact(est.interval.1)]),
        );
    }
    r.real("hoeffding_bound", est.hoeffding_bound)
        .real("win_rate", est.win_rate);
    ctx.emit(&to_json(&r.into_value()), stdout)
}

fn cmd_verify_bound(ctx: &Context, a: VerifyBoundArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let betas = if !a.betas.is_empty() {
        a.betas
    } else if let Some(v) = &ctx.config.betas {
        v.clone()
    } else {
        linspace(2.05, BETA_MAX, 20)
    };
    if betas.is_empty() {
        return Err(usage("empty beta grid"));
    }
    let step = a.grid_step.or(ctx.config.grid_step).unwrap_or(1e-3);
    let mut points = Vec::new();
    let mut max_dev = 0.0_f64;
    let mut max_arg = 0.0_f64;
    for &beta in &betas {
        let brute = brute_force_max_entropy(beta, step)?;
        let bound = bell_diag_entropy_bound(beta)?;
        let dev = (brute.entropy - bound.max_total_entropy).abs();
        let arg = brute.spectrum.max_abs_diff(&optimal_spectrum(beta)?);
        max_dev = max_dev.max(dev);
        max_arg = max_arg.max(arg);
        let mut r = Record::new(ctx.exact);
        r.real("beta", beta)
            .real("analytic", bound.max_total_entropy)
            .real("brute_force", brute.entropy)
            .real("deviation", dev)
            .real("argmax_deviation", arg)
            .real("other_branch_excess", brute.other_branch_excess);
        points.push(r.into_value());
    }
    let passed = max_dev <= BOUND_TOLERANCE;
    let mut r = Record::new(ctx.exact);
    r.real("grid_step", step)
        .real("max_deviation", max_dev)
        .real("max_argmax_deviation", max_arg)
        .real("tolerance", BOUND_TOLERANCE)
        .value("passed", passed)
        .value("points", Value::Array(points));
    ctx.emit(&to_json(&r.into_value()), stdout)?;
    if passed {
        Ok(())
    } else {
        Err(CliError::Verification(format!(
            "entropy bound deviation {max_dev:e} exceeds {BOUND_TOLERANCE:e}"
        )))
    }
}

/// Summary of the twirl checks over random states and fixed points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwirlReport {
    pub states: usize,
    pub max_off_diagonal: f64,
    pub max_idempotence_defect: f64,
    pub max_diagonal_change: f64,
    pub max_fixed_point_defect: f64,
    pub passed: bool,
}

fn max_entry_diff(a: &TwoQubitState, b: &TwoQubitState) -> f64 {
    (a.matrix() - b.matrix())
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Twirls `states` seeded random states and the Bell and maximally mixed fixed points.
pub fn twirl_report(states: usize, seed: u64) -> TwirlReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut off = 0.0_f64;
    let mut idem = 0.0_f64;
    let mut diag = 0.0_f64;
    for _ in 0..states {
        let rho = random_two_qubit_state(&mut rng);
        let t = twirl(&rho);
        off = off.max(bell_off_diagonal(&t));
        idem = idem.max(max_entry_diff(&twirl(&t), &t));
        let before = bell_diagonal_entries(&rho);
        let after = bell_diagonal_entries(&t);
        for k in 0..4 {
            diag = diag.max((before[k] - after[k]).abs());
        }
    }
    let mut fixed = 0.0_f64;
    for s in BellState::ALL
        .iter()
        .map(|&b| TwoQubitState::bell(b))
        .chain(std::iter::once(TwoQubitState::maximally_mixed()))
    {
        fixed = fixed.max(max_entry_diff(&twirl(&s), &s));
    }
    TwirlReport {
        states,
        max_off_diagonal: off,
        max_idempotence_defect: idem,
        max_diagonal_change: diag,
        max_fixed_point_defect: fixed,
        passed: off < TWIRL_OFF_DIAGONAL_TOL
            && idem < TWIRL_OFF_DIAGONAL_TOL
            && diag < TWIRL_OFF_DIAGONAL_TOL
            && fixed <= TWIRL_FIXED_POINT_TOL,
    }
}

fn cmd_verify_twirl(ctx: &Context, a: VerifyTwirlArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let states = a.states.or(ctx.config.states).unwrap_or(100);
    let report = twirl_report(states, ctx.seed);
    let mut r = Record::new(ctx.exact);
    r.value("seed", ctx.seed)
        .value("states", states)
        .real("max_off_diagonal", report.max_off_diagonal)
        .real("max_idempotence_defect", report.max_idempotence_defect)
        .real("max_diagonal_change", report.max_diagonal_change)
        .real("max_fixed_point_defect", report.max_fixed_point_defect)
        .value("passed", report.passed);
    ctx.emit(&to_json(&r.into_value()), stdout)?;
    if report.passed {
        Ok(())
    } else {
        Err(CliError::Verification("twirl checks failed".into()))
    }
}
