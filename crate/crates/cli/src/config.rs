//! Command-line flags, the JSON config file and their merge into a
//! [`RunConfig`].

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use logsp::minimizer::{default_grid, InitKind, Scheme};

use crate::cache::cached_profile;
use crate::CliError;

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "LOGSP_OUT";
const DEFAULT_OUT: &str = "logsp-out";

#[derive(Debug, Parser)]
#[command(name = "logsp", version, about = "Minimizers of the planar log-potential Schrödinger-Poisson energy")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Shoot the radial ground state Q and report ρ* = ‖Q‖².
    Groundstate(Flags),
    /// Minimize the energy at one mass.
    Solve(Flags),
    /// Solve at several fractions of ρ* and tabulate the blow-up diagnostics.
    Sweep(Flags),
    /// Run every acceptance check and write a report.
    Verify(Flags),
    /// Solve from several randomized starts and compare the results.
    ProbeUniqueness(Flags),
    /// Energies of the scaled ground state at or above ρ*.
    ProbeNonexistence(Flags),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    Groundstate,
    Solve,
    Sweep,
    Verify,
    ProbeUniqueness,
    ProbeNonexistence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum InitArg {
    ScaledQ,
    RandomizedQ,
    Provided,
}

impl From<InitArg> for InitKind {
    fn from(v: InitArg) -> Self {
        match v {
            InitArg::ScaledQ => InitKind::ScaledQ,
            InitArg::RandomizedQ => InitKind::RandomizedQ,
            InitArg::Provided => InitKind::Provided,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeArg {
    Cg,
    GradientFlow,
}

impl From<SchemeArg> for Scheme {
    fn from(v: SchemeArg) -> Self {
        match v {
            SchemeArg::Cg => Scheme::ConjugateGradient,
            SchemeArg::GradientFlow => Scheme::GradientFlow,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum FieldFormat {
    /// Little-endian f64 with a small header.
    Binary,
    /// Headered row-major text.
    Text,
}

/// Flags shared by every subcommand. Anything left unset falls back to the
/// config file, then to the defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// Flat JSON config file; flags take precedence over its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (default: $LOGSP_OUT, else ./logsp-out).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads for sweeps.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Mass ρ.
    #[arg(long, allow_negative_numbers = true)]
    pub rho: Option<f64>,
    /// Mass as a fraction of ρ*.
    #[arg(long, allow_negative_numbers = true)]
    pub rho_frac: Option<f64>,
    /// Box half-width L (the box is [-L, L)²).
    #[arg(long = "L", allow_negative_numbers = true)]
    pub half_width: Option<f64>,
    /// Points per side (power of two).
    #[arg(long)]
    pub n: Option<usize>,
    /// Gradient-flow time step.
    #[arg(long, allow_negative_numbers = true)]
    pub dt: Option<f64>,
    /// Relative energy stagnation tolerance.
    #[arg(long, allow_negative_numbers = true)]
    pub tol: Option<f64>,
    /// Euler-Lagrange residual tolerance.
    #[arg(long, allow_negative_numbers = true)]
    pub residual_tol: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long, value_enum)]
    pub init: Option<InitArg>,
    /// Field file for `--init provided`.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub scheme: Option<SchemeArg>,
    #[arg(long, value_enum)]
    pub field_format: Option<FieldFormat>,
    /// Comma-separated fractions of ρ* for sweeps.
    #[arg(long, value_delimiter = ',')]
    pub fracs: Option<Vec<f64>>,
    /// Randomized starts for the uniqueness probe.
    #[arg(long)]
    pub starts: Option<usize>,
    /// Comma-separated scales for the nonexistence probe.
    #[arg(long, value_delimiter = ',')]
    pub taus: Option<Vec<f64>>,
    /// Shooting step.
    #[arg(long)]
    pub dr: Option<f64>,
    /// Shooting range.
    #[arg(long)]
    pub r_max: Option<f64>,
    /// Shooting tolerance on q0.
    #[arg(long)]
    pub shoot_tol: Option<f64>,
    /// Let `solve` run at ρ ≥ ρ*.
    #[arg(long)]
    pub allow_supercritical: bool,
}

/// The config file: the same keys as the flags, all optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub command: Option<CommandKind>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub rho: Option<f64>,
    pub rho_frac: Option<f64>,
    #[serde(rename = "L")]
    pub half_width: Option<f64>,
    pub n: Option<usize>,
    pub dt: Option<f64>,
    pub tol: Option<f64>,
    pub residual_tol: Option<f64>,
    pub max_iters: Option<usize>,
    pub init: Option<InitArg>,
    pub input: Option<PathBuf>,
    pub seed: Option<u64>,
    pub scheme: Option<SchemeArg>,
    pub field_format: Option<FieldFormat>,
    pub fracs: Option<Vec<f64>>,
    pub starts: Option<usize>,
    pub taus: Option<Vec<f64>>,
    pub dr: Option<f64>,
    pub r_max: Option<f64>,
    pub shoot_tol: Option<f64>,
    pub allow_supercritical: Option<bool>,
}

/// Fully resolved run parameters, echoed as `config.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: CommandKind,
    pub out: PathBuf,
    pub workers: usize,
    pub rho_star: f64,
    /// Resolved mass for `solve` and the probes.
    pub rho: Option<f64>,
    pub rho_frac: Option<f64>,
    /// Box half-width; unset means the per-mass default.
    #[serde(rename = "L")]
    pub half_width: Option<f64>,
    pub n: Option<usize>,
    pub dt: f64,
    pub tol: f64,
    pub residual_tol: f64,
    pub max_iters: usize,
    pub init: InitArg,
    pub input: Option<PathBuf>,
    pub seed: u64,
    pub scheme: SchemeArg,
    pub field_format: FieldFormat,
    pub fracs: Vec<f64>,
    pub starts: usize,
    pub taus: Vec<f64>,
    pub dr: f64,
    pub r_max: f64,
    pub shoot_tol: f64,
    pub allow_supercritical: bool,
}

impl RunConfig {
    pub fn shooting(&self) -> logsp::groundstate::ShootingParams {
        logsp::groundstate::ShootingParams {
            dr: self.dr,
            r_max: self.r_max,
            tol: self.shoot_tol,
            ..Default::default()
        }
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.out.join("cache")
    }
}

fn usage(key: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Usage(format!("{key}: {msg}"))
}

pub fn read_file_config(path: &Path) -> Result<FileConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| usage("config", format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| usage("config", e))
}

/// Parses `args` (without the program name handled by clap's first slot) and
/// resolves ρ* through the cache.
pub fn parse_config<I, T>(args: I) -> Result<RunConfig, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| match e.kind() {
        clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => CliError::Help(e.to_string()),
        _ => CliError::Usage(e.to_string()),
    })?;
    let (kind, flags) = match cli.command {
        Command::Groundstate(f) => (CommandKind::Groundstate, f),
        Command::Solve(f) => (CommandKind::Solve, f),
        Command::Sweep(f) => (CommandKind::Sweep, f),
        Command::Verify(f) => (CommandKind::Verify, f),
        Command::ProbeUniqueness(f) => (CommandKind::ProbeUniqueness, f),
        Command::ProbeNonexistence(f) => (CommandKind::ProbeNonexistence, f),
    };
    let file = match &flags.config {
        Some(path) => read_file_config(path)?,
        None => FileConfig::default(),
    };
    resolve(kind, flags, file)
}

fn default_out() -> PathBuf {
    std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

/// Merges flags over file values over defaults and validates the result.
pub fn resolve(kind: CommandKind, flags: Flags, file: FileConfig) -> Result<RunConfig, CliError> {
    if let Some(c) = file.command {
        if c != kind {
            return Err(usage("command", format!("config file is for {c:?}, not {kind:?}")));
        }
    }
    macro_rules! pick {
        ($field:ident, $default:expr) => {
            flags.$field.clone().or(file.$field.clone()).unwrap_or($default)
        };
        ($field:ident) => {
            flags.$field.clone().or(file.$field.clone())
        };
    }
    // A mass given on the command line replaces the file's mass in either form.
    let (rho, rho_frac) = if flags.rho.is_some() || flags.rho_frac.is_some() {
        (flags.rho, flags.rho_frac)
    } else {
        (file.rho, file.rho_frac)
    };
    let defaults = logsp::minimizer::SolveConfig::new(1.0);
    let shoot_defaults = logsp::groundstate::ShootingParams::default();
    let mut cfg = RunConfig {
        command: kind,
        out: pick!(out, default_out()),
        workers: pick!(workers, rayon::current_num_threads().max(1)),
        rho_star: f64::NAN,
        rho,
        rho_frac,
        half_width: pick!(half_width),
        n: pick!(n),
        dt: pick!(dt, defaults.time_step),
        tol: pick!(tol, defaults.energy_tol),
        residual_tol: pick!(residual_tol, defaults.residual_tol),
        max_iters: pick!(max_iters, defaults.max_iters),
        init: pick!(init, InitArg::ScaledQ),
        input: pick!(input),
        seed: pick!(seed, 0),
        scheme: pick!(scheme, SchemeArg::Cg),
        field_format: pick!(field_format, FieldFormat::Binary),
        fracs: pick!(fracs, vec![0.80, 0.90, 0.95, 0.99]),
        starts: pick!(starts, 5),
        taus: pick!(taus, vec![1.0, 2.0, 4.0, 8.0]),
        dr: pick!(dr, shoot_defaults.dr),
        r_max: pick!(r_max, shoot_defaults.r_max),
        shoot_tol: pick!(shoot_tol, shoot_defaults.tol),
        allow_supercritical: flags.allow_supercritical || file.allow_supercritical.unwrap_or(false),
    };
    validate(&cfg)?;
    std::fs::create_dir_all(&cfg.out).map_err(|e| usage("out", format!("{}: {e}", cfg.out.display())))?;
    let profile = cached_profile(&cfg.shooting(), &cfg.cache_dir()).map_err(|e| match e {
        CliError::Core(logsp::Error::Precondition(m)) => usage("shooting", m),
        e => e,
    })?;
    cfg.rho_star = profile.rho_star();
    resolve_mass(&mut cfg)?;
    Ok(cfg)
}

fn validate(cfg: &RunConfig) -> Result<(), CliError> {
    let positive = |key: &str, v: f64| if v > 0.0 && v.is_finite() { Ok(()) } else { Err(usage(key, format!("must be positive, got {v}"))) };
    if let Some(v) = cfg.rho {
        positive("rho", v)?;
    }
    if let Some(v) = cfg.rho_frac {
        positive("rho_frac", v)?;
    }
    if let Some(v) = cfg.half_width {
        positive("L", v)?;
    }
    if let Some(n) = cfg.n {
        if n < 16 || !n.is_power_of_two() {
            return Err(usage("n", format!("must be a power of two ≥ 16, got {n}")));
        }
    }
    positive("dt", cfg.dt)?;
    positive("tol", cfg.tol)?;
    positive("residual_tol", cfg.residual_tol)?;
    positive("dr", cfg.dr)?;
    positive("r_max", cfg.r_max)?;
    positive("shoot_tol", cfg.shoot_tol)?;
    if cfg.workers == 0 {
        return Err(usage("workers", "must be at least 1"));
    }
    if cfg.max_iters == 0 {
        return Err(usage("max_iters", "must be at least 1"));
    }
    if cfg.starts == 0 {
        return Err(usage("starts", "must be at least 1"));
    }
    if cfg.fracs.is_empty() || cfg.fracs.iter().any(|&f| !(f > 0.0 && f < 1.0)) {
        return Err(usage("fracs", "need at least one fraction, each in (0, 1)"));
    }
    if cfg.taus.is_empty() || !(cfg.taus[0] > 0.0) || cfg.taus.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(usage("taus", "must be positive and increasing"));
    }
    if cfg.init == InitArg::Provided && cfg.input.is_none() {
        return Err(usage("input", "--init provided needs --input"));
    }
    if cfg.input.is_some() && cfg.init != InitArg::Provided {
        return Err(usage("input", "only used with --init provided"));
    }
    Ok(())
}

fn resolve_mass(cfg: &mut RunConfig) -> Result<(), CliError> {
    let rs = cfg.rho_star;
    let default_frac = match cfg.command {
        CommandKind::Solve => None,
        CommandKind::ProbeUniqueness => Some(0.99),
        CommandKind::ProbeNonexistence => Some(1.0),
        _ => return Ok(()),
    };
    let rho = match (cfg.rho, cfg.rho_frac) {
        (Some(_), Some(_)) => return Err(usage("rho", "conflicts with rho_frac; give one")),
        (Some(r), None) => r,
        (None, Some(f)) => f * rs,
        (None, None) => match default_frac {
            Some(f) => f * rs,
            None => return Err(usage("rho", "solve needs --rho or --rho-frac")),
        },
    };
    cfg.rho = Some(rho);
    cfg.rho_frac = Some(rho / rs);
    // Record the box a single-mass run will use, unless the input field
    // decides it.
    if cfg.half_width.is_none() && cfg.n.is_none() && cfg.input.is_none() {
        let frac = rho / rs;
        let (l, n) = if cfg.command == CommandKind::ProbeNonexistence || frac >= 1.0 {
            (8.0, 512)
        } else {
            default_grid(frac, rs)
        };
        cfg.half_width = Some(l);
        cfg.n = Some(n);
    }
    Ok(())
}
