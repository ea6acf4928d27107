//! One function per subcommand.

use std::path::PathBuf;

use serde::Serialize;

use logsp::asymptotics::{c_q, nonexistence_probe, run_sweep, GridRule, SweepRow};
use logsp::grid::{make_grid, Field2D};
use logsp::groundstate::{kernel_report, RadialProfile};
use logsp::logconv::build_log_kernel;
use logsp::minimizer::{default_grid, minimize, uniqueness_probe, SolveConfig, SolveResult};

use crate::cache::cached_profile;
use crate::config::{CommandKind, FieldFormat, RunConfig};
use crate::fieldio::{field_file_name, read_field, write_field};
use crate::output::{csv_table, write_atomic, write_json};
use crate::CliError;

/// What a finished command reports back to `main`.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub passed: bool,
    pub files: Vec<PathBuf>,
}

impl Outcome {
    fn ok(files: Vec<PathBuf>) -> Self {
        Outcome { passed: true, files }
    }
}

pub fn run(cfg: &RunConfig) -> Result<Outcome, CliError> {
    write_json(&cfg.out.join("config.json"), cfg)?;
    let profile = cached_profile(&cfg.shooting(), &cfg.cache_dir())?;
    let mut outcome = match cfg.command {
        CommandKind::Groundstate => groundstate(cfg, &profile),
        CommandKind::Solve => solve(cfg, &profile),
        CommandKind::Sweep => sweep(cfg, &profile),
        CommandKind::Verify => crate::verify::verify(cfg),
        CommandKind::ProbeUniqueness => probe_uniqueness(cfg, &profile),
        CommandKind::ProbeNonexistence => probe_nonexistence(cfg, &profile),
    }?;
    outcome.files.insert(0, cfg.out.join("config.json"));
    Ok(outcome)
}

#[derive(Debug, Serialize)]
struct GroundstateSummary {
    q0: f64,
    rho_star: f64,
    kinetic: f64,
    quartic: f64,
    kinetic_over_mass: f64,
    quartic_over_mass: f64,
    match_radius: f64,
    tail_amplitude: f64,
    c_q: f64,
    second_moment: f64,
    dr: f64,
    r_max: f64,
    tol: f64,
    /// `‖𝓛 ∂₁Q‖ / ‖∂₁Q‖` on the `L = 16`, `n = 512` grid.
    kernel_residual_dx1: f64,
    /// `‖𝓛 Q‖ / ‖Q‖` on the same grid.
    kernel_residual_q: f64,
}

fn groundstate(cfg: &RunConfig, p: &RadialProfile) -> Result<Outcome, CliError> {
    let kernel = kernel_report(p, &make_grid(16.0, 512)?)?;
    let summary = GroundstateSummary {
        q0: p.q0,
        rho_star: p.rho_star(),
        kinetic: p.kinetic,
        quartic: p.quartic,
        kinetic_over_mass: p.kinetic / p.mass,
        quartic_over_mass: p.quartic / p.mass,
        match_radius: p.match_radius,
        tail_amplitude: p.tail_amplitude,
        c_q: c_q(p),
        second_moment: p.second_moment(),
        dr: p.dr,
        r_max: p.r_max,
        tol: cfg.shoot_tol,
        kernel_residual_dx1: kernel.dx1,
        kernel_residual_q: kernel.q,
    };
    let stride = ((0.01 / p.dr).round() as usize).max(1);
    let rows: Vec<Vec<String>> = p
        .radii()
        .zip(p.values().iter().zip(p.derivatives()))
        .step_by(stride)
        .map(|(r, (q, dq))| vec![format!("{r}"), format!("{q:e}"), format!("{dq:e}")])
        .collect();
    let csv = cfg.out.join("profile.csv");
    write_atomic(&csv, csv_table(&["r", "q", "dq"], &rows).as_bytes())?;
    let json = cfg.out.join("groundstate.json");
    write_json(&json, &summary)?;
    println!("q0 = {:.10}  rho* = {:.10}  C_Q = {:.7}", p.q0, p.rho_star(), summary.c_q);
    Ok(Outcome::ok(vec![csv, json]))
}

/// Box for a run at fraction `frac`: the flags when given, else the field
/// file's grid, else the per-mass default.
fn solve_grid(cfg: &RunConfig, frac: f64, input: Option<&Field2D>) -> Result<(f64, usize), CliError> {
    match (cfg.half_width, cfg.n, input) {
        (Some(l), Some(n), Some(f)) if (l, n) != (f.grid().half_width(), f.grid().n()) => Err(CliError::Usage(format!(
            "L, n: ({l}, {n}) do not match the input field grid ({}, {})",
            f.grid().half_width(),
            f.grid().n()
        ))),
        (Some(l), Some(n), _) => Ok((l, n)),
        (None, None, Some(f)) => Ok((f.grid().half_width(), f.grid().n())),
        (None, None, None) if frac < 1.0 => Ok(default_grid(frac, cfg.rho_star)),
        (None, None, None) => Ok((8.0, 512)),
        _ => Err(CliError::Usage("L, n: give both or neither".into())),
    }
}

pub fn solve_config(cfg: &RunConfig, rho: f64, half_width: f64, n: usize) -> SolveConfig {
    SolveConfig {
        rho,
        half_width,
        n,
        time_step: cfg.dt,
        max_iters: cfg.max_iters,
        energy_tol: cfg.tol,
        residual_tol: cfg.residual_tol,
        init: cfg.init.into(),
        seed: cfg.seed,
        scheme: cfg.scheme.into(),
        allow_supercritical: cfg.allow_supercritical,
    }
}

#[derive(Debug, Serialize)]
struct SolveSummary<'a> {
    rho_star: f64,
    rho_frac: f64,
    #[serde(rename = "L")]
    half_width: f64,
    n: usize,
    field_file: String,
    field_format: FieldFormat,
    result: &'a SolveResult,
}

fn solve(cfg: &RunConfig, p: &RadialProfile) -> Result<Outcome, CliError> {
    let rho = cfg.rho.expect("mass resolved for solve");
    let input = cfg.input.as_deref().map(read_field).transpose()?;
    let (half_width, n) = solve_grid(cfg, rho / cfg.rho_star, input.as_ref())?;
    let solve_cfg = solve_config(cfg, rho, half_width, n);
    solve_cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let table = build_log_kernel(&make_grid(half_width, n)?);
    let res = minimize(&solve_cfg, &table, p, input.as_ref())?;
    let name = field_file_name(cfg.field_format);
    let field_path = cfg.out.join(name);
    write_field(&field_path, &res.field, cfg.field_format)?;
    let summary = SolveSummary {
        rho_star: p.rho_star(),
        rho_frac: rho / p.rho_star(),
        half_width,
        n,
        field_file: name.to_string(),
        field_format: cfg.field_format,
        result: &res,
    };
    let json = cfg.out.join("solve.json");
    write_json(&json, &summary)?;
    println!(
        "rho = {rho:.6} (L = {half_width}, n = {n}): e = {:.10}, mu = {:.6}, eps_bar = {:.6}, residual = {:.2e}, {} iterations{}",
        res.e,
        res.mu,
        res.eps_bar,
        res.residual,
        res.iters,
        if res.converged { "" } else { " (not converged)" }
    );
    if !res.converged {
        eprintln!("warning: the solve stopped at max_iters without meeting the tolerances");
    }
    Ok(Outcome::ok(vec![field_path, json]))
}

pub fn grid_rule(cfg: &RunConfig) -> Result<GridRule, CliError> {
    match (cfg.half_width, cfg.n) {
        (Some(half_width), Some(n)) => Ok(GridRule::Fixed { half_width, n }),
        (None, None) => Ok(GridRule::Adaptive),
        _ => Err(CliError::Usage("L, n: give both or neither".into())),
    }
}

/// Runs the sweep on a pool of `cfg.workers` threads.
pub fn sweep_rows(cfg: &RunConfig, p: &RadialProfile) -> Result<Vec<SweepRow>, CliError> {
    let rule = grid_rule(cfg)?;
    let base = solve_config(cfg, 1.0, 8.0, 512);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| CliError::Usage(format!("workers: {e}")))?;
    Ok(pool.install(|| run_sweep(&cfg.fracs, &base, rule, p))?)
}

pub const SWEEP_HEADER: [&str; 28] = [
    "rho",
    "rho_frac",
    "L",
    "n",
    "converged",
    "iters",
    "residual",
    "e",
    "e_pred",
    "eps",
    "eps_bar",
    "eps_bar_pred",
    "mu",
    "mu_eps2",
    "x_peak_norm",
    "x_peak_scaled",
    "profile_dist_inf",
    "profile_dist_X",
    "profile_dist_inf_eps",
    "decay_slope",
    "decay_flagged",
    "gn_ratio",
    "external",
    "positive",
    "boundary_decayed",
    "energy_gap",
    "rate_ratio",
    "error",
];

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.rho.to_string(),
                r.rho_frac.to_string(),
                r.half_width.to_string(),
                r.n.to_string(),
                r.converged.to_string(),
                r.iters.to_string(),
                r.residual.to_string(),
                r.e.to_string(),
                r.e_pred.to_string(),
                r.eps.to_string(),
                r.eps_bar.to_string(),
                r.eps_bar_pred.to_string(),
                r.mu.to_string(),
                r.mu_eps2.to_string(),
                r.x_peak_norm.to_string(),
                r.x_peak_scaled.to_string(),
                r.profile_dist_inf.to_string(),
                r.profile_dist_x.to_string(),
                r.profile_dist_inf_eps.to_string(),
                r.decay_slope.to_string(),
                r.decay_flagged.to_string(),
                r.gn_ratio.to_string(),
                r.external.to_string(),
                r.positive.to_string(),
                r.boundary_decayed.to_string(),
                r.energy_gap().to_string(),
                r.rate_ratio().to_string(),
                r.error.as_deref().unwrap_or("").replace([',', '\n'], ";"),
            ]
        })
        .collect();
    csv_table(&SWEEP_HEADER, &body)
}

fn sweep(cfg: &RunConfig, p: &RadialProfile) -> Result<Outcome, CliError> {
    let rows = sweep_rows(cfg, p)?;
    let csv = cfg.out.join("sweep.csv");
    write_atomic(&csv, sweep_csv(&rows).as_bytes())?;
    let json = cfg.out.join("sweep.json");
    write_json(&json, &rows)?;
    for r in &rows {
        println!(
            "{:.4}: e = {:.6} (pred {:.6}), eps_bar/pred = {:.4}, mu eps^2 rho* = {:.4}{}",
            r.rho_frac,
            r.e,
            r.e_pred,
            r.rate_ratio(),
            r.mu_ratio(),
            if r.converged { "" } else { "  [not converged]" }
        );
    }
    Ok(Outcome::ok(vec![csv, json]))
}

fn probe_uniqueness(cfg: &RunConfig, p: &RadialProfile) -> Result<Outcome, CliError> {
    let rho = cfg.rho.expect("mass resolved for probe");
    let (half_width, n) = solve_grid(cfg, rho / cfg.rho_star, None)?;
    let solve_cfg = solve_config(cfg, rho, half_width, n);
    let table = build_log_kernel(&make_grid(half_width, n)?);
    let report = uniqueness_probe(rho, cfg.starts, &solve_cfg, &table, p)?;
    let json = cfg.out.join("uniqueness.json");
    write_json(&json, &report)?;
    println!(
        "{} starts at rho = {rho:.6}: max centered distance {:.2e}, energy spread {:.2e}",
        report.starts.len(),
        report.max_distance,
        report.energy_spread
    );
    println!("{}", report.note);
    Ok(Outcome::ok(vec![json]))
}

fn probe_nonexistence(cfg: &RunConfig, p: &RadialProfile) -> Result<Outcome, CliError> {
    let rho = cfg.rho.expect("mass resolved for probe");
    let (half_width, n) = match (cfg.half_width, cfg.n) {
        (Some(l), Some(n)) => (l, n),
        (None, None) => (8.0, 512),
        _ => return Err(CliError::Usage("L, n: give both or neither".into())),
    };
    let table = build_log_kernel(&make_grid(half_width, n)?);
    let report = nonexistence_probe(rho, &cfg.taus, p, &table).map_err(|e| match e {
        logsp::Error::Precondition(m) => CliError::Usage(format!("rho: {m}")),
        e => CliError::Core(e),
    })?;
    let json = cfg.out.join("nonexistence.json");
    write_json(&json, &report)?;
    for (t, e) in report.taus.iter().zip(&report.energies) {
        println!("tau = {t}: E = {e:.6}");
    }
    Ok(Outcome::ok(vec![json]))
}
