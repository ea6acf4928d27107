//! `verify`: every acceptance check, a report and the plots.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use logsp::asymptotics::{c_q, centering_check, decay_bound, nonexistence_probe, SweepRow};
use logsp::energy::gn_ratio;
use logsp::grid::{make_grid, Field2D};
use logsp::groundstate::{embed_q, kernel_report, shoot_q_with, RadialProfile};
use logsp::logconv::{build_log_kernel, direct_convolution, momentum_identity_check, Kernel};
use logsp::minimizer::{default_grid, minimize, uniqueness_probe, SolveResult};

use crate::commands::{solve_config, sweep_csv, sweep_rows, Outcome};
use crate::config::RunConfig;
use crate::output::{write_atomic, write_json};
use crate::plot::{line_plot, Series};
use crate::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct Criterion {
    pub id: u32,
    pub name: String,
    pub passed: bool,
    pub measured: Value,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub rho_star: f64,
    pub q0: f64,
    /// `¼ ∬ ln|x - y| Q² Q²`, from the radial profile.
    pub c_q: f64,
    pub criteria: Vec<Criterion>,
    /// Properties checked along the sweep that are not numbered criteria.
    pub invariants: Vec<Criterion>,
    pub all_passed: bool,
}

fn criterion(id: u32, name: &str, passed: bool, measured: Value) -> Criterion {
    Criterion { id, name: name.into(), passed, measured }
}

fn timed<T>(label: &str, f: impl FnOnce() -> T) -> T {
    let t = Instant::now();
    let out = f();
    eprintln!("[{label}] {:.1} s", t.elapsed().as_secs_f64());
    out
}

fn groundstate_identities(cfg: &RunConfig) -> Result<(RadialProfile, Criterion), CliError> {
    let p = shoot_q_with(cfg.shooting())?;
    let kin = (p.kinetic / p.mass - 1.0).abs();
    let quart = (p.quartic / p.mass - 2.0).abs() / 2.0;
    let passed = kin <= 1e-6 && quart <= 1e-6 && (p.q0 - 2.20620).abs() <= 1e-4 && (p.rho_star() - 11.7009).abs() <= 1e-3;
    let measured = json!({
        "q0": p.q0, "rho_star": p.rho_star(),
        "kinetic_over_mass_error": kin, "quartic_over_2mass_error": quart,
    });
    Ok((p, criterion(1, "ground-state identities", passed, measured)))
}

fn convolution(seed: u64) -> Result<Criterion, logsp::Error> {
    let grid = make_grid(4.0, 32)?;
    let table = build_log_kernel(&grid);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..3 {
        let density: Vec<f64> = (0..grid.len()).map(|_| rng.gen_range(0.0..1.0)).collect();
        let fast = table.convolve(Kernel::Log, &density);
        let slow = direct_convolution(&grid, Kernel::Log, &density);
        worst = fast.iter().zip(&slow).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
    }
    let big = make_grid(8.0, 256)?;
    let big_table = build_log_kernel(&big);
    let bump = big.sample(|x, y| (-4.0 * (x * x + y * y)).exp());
    let mass = big.integrate_values(&bump);
    let phi = big_table.convolve(Kernel::Log, &bump);
    let mut far: f64 = 0.0;
    for i in 0..big.n() {
        for j in 0..big.n() {
            let r = big.coord(i).hypot(big.coord(j));
            if (2.0..=big.half_width() / 2.0).contains(&r) {
                let exact = mass * r.ln();
                far = far.max(((phi[i * big.n() + j] - exact) / exact).abs());
            }
        }
    }
    let passed = worst <= 1e-10 && far <= 1e-3;
    Ok(criterion(2, "convolution correctness", passed, json!({"fft_vs_direct": worst, "far_field_rel": far})))
}

fn momentum(p: &RadialProfile, seed: u64) -> Result<Criterion, logsp::Error> {
    let grid = make_grid(4.0, 64)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let u = Field2D::new(grid.clone(), (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect())?;
        let rho = u.mass();
        worst = worst.max(momentum_identity_check(&u).abs() / (rho * rho));
    }
    let q = embed_q(p, &make_grid(8.0, 256)?, [0.0, 0.0], 1.0, 1.0)?.field;
    let rq = q.mass();
    let on_q = momentum_identity_check(&q).abs() / (rq * rq);
    let passed = worst < 1e-10 && on_q < 1e-10;
    Ok(criterion(3, "momentum identity", passed, json!({"random_rel": worst, "q_rel": on_q})))
}

fn gagliardo_nirenberg(p: &RadialProfile, seed: u64) -> Result<Criterion, logsp::Error> {
    let grid = make_grid(8.0, 128)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(2));
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let bumps: Vec<[f64; 4]> = (0..4)
            .map(|_| [rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5), rng.gen_range(0.4..1.5), rng.gen_range(-1.0..1.0)])
            .collect();
        let u = Field2D::from_fn(grid.clone(), |x, y| {
            bumps.iter().map(|b| b[3] * (-((x - b[0]).powi(2) + (y - b[1]).powi(2)) / (b[2] * b[2])).exp()).sum()
        })?;
        worst = worst.max(gn_ratio(&u, p.rho_star())?);
    }
    let q = embed_q(p, &make_grid(8.0, 512)?, [0.0, 0.0], 1.0, 1.0)?.field;
    let on_q = gn_ratio(&q, p.rho_star())?;
    let passed = worst <= 1.0 + 1e-3 && (on_q - 1.0).abs() < 1e-3;
    Ok(criterion(4, "Gagliardo-Nirenberg inequality", passed, json!({"max_random_ratio": worst, "q_ratio": on_q})))
}

fn solve_at(cfg: &RunConfig, p: &RadialProfile, frac: f64, refine: usize) -> Result<SolveResult, logsp::Error> {
    let (l, n) = default_grid(frac, p.rho_star());
    let n = n * refine;
    let base = solve_config(cfg, frac * p.rho_star(), l, n);
    let solve_cfg = logsp::minimizer::SolveConfig { init: logsp::minimizer::InitKind::ScaledQ, ..base };
    minimize(&solve_cfg, &build_log_kernel(&make_grid(l, n)?), p, None)
}

fn monotone_after(history: &[f64], start: usize) -> bool {
    history.iter().skip(start).collect::<Vec<_>>().windows(2).all(|w| *w[1] <= *w[0] + 1e-12 * w[0].abs())
}

fn stationarity(cfg: &RunConfig, p: &RadialProfile) -> Result<Criterion, logsp::Error> {
    let mut passed = true;
    let mut measured = serde_json::Map::new();
    for frac in [0.5, 0.9] {
        let res = solve_at(cfg, p, frac, 1)?;
        let fine = solve_at(cfg, p, frac, 2)?;
        let mass_err = (res.field.mass() - res.rho).abs() / res.rho;
        let rel = ((res.e - fine.e) / fine.e).abs();
        let mono = monotone_after(&res.energy_history, 10);
        passed &= res.converged && res.residual < 1e-5 && mass_err < 1e-10 && mono && rel < 1e-3;
        measured.insert(
            format!("{frac}"),
            json!({"converged": res.converged, "residual": res.residual, "mass_error": mass_err,
                   "monotone": mono, "e": res.e, "e_doubled": fine.e, "doubled_rel_diff": rel}),
        );
    }
    Ok(criterion(5, "minimizer stationarity", passed, Value::Object(measured)))
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

fn sweep_criteria(rows: &[SweepRow], p: &RadialProfile) -> (Vec<Criterion>, Vec<Criterion>) {
    let rs = p.rho_star();
    let all_ok = !rows.is_empty() && rows.iter().all(|r| r.converged && r.is_finite());
    let last = rows.last();
    let col = |f: fn(&SweepRow) -> f64| rows.iter().map(f).collect::<Vec<f64>>();
    let fracs = col(|r| r.rho_frac);

    let rate = col(|r| r.rate_ratio());
    let rate_dev: Vec<f64> = rate.iter().map(|x| (x - 1.0).abs()).collect();
    let c6 = criterion(
        6,
        "blow-up rate",
        all_ok && strictly_decreasing(&rate_dev) && last.is_some_and(|r| (r.rate_ratio() - 1.0).abs() <= 0.15),
        json!({"rho_frac": fracs, "eps_bar_over_pred": rate}),
    );
    let gaps = col(|r| r.energy_gap());
    let c7 = criterion(
        7,
        "energy asymptote",
        all_ok && strictly_decreasing(&gaps) && last.is_some_and(|r| r.energy_gap() < 0.05),
        json!({"rho_frac": fracs, "relative_gap": gaps, "e": col(|r| r.e), "e_pred": col(|r| r.e_pred)}),
    );
    let mu = col(|r| r.mu_ratio());
    let c8 = criterion(
        8,
        "multiplier limit",
        all_ok && last.is_some_and(|r| (r.mu_ratio() + 1.0).abs() <= 0.10),
        json!({"rho_frac": fracs, "mu_eps2_times_rho_star": mu, "target": -1.0}),
    );
    let dinf = col(|r| r.profile_dist_inf);
    let dx = col(|r| r.profile_dist_x);
    let c9 = criterion(
        9,
        "profile convergence",
        all_ok && strictly_decreasing(&dinf) && strictly_decreasing(&dx) && last.is_some_and(|r| r.profile_dist_inf < 0.1 * p.q0),
        json!({"rho_frac": fracs, "dist_inf": dinf, "dist_x": dx, "q_max": p.q0}),
    );
    let bound = decay_bound(rs) + 0.05;
    let deep: Vec<&SweepRow> = rows.iter().filter(|r| r.rho_frac >= 0.9 - 1e-12).collect();
    let c10 = criterion(
        10,
        "decay bound",
        all_ok && !deep.is_empty() && deep.iter().all(|r| r.decay_slope <= bound),
        json!({"rho_frac": deep.iter().map(|r| r.rho_frac).collect::<Vec<_>>(),
               "slope": deep.iter().map(|r| r.decay_slope).collect::<Vec<_>>(), "bound": bound}),
    );

    let gn = col(|r| r.gn_ratio);
    let gn_inv = criterion(
        0,
        "GN ratio ≤ 1 + 1e-3 and increasing toward 1",
        all_ok && gn.iter().all(|&g| g <= 1.0 + 1e-3) && gn.windows(2).all(|w| w[1] > w[0]),
        json!({"rho_frac": fracs, "gn_ratio": gn}),
    );
    let deep_e: Vec<f64> = rows.iter().filter(|r| r.rho_frac >= 0.8 - 1e-12).map(|r| r.e).collect();
    let e_inv = criterion(0, "e non-increasing beyond 0.8ρ*", all_ok && deep_e.windows(2).all(|w| w[1] <= w[0]), json!({"e": deep_e}));
    let m2 = p.second_moment();
    let ext = col(|r| r.external);
    let bounds: Vec<f64> = rows.iter().map(|r| 1.3 * r.eps_bar * r.eps_bar * m2).collect();
    let tail = rows.len().saturating_sub(2);
    let ext_inv = criterion(
        0,
        "external term ≤ 1.3 ρ* ε² ∫|x|²Q² at the two largest fractions",
        all_ok && strictly_decreasing(&ext) && ext.iter().zip(&bounds).skip(tail).all(|(e, b)| e <= b),
        json!({"rho_frac": fracs, "external": ext, "bound": bounds}),
    );
    let centering = centering_check(rows);
    let center_inv = criterion(0, "peak within half a cell of the origin", centering.passed, serde_json::to_value(&centering).unwrap_or(Value::Null));
    (vec![c6, c7, c8, c9, c10], vec![gn_inv, e_inv, ext_inv, center_inv])
}

fn nonexistence(p: &RadialProfile) -> Result<Criterion, logsp::Error> {
    let table = build_log_kernel(&make_grid(8.0, 512)?);
    let rep = nonexistence_probe(p.rho_star(), &[1.0, 2.0, 4.0, 8.0], p, &table)?;
    let passed = rep.taus.len() == 4 && rep.strictly_decreasing && rep.drop > 1.0;
    Ok(criterion(11, "nonexistence regime", passed, json!({"taus": rep.taus, "energies": rep.energies, "drop": rep.drop})))
}

fn uniqueness(cfg: &RunConfig, p: &RadialProfile) -> Result<Criterion, logsp::Error> {
    let rho = 0.99 * p.rho_star();
    let (l, n) = default_grid(0.99, p.rho_star());
    let solve_cfg = solve_config(cfg, rho, l, n);
    let grid = make_grid(l, n)?;
    let rep = uniqueness_probe(rho, cfg.starts, &solve_cfg, &build_log_kernel(&grid), p)?;
    let all_converged = rep.starts.iter().all(|s| s.converged);
    // Centered: the refined peak within two cells of the origin.
    let centered = rep.starts.iter().all(|s| s.peak[0].hypot(s.peak[1]) <= 2.0 * grid.spacing());
    let passed = cfg.starts >= 5 && all_converged && centered && rep.max_distance < 1e-3 && rep.energy_spread < 1e-6;
    Ok(criterion(
        12,
        "local uniqueness probe (empirical, not a proof)",
        passed,
        json!({"starts": rep.starts.len(), "all_converged": all_converged, "centered": centered, "max_distance": rep.max_distance,
               "energy_spread": rep.energy_spread, "note": rep.note}),
    ))
}

fn linearized_kernel(p: &RadialProfile) -> Result<Criterion, logsp::Error> {
    let rep = kernel_report(p, &make_grid(16.0, 512)?)?;
    let passed = rep.dx1 < 1e-3 && rep.q > 0.5;
    Ok(criterion(13, "linearized kernel", passed, json!({"L": 16.0, "n": 512, "dx1": rep.dx1, "dx2": rep.dx2, "q": rep.q})))
}

fn plots(cfg: &RunConfig, rows: &[SweepRow], rho_star: f64) -> Result<Vec<std::path::PathBuf>, CliError> {
    let dir = cfg.out.join("plots");
    std::fs::create_dir_all(&dir)?;
    let pts = |f: fn(&SweepRow) -> f64| rows.iter().map(|r| (r.rho_frac, f(r))).collect::<Vec<_>>();
    let target = rows.iter().map(|r| (r.rho_frac, -1.0 / rho_star)).collect();
    let specs = [
        ("energy.svg", "e(ρ) against the asymptotic prediction", "e", vec![
            Series::new("e(ρ)", pts(|r| r.e)),
            Series::new("prediction", pts(|r| r.e_pred)).dashed(),
        ]),
        ("blowup_rate.svg", "ε̄ against 2(ρ*−ρ)^½/ρ*", "ε̄", vec![
            Series::new("ε̄", pts(|r| r.eps_bar)),
            Series::new("prediction", pts(|r| r.eps_bar_pred)).dashed(),
        ]),
        ("multiplier.svg", "μ ε² against −1/ρ*", "μ ε²", vec![
            Series::new("μ ε²", pts(|r| r.mu_eps2)),
            Series::new("−1/ρ*", target).dashed(),
        ]),
        ("profile_distance.svg", "distance of the rescaled profile to Q", "distance", vec![
            Series::new("sup norm", pts(|r| r.profile_dist_inf)),
            Series::new("X norm", pts(|r| r.profile_dist_x)),
        ]),
    ];
    let mut files = Vec::new();
    for (name, title, y, series) in specs {
        let path = dir.join(name);
        write_atomic(&path, line_plot(title, "ρ/ρ*", y, &series).as_bytes())?;
        files.push(path);
    }
    Ok(files)
}

pub fn verify(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let (p, c1) = timed("1 ground state", || groundstate_identities(cfg))?;
    let mut criteria = vec![c1];
    criteria.push(timed("2 convolution", || convolution(cfg.seed))?);
    criteria.push(timed("3 momentum identity", || momentum(&p, cfg.seed))?);
    criteria.push(timed("4 Gagliardo-Nirenberg", || gagliardo_nirenberg(&p, cfg.seed))?);
    criteria.push(timed("5 stationarity", || stationarity(cfg, &p))?);
    let rows = timed("6-10 sweep", || sweep_rows(cfg, &p))?;
    let (sweep_c, invariants) = sweep_criteria(&rows, &p);
    criteria.extend(sweep_c);
    criteria.push(timed("11 nonexistence", || nonexistence(&p))?);
    criteria.push(timed("12 uniqueness", || uniqueness(cfg, &p))?);
    criteria.push(timed("13 linearized kernel", || linearized_kernel(&p))?);

    let all_passed = criteria.iter().all(|c| c.passed);
    let report = Report { rho_star: p.rho_star(), q0: p.q0, c_q: c_q(&p), criteria, invariants, all_passed };
    let csv = cfg.out.join("sweep.csv");
    write_atomic(&csv, sweep_csv(&rows).as_bytes())?;
    let json_path = cfg.out.join("report.json");
    write_json(&json_path, &report)?;
    let mut files = vec![csv, json_path];
    files.extend(plots(cfg, &rows, p.rho_star())?);
    for c in &report.criteria {
        println!("{} criterion {:>2}: {}", if c.passed { "PASS" } else { "FAIL" }, c.id, c.name);
    }
    for c in &report.invariants {
        println!("{} invariant: {}", if c.passed { "PASS" } else { "FAIL" }, c.name);
    }
    Ok(Outcome { passed: all_passed, files })
}
