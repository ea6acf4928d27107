//! Sweeps toward the critical mass and the blow-up diagnostics computed on
//! each minimizer.

use rayon::prelude::*;
use serde::Serialize;

use crate::energy::{gn_ratio, norms};
use crate::error::{Error, Result};
use crate::grid::{make_grid, Field2D, HermiteInterpolator};
use crate::groundstate::{embed_q, RadialProfile};
use crate::logconv::{build_log_kernel, KernelTable};
use crate::minimizer::{default_grid, minimize, predicted_eps_bar, scaling_energy, SolveConfig, SolveResult};

/// Points per side of the grid carrying a rescaled profile.
pub const PROFILE_POINTS: usize = 256;
/// Half-width of the `ε̄`-rescaled profile grid.
pub const PROFILE_HALF_WIDTH: f64 = 12.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Which {
    Eps,
    EpsBar,
}

/// `C_Q = ¼ ∬ ln|x - y| Q²(x) Q²(y)`.
pub fn c_q(profile: &RadialProfile) -> f64 {
    0.25 * profile.log_self_interaction()
}

/// Leading-order energy near the critical mass,
/// `ρ*²/8 - (ρ*²/4) ln ρ* + (ρ*²/8) ln[4(ρ* - ρ)] + C_Q`.
pub fn energy_prediction(rho: f64, rho_star: f64, c_q: f64) -> f64 {
    let s2 = rho_star * rho_star;
    s2 / 8.0 - s2 / 4.0 * rho_star.ln() + s2 / 8.0 * (4.0 * (rho_star - rho)).ln() + c_q
}

/// Peak of a solution: the off-grid maximum when Newton converges, the
/// largest node otherwise.
pub fn peak_of(res: &SolveResult) -> [f64; 2] {
    res.field.refine_peak().unwrap_or(res.x_peak)
}

fn check_interior(field: &Field2D) -> Result<()> {
    let n = field.grid().n();
    let (i, j) = field.argmax();
    // Node 0 and node n-1 are the two edges of the periodic box.
    let near = |k: usize| k < 2 || k + 3 > n;
    if near(i) || near(j) {
        return Err(Error::Centering(format!("peak at node ({i}, {j}) is within two cells of the boundary")));
    }
    Ok(())
}

/// `w(x) = s u(s x + x_ρ)` with `s = ε` or `ε̄`, resampled on a
/// `256 × 256` grid. The `ε̄` grid covers `|x| ≤ 12`; the `ε` profile is
/// `√ρ*` times wider and its grid is widened by the same factor.
pub fn rescale_to_w(res: &SolveResult, which: Which) -> Result<Field2D> {
    if !res.converged {
        return Err(Error::Precondition("rescaling needs a converged result".into()));
    }
    check_interior(&res.field)?;
    let (s, half_width) = match which {
        Which::EpsBar => (res.eps_bar, PROFILE_HALF_WIDTH),
        Which::Eps => (res.eps, PROFILE_HALF_WIDTH * res.eps_bar / res.eps),
    };
    let center = peak_of(res);
    let interp = HermiteInterpolator::new(&res.field);
    let grid = make_grid(half_width, PROFILE_POINTS)?;
    Field2D::from_fn(grid, |x, y| s * interp.eval(s * x + center[0], s * y + center[1]))
}

/// The limit profile on the grid of a rescaled `w`: `Q` for the `ε̄`
/// scaling, `ρ*^{-1/2} Q(x / √ρ*)` for the `ε` scaling.
pub fn limit_profile(w: &Field2D, which: Which, profile: &RadialProfile) -> Result<Field2D> {
    let (alpha, beta) = match which {
        Which::EpsBar => (1.0, 1.0),
        Which::Eps => {
            let a = 1.0 / profile.rho_star().sqrt();
            (a, a)
        }
    };
    Ok(embed_q(profile, w.grid(), [0.0, 0.0], alpha, beta)?.field)
}

/// `(‖w - lim‖_∞, ‖w - lim‖_X)`.
pub fn profile_distance(w: &Field2D, which: Which, profile: &RadialProfile) -> Result<(f64, f64)> {
    let q = limit_profile(w, which, profile)?;
    let diff = Field2D::new(w.grid().clone(), w.values().iter().zip(q.values()).map(|(a, b)| a - b).collect())?;
    Ok((diff.max_abs(), norms(&diff).x_norm))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayFit {
    pub slope: f64,
    pub window: [f64; 2],
    /// The window was shrunk to stay above underflow, or the tail does
    /// not decay at all.
    pub flagged: bool,
}

/// Least-squares slope of `ln(√r w(r))` against `r` on `r ∈ [6, 10]`, with
/// `w(x) = s u(s x + center)`. The `√r` factor removes the algebraic part of
/// the two-dimensional tail `r^{-1/2} e^{-κ r}`, so the slope estimates `-κ`.
pub fn decay_fit(field: &Field2D, center: [f64; 2], s: f64) -> DecayFit {
    const ANGLES: usize = 32;
    const DR: f64 = 0.05;
    let interp = HermiteInterpolator::new(field);
    let w = |r: f64, k: usize| {
        let t = 2.0 * std::f64::consts::PI * k as f64 / ANGLES as f64;
        s * interp.eval(s * r * t.cos() + center[0], s * r * t.sin() + center[1])
    };
    let floor = 1e-14 * s * field.max_abs();
    let (r0, mut r1) = (6.0, 10.0);
    let mut flagged = false;
    loop {
        let steps = ((r1 - r0) / DR).round() as usize;
        let mut pts = Vec::with_capacity((steps + 1) * ANGLES);
        let mut ok = true;
        'collect: for i in 0..=steps {
            let r = r0 + i as f64 * DR;
            for k in 0..ANGLES {
                let v = w(r, k);
                if !(v > floor) {
                    ok = false;
                    break 'collect;
                }
                pts.push((r, (r.sqrt() * v).ln()));
            }
        }
        if ok {
            let slope = least_squares_slope(&pts);
            return DecayFit { slope, window: [r0, r1], flagged: flagged || !(slope < 0.0) };
        }
        flagged = true;
        r1 -= 0.5;
        if r1 < r0 + 1.0 {
            return DecayFit { slope: f64::NAN, window: [r0, r1 + 0.5], flagged };
        }
    }
}

fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Tail slope of the `ε`-rescaled minimizer.
pub fn decay_check(res: &SolveResult) -> Result<DecayFit> {
    if !res.converged {
        return Err(Error::Precondition("decay fit needs a converged result".into()));
    }
    Ok(decay_fit(&res.field, peak_of(res), res.eps))
}

/// The decay rate every minimizer must beat: `-2 / (3√ρ*)`.
pub fn decay_bound(rho_star: f64) -> f64 {
    -2.0 / (3.0 * rho_star.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub rho: f64,
    pub rho_frac: f64,
    pub half_width: f64,
    pub n: usize,
    pub h: f64,
    pub converged: bool,
    pub iters: usize,
    pub residual: f64,
    pub e: f64,
    pub e_pred: f64,
    pub eps: f64,
    pub eps_bar: f64,
    pub eps_bar_pred: f64,
    pub mu: f64,
    pub mu_eps2: f64,
    pub x_peak_norm: f64,
    pub x_peak_scaled: f64,
    pub profile_dist_inf: f64,
    pub profile_dist_x: f64,
    /// `‖w_ρ - ρ*^{-1/2} Q(·/√ρ*)‖_∞` for the `ε` scaling.
    pub profile_dist_inf_eps: f64,
    pub decay_slope: f64,
    pub decay_flagged: bool,
    pub gn_ratio: f64,
    /// `∫ ln(1 + |x|²) u²`.
    pub external: f64,
    pub positive: bool,
    pub boundary_decayed: bool,
    pub error: Option<String>,
}

impl SweepRow {
    fn empty(rho: f64, rho_star: f64, half_width: f64, n: usize, c_q: f64) -> Self {
        let nan = f64::NAN;
        SweepRow {
            rho,
            rho_frac: rho / rho_star,
            half_width,
            n,
            h: 2.0 * half_width / n as f64,
            converged: false,
            iters: 0,
            residual: nan,
            e: nan,
            e_pred: energy_prediction(rho, rho_star, c_q),
            eps: nan,
            eps_bar: nan,
            eps_bar_pred: predicted_eps_bar(rho, rho_star),
            mu: nan,
            mu_eps2: nan,
            x_peak_norm: nan,
            x_peak_scaled: nan,
            profile_dist_inf: nan,
            profile_dist_x: nan,
            profile_dist_inf_eps: nan,
            decay_slope: nan,
            decay_flagged: true,
            gn_ratio: nan,
            external: nan,
            positive: false,
            boundary_decayed: false,
            error: None,
        }
    }

    /// Relative energy gap `|e - e_pred| / |e_pred|`.
    pub fn energy_gap(&self) -> f64 {
        ((self.e - self.e_pred) / self.e_pred).abs()
    }

    /// `ε̄ / ε̄_pred`.
    pub fn rate_ratio(&self) -> f64 {
        self.eps_bar / self.eps_bar_pred
    }

    /// `μ ε² ρ*`, which tends to `-1`.
    pub fn mu_ratio(&self) -> f64 {
        self.mu_eps2 * self.rho / self.rho_frac
    }

    pub fn is_finite(&self) -> bool {
        [
            self.e,
            self.eps,
            self.eps_bar,
            self.mu,
            self.mu_eps2,
            self.x_peak_norm,
            self.x_peak_scaled,
            self.profile_dist_inf,
            self.profile_dist_x,
            self.decay_slope,
            self.gn_ratio,
            self.external,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// How a sweep picks the box for each fraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GridRule {
    /// [`default_grid`] per fraction.
    Adaptive,
    Fixed { half_width: f64, n: usize },
}

/// Row for one solved fraction.
pub fn sweep_row(res: &SolveResult, profile: &RadialProfile, c_q: f64) -> Result<SweepRow> {
    let rs = profile.rho_star();
    let g = res.field.grid();
    let mut row = SweepRow::empty(res.rho, rs, g.half_width(), g.n(), c_q);
    row.converged = res.converged;
    row.iters = res.iters;
    row.residual = res.residual;
    row.e = res.e;
    row.eps = res.eps;
    row.eps_bar = res.eps_bar;
    row.mu = res.mu;
    row.mu_eps2 = res.mu * res.eps * res.eps;
    row.positive = res.positive;
    row.boundary_decayed = res.boundary_decayed;
    row.external = 2.0 * res.breakdown.external;
    row.gn_ratio = gn_ratio(&res.field, rs)?;
    let peak = peak_of(res);
    row.x_peak_norm = peak[0].hypot(peak[1]);
    row.x_peak_scaled = row.x_peak_norm / (rs - res.rho).sqrt();
    if res.converged {
        let w = rescale_to_w(res, Which::EpsBar)?;
        (row.profile_dist_inf, row.profile_dist_x) = profile_distance(&w, Which::EpsBar, profile)?;
        let w = rescale_to_w(res, Which::Eps)?;
        row.profile_dist_inf_eps = profile_distance(&w, Which::Eps, profile)?.0;
        let fit = decay_check(res)?;
        row.decay_slope = fit.slope;
        row.decay_flagged = fit.flagged;
    }
    Ok(row)
}

fn solve_fraction(frac: f64, base: &SolveConfig, rule: GridRule, profile: &RadialProfile, c_q: f64) -> SweepRow {
    let rs = profile.rho_star();
    let (half_width, n) = match rule {
        GridRule::Adaptive => default_grid(frac, rs),
        GridRule::Fixed { half_width, n } => (half_width, n),
    };
    let rho = frac * rs;
    let cfg = SolveConfig { rho, half_width, n, ..base.clone() };
    let attempt = || -> Result<SweepRow> {
        let table = build_log_kernel(&make_grid(half_width, n)?);
        let res = minimize(&cfg, &table, profile, None)?;
        sweep_row(&res, profile, c_q)
    };
    attempt().unwrap_or_else(|e| {
        let mut row = SweepRow::empty(rho, rs, half_width, n, c_q);
        row.error = Some(e.to_string());
        row
    })
}

/// Solves at every fraction of `ρ*`, in parallel, and returns the rows
/// sorted by fraction. A failed or non-converged solve yields a flagged row.
pub fn run_sweep(
    rho_fracs: &[f64],
    base: &SolveConfig,
    rule: GridRule,
    profile: &RadialProfile,
) -> Result<Vec<SweepRow>> {
    if let Some(&f) = rho_fracs.iter().find(|&&f| !(f > 0.0 && f < 1.0)) {
        return Err(Error::Precondition(format!("sweep fraction {f} is outside (0, 1)")));
    }
    let c = c_q(profile);
    let mut rows: Vec<SweepRow> =
        rho_fracs.par_iter().map(|&f| solve_fraction(f, base, rule, profile, c)).collect();
    rows.sort_by(|a, b| a.rho_frac.total_cmp(&b.rho_frac));
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CenteringEntry {
    pub rho_frac: f64,
    pub x_peak_norm: f64,
    pub x_peak_scaled: f64,
    /// `|x_ρ|` in grid cells.
    pub cells: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CenteringReport {
    pub rows: Vec<CenteringEntry>,
    /// `|x_ρ|` is below half a cell at the two largest fractions.
    pub passed: bool,
}

pub fn centering_check(rows: &[SweepRow]) -> CenteringReport {
    let entries: Vec<CenteringEntry> = rows
        .iter()
        .filter(|r| r.converged)
        .map(|r| CenteringEntry {
            rho_frac: r.rho_frac,
            x_peak_norm: r.x_peak_norm,
            x_peak_scaled: r.x_peak_scaled,
            cells: r.x_peak_norm / r.h,
        })
        .collect();
    let mut by_frac: Vec<&CenteringEntry> = entries.iter().collect();
    by_frac.sort_by(|a, b| b.rho_frac.total_cmp(&a.rho_frac));
    let passed = by_frac.len() >= 2 && by_frac.iter().take(2).all(|e| e.cells < 0.5);
    CenteringReport { rows: entries, passed }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NonexistenceReport {
    pub rho: f64,
    pub taus: Vec<f64>,
    pub energies: Vec<f64>,
    /// Every consecutive pair decreases.
    pub strictly_decreasing: bool,
    /// `E(u_first) - E(u_last)`.
    pub drop: f64,
    /// Some large `τ` were dropped as under-resolved.
    pub truncated: bool,
    /// Decreasing beyond the second entry and a total drop above one unit.
    pub passed: bool,
}

/// `E(u_τ)` along the scaling family at or above the critical mass.
pub fn nonexistence_probe(
    rho: f64,
    taus: &[f64],
    profile: &RadialProfile,
    table: &KernelTable,
) -> Result<NonexistenceReport> {
    let rs = profile.rho_star();
    if !(rho >= rs * (1.0 - 1e-12)) {
        return Err(Error::Precondition(format!("ρ = {rho} is below ρ* = {rs}")));
    }
    if taus.is_empty() || taus.windows(2).any(|w| !(w[1] > w[0])) || !(taus[0] > 0.0) {
        return Err(Error::Precondition("taus must be positive and increasing".into()));
    }
    let mut used = Vec::new();
    let mut energies = Vec::new();
    let mut truncated = false;
    for &tau in taus {
        match scaling_energy(rho, tau, profile, table) {
            Ok(e) => {
                used.push(tau);
                energies.push(e);
            }
            Err(Error::Resolution(_)) => {
                truncated = true;
                break;
            }
            Err(e) => return Err(e),
        }
    }
    let decreasing_from = |k: usize| energies.windows(2).skip(k).all(|w| w[1] < w[0]);
    let drop = match (energies.first(), energies.last()) {
        (Some(a), Some(b)) => a - b,
        _ => f64::NAN,
    };
    let passed = energies.len() >= 2 && decreasing_from(1) && drop > 1.0;
    Ok(NonexistenceReport {
        rho,
        taus: used,
        strictly_decreasing: decreasing_from(0),
        energies,
        drop,
        truncated,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groundstate::shoot_q;
    use std::sync::OnceLock;

    fn profile() -> &'static RadialProfile {
        static P: OnceLock<RadialProfile> = OnceLock::new();
        P.get_or_init(|| shoot_q(1e-10).unwrap())
    }

    fn solve(frac: f64) -> SolveResult {
        let p = profile();
        let (l, n) = default_grid(frac, p.rho_star());
        let cfg = SolveConfig { half_width: l, n, ..SolveConfig::new(frac * p.rho_star()) };
        minimize(&cfg, &build_log_kernel(&make_grid(l, n).unwrap()), p, None).unwrap()
    }

    fn nine_tenths() -> &'static SolveResult {
        static R: OnceLock<SolveResult> = OnceLock::new();
        R.get_or_init(|| solve(0.9))
    }

    /// `Q` on a grid, wrapped as a converged result with `ε = ρ*^{-1/2}`.
    fn q_result(l: f64, n: usize) -> SolveResult {
        let p = profile();
        let rs = p.rho_star();
        let grid = make_grid(l, n).unwrap();
        let field = embed_q(p, &grid, [0.0, 0.0], 1.0, 1.0).unwrap().field;
        let table = build_log_kernel(&grid);
        let breakdown = crate::energy::evaluate_energy(&field, &table).unwrap();
        SolveResult {
            field,
            rho: rs,
            e: breakdown.total,
            breakdown,
            mu: -1.0,
            eps: 1.0 / rs.sqrt(),
            eps_bar: 1.0,
            x_peak: [0.0, 0.0],
            residual: 0.0,
            iters: 0,
            converged: true,
            positive: true,
            boundary_decayed: true,
            energy_history: vec![],
        }
    }

    #[test]
    fn constants() {
        let p = profile();
        let cq = c_q(p);
        assert!((cq - 2.8382610).abs() < 1e-5, "{cq}");
        let rs = p.rho_star();
        let e = energy_prediction(0.99 * rs, rs, cq);
        assert!((e + 77.23).abs() < 0.01, "{e}");
        // Deeper by (ρ*²/8) ln 2 each time the distance to ρ* halves.
        let a = energy_prediction(rs - 0.2, rs, cq);
        let b = energy_prediction(rs - 0.1, rs, cq);
        assert!((a - b - rs * rs / 8.0 * 2f64.ln()).abs() < 1e-10);
        assert!((decay_bound(rs) + 0.19489).abs() < 1e-4);
    }

    #[test]
    fn exact_q_rescales_to_itself() {
        let res = q_result(16.0, 512);
        let p = profile();
        let w = rescale_to_w(&res, Which::EpsBar).unwrap();
        let (inf, x) = profile_distance(&w, Which::EpsBar, p).unwrap();
        assert!(inf < 1e-5 && x < 1e-4, "{inf} {x}");
        assert!(((w.mass() - p.rho_star()) / p.rho_star()).abs() < 1e-4);
        let w = rescale_to_w(&res, Which::Eps).unwrap();
        let (inf, _) = profile_distance(&w, Which::Eps, p).unwrap();
        assert!(inf < 1e-5, "{inf}");
        assert!(((w.mass() - p.rho_star()) / p.rho_star()).abs() < 1e-4);
    }

    #[test]
    fn shifted_peak_is_followed() {
        let p = profile();
        let grid = make_grid(16.0, 512).unwrap();
        let mut res = q_result(16.0, 512);
        res.field = embed_q(p, &grid, [0.37, -0.21], 1.0, 1.0).unwrap().field;
        let w = rescale_to_w(&res, Which::EpsBar).unwrap();
        let (inf, _) = profile_distance(&w, Which::EpsBar, p).unwrap();
        assert!(inf < 1e-5, "{inf}");
    }

    #[test]
    fn peak_on_boundary_is_rejected() {
        let mut res = q_result(8.0, 128);
        let p = profile();
        let grid = res.field.grid().clone();
        res.field = embed_q(p, &grid, [-8.0, 0.5], 1.0, 1.0).unwrap().field;
        assert!(matches!(rescale_to_w(&res, Which::EpsBar), Err(Error::Centering(_))));
        res.converged = false;
        assert!(matches!(rescale_to_w(&res, Which::EpsBar), Err(Error::Precondition(_))));
    }

    #[test]
    fn decay_of_exact_q() {
        let res = q_result(16.0, 512);
        let fit = decay_check(&res).unwrap();
        let expected = -1.0 / profile().rho_star().sqrt();
        assert!((fit.slope - expected).abs() < 0.02, "{}", fit.slope);
        assert!(!fit.flagged);
        assert_eq!(fit.window, [6.0, 10.0]);
    }

    #[test]
    fn decay_flags() {
        let grid = make_grid(8.0, 64).unwrap();
        let flat = Field2D::from_fn(grid.clone(), |_, _| 1.0).unwrap();
        assert!(decay_fit(&flat, [0.0, 0.0], 0.5).flagged);
        // A Gaussian underflows inside the window and the window shrinks.
        let g = Field2D::from_fn(grid, |x, y| (-(x * x + y * y)).exp()).unwrap();
        let fit = decay_fit(&g, [0.0, 0.0], 0.6);
        assert!(fit.flagged && fit.window[1] < 10.0, "{fit:?}");
    }

    #[test]
    fn minimizer_diagnostics_at_nine_tenths() {
        let res = nine_tenths();
        let p = profile();
        let rs = p.rho_star();
        let fit = decay_check(res).unwrap();
        assert!(fit.slope <= decay_bound(rs) + 0.05, "{fit:?}");
        let w = rescale_to_w(res, Which::EpsBar).unwrap();
        assert!(((w.mass() - res.rho) / res.rho).abs() < 1e-4);
        let row = sweep_row(res, p, c_q(p)).unwrap();
        assert!(row.is_finite());
        assert_eq!(row.eps_bar, rs.sqrt() * row.eps);
        assert!(row.gn_ratio <= 1.0 + 1e-3);
        assert!(row.x_peak_norm < 0.5 * row.h);
        assert!(row.profile_dist_inf < 0.5);
    }

    #[test]
    fn sweep_rows_are_sorted_and_flagged() {
        let p = profile();
        let base = SolveConfig { max_iters: 400, ..SolveConfig::new(1.0) };
        let rows = run_sweep(&[0.6, 0.3], &base, GridRule::Fixed { half_width: 8.0, n: 256 }, p).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows[0].rho_frac < rows[1].rho_frac);
        assert!(rows.iter().all(|r| r.converged && r.is_finite()));
        assert!(rows[1].e < rows[0].e);
        // An under-resolved fraction comes back flagged and the sweep goes on.
        let rows = run_sweep(&[0.99, 0.3], &base, GridRule::Fixed { half_width: 8.0, n: 256 }, p).unwrap();
        assert!(rows[0].converged && rows[0].error.is_none());
        assert!(!rows[1].converged && rows[1].error.is_some());
        assert!(run_sweep(&[1.0], &base, GridRule::Adaptive, p).is_err());
    }

    #[test]
    fn centering_reports() {
        let empty = centering_check(&[]);
        assert!(empty.rows.is_empty() && !empty.passed);
        let p = profile();
        let row = sweep_row(nine_tenths(), p, c_q(p)).unwrap();
        let mut other = row.clone();
        other.rho_frac = 0.95;
        let rep = centering_check(&[row.clone(), other.clone()]);
        assert!(rep.passed);
        assert!(rep.rows.iter().all(|e| e.cells <= 1.0));
        other.x_peak_norm = other.h;
        assert!(!centering_check(&[row, other]).passed);
    }

    #[test]
    fn nonexistence() {
        let p = profile();
        let rs = p.rho_star();
        let table = build_log_kernel(&make_grid(8.0, 512).unwrap());
        let taus = [1.0, 2.0, 4.0, 8.0];
        let at = nonexistence_probe(rs, &taus, p, &table).unwrap();
        assert!(at.strictly_decreasing && at.passed && !at.truncated);
        let above = nonexistence_probe(1.1 * rs, &taus, p, &table).unwrap();
        assert!(above.strictly_decreasing && above.passed);
        let gaps = |r: &NonexistenceReport| r.energies.windows(2).map(|w| w[0] - w[1]).collect::<Vec<_>>();
        for (a, b) in gaps(&above).iter().zip(gaps(&at)) {
            assert!(*a > b);
        }
        assert!(matches!(nonexistence_probe(0.5 * rs, &taus, p, &table), Err(Error::Precondition(_))));
        assert!(matches!(nonexistence_probe(rs, &[2.0, 1.0], p, &table), Err(Error::Precondition(_))));
        let cut = nonexistence_probe(rs, &[1.0, 2.0, 4.0, 8.0, 64.0], p, &table).unwrap();
        assert!(cut.truncated && cut.taus.len() == 4);
    }

    #[test]
    fn row_helpers() {
        let mut row = SweepRow::empty(0.9 * 11.7, 11.7, 6.0, 512, 2.8);
        assert!(!row.is_finite());
        row.e = row.e_pred * 1.02;
        assert!((row.energy_gap() - 0.02).abs() < 1e-12);
        row.eps_bar = 1.1 * row.eps_bar_pred;
        assert!((row.rate_ratio() - 1.1).abs() < 1e-12);
        row.eps = row.eps_bar / 11.7f64.sqrt();
        row.mu = -1.0 / (11.7 * row.eps * row.eps);
        row.mu_eps2 = row.mu * row.eps * row.eps;
        assert!((row.mu_ratio() + 1.0).abs() < 1e-12);
    }
}
