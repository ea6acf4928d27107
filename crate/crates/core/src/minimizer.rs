//! Constrained minimization of the energy on the sphere `∫u² = ρ`.
//!
//! Two schemes are available. [`Scheme::ConjugateGradient`] (the default)
//! runs preconditioned nonlinear conjugate gradients on the sphere. Its line
//! search is exact: along `u + t d` renormalized to mass `ρ`, the energy is a
//! rational function of `t` whose coefficients cost one extra padded
//! convolution. [`Scheme::GradientFlow`] is the semi-implicit normalized
//! gradient flow.
//!
//! Near the critical mass the minimizer concentrates and rigid translation
//! becomes an almost flat direction (its restoring force comes only from the
//! external potential). Both schemes periodically take a Newton step on the
//! translation, which costs only a few moments of `u²`.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::energy::{evaluate_energy, external_potential, EnergyBreakdown};
use crate::error::{Error, Result};
use crate::grid::{Field2D, Grid2D};
use crate::groundstate::{embed_q, scaled_q, RadialProfile};
use crate::logconv::{Kernel, KernelTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitKind {
    ScaledQ,
    Provided,
    RandomizedQ,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    ConjugateGradient,
    GradientFlow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    pub rho: f64,
    pub half_width: f64,
    pub n: usize,
    pub time_step: f64,
    pub max_iters: usize,
    pub energy_tol: f64,
    pub residual_tol: f64,
    pub init: InitKind,
    pub seed: u64,
    pub scheme: Scheme,
    /// Allow `ρ ≥ ρ*` with the scaled-Q start. No minimizer exists there;
    /// the run ends with a resolution error or unconverged.
    pub allow_supercritical: bool,
}

impl SolveConfig {
    pub fn new(rho: f64) -> Self {
        Self {
            rho,
            half_width: 8.0,
            n: 512,
            time_step: 0.05,
            max_iters: 20_000,
            energy_tol: 1e-10,
            residual_tol: 1e-7,
            init: InitKind::ScaledQ,
            seed: 0,
            scheme: Scheme::ConjugateGradient,
            allow_supercritical: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Precondition(what.into()));
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return bad("rho must be positive");
        }
        if !(self.time_step > 0.0) {
            return bad("time_step must be positive");
        }
        if !(self.energy_tol > 0.0 && self.residual_tol > 0.0) {
            return bad("tolerances must be positive");
        }
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1");
        }
        Grid2D::new(self.half_width, self.n).map(|_| ())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveResult {
    #[serde(skip)]
    pub field: Field2D,
    pub rho: f64,
    pub e: f64,
    pub breakdown: EnergyBreakdown,
    pub mu: f64,
    pub eps: f64,
    pub eps_bar: f64,
    pub x_peak: [f64; 2],
    pub residual: f64,
    pub iters: usize,
    pub converged: bool,
    /// No value below `-1e-12 max u`.
    pub positive: bool,
    pub boundary_decayed: bool,
    pub energy_history: Vec<f64>,
}

/// `2(ρ* - ρ)^{1/2} / ρ*`, the predicted blow-up width.
pub fn predicted_eps_bar(rho: f64, rho_star: f64) -> f64 {
    2.0 * (rho_star - rho).max(0.0).sqrt() / rho_star
}

/// Scale of the optimal trial function `u_τ`: `[ρρ*/4(ρ* - ρ)]^{1/2}`.
pub fn optimal_tau(rho: f64, rho_star: f64) -> f64 {
    (rho * rho_star / (4.0 * (rho_star - rho))).sqrt()
}

/// Smallest power-of-two multiple of `n` with `h ≤ ε̄_pred / 2`.
pub fn resolved_n(half_width: f64, n: usize, rho: f64, rho_star: f64) -> usize {
    let target = predicted_eps_bar(rho, rho_star) / 2.0;
    let mut n = n;
    while 2.0 * half_width / n as f64 > target && n < (1 << 14) {
        n *= 2;
    }
    n
}

/// Default box for a solve at `ρ = frac·ρ*`. The box shrinks with the
/// predicted core width, `L = 32 ε̄` rounded up to a half unit and clamped
/// to `[2, 8]`, so that the spectral tail stays at rounding level on the box
/// edge. `n` is 512, or 1024 above `0.95ρ*`.
pub fn default_grid(frac: f64, rho_star: f64) -> (f64, usize) {
    let width = predicted_eps_bar(frac * rho_star, rho_star);
    let half_width = ((32.0 * width * 2.0).ceil() / 2.0).clamp(2.0, 8.0);
    let n = if frac > 0.95 + 1e-12 { 1024 } else { 512 };
    (half_width, n)
}

/// `E(u_τ)` for `u_τ = τ√(ρ/ρ*) Q(τx)`.
pub fn scaling_energy(rho: f64, tau: f64, profile: &RadialProfile, table: &KernelTable) -> Result<f64> {
    let grid = table.grid();
    if !(tau > 0.0) {
        return Err(Error::Precondition("tau must be positive".into()));
    }
    if tau * grid.spacing() > 0.5 {
        return Err(Error::Resolution(format!(
            "core of width 1/τ = {:.4} is not resolved by h = {:.4}",
            1.0 / tau,
            grid.spacing()
        )));
    }
    let emb = scaled_q(profile, grid, rho, tau)?;
    Ok(evaluate_energy(&emb.field, table)?.total)
}

fn dot(h2: f64, a: &[f64], b: &[f64]) -> f64 {
    h2 * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
}

/// Smooth field with values in `[-1, 1]`: a sum of random plane waves at
/// wavelengths comparable to `width`.
fn smooth_noise(grid: &Arc<Grid2D>, width: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let modes: Vec<(f64, f64, f64, f64)> = (0..8)
        .map(|_| {
            let angle = rng.gen_range(0.0..std::f64::consts::TAU);
            let k = rng.gen_range(0.5..2.0) / width;
            (k * angle.cos(), k * angle.sin(), rng.gen_range(0.0..std::f64::consts::TAU), rng.gen_range(-1.0..1.0))
        })
        .collect();
    let total: f64 = modes.iter().map(|m| m.3.abs()).sum();
    grid.sample(|x, y| modes.iter().map(|&(kx, ky, ph, a)| a * (kx * x + ky * y + ph).cos()).sum::<f64>() / total)
}

fn initial_field(
    cfg: &SolveConfig,
    grid: &Arc<Grid2D>,
    profile: &RadialProfile,
    provided: Option<&Field2D>,
) -> Result<Field2D> {
    let rs = profile.rho_star();
    let tau = if cfg.rho < rs { optimal_tau(cfg.rho, rs) } else { 1.0 };
    match cfg.init {
        InitKind::Provided => {
            let f = provided.ok_or_else(|| Error::Precondition("init = provided needs a field".into()))?;
            if **f.grid() != **grid {
                return Err(Error::KernelMismatch);
            }
            f.with_mass(cfg.rho)
        }
        InitKind::ScaledQ => Ok(scaled_q(profile, grid, cfg.rho, tau)?.field),
        InitKind::RandomizedQ => {
            let core = embed_q(profile, grid, [0.0, 0.0], tau, 1.0)?.field;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let noise = smooth_noise(grid, 1.0 / tau, &mut rng);
            let vals = core.values().iter().zip(&noise).map(|(q, e)| q * (1.0 + 0.1 * e)).collect();
            Field2D::new(grid.clone(), vals)?.with_mass(cfg.rho)
        }
    }
}

/// Iterate together with the quantities every step needs.
struct State {
    grid: Arc<Grid2D>,
    rho: f64,
    h2: f64,
    /// `ln(1 + |x|²)`
    v: Vec<f64>,
    /// `|k|²`
    k2: Vec<f64>,
    u: Vec<f64>,
    /// `-Δu`
    lap: Vec<f64>,
    /// `Φ[u²]`
    phi: Vec<f64>,
}

struct Gradient {
    /// Tangent gradient `Hu - μu`.
    g: Vec<f64>,
    mu: f64,
    energy: f64,
    residual: f64,
}

impl State {
    fn new(u: Vec<f64>, rho: f64, table: &KernelTable) -> Self {
        let grid = table.grid().clone();
        let mut s = Self {
            h2: grid.cell_area(),
            v: external_potential(&grid),
            k2: grid.k_squared(),
            lap: Vec::new(),
            phi: Vec::new(),
            u,
            rho,
            grid,
        };
        s.refresh(table);
        s
    }

    fn refresh(&mut self, table: &KernelTable) {
        self.lap = self.grid.apply_multiplier(&self.u, &self.k2);
        let dens: Vec<f64> = self.u.iter().map(|x| x * x).collect();
        self.phi = table.convolve(Kernel::Log, &dens);
    }

    fn gradient(&self) -> Gradient {
        let len = self.u.len();
        let mut hu = vec![0.0; len];
        let (mut kin, mut ext, mut conv, mut quart) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..len {
            let u = self.u[i];
            let u2 = u * u;
            hu[i] = self.lap[i] + (self.v[i] + self.phi[i] - u2) * u;
            kin += u * self.lap[i];
            ext += self.v[i] * u2;
            conv += self.phi[i] * u2;
            quart += u2 * u2;
        }
        let h2 = self.h2;
        let energy = h2 * (0.5 * kin + 0.5 * ext + 0.25 * conv - 0.25 * quart);
        let mu = dot(h2, &hu, &self.u) / self.rho;
        for (g, u) in hu.iter_mut().zip(&self.u) {
            *g -= mu * u;
        }
        let residual = (dot(h2, &hu, &hu) / self.rho).sqrt();
        Gradient { g: hu, mu, energy, residual }
    }

    /// Newton step for the rigid shift minimizing `½∫V(x + s)u²`, the only
    /// translation-dependent part of the energy. Applied only if it lowers
    /// that term; returns the shift taken.
    fn relax_translation(&mut self, table: &KernelTable) -> Option<[f64; 2]> {
        let g = &self.grid;
        let n = g.n();
        let (mut gx, mut gy, mut hxx, mut hxy, mut hyy, mut ext) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        for i in 0..n {
            let x = g.coord(i);
            for j in 0..n {
                let y = g.coord(j);
                let w = self.u[i * n + j].powi(2);
                let q = 1.0 + x * x + y * y;
                gx += 2.0 * x / q * w;
                gy += 2.0 * y / q * w;
                hxx += (2.0 / q - 4.0 * x * x / (q * q)) * w;
                hxy += -4.0 * x * y / (q * q) * w;
                hyy += (2.0 / q - 4.0 * y * y / (q * q)) * w;
                ext += self.v[i * n + j] * w;
            }
        }
        let det = hxx * hyy - hxy * hxy;
        if !(hxx > 0.0 && det > 0.0) {
            return None;
        }
        let sx = -(hyy * gx - hxy * gy) / det;
        let sy = -(hxx * gy - hxy * gx) / det;
        let size = sx.hypot(sy);
        if size < 1e-10 * g.spacing() || size > 0.5 * g.half_width() {
            return None;
        }
        let moved = g.translate_values(&self.u, [sx, sy]);
        let ext_new: f64 = moved.iter().zip(&self.v).map(|(u, v)| u * u * v).sum();
        if ext_new >= ext {
            return None;
        }
        let mass = dot(self.h2, &moved, &moved);
        let scale = (self.rho / mass).sqrt();
        self.u = moved.into_iter().map(|v| v * scale).collect();
        self.refresh(table);
        Some([sx, sy])
    }

    fn min_max(&self) -> (f64, f64) {
        self.u.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)))
    }
}

/// Energy along the renormalized line `√(ρ/N(t)) (u + t d)`:
/// `E(t) = (ρ/N) A(t) + (ρ/N)² B(t)` with `A` quadratic, `B` quartic and
/// `N` quadratic.
struct LineModel {
    rho: f64,
    a: [f64; 3],
    b: [f64; 5],
    n: [f64; 3],
}

fn poly(c: &[f64], t: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ci| acc * t + ci)
}

fn poly_d(c: &[f64], t: f64) -> f64 {
    c.iter().enumerate().skip(1).rev().fold(0.0, |acc, (k, &ci)| acc * t + k as f64 * ci)
}

impl LineModel {
    fn energy(&self, t: f64) -> f64 {
        let r = self.rho / poly(&self.n, t);
        r * poly(&self.a, t) + r * r * poly(&self.b, t)
    }

    fn slope(&self, t: f64) -> f64 {
        let n = poly(&self.n, t);
        let dn = poly_d(&self.n, t);
        let (a, da) = (poly(&self.a, t), poly_d(&self.a, t));
        let (b, db) = (poly(&self.b, t), poly_d(&self.b, t));
        self.rho * (da * n - a * dn) / (n * n) + self.rho * self.rho * (db * n - 2.0 * b * dn) / (n * n * n)
    }

    /// First local minimizer on `t > 0`, bracketed by doubling from `guess`
    /// and refined by bisection on the slope.
    fn minimize(&self, guess: f64) -> Option<f64> {
        if self.slope(0.0) >= 0.0 {
            return None;
        }
        let mut lo = 0.0;
        let mut hi = guess.max(1e-300);
        let mut found = false;
        for _ in 0..200 {
            if self.slope(hi) > 0.0 {
                found = true;
                break;
            }
            lo = hi;
            hi *= 2.0;
        }
        if !found {
            return None;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.slope(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Some(0.5 * (lo + hi))
    }
}

const REFRESH_EVERY: usize = 50;
const TRANSLATE_EVERY: usize = 20;
const STAGNATION_RUN: usize = 20;

struct Tracker {
    history: Vec<f64>,
    quiet: usize,
}

impl Tracker {
    fn push(&mut self, e: f64, tol: f64) {
        if let Some(&last) = self.history.last() {
            if (e - last).abs() < tol * e.abs() {
                self.quiet += 1;
            } else {
                self.quiet = 0;
            }
        }
        self.history.push(e);
    }
}

pub fn minimize(
    cfg: &SolveConfig,
    table: &KernelTable,
    profile: &RadialProfile,
    provided: Option<&Field2D>,
) -> Result<SolveResult> {
    cfg.validate()?;
    let grid = table.grid().clone();
    if grid.half_width() != cfg.half_width || grid.n() != cfg.n {
        return Err(Error::KernelMismatch);
    }
    let rs = profile.rho_star();
    if cfg.rho >= rs && cfg.init == InitKind::ScaledQ && !cfg.allow_supercritical {
        return Err(Error::SupercriticalMass { rho: cfg.rho, rho_star: rs });
    }
    if cfg.rho < rs && grid.spacing() > predicted_eps_bar(cfg.rho, rs) / 2.0 {
        return Err(Error::Resolution(format!(
            "h = {:.4} exceeds half the predicted core width {:.4}; use n ≥ {}",
            grid.spacing(),
            predicted_eps_bar(cfg.rho, rs),
            resolved_n(cfg.half_width, cfg.n, cfg.rho, rs)
        )));
    }
    let init = initial_field(cfg, &grid, profile, provided)?;
    let mut state = State::new(init.into_values(), cfg.rho, table);
    let mut tracker = Tracker { history: Vec::new(), quiet: 0 };
    let (iters, converged) = match cfg.scheme {
        Scheme::ConjugateGradient => run_cg(cfg, table, rs, &mut state, &mut tracker)?,
        Scheme::GradientFlow => run_flow(cfg, table, &mut state, &mut tracker)?,
    };
    finish(cfg, table, profile, state, tracker, iters, converged)
}

fn collapse_check(state: &State, rho_star: f64) -> Result<()> {
    // ε̄ from the kinetic energy: ∫|∇u|² = 2 × kinetic part, and ε̄ = √ρ* ε.
    let grad: f64 = dot(state.h2, &state.u, &state.lap);
    let eps_bar = rho_star.sqrt() / grad.sqrt();
    if eps_bar < 2.0 * state.grid.spacing() {
        return Err(Error::Resolution(format!(
            "the core collapsed to width {eps_bar:.4} below two cells"
        )));
    }
    Ok(())
}

fn run_cg(
    cfg: &SolveConfig,
    table: &KernelTable,
    rho_star: f64,
    state: &mut State,
    tracker: &mut Tracker,
) -> Result<(usize, bool)> {
    let grid = state.grid.clone();
    let h2 = state.h2;
    let rho = state.rho;
    let len = state.u.len();
    let supercritical = cfg.rho >= rho_star;
    let mut d = vec![0.0; len];
    let mut lap_d = vec![0.0; len];
    let mut prev: Option<(Vec<f64>, f64)> = None; // (g_old, <z_old, g_old>)
    let mut t_guess = 1.0;
    let mut since_refresh = 0;
    let mut restart = true;

    for it in 0..cfg.max_iters {
        let mut gr = state.gradient();
        if gr.residual < cfg.residual_tol && tracker.quiet + 1 >= STAGNATION_RUN && since_refresh > 0 {
            // Confirm against freshly computed -Δu and Φ[u²].
            state.refresh(table);
            since_refresh = 0;
            gr = state.gradient();
        }
        tracker.push(gr.energy, cfg.energy_tol);
        if gr.residual < cfg.residual_tol && tracker.quiet >= STAGNATION_RUN && since_refresh == 0 {
            return Ok((it, true));
        }
        if !gr.energy.is_finite() {
            return Err(Error::NonFinite { index: it });
        }
        if supercritical && it % 10 == 0 {
            collapse_check(state, rho_star)?;
        }
        if it > 0 && it % TRANSLATE_EVERY == 0 && state.relax_translation(table).is_some() {
            since_refresh = 0;
            prev = None;
            restart = true;
            continue;
        }

        // Preconditioner (c - Δ)⁻¹ with c the kinetic scale ∫|∇u|²/ρ, which
        // tracks -μ near collapse. -Δz comes out of the same inverse.
        let c = (dot(h2, &state.u, &state.lap) / rho).max(1.0);
        let mut spec = grid.spectrum(&gr.g);
        for (z, k2) in spec.iter_mut().zip(&state.k2) {
            let p = *z / (c + k2);
            *z = p + Complex64::new(0.0, *k2) * p;
        }
        grid.inverse(&mut spec);
        let mut z: Vec<f64> = spec.iter().map(|w| w.re).collect();
        let mut lap_z: Vec<f64> = spec.iter().map(|w| w.im).collect();
        let a = dot(h2, &z, &state.u) / rho;
        for i in 0..len {
            z[i] -= a * state.u[i];
            lap_z[i] -= a * state.lap[i];
        }
        let zg = dot(h2, &z, &gr.g);

        let beta = match (&prev, restart) {
            (Some((g_old, zg_old)), false) => {
                let num: f64 = h2 * z.iter().zip(&gr.g).zip(g_old).map(|((z, g), go)| z * (g - go)).sum::<f64>();
                (num / zg_old).max(0.0)
            }
            _ => 0.0,
        };
        let b = dot(h2, &d, &state.u) / rho;
        for i in 0..len {
            d[i] = -z[i] + beta * (d[i] - b * state.u[i]);
            lap_d[i] = -lap_z[i] + beta * (lap_d[i] - b * state.lap[i]);
        }
        if dot(h2, &d, &gr.g) >= 0.0 {
            for i in 0..len {
                d[i] = -z[i];
                lap_d[i] = -lap_z[i];
            }
        }
        restart = false;
        prev = Some((gr.g, zg));

        let Some((t, p1, p2)) = line_search(state, table, &d, &lap_d, t_guess) else {
            // No descent left along d: at the rounding floor.
            if restart_or_stop(&mut prev) {
                return Ok((it, gr.residual < cfg.residual_tol));
            }
            restart = true;
            continue;
        };
        t_guess = t;

        let mut v: Vec<f64> = state.u.iter().zip(&d).map(|(u, d)| u + t * d).collect();
        let lam2 = rho / dot(h2, &v, &v);
        let lam = lam2.sqrt();
        for x in v.iter_mut() {
            *x *= lam;
        }
        state.u = v;
        since_refresh += 1;
        if since_refresh >= REFRESH_EVERY {
            state.refresh(table);
            since_refresh = 0;
        } else {
            for i in 0..len {
                state.lap[i] = lam * (state.lap[i] + t * lap_d[i]);
                state.phi[i] = lam2 * (state.phi[i] + 2.0 * t * p1[i] + t * t * p2[i]);
            }
        }
    }
    let gr = state.gradient();
    tracker.push(gr.energy, cfg.energy_tol);
    Ok((cfg.max_iters, false))
}

fn restart_or_stop(prev: &mut Option<(Vec<f64>, f64)>) -> bool {
    // A failed search right after a restart means steepest descent failed
    // as well.
    prev.take().is_none()
}

/// Exact line search; returns the step and the potentials `Φ[ud]`, `Φ[d²]`
/// needed to update `Φ[u²]` without another convolution.
fn line_search(
    state: &State,
    table: &KernelTable,
    d: &[f64],
    lap_d: &[f64],
    guess: f64,
) -> Option<(f64, Vec<f64>, Vec<f64>)> {
    let h2 = state.h2;
    let len = d.len();
    let ud: Vec<f64> = (0..len).map(|i| state.u[i] * d[i]).collect();
    let dd: Vec<f64> = d.iter().map(|x| x * x).collect();
    let (p1, p2) = table.log_potential_pair(&ud, &dd);

    let (mut a0, mut a1, mut a2) = (0.0, 0.0, 0.0);
    let (mut c0, mut c1, mut c2a, mut c2b, mut c3, mut c4) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    let (mut q0, mut q1, mut q2, mut q3, mut q4) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let (mut n1, mut n2) = (0.0, 0.0);
    for i in 0..len {
        let (u, di, v) = (state.u[i], d[i], state.v[i]);
        let u2 = u * u;
        let d2 = di * di;
        a0 += u * (state.lap[i] + v * u);
        a1 += di * (state.lap[i] + v * u);
        a2 += di * (lap_d[i] + v * di);
        let phi = state.phi[i];
        c0 += phi * u2;
        c1 += phi * ud[i];
        c2a += phi * d2;
        c2b += p1[i] * ud[i];
        c3 += p1[i] * d2;
        c4 += p2[i] * d2;
        q0 += u2 * u2;
        q1 += u2 * u * di;
        q2 += u2 * d2;
        q3 += u * di * d2;
        q4 += d2 * d2;
        n1 += u * di;
        n2 += d2;
    }
    let model = LineModel {
        rho: state.rho,
        a: [0.5 * h2 * a0, h2 * a1, 0.5 * h2 * a2],
        b: [
            0.25 * h2 * (c0 - q0),
            0.25 * h2 * (4.0 * c1 - 4.0 * q1),
            0.25 * h2 * (2.0 * c2a + 4.0 * c2b - 6.0 * q2),
            0.25 * h2 * (4.0 * c3 - 4.0 * q3),
            0.25 * h2 * (c4 - q4),
        ],
        n: [state.rho, 2.0 * h2 * n1, h2 * n2],
    };
    let t = model.minimize(guess)?;
    if !(model.energy(t) <= model.energy(0.0)) {
        return None;
    }
    Some((t, p1, p2))
}

/// Semi-implicit normalized gradient flow:
/// `(1 - τΔ)u⁺ = u + τ(μ̃u + u³ - Vu - Φu)`, then rescale to mass `ρ`.
/// The explicit part is a contraction only for `τ < 1/max(V + Φ - u² - μ̃)`,
/// so the step is capped there.
fn run_flow(cfg: &SolveConfig, table: &KernelTable, state: &mut State, tracker: &mut Tracker) -> Result<(usize, bool)> {
    let grid = state.grid.clone();
    let h2 = state.h2;
    let rho = state.rho;
    let len = state.u.len();
    for it in 0..cfg.max_iters {
        let gr = state.gradient();
        tracker.push(gr.energy, cfg.energy_tol);
        if gr.residual < cfg.residual_tol && tracker.quiet >= STAGNATION_RUN {
            return Ok((it, true));
        }
        if !gr.energy.is_finite() {
            return Err(Error::NonFinite { index: it });
        }
        if it > 0 && it % TRANSLATE_EVERY == 0 && state.relax_translation(table).is_some() {
            continue;
        }
        let mu = gr.mu;
        let mut stiff = 0.0_f64;
        for i in 0..len {
            stiff = stiff.max(state.v[i] + state.phi[i] - state.u[i] * state.u[i] - mu);
        }
        let tau = if stiff > 0.0 { cfg.time_step.min(0.9 / stiff) } else { cfg.time_step };
        let rhs: Vec<f64> = (0..len)
            .map(|i| {
                let u = state.u[i];
                u + tau * (mu * u + u * u * u - (state.v[i] + state.phi[i]) * u)
            })
            .collect();
        let inv: Vec<f64> = state.k2.iter().map(|k2| 1.0 / (1.0 + tau * k2)).collect();
        let next = grid.apply_multiplier(&rhs, &inv);
        let scale = (rho / dot(h2, &next, &next)).sqrt();
        state.u = next.into_iter().map(|v| v * scale).collect();
        state.refresh(table);
        let (min, max) = state.min_max();
        if min < -1e-12 * max {
            return Err(Error::PositivityLost { iteration: it, min, max });
        }
    }
    let gr = state.gradient();
    tracker.push(gr.energy, cfg.energy_tol);
    Ok((cfg.max_iters, false))
}

fn finish(
    cfg: &SolveConfig,
    table: &KernelTable,
    profile: &RadialProfile,
    state: State,
    tracker: Tracker,
    iters: usize,
    converged: bool,
) -> Result<SolveResult> {
    let rs = profile.rho_star();
    let field = Field2D::new(state.grid.clone(), state.u)?;
    let breakdown = evaluate_energy(&field, table)?;
    let e = breakdown.total;
    let mu = crate::energy::lagrange_multiplier(&field, e, table)?;
    let residual = crate::energy::el_residual(&field, mu, table)?;
    let grad = 2.0 * breakdown.kinetic;
    let eps = 1.0 / grad.sqrt();
    let max = field.max_abs();
    let positive = field.values().iter().all(|&v| v >= -1e-12 * max);
    Ok(SolveResult {
        rho: cfg.rho,
        e,
        breakdown,
        mu,
        eps,
        eps_bar: rs.sqrt() * eps,
        x_peak: field.peak_location(),
        residual,
        iters,
        converged,
        positive,
        boundary_decayed: field.is_boundary_decayed(1e-10),
        energy_history: tracker.history,
        field,
    })
}

/// Translates a field so that the maximum of its interpolant sits at the
/// origin.
pub fn center_at_peak(field: &Field2D) -> Result<(Field2D, [f64; 2])> {
    let peak = field.refine_peak()?;
    let grid = field.grid();
    let moved = grid.translate_values(field.values(), [-peak[0], -peak[1]]);
    Ok((Field2D::new(grid.clone(), moved)?, peak))
}

#[derive(Debug, Clone, Serialize)]
pub struct StartOutcome {
    pub seed: u64,
    pub e: f64,
    pub residual: f64,
    pub iters: usize,
    pub converged: bool,
    pub peak: [f64; 2],
}

#[derive(Debug, Clone, Serialize)]
pub struct UniquenessReport {
    pub rho: f64,
    pub starts: Vec<StartOutcome>,
    /// `(i, j, max|u_i - u_j| / max|u|)` over converged, centered pairs.
    pub pairwise: Vec<(usize, usize, f64)>,
    pub max_distance: f64,
    /// `(max e - min e) / |mean e|` over converged starts.
    pub energy_spread: f64,
    pub note: String,
}

/// Minimizes from `n_starts` randomized starts (seeds `cfg.seed + k`) and
/// compares the results after centering each at its peak.
pub fn uniqueness_probe(
    rho: f64,
    n_starts: usize,
    cfg: &SolveConfig,
    table: &KernelTable,
    profile: &RadialProfile,
) -> Result<UniquenessReport> {
    if rho >= profile.rho_star() {
        return Err(Error::SupercriticalMass { rho, rho_star: profile.rho_star() });
    }
    if n_starts == 0 {
        return Err(Error::Precondition("n_starts must be at least 1".into()));
    }
    let mut starts = Vec::with_capacity(n_starts);
    let mut centered = Vec::new();
    for k in 0..n_starts {
        let run = SolveConfig {
            rho,
            init: InitKind::RandomizedQ,
            seed: cfg.seed + k as u64,
            ..cfg.clone()
        };
        let res = minimize(&run, table, profile, None)?;
        let (field, peak) = center_at_peak(&res.field)?;
        if res.converged {
            centered.push((k, field));
        }
        starts.push(StartOutcome {
            seed: run.seed,
            e: res.e,
            residual: res.residual,
            iters: res.iters,
            converged: res.converged,
            peak,
        });
    }
    let mut pairwise = Vec::new();
    for a in 0..centered.len() {
        for b in a + 1..centered.len() {
            let (fa, fb) = (&centered[a].1, &centered[b].1);
            let scale = fa.max_abs().max(fb.max_abs());
            let dist = fa.values().iter().zip(fb.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            pairwise.push((centered[a].0, centered[b].0, dist / scale));
        }
    }
    let energies: Vec<f64> = starts.iter().filter(|s| s.converged).map(|s| s.e).collect();
    let energy_spread = if energies.is_empty() {
        0.0
    } else {
        let max = energies.iter().cloned().fold(f64::MIN, f64::max);
        let min = energies.iter().cloned().fold(f64::MAX, f64::min);
        let mean = energies.iter().sum::<f64>() / energies.len() as f64;
        (max - min) / mean.abs()
    };
    Ok(UniquenessReport {
        rho,
        max_distance: pairwise.iter().map(|p| p.2).fold(0.0, f64::max),
        starts,
        pairwise,
        energy_spread,
        note: "Empirical check only: agreement of the starts tried here is evidence of a single basin, not a proof of uniqueness.".into(),
    })
}
