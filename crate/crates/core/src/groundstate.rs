//! The positive radial solution `Q` of `-ΔQ + Q - Q³ = 0` in the plane.
//!
//! `Q` is found by shooting on `q0 = Q(0)`: orbits that start too high cross
//! zero, orbits that start too low turn back up while still positive.
//! Bisection between the two classes converges to the ground state. Shooting
//! orbits separate from the true solution once the exponentially growing
//! mode takes over, so the far tail is replaced by `c r^{-1/2} e^{-r}`
//! matched at the last reliable radius.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Field2D, Grid2D};

/// Tail stitching threshold on `Q`.
const STITCH_LEVEL: f64 = 1e-8;
/// Relative separation between the two bracketing orbits that marks the end
/// of the reliable part of the integration.
const ORBIT_SEPARATION: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShootingParams {
    pub dr: f64,
    pub r_max: f64,
    pub tol: f64,
    pub bracket: (f64, f64),
}

impl Default for ShootingParams {
    fn default() -> Self {
        Self {
            dr: 1e-4,
            r_max: 30.0,
            tol: 1e-10,
            bracket: (1.0, 4.0),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RadialProfile {
    pub r_max: f64,
    pub dr: f64,
    #[serde(skip)]
    values: Vec<f64>,
    #[serde(skip)]
    derivative: Vec<f64>,
    pub q0: f64,
    /// `ρ* = 2π∫Q² r dr`.
    pub mass: f64,
    /// `2π∫(Q')² r dr`.
    pub kinetic: f64,
    /// `2π∫Q⁴ r dr`.
    pub quartic: f64,
    /// Radius beyond which the asymptotic tail is used.
    pub match_radius: f64,
    /// Tail amplitude `c` in `c r^{-1/2} e^{-r}`.
    pub tail_amplitude: f64,
    /// Final bisection bracket: undershooting and overshooting `q0`.
    pub bracket: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Outcome {
    /// Crossed zero: `q0` too large.
    Overshoot,
    /// Turned upward while positive (or never decided): `q0` too small.
    Undershoot,
}

/// Right-hand side of the radial equation as a first-order system.
#[inline]
fn rhs(r: f64, q: f64, p: f64) -> (f64, f64) {
    (p, q - q * q * q - p / r)
}

#[inline]
fn rk4_step(r: f64, q: f64, p: f64, dr: f64) -> (f64, f64) {
    let (k1q, k1p) = rhs(r, q, p);
    let (k2q, k2p) = rhs(r + 0.5 * dr, q + 0.5 * dr * k1q, p + 0.5 * dr * k1p);
    let (k3q, k3p) = rhs(r + 0.5 * dr, q + 0.5 * dr * k2q, p + 0.5 * dr * k2p);
    let (k4q, k4p) = rhs(r + dr, q + dr * k3q, p + dr * k3p);
    (
        q + dr / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q),
        p + dr / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p),
    )
}

/// Series start `Q ≈ q0 + c r² + d r⁴` that avoids the `1/r` singularity.
fn series_start(q0: f64, r: f64) -> (f64, f64) {
    let c = (q0 - q0 * q0 * q0) / 4.0;
    let d = (1.0 - 3.0 * q0 * q0) * c / 16.0;
    let r2 = r * r;
    (q0 + c * r2 + d * r2 * r2, 2.0 * c * r + 4.0 * d * r2 * r)
}

struct Orbit {
    outcome: Outcome,
    /// `Q` and `Q'` at `r_i = i dr`, up to the event.
    q: Vec<f64>,
    p: Vec<f64>,
}

fn integrate_orbit(q0: f64, params: &ShootingParams, record: bool) -> Orbit {
    let dr = params.dr;
    let steps = (params.r_max / dr).round() as usize;
    let mut qs = Vec::new();
    let mut ps = Vec::new();
    if record {
        qs.reserve(steps + 1);
        ps.reserve(steps + 1);
        qs.push(q0);
        ps.push(0.0);
    }
    let (mut q, mut p) = series_start(q0, dr);
    let mut outcome = Outcome::Undershoot;
    for i in 1..=steps {
        if record {
            qs.push(q);
            ps.push(p);
        }
        if q < 0.0 {
            outcome = Outcome::Overshoot;
            break;
        }
        if p > 0.0 {
            outcome = Outcome::Undershoot;
            break;
        }
        if i == steps {
            break;
        }
        let r = i as f64 * dr;
        let next = rk4_step(r, q, p, dr);
        q = next.0;
        p = next.1;
    }
    Orbit {
        outcome,
        q: qs,
        p: ps,
    }
}

/// Ground state with the default step `1e-4` and `r_max = 30`.
pub fn shoot_q(tol: f64) -> Result<RadialProfile> {
    shoot_q_with(ShootingParams {
        tol,
        ..ShootingParams::default()
    })
}

pub fn shoot_q_with(params: ShootingParams) -> Result<RadialProfile> {
    if !(params.tol > 0.0 && params.tol <= 1e-8) {
        return Err(Error::Precondition(format!(
            "shooting tolerance must lie in (0, 1e-8], got {}",
            params.tol
        )));
    }
    if !(params.dr > 0.0 && params.dr <= 1e-4) || params.r_max < 20.0 {
        return Err(Error::Precondition(format!(
            "need dr <= 1e-4 and r_max >= 20, got dr = {}, r_max = {}",
            params.dr, params.r_max
        )));
    }
    let (mut lo, mut hi) = params.bracket;
    if integrate_orbit(lo, &params, false).outcome != Outcome::Undershoot
        || integrate_orbit(hi, &params, false).outcome != Outcome::Overshoot
    {
        return Err(Error::ShootingFailure(format!(
            "no sign change of the shooting outcome in q0 ∈ [{lo}, {hi}]"
        )));
    }
    // Bisect past `tol` down to float resolution: the tail stitching needs
    // the two bracketing orbits to stay together as long as possible.
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        match integrate_orbit(mid, &params, false).outcome {
            Outcome::Overshoot => hi = mid,
            Outcome::Undershoot => lo = mid,
        }
    }
    debug_assert!(hi - lo < params.tol);

    let under = integrate_orbit(lo, &params, true);
    let over = integrate_orbit(hi, &params, true);
    build_profile(lo, hi, &under, &over, &params)
}

/// Rebuilds a profile from a bracket returned by an earlier shooting run
/// with the same `params`, skipping the bisection.
pub fn profile_from_bracket(params: ShootingParams, bracket: (f64, f64)) -> Result<RadialProfile> {
    let (lo, hi) = bracket;
    if !(lo < hi && hi - lo < params.tol) {
        return Err(Error::Precondition(format!("bracket ({lo}, {hi}) is not within tol")));
    }
    let under = integrate_orbit(lo, &params, true);
    let over = integrate_orbit(hi, &params, true);
    if under.outcome != Outcome::Undershoot || over.outcome != Outcome::Overshoot {
        return Err(Error::ShootingFailure(format!("({lo}, {hi}) does not bracket the ground state")));
    }
    build_profile(lo, hi, &under, &over, &params)
}

fn build_profile(
    lo: f64,
    hi: f64,
    under: &Orbit,
    over: &Orbit,
    params: &ShootingParams,
) -> Result<RadialProfile> {
    let dr = params.dr;
    let steps = (params.r_max / dr).round() as usize;
    let common = under.q.len().min(over.q.len());
    let mut stitch = None;
    for i in 1..common {
        let a = under.q[i];
        let b = over.q[i];
        let avg = 0.5 * (a + b);
        if avg < STITCH_LEVEL || (a - b).abs() > ORBIT_SEPARATION * avg {
            stitch = Some(i);
            break;
        }
    }
    let stitch = stitch.ok_or_else(|| {
        Error::ShootingFailure("orbits never reached the tail regime".into())
    })?;
    let r_s = stitch as f64 * dr;
    let q_s = 0.5 * (under.q[stitch] + over.q[stitch]);
    let amplitude = q_s * r_s.sqrt() * r_s.exp();

    let mut values = Vec::with_capacity(steps + 1);
    let mut derivative = Vec::with_capacity(steps + 1);
    for i in 0..=steps {
        if i < stitch {
            values.push(0.5 * (under.q[i] + over.q[i]));
            derivative.push(0.5 * (under.p[i] + over.p[i]));
        } else {
            let r = i as f64 * dr;
            let q = amplitude * (-r).exp() / r.sqrt();
            values.push(q);
            derivative.push(-q * (1.0 + 0.5 / r));
        }
    }
    let radial = |f: &dyn Fn(usize) -> f64| 2.0 * PI * simpson(steps, dr, |i| f(i) * i as f64 * dr);
    let mass = radial(&|i| values[i] * values[i]);
    let kinetic = radial(&|i| derivative[i] * derivative[i]);
    let quartic = radial(&|i| values[i].powi(4));
    Ok(RadialProfile {
        r_max: steps as f64 * dr,
        dr,
        q0: 0.5 * (lo + hi),
        mass,
        kinetic,
        quartic,
        match_radius: r_s,
        tail_amplitude: amplitude,
        bracket: (lo, hi),
        values,
        derivative,
    })
}

/// Composite Simpson over `steps` uniform intervals (trapezoid on a
/// trailing odd interval).
pub(crate) fn simpson<F: Fn(usize) -> f64>(steps: usize, dr: f64, f: F) -> f64 {
    let even = steps - steps % 2;
    let mut acc = f(0) + f(even);
    for i in 1..even {
        acc += if i % 2 == 1 { 4.0 * f(i) } else { 2.0 * f(i) };
    }
    let mut total = acc * dr / 3.0;
    if even < steps {
        total += 0.5 * dr * (f(even) + f(steps));
    }
    total
}

impl RadialProfile {
    /// `ρ*`.
    pub fn rho_star(&self) -> f64 {
        self.mass
    }

    pub fn radii(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.values.len()).map(move |i| i as f64 * self.dr)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn derivatives(&self) -> &[f64] {
        &self.derivative
    }

    /// Cubic Hermite interpolation of `Q`; zero beyond `r_max`.
    pub fn eval(&self, r: f64) -> f64 {
        self.hermite(r).0
    }

    /// Interpolated `Q'`; zero beyond `r_max`.
    pub fn eval_derivative(&self, r: f64) -> f64 {
        self.hermite(r).1
    }

    fn hermite(&self, r: f64) -> (f64, f64) {
        let r = r.abs();
        let last = self.values.len() - 1;
        let pos = r / self.dr;
        if pos >= last as f64 {
            return (0.0, 0.0);
        }
        let i = pos.floor() as usize;
        let t = pos - i as f64;
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (m0, m1) = (self.derivative[i] * self.dr, self.derivative[i + 1] * self.dr);
        let t2 = t * t;
        let t3 = t2 * t;
        let value = (2.0 * t3 - 3.0 * t2 + 1.0) * y0
            + (t3 - 2.0 * t2 + t) * m0
            + (-2.0 * t3 + 3.0 * t2) * y1
            + (t3 - t2) * m1;
        let slope = ((6.0 * t2 - 6.0 * t) * y0
            + (3.0 * t2 - 4.0 * t + 1.0) * m0
            + (-6.0 * t2 + 6.0 * t) * y1
            + (3.0 * t2 - 2.0 * t) * m1)
            / self.dr;
        (value, slope)
    }

    /// `2π∫f(r) r dr` over the tabulated range.
    pub fn radial_integral<F: Fn(f64, f64, f64) -> f64>(&self, f: F) -> f64 {
        let steps = self.values.len() - 1;
        2.0 * PI
            * simpson(steps, self.dr, |i| {
                let r = i as f64 * self.dr;
                f(r, self.values[i], self.derivative[i]) * r
            })
    }

    /// `∫|x|² Q²`.
    pub fn second_moment(&self) -> f64 {
        self.radial_integral(|r, q, _| r * r * q * q)
    }

    /// `∬ ln|x - y| Q²(x) Q²(y)`. For a radial density the potential is
    /// `M(r) ln r + ∫_r^∞ ln s dM(s)` with `M` the enclosed mass, which
    /// folds the double integral into `2∫ ln r M(r) dM(r)`.
    pub fn log_self_interaction(&self) -> f64 {
        let dm = |i: usize| {
            let r = i as f64 * self.dr;
            2.0 * PI * r * self.values[i] * self.values[i]
        };
        let mut enclosed = 0.0;
        let mut prev = 0.0;
        let mut total = 0.0;
        for i in 1..self.values.len() {
            let r = i as f64 * self.dr;
            enclosed += 0.5 * self.dr * (dm(i - 1) + dm(i));
            let cur = r.ln() * enclosed * dm(i);
            total += 0.5 * self.dr * (prev + cur);
            prev = cur;
        }
        2.0 * total
    }

    /// Residual of `Q'' + Q'/r - Q + Q³` on the integrated (non-tail) part,
    /// with `Q''` from five-point differences of `Q'`. Max over
    /// `r ∈ [r_min, match_radius)`.
    pub fn ode_residual(&self, r_min: f64) -> f64 {
        let start = ((r_min / self.dr).ceil() as usize).max(2);
        let end = ((self.match_radius / self.dr) as usize).saturating_sub(3);
        let d = &self.derivative;
        let mut worst = 0.0_f64;
        for i in start..end {
            let r = i as f64 * self.dr;
            let q2 = (d[i - 2] - 8.0 * d[i - 1] + 8.0 * d[i + 1] - d[i + 2]) / (12.0 * self.dr);
            let q = self.values[i];
            let res = q2 + self.derivative[i] / r - q + q * q * q;
            worst = worst.max(res.abs());
        }
        worst
    }
}

/// Radius beyond which `Q` is below `1e-12` of its peak, scaled by `1/α`.
pub fn support_radius(profile: &RadialProfile, alpha: f64) -> f64 {
    profile.r_max / alpha
}

/// A scaled, translated copy of `Q` sampled on a grid.
#[derive(Debug, Clone)]
pub struct Embedding {
    pub field: Field2D,
    /// The profile support does not fit inside the box.
    pub truncated: bool,
}

/// Samples `u(x) = β Q(α |x - center|)`.
pub fn embed_q(
    profile: &RadialProfile,
    grid: &Arc<Grid2D>,
    center: [f64; 2],
    alpha: f64,
    beta: f64,
) -> Result<Embedding> {
    if !(alpha > 0.0) {
        return Err(Error::Precondition(format!("scale must be positive, got {alpha}")));
    }
    let field = Field2D::from_fn(grid.clone(), |x, y| {
        let r = ((x - center[0]).powi(2) + (y - center[1]).powi(2)).sqrt();
        beta * profile.eval(alpha * r)
    })?;
    let room = grid.half_width() - center[0].abs().max(center[1].abs());
    Ok(Embedding {
        field,
        truncated: support_radius(profile, alpha) > room,
    })
}

/// The mass-`ρ` member `u_τ(x) = τ (ρ/ρ*)^{1/2} Q(τ x)` of the scaling family.
pub fn scaled_q(profile: &RadialProfile, grid: &Arc<Grid2D>, rho: f64, tau: f64) -> Result<Embedding> {
    let beta = tau * (rho / profile.rho_star()).sqrt();
    embed_q(profile, grid, [0.0, 0.0], tau, beta)
}

/// `‖(-Δ + 1 - 3Q²) f‖₂ / ‖f‖₂` with `Q` embedded unscaled at the origin.
pub fn linearized_residual(q: &Field2D, f: &Field2D) -> Result<f64> {
    let grid = q.grid();
    if grid != f.grid() {
        return Err(Error::KernelMismatch);
    }
    let k2 = grid.k_squared();
    let minus_lap = grid.apply_multiplier(f.values(), &k2);
    let mut acc = 0.0;
    for ((l, &fv), &qv) in minus_lap.iter().zip(f.values()).zip(q.values()) {
        let v = l + (1.0 - 3.0 * qv * qv) * fv;
        acc += v * v;
    }
    let norm = f.mass();
    if norm <= 0.0 {
        return Err(Error::DegenerateField("zero test function".into()));
    }
    Ok((grid.cell_area() * acc / norm).sqrt())
}

/// Residual of the linearized operator on the translation mode `∂x₁Q`.
pub fn kernel_residual(profile: &RadialProfile, grid: &Arc<Grid2D>) -> Result<f64> {
    let q = embed_q(profile, grid, [0.0, 0.0], 1.0, 1.0)?.field;
    let (dx, _) = grid.gradient_values(q.values());
    let dx = Field2D::new(grid.clone(), dx)?;
    linearized_residual(&q, &dx)
}

/// Residuals of the linearized operator on `∂x₁Q`, `∂x₂Q` and `Q` itself.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct KernelReport {
    pub dx1: f64,
    pub dx2: f64,
    pub q: f64,
}

pub fn kernel_report(profile: &RadialProfile, grid: &Arc<Grid2D>) -> Result<KernelReport> {
    let q = embed_q(profile, grid, [0.0, 0.0], 1.0, 1.0)?.field;
    let (dx, dy) = grid.gradient_values(q.values());
    let dx = Field2D::new(grid.clone(), dx)?;
    let dy = Field2D::new(grid.clone(), dy)?;
    Ok(KernelReport {
        dx1: linearized_residual(&q, &dx)?,
        dx2: linearized_residual(&q, &dy)?,
        q: linearized_residual(&q, &q)?,
    })
}
