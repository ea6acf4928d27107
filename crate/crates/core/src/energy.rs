//! The energy functional
//!
//! `E(u) = ½∫|∇u|² + ½∫ln(1+|x|²)u² + ¼∬ln|x-y|u²(x)u²(y) - ¼∫u⁴`
//!
//! with its Euler–Lagrange residual, Lagrange multiplier and the
//! Gagliardo–Nirenberg ratio.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Field2D, Grid2D};
use crate::logconv::{Kernel, KernelTable};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyBreakdown {
    pub kinetic: f64,
    pub external: f64,
    pub convolution: f64,
    pub quartic: f64,
    pub total: f64,
    /// More than `1e-6 ρ` sits in the outer tenth of the box.
    pub truncation_warning: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormReport {
    pub h1: f64,
    pub star: f64,
    pub x_norm: f64,
}

/// `ln(1 + |x|²)` sampled at the nodes.
pub fn external_potential(grid: &Grid2D) -> Vec<f64> {
    grid.sample(|x, y| (x * x + y * y).ln_1p())
}

/// Mass in cells with `max(|x|, |y|) ≥ 0.9 L`.
pub fn outer_mass(u: &Field2D) -> f64 {
    let g = u.grid();
    let n = g.n();
    let edge = 0.9 * g.half_width();
    let mut acc = 0.0;
    for i in 0..n {
        let x = g.coord(i).abs();
        for j in 0..n {
            if x.max(g.coord(j).abs()) >= edge {
                acc += u.at(i, j).powi(2);
            }
        }
    }
    acc * g.cell_area()
}

fn dot(grid: &Grid2D, a: &[f64], b: &[f64]) -> f64 {
    grid.cell_area() * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
}

pub fn evaluate_energy(u: &Field2D, table: &KernelTable) -> Result<EnergyBreakdown> {
    if **u.grid() != **table.grid() {
        return Err(Error::KernelMismatch);
    }
    let g = u.grid();
    let v = u.values();
    let density: Vec<f64> = v.iter().map(|x| x * x).collect();
    let phi = table.convolve(Kernel::Log, &density);
    let kinetic = 0.5 * g.grad_norm_sq_values(v);
    let external = 0.5 * dot(g, &external_potential(g), &density);
    let convolution = 0.25 * dot(g, &phi, &density);
    let quartic = -0.25 * dot(g, &density, &density);
    let rho = u.mass();
    Ok(EnergyBreakdown {
        kinetic,
        external,
        convolution,
        quartic,
        total: kinetic + external + convolution + quartic,
        truncation_warning: outer_mass(u) > 1e-6 * rho,
    })
}

/// `-Δu + ln(1+|x|²)u + Φ[u²]u - u³`, the gradient of `E` in `L²`.
pub fn first_variation(u: &Field2D, table: &KernelTable) -> Result<Vec<f64>> {
    if **u.grid() != **table.grid() {
        return Err(Error::KernelMismatch);
    }
    let g = u.grid();
    let v = u.values();
    let density: Vec<f64> = v.iter().map(|x| x * x).collect();
    let phi = table.convolve(Kernel::Log, &density);
    let lap = g.apply_multiplier(v, &g.k_squared());
    let ext = external_potential(g);
    Ok((0..v.len())
        .map(|i| lap[i] + (ext[i] + phi[i] - density[i]) * v[i])
        .collect())
}

fn relative_l2(grid: &Grid2D, residual: &[f64], u: &Field2D) -> f64 {
    let norm = dot(grid, residual, residual).sqrt();
    let base = u.mass().sqrt();
    if base == 0.0 {
        norm
    } else {
        norm / base
    }
}

/// `‖-Δu + ln(1+|x|²)u + Φ[u²]u - μu - u³‖₂ / ‖u‖₂`.
pub fn el_residual(u: &Field2D, mu: f64, table: &KernelTable) -> Result<f64> {
    let mut r = first_variation(u, table)?;
    for (ri, ui) in r.iter_mut().zip(u.values()) {
        *ri -= mu * ui;
    }
    Ok(relative_l2(u.grid(), &r, u))
}

/// The same residual with the external and convolution terms dropped:
/// `‖-Δu - μu - u³‖₂ / ‖u‖₂`. With `μ = -1` it vanishes at `Q`.
pub fn reduced_el_residual(u: &Field2D, mu: f64) -> f64 {
    let g = u.grid();
    let v = u.values();
    let lap = g.apply_multiplier(v, &g.k_squared());
    let r: Vec<f64> = (0..v.len()).map(|i| lap[i] - mu * v[i] - v[i].powi(3)).collect();
    relative_l2(g, &r, u)
}

/// `μ = [2e + ½V₀(u) - ½∫u⁴] / ρ`, obtained by testing the Euler–Lagrange
/// equation against `u`.
pub fn lagrange_multiplier(u: &Field2D, e: f64, table: &KernelTable) -> Result<f64> {
    let rho = u.mass();
    if rho <= f64::MIN_POSITIVE {
        return Err(Error::DegenerateField("zero mass".into()));
    }
    let parts = evaluate_energy(u, table)?;
    // convolution = ¼V₀ and quartic = -¼∫u⁴.
    Ok((2.0 * e + 2.0 * parts.convolution + 2.0 * parts.quartic) / rho)
}

/// `∫u⁴ · ρ* / (2 ∫|∇u|² ∫u²)`, at most one with equality along the
/// scalings of `Q`.
pub fn gn_ratio(u: &Field2D, rho_star: f64) -> Result<f64> {
    let g = u.grid();
    let grad = g.grad_norm_sq_values(u.values());
    let rho = u.mass();
    if rho <= f64::MIN_POSITIVE || grad <= f64::MIN_POSITIVE {
        return Err(Error::DegenerateField("zero field".into()));
    }
    let quartic: f64 = g.cell_area() * u.values().iter().map(|v| v.powi(4)).sum::<f64>();
    Ok(quartic * rho_star / (2.0 * grad * rho))
}

pub fn norms(u: &Field2D) -> NormReport {
    let g = u.grid();
    let h1_sq = g.grad_norm_sq_values(u.values()) + u.mass();
    let density: Vec<f64> = u.values().iter().map(|x| x * x).collect();
    let star_sq = dot(g, &external_potential(g), &density);
    NormReport {
        h1: h1_sq.sqrt(),
        star: star_sq.sqrt(),
        x_norm: (h1_sq + star_sq).sqrt(),
    }
}
