//! Free-space convolutions with the logarithmic kernel and its relatives.
//!
//! Every convolution is computed on the doubled `2n × 2n` grid with the
//! density zero-padded, which makes the discrete cyclic convolution equal to
//! the linear one for data supported in the box. The `ln|x|` kernel does not
//! decay, so any wrap-around would pollute the potential everywhere.
//!
//! Kernels that are singular at the origin take, in the origin cell, their
//! average over the disc of equal area (radius `a = h/√π`):
//!
//! | kernel            | origin value                          |
//! |-------------------|---------------------------------------|
//! | `ln|x|`           | `ln a - 1/2`                          |
//! | `ln(1+|x|²)`      | `(1 + 1/a²) ln(1 + a²) - 1`           |
//! | `ln(1+1/|x|²)`    | `(1 + 1/a²) ln(1 + a²) - 2 ln a`      |
//! | `1/|x|`           | `2/a`                                 |
//!
//! The first three are disc averages of kernels satisfying
//! `ln s = ½ ln(1+s²) - ½ ln(1+1/s²)`, so the decomposition survives exactly
//! in the origin cell too.

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use rustfft::num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Field2D, Grid2D};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernel {
    /// `ln|x|`
    Log,
    /// `ln(1 + |x|²)`
    LogOnePlusSq,
    /// `ln(1 + 1/|x|²)`
    LogOnePlusInvSq,
    /// `1/|x|`
    InverseDistance,
}

impl Kernel {
    /// Value at distance `s > 0`.
    pub fn point(self, s: f64) -> f64 {
        match self {
            Kernel::Log => s.ln(),
            Kernel::LogOnePlusSq => (s * s).ln_1p(),
            Kernel::LogOnePlusInvSq => (1.0 / (s * s)).ln_1p(),
            Kernel::InverseDistance => 1.0 / s,
        }
    }

    /// Average over the disc of radius `a`.
    pub fn disc_average(self, a: f64) -> f64 {
        let a2 = a * a;
        match self {
            Kernel::Log => a.ln() - 0.5,
            Kernel::LogOnePlusSq => (1.0 + 1.0 / a2) * a2.ln_1p() - 1.0,
            Kernel::LogOnePlusInvSq => (1.0 + 1.0 / a2) * a2.ln_1p() - 2.0 * a.ln(),
            Kernel::InverseDistance => 2.0 / a,
        }
    }
}

/// Radius of the disc with the area of one cell.
pub fn equal_area_radius(h: f64) -> f64 {
    h / PI.sqrt()
}

/// Offset (in cells) represented by index `p` of the doubled grid.
#[inline]
fn padded_offset(p: usize, n: usize) -> f64 {
    if p <= n {
        p as f64
    } else {
        p as f64 - 2.0 * n as f64
    }
}

fn sample_kernel(grid: &Grid2D, kernel: Kernel) -> Vec<f64> {
    let n = grid.n();
    let m = 2 * n;
    let h = grid.spacing();
    let origin = kernel.disc_average(equal_area_radius(h));
    let mut out = Vec::with_capacity(m * m);
    for p in 0..m {
        let dx = padded_offset(p, n) * h;
        for q in 0..m {
            let dy = padded_offset(q, n) * h;
            if p == 0 && q == 0 {
                out.push(origin);
            } else {
                out.push(kernel.point((dx * dx + dy * dy).sqrt()));
            }
        }
    }
    out
}

fn transform_even(grid: &Grid2D, samples: &[f64]) -> Vec<f64> {
    let mut data: Vec<Complex64> = samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    grid.padded_forward_dense(&mut data);
    // Even kernels have real spectra.
    data.into_iter().map(|z| z.re).collect()
}

/// Kernel samples and spectra on the zero-padding grid of one [`Grid2D`].
pub struct KernelTable {
    grid: Arc<Grid2D>,
    log_samples: Vec<f64>,
    log_hat: Vec<f64>,
    one_plus_sq_hat: OnceLock<Vec<f64>>,
    one_plus_inv_sq_hat: OnceLock<Vec<f64>>,
    inverse_distance_hat: OnceLock<Vec<f64>>,
}

impl std::fmt::Debug for KernelTable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KernelTable").field("grid", &self.grid).finish()
    }
}

pub fn build_log_kernel(grid: &Arc<Grid2D>) -> KernelTable {
    let log_samples = sample_kernel(grid, Kernel::Log);
    let log_hat = transform_even(grid, &log_samples);
    KernelTable {
        grid: grid.clone(),
        log_samples,
        log_hat,
        one_plus_sq_hat: OnceLock::new(),
        one_plus_inv_sq_hat: OnceLock::new(),
        inverse_distance_hat: OnceLock::new(),
    }
}

impl KernelTable {
    pub fn grid(&self) -> &Arc<Grid2D> {
        &self.grid
    }

    /// `ln|x|` on the doubled grid, `[p * 2n + q]` for offsets `(p, q)`
    /// taken modulo `2n`.
    pub fn log_samples(&self) -> &[f64] {
        &self.log_samples
    }

    pub fn origin_value(&self) -> f64 {
        self.log_samples[0]
    }

    fn hat(&self, kernel: Kernel) -> &[f64] {
        let build = || transform_even(&self.grid, &sample_kernel(&self.grid, kernel));
        match kernel {
            Kernel::Log => &self.log_hat,
            Kernel::LogOnePlusSq => self.one_plus_sq_hat.get_or_init(build),
            Kernel::LogOnePlusInvSq => self.one_plus_inv_sq_hat.get_or_init(build),
            Kernel::InverseDistance => self.inverse_distance_hat.get_or_init(build),
        }
    }

    fn check(&self, field: &Field2D) -> Result<()> {
        if **field.grid() != *self.grid {
            return Err(Error::KernelMismatch);
        }
        Ok(())
    }

    /// `h² Σ_y k(x - y) density(y)` for one kernel.
    pub fn convolve(&self, kernel: Kernel, density: &[f64]) -> Vec<f64> {
        let hat = self.hat(kernel);
        let mut spec = self.grid.padded_forward(density, None);
        for (z, k) in spec.iter_mut().zip(hat) {
            *z *= *k;
        }
        let (re, _) = self.grid.padded_inverse_crop(spec);
        let area = self.grid.cell_area();
        re.into_iter().map(|v| v * area).collect()
    }

    /// Two log-potentials for the price of one padded transform pair.
    pub fn log_potential_pair(&self, a: &[f64], b: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut spec = self.grid.padded_forward(a, Some(b));
        for (z, k) in spec.iter_mut().zip(&self.log_hat) {
            *z *= *k;
        }
        let (mut re, mut im) = self.grid.padded_inverse_crop(spec);
        let area = self.grid.cell_area();
        re.iter_mut().chain(im.iter_mut()).for_each(|v| *v *= area);
        (re, im)
    }

    /// One density against two kernels, sharing the forward transform and
    /// packing the two real results into one inverse.
    fn convolve_two(&self, first: Kernel, second: Kernel, density: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (h1, h2) = (self.hat(first), self.hat(second));
        let mut spec = self.grid.padded_forward(density, None);
        for ((z, a), b) in spec.iter_mut().zip(h1).zip(h2) {
            *z *= Complex64::new(*a, *b);
        }
        let (mut re, mut im) = self.grid.padded_inverse_crop(spec);
        let area = self.grid.cell_area();
        re.iter_mut().chain(im.iter_mut()).for_each(|v| *v *= area);
        (re, im)
    }
}

/// `Φ(x) = ∫ ln|x - y| density(y) dy`.
pub fn log_potential(density: &Field2D, table: &KernelTable) -> Result<Field2D> {
    table.check(density)?;
    let values = table.convolve(Kernel::Log, density.values());
    Field2D::new(density.grid().clone(), values)
}

/// `∬ k(x - y) u²(x) u²(y)` for the three logarithmic kernels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VFunctionals {
    pub v0: f64,
    pub v1: f64,
    pub v2: f64,
}

fn pair_integral(grid: &Grid2D, density: &[f64], potential: &[f64]) -> f64 {
    grid.cell_area() * density.iter().zip(potential).map(|(a, b)| a * b).sum::<f64>()
}

fn squared(u: &Field2D) -> Vec<f64> {
    u.values().iter().map(|v| v * v).collect()
}

pub fn v_functionals(u: &Field2D, table: &KernelTable) -> Result<VFunctionals> {
    table.check(u)?;
    let grid = u.grid();
    let density = squared(u);
    let phi0 = table.convolve(Kernel::Log, &density);
    let (phi1, phi2) = table.convolve_two(Kernel::LogOnePlusSq, Kernel::LogOnePlusInvSq, &density);
    Ok(VFunctionals {
        v0: pair_integral(grid, &density, &phi0),
        v1: pair_integral(grid, &density, &phi1),
        v2: pair_integral(grid, &density, &phi2),
    })
}

/// `V₀(u) = ∬ ln|x - y| u²(x) u²(y)` alone.
pub fn v0(u: &Field2D, table: &KernelTable) -> Result<f64> {
    table.check(u)?;
    let density = squared(u);
    let phi = table.convolve(Kernel::Log, &density);
    Ok(pair_integral(u.grid(), &density, &phi))
}

/// `D(u) = ∬ u²(x) u²(y) / |x - y|`.
pub fn singular_integral_d(u: &Field2D, table: &KernelTable) -> Result<f64> {
    table.check(u)?;
    let density = squared(u);
    let phi = table.convolve(Kernel::InverseDistance, &density);
    Ok(pair_integral(u.grid(), &density, &phi))
}

/// Symmetrized momentum sum
/// `S = Σ_{x≠y} [(x-y)·x / |x-y|²] m(x) m(y) + ½ Σ_x m(x)²` with cell masses
/// `m = h² u²`; returns `S - ½ρ²`, which vanishes identically.
pub fn momentum_identity_check(u: &Field2D) -> f64 {
    let grid = u.grid();
    let n = grid.n();
    let m = 2 * n;
    let h = grid.spacing();
    let area = grid.cell_area();
    let masses: Vec<f64> = u.values().iter().map(|v| area * v * v).collect();

    // Vector kernel z/|z|² in cell units of h, zero at the origin, packed as
    // (z₁ + i z₂)/|z|². It is odd, so its spectrum is generic complex; both
    // components are transformed in one go and split afterwards.
    let mut kx = Vec::with_capacity(m * m);
    for p in 0..m {
        let dx = padded_offset(p, n) * h;
        for q in 0..m {
            let dy = padded_offset(q, n) * h;
            let r2 = dx * dx + dy * dy;
            kx.push(if r2 == 0.0 {
                Complex64::default()
            } else {
                Complex64::new(dx / r2, dy / r2)
            });
        }
    }
    grid.padded_forward_dense(&mut kx);
    let spec = grid.padded_forward(&masses, None);
    // Spectrum of a real kernel component from the packed spectrum:
    // A(k) = (Z(k) + conj Z(-k)) / 2, B(k) = (Z(k) - conj Z(-k)) / 2i.
    let idx = |a: usize| if a == 0 { 0 } else { m - a };
    let mut gx = vec![Complex64::default(); m * m];
    let mut gy = vec![Complex64::default(); m * m];
    for a in 0..m {
        for b in 0..m {
            let z = kx[a * m + b];
            let zc = kx[idx(a) * m + idx(b)].conj();
            let ax = 0.5 * (z + zc);
            let by = (z - zc) * Complex64::new(0.0, -0.5);
            gx[a * m + b] = ax * spec[a * m + b];
            gy[a * m + b] = by * spec[a * m + b];
        }
    }
    // Both convolutions are real: pack them into one inverse.
    let packed: Vec<Complex64> = gx
        .iter()
        .zip(&gy)
        .map(|(x, y)| x + Complex64::new(0.0, 1.0) * y)
        .collect();
    let (fx, fy) = grid.padded_inverse_crop(packed);

    let mut s = 0.0;
    let mut diag = 0.0;
    for i in 0..n {
        let x = grid.coord(i);
        for j in 0..n {
            let y = grid.coord(j);
            let idx = i * n + j;
            s += masses[idx] * (x * fx[idx] + y * fy[idx]);
            diag += masses[idx] * masses[idx];
        }
    }
    let rho: f64 = masses.iter().sum();
    s + 0.5 * diag - 0.5 * rho * rho
}

/// `h² Σ k(x_i - x_j) ρ_j` by direct summation over the nodes, with the
/// same origin-cell value as the FFT path. `O(n⁴)`; a reference for small grids.
pub fn direct_convolution(grid: &Grid2D, kernel: Kernel, density: &[f64]) -> Vec<f64> {
    let n = grid.n();
    let h = grid.spacing();
    let origin = kernel.disc_average(equal_area_radius(h));
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for a in 0..n {
                for b in 0..n {
                    let k = if a == i && b == j {
                        origin
                    } else {
                        let dx = (i as f64 - a as f64) * h;
                        let dy = (j as f64 - b as f64) * h;
                        kernel.point((dx * dx + dy * dy).sqrt())
                    };
                    acc += k * density[a * n + b];
                }
            }
            out[i * n + j] = acc * h * h;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(grid: &Arc<Grid2D>, seed: u64) -> Field2D {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Field2D::new(grid.clone(), values).unwrap()
    }

    #[test]
    fn origin_values() {
        let g = make_grid(8.0, 16).unwrap();
        let t = build_log_kernel(&g);
        let expected = (1.0 / PI.sqrt()).ln() - 0.5;
        assert!((t.origin_value() - expected).abs() < 1e-15);
        assert!((t.origin_value() + 1.0724).abs() < 1e-4);
    }

    #[test]
    fn disc_averages_match_quadrature() {
        // Midpoint rule in r on the disc, with enough points that the
        // integrable singularities are resolved.
        let a = 0.05;
        let steps = 2_000_000;
        for kernel in [Kernel::Log, Kernel::LogOnePlusSq, Kernel::LogOnePlusInvSq, Kernel::InverseDistance] {
            let dr = a / steps as f64;
            let mut acc = 0.0;
            for i in 0..steps {
                let r = (i as f64 + 0.5) * dr;
                acc += kernel.point(r) * 2.0 * PI * r * dr;
            }
            let avg = acc / (PI * a * a);
            let closed = kernel.disc_average(a);
            assert!((avg - closed).abs() < 1e-6 * closed.abs().max(1.0), "{kernel:?}: {avg} vs {closed}");
        }
    }

    #[test]
    fn samples_at_unit_and_e() {
        // h = 1 so that offsets are integers: |x| = 1 at offset (1, 0).
        let g = make_grid(8.0, 16).unwrap();
        let t = build_log_kernel(&g);
        let m = 32;
        assert_eq!(t.log_samples()[m], 0.0);
        assert!((Kernel::Log.point(std::f64::consts::E) - 1.0).abs() < 1e-15);
        // x → -x symmetry
        for p in 1..m {
            for q in 0..m {
                let a = t.log_samples()[p * m + q];
                let b = t.log_samples()[(m - p) * m + (m - q) % m];
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn kernel_decomposition_pointwise() {
        for i in 1..2000 {
            let s = 0.01 * i as f64;
            let lhs = Kernel::Log.point(s);
            let rhs = 0.5 * Kernel::LogOnePlusSq.point(s) - 0.5 * Kernel::LogOnePlusInvSq.point(s);
            assert!((lhs - rhs).abs() < 1e-12);
        }
        let a = 0.3;
        let lhs = Kernel::Log.disc_average(a);
        let rhs = 0.5 * Kernel::LogOnePlusSq.disc_average(a) - 0.5 * Kernel::LogOnePlusInvSq.disc_average(a);
        assert!((lhs - rhs).abs() < 1e-14);
    }

    #[test]
    fn fft_convolution_equals_direct_sum() {
        let g = make_grid(2.0, 32).unwrap();
        let t = build_log_kernel(&g);
        for seed in 0..2 {
            let u = random_field(&g, seed);
            let density: Vec<f64> = u.values().iter().map(|v| v * v).collect();
            for kernel in [Kernel::Log, Kernel::LogOnePlusSq, Kernel::LogOnePlusInvSq, Kernel::InverseDistance] {
                let fast = t.convolve(kernel, &density);
                let slow = direct_convolution(&g, kernel, &density);
                let err = fast.iter().zip(&slow).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                assert!(err < 1e-10, "{kernel:?}: {err}");
            }
        }
    }

    #[test]
    fn exterior_potential_of_radial_bump() {
        let g = make_grid(8.0, 256).unwrap();
        let t = build_log_kernel(&g);
        let bump = Field2D::from_fn(g.clone(), |x, y| {
            let r2 = x * x + y * y;
            if r2 < 1.0 { (1.0 - r2).powi(4) } else { 0.0 }
        })
        .unwrap();
        let scale = 2.0 / integrate_density(&bump);
        let density = bump.map(|v| v * scale).unwrap();
        let phi = log_potential(&density, &t).unwrap();
        let n = g.n();
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in 0..n {
                let (x, y) = (g.coord(i), g.coord(j));
                let r = (x * x + y * y).sqrt();
                if (2.0..=4.0).contains(&r) {
                    let exact = 2.0 * r.ln();
                    worst = worst.max(((phi.at(i, j) - exact) / exact).abs());
                }
            }
        }
        assert!(worst < 1e-3, "{worst}");
        let zero = log_potential(&Field2D::zeros(g.clone()), &t).unwrap();
        assert_eq!(zero.max_abs(), 0.0);
    }

    fn integrate_density(f: &Field2D) -> f64 {
        f.grid().integrate_values(f.values())
    }

    #[test]
    fn potential_of_radial_density_is_radial() {
        let g = make_grid(4.0, 64).unwrap();
        let t = build_log_kernel(&g);
        // The node at -L has no mirror image at +L, so the density must
        // vanish there to rounding.
        let density = Field2D::from_fn(g.clone(), |x, y| (-4.0 * (x * x + y * y)).exp()).unwrap();
        let phi = log_potential(&density, &t).unwrap();
        let n = g.n();
        let c = n / 2;
        let mut worst = 0.0_f64;
        // Rotation by 90° about the origin node maps (c+a, c+b) to (c-b, c+a).
        for a in -(c as i64 - 1)..(c as i64) {
            for b in -(c as i64 - 1)..(c as i64) {
                let p = phi.at((c as i64 + a) as usize, (c as i64 + b) as usize);
                let q = phi.at((c as i64 - b) as usize, (c as i64 + a) as usize);
                worst = worst.max((p - q).abs());
            }
        }
        assert!(worst < 1e-10, "{worst}");
    }

    #[test]
    fn v_functionals_decompose() {
        let g = make_grid(4.0, 64).unwrap();
        let t = build_log_kernel(&g);
        for seed in 0..3 {
            let u = random_field(&g, seed);
            let v = v_functionals(&u, &t).unwrap();
            let gap = (v.v0 - 0.5 * (v.v1 - v.v2)).abs();
            assert!(gap <= 1e-8 * (v.v1.abs() + v.v2.abs()), "{v:?}");
            let d = singular_integral_d(&u, &t).unwrap();
            assert!(v.v2 <= 2.0 * d + 1e-8);
            assert!(d > 0.0);
        }
        let zero = v_functionals(&Field2D::zeros(g.clone()), &t).unwrap();
        assert_eq!(zero, VFunctionals { v0: 0.0, v1: 0.0, v2: 0.0 });
        assert_eq!(singular_integral_d(&Field2D::zeros(g), &t).unwrap(), 0.0);
    }

    #[test]
    fn grid_mismatch_is_rejected() {
        let g = make_grid(4.0, 32).unwrap();
        let other = make_grid(4.0, 64).unwrap();
        let t = build_log_kernel(&g);
        let u = Field2D::zeros(other);
        assert_eq!(log_potential(&u, &t).unwrap_err(), Error::KernelMismatch);
    }

    #[test]
    fn singular_integral_is_stable_under_perturbation() {
        let g = make_grid(4.0, 64).unwrap();
        let t = build_log_kernel(&g);
        let u = Field2D::from_fn(g.clone(), |x, y| (-(x * x + y * y)).exp()).unwrap();
        let noise = random_field(&g, 7);
        let perturbed = Field2D::new(
            g.clone(),
            u.values().iter().zip(noise.values()).map(|(a, b)| a + 1e-3 * b).collect(),
        )
        .unwrap();
        let d0 = singular_integral_d(&u, &t).unwrap();
        let d1 = singular_integral_d(&perturbed, &t).unwrap();
        assert!(d0.is_finite() && ((d1 - d0) / d0).abs() <= 1e-2);
    }

    #[test]
    fn momentum_identity_on_random_fields() {
        let g = make_grid(2.0, 32).unwrap();
        for seed in 0..3 {
            let u = random_field(&g, seed);
            let rho = u.mass();
            assert!(momentum_identity_check(&u).abs() < 1e-10 * rho * rho);
        }
        assert_eq!(momentum_identity_check(&Field2D::zeros(g)), 0.0);
    }

    #[test]
    fn momentum_identity_matches_direct_sum() {
        let g = make_grid(2.0, 16).unwrap();
        let u = random_field(&g, 11);
        let n = g.n();
        let area = g.cell_area();
        let m: Vec<f64> = u.values().iter().map(|v| area * v * v).collect();
        let mut s = 0.0;
        for i in 0..n * n {
            let (xi, yi) = (g.coord(i / n), g.coord(i % n));
            for j in 0..n * n {
                if i == j {
                    s += 0.5 * m[i] * m[i];
                    continue;
                }
                let (xj, yj) = (g.coord(j / n), g.coord(j % n));
                let (dx, dy) = (xi - xj, yi - yj);
                s += (dx * xi + dy * yi) / (dx * dx + dy * dy) * m[i] * m[j];
            }
        }
        let rho: f64 = m.iter().sum();
        let direct_gap = s - 0.5 * rho * rho;
        let fast_gap = momentum_identity_check(&u);
        assert!(direct_gap.abs() < 1e-12 * rho * rho);
        assert!((fast_gap - direct_gap).abs() < 1e-10 * rho * rho);
    }
}
