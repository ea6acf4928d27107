//! Uniform periodic box `[-L, L)²` with rectangle-rule quadrature and
//! spectral differentiation.
//!
//! Samples are stored row-major with the first index running along `x`:
//! `values[i * n + j] = u(x_i, y_j)` where `x_i = -L + i h`.
//!
//! Two-dimensional transforms are done as row transforms, a transpose and
//! another set of row transforms. The spectrum therefore comes out
//! transposed: entry `[q * n + p]` holds the mode with `k_x = k[p]` and
//! `k_y = k[q]`. Every multiplier in this crate is built in that layout.

use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

const TRANSPOSE_BLOCK: usize = 32;

/// FFT plans for one transform length.
#[derive(Clone)]
struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Plans {
    fn new(planner: &mut FftPlanner<f64>, len: usize) -> Self {
        Self {
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
        }
    }
}

pub struct Grid2D {
    half_width: f64,
    n: usize,
    h: f64,
    wavenumbers: Vec<f64>,
    plans: Plans,
    padded_plans: Plans,
}

impl fmt::Debug for Grid2D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid2D")
            .field("half_width", &self.half_width)
            .field("n", &self.n)
            .field("h", &self.h)
            .finish()
    }
}

impl PartialEq for Grid2D {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.half_width == other.half_width
    }
}

/// Builds the grid `[-L, L)²` with `n` points per side.
pub fn make_grid(half_width: f64, n: usize) -> Result<Arc<Grid2D>> {
    Grid2D::new(half_width, n).map(Arc::new)
}

impl Grid2D {
    pub fn new(half_width: f64, n: usize) -> Result<Self> {
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "half-width must be positive, got {half_width}"
            )));
        }
        if n < 16 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "points per side must be a power of two >= 16, got {n}"
            )));
        }
        let h = 2.0 * half_width / n as f64;
        let dk = std::f64::consts::PI / half_width;
        let wavenumbers = (0..n)
            .map(|p| {
                let m = if p <= n / 2 { p as f64 } else { p as f64 - n as f64 };
                m * dk
            })
            .collect();
        let mut planner = FftPlanner::new();
        let plans = Plans::new(&mut planner, n);
        let padded_plans = Plans::new(&mut planner, 2 * n);
        Ok(Self {
            half_width,
            n,
            h,
            wavenumbers,
            plans,
            padded_plans,
        })
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn cell_area(&self) -> f64 {
        self.h * self.h
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Angular wavenumbers per axis in DFT order; `k[n/2] = π/h` is Nyquist.
    pub fn wavenumbers(&self) -> &[f64] {
        &self.wavenumbers
    }

    /// Coordinate of node `i` along either axis.
    pub fn coord(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.h
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.coord(i)).collect()
    }

    /// Index of the node at the origin.
    pub fn origin_index(&self) -> (usize, usize) {
        (self.n / 2, self.n / 2)
    }

    /// Rectangle rule over the box.
    pub fn integrate_values(&self, values: &[f64]) -> f64 {
        self.cell_area() * values.iter().sum::<f64>()
    }

    pub fn sample<F: Fn(f64, f64) -> f64>(&self, f: F) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for i in 0..self.n {
            let x = self.coord(i);
            for j in 0..self.n {
                out.push(f(x, self.coord(j)));
            }
        }
        out
    }

    /// `|k|²` in the transposed spectral layout.
    pub fn k_squared(&self) -> Vec<f64> {
        let k = &self.wavenumbers;
        let mut out = Vec::with_capacity(self.len());
        for ky in k {
            for kx in k {
                out.push(kx * kx + ky * ky);
            }
        }
        out
    }

    /// Forward transform; output in transposed layout, unnormalized.
    pub fn forward(&self, data: &mut [Complex64]) {
        assert_eq!(data.len(), self.len());
        let plan = &self.plans.forward;
        let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
        plan.process_with_scratch(data, &mut scratch);
        transpose_square(data, self.n);
        plan.process_with_scratch(data, &mut scratch);
    }

    /// Inverse of [`Grid2D::forward`], including the `1/n²` factor.
    pub fn inverse(&self, data: &mut [Complex64]) {
        assert_eq!(data.len(), self.len());
        let plan = &self.plans.inverse;
        let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
        plan.process_with_scratch(data, &mut scratch);
        transpose_square(data, self.n);
        plan.process_with_scratch(data, &mut scratch);
        let scale = 1.0 / self.len() as f64;
        for z in data.iter_mut() {
            *z *= scale;
        }
    }

    pub fn spectrum(&self, values: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward(&mut data);
        data
    }

    /// Applies a real, even spectral multiplier to a real field.
    pub fn apply_multiplier(&self, values: &[f64], multiplier: &[f64]) -> Vec<f64> {
        let mut data = self.spectrum(values);
        for (z, m) in data.iter_mut().zip(multiplier) {
            *z *= *m;
        }
        self.inverse(&mut data);
        data.iter().map(|z| z.re).collect()
    }

    /// Applies the same real multiplier to two real fields with one pair of
    /// transforms, packing them as real and imaginary parts.
    pub fn apply_multiplier_pair(
        &self,
        a: &[f64],
        b: &[f64],
        multiplier: &[f64],
    ) -> (Vec<f64>, Vec<f64>) {
        let mut data: Vec<Complex64> =
            a.iter().zip(b).map(|(&x, &y)| Complex64::new(x, y)).collect();
        self.forward(&mut data);
        for (z, m) in data.iter_mut().zip(multiplier) {
            *z *= *m;
        }
        self.inverse(&mut data);
        (data.iter().map(|z| z.re).collect(), data.iter().map(|z| z.im).collect())
    }

    /// Spectral partial derivatives `(∂x f, ∂y f)`.
    pub fn gradient_values(&self, values: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.n;
        let spec = self.spectrum(values);
        // i kx f̂ + i (i ky f̂): both inverse transforms are real, so they can
        // share one inverse.
        let mut data = spec;
        for q in 0..n {
            let ky = self.nyquist_safe(q);
            for p in 0..n {
                let kx = self.nyquist_safe(p);
                let z = data[q * n + p];
                let dx = Complex64::new(0.0, kx) * z;
                let dy = Complex64::new(0.0, ky) * z;
                data[q * n + p] = dx + Complex64::new(0.0, 1.0) * dy;
            }
        }
        self.inverse(&mut data);
        (data.iter().map(|z| z.re).collect(), data.iter().map(|z| z.im).collect())
    }

    /// Odd derivatives drop the Nyquist mode so real fields stay real.
    fn nyquist_safe(&self, p: usize) -> f64 {
        if p == self.n / 2 {
            0.0
        } else {
            self.wavenumbers[p]
        }
    }

    /// `∫|∇f|²` by Parseval.
    pub fn grad_norm_sq_values(&self, values: &[f64]) -> f64 {
        let spec = self.spectrum(values);
        self.grad_norm_sq_spectrum(&spec)
    }

    pub(crate) fn grad_norm_sq_spectrum(&self, spec: &[Complex64]) -> f64 {
        let n = self.n;
        let k = &self.wavenumbers;
        let mut acc = 0.0;
        for q in 0..n {
            for p in 0..n {
                acc += (k[p] * k[p] + k[q] * k[q]) * spec[q * n + p].norm_sqr();
            }
        }
        self.cell_area() * acc / self.len() as f64
    }

    /// Translates a field by `shift` (so the value at `x` moves to
    /// `x + shift`) through a Fourier phase.
    pub fn translate_values(&self, values: &[f64], shift: [f64; 2]) -> Vec<f64> {
        let n = self.n;
        let mut data = self.spectrum(values);
        for q in 0..n {
            let ky = self.nyquist_safe(q);
            for p in 0..n {
                let kx = self.nyquist_safe(p);
                let phase = -(kx * shift[0] + ky * shift[1]);
                data[q * n + p] *= Complex64::from_polar(1.0, phase);
            }
        }
        self.inverse(&mut data);
        data.iter().map(|z| z.re).collect()
    }

    /// Transform of a dense `2n × 2n` array (used for kernels).
    pub(crate) fn padded_forward_dense(&self, data: &mut [Complex64]) {
        let m = 2 * self.n;
        assert_eq!(data.len(), m * m);
        let plan = &self.padded_plans.forward;
        let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
        plan.process_with_scratch(data, &mut scratch);
        transpose_square(data, m);
        plan.process_with_scratch(data, &mut scratch);
    }

    /// Zero-pads one or two real `n × n` fields (packed as real and
    /// imaginary parts) into the `2n × 2n` box and transforms. Only the
    /// first `n` rows carry data, so only those rows are transformed in the
    /// first pass.
    pub(crate) fn padded_forward(&self, re: &[f64], im: Option<&[f64]>) -> Vec<Complex64> {
        let n = self.n;
        let m = 2 * n;
        let mut data = vec![Complex64::default(); m * m];
        for i in 0..n {
            let row = &mut data[i * m..i * m + n];
            match im {
                Some(im) => {
                    for j in 0..n {
                        row[j] = Complex64::new(re[i * n + j], im[i * n + j]);
                    }
                }
                None => {
                    for j in 0..n {
                        row[j] = Complex64::new(re[i * n + j], 0.0);
                    }
                }
            }
        }
        let plan = &self.padded_plans.forward;
        let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
        plan.process_with_scratch(&mut data[..n * m], &mut scratch);
        transpose_square(&mut data, m);
        plan.process_with_scratch(&mut data, &mut scratch);
        data
    }

    /// Inverse of the padded transform, cropped back to the `n × n` box.
    /// Returns the real and imaginary parts, each scaled by `1/(2n)²`.
    pub(crate) fn padded_inverse_crop(&self, mut data: Vec<Complex64>) -> (Vec<f64>, Vec<f64>) {
        let n = self.n;
        let m = 2 * n;
        let plan = &self.padded_plans.inverse;
        let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
        plan.process_with_scratch(&mut data, &mut scratch);
        transpose_square(&mut data, m);
        plan.process_with_scratch(&mut data[..n * m], &mut scratch);
        let scale = 1.0 / (m * m) as f64;
        let mut re = Vec::with_capacity(n * n);
        let mut im = Vec::with_capacity(n * n);
        for i in 0..n {
            for z in &data[i * m..i * m + n] {
                re.push(z.re * scale);
                im.push(z.im * scale);
            }
        }
        (re, im)
    }
}

/// In-place transpose of a square row-major matrix.
pub(crate) fn transpose_square<T: Copy>(data: &mut [T], n: usize) {
    debug_assert_eq!(data.len(), n * n);
    let b = TRANSPOSE_BLOCK.min(n);
    for ib in (0..n).step_by(b) {
        for jb in (ib..n).step_by(b) {
            for i in ib..(ib + b).min(n) {
                let jstart = if ib == jb { i + 1 } else { jb };
                for j in jstart..(jb + b).min(n) {
                    data.swap(i * n + j, j * n + i);
                }
            }
        }
    }
}

/// Real samples on a [`Grid2D`], carrying their mass `∫u²`.
#[derive(Debug, Clone)]
pub struct Field2D {
    grid: Arc<Grid2D>,
    values: Vec<f64>,
    mass: f64,
}

impl Field2D {
    pub fn new(grid: Arc<Grid2D>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} samples, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        let mass = grid.cell_area() * values.iter().map(|v| v * v).sum::<f64>();
        Ok(Self { grid, values, mass })
    }

    pub fn zeros(grid: Arc<Grid2D>) -> Self {
        let values = vec![0.0; grid.len()];
        Self { grid, values, mass: 0.0 }
    }

    pub fn from_fn<F: Fn(f64, f64) -> f64>(grid: Arc<Grid2D>, f: F) -> Result<Self> {
        let values = grid.sample(f);
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Arc<Grid2D> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// `∫u²`.
    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.grid.n() + j]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Largest magnitude on the outermost ring of cells.
    pub fn boundary_max_abs(&self) -> f64 {
        let n = self.grid.n();
        let mut m = 0.0_f64;
        for t in 0..n {
            for &(i, j) in &[(0, t), (n - 1, t), (t, 0), (t, n - 1)] {
                m = m.max(self.values[i * n + j].abs());
            }
        }
        m
    }

    /// Whether the field has decayed to `rel · max|u|` on the box edge.
    pub fn is_boundary_decayed(&self, rel: f64) -> bool {
        self.boundary_max_abs() <= rel * self.max_abs()
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Result<Self> {
        Self::new(self.grid.clone(), self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let values = self.values.iter().map(|v| v * factor).collect();
        Self {
            grid: self.grid.clone(),
            values,
            mass: self.mass * factor * factor,
        }
    }

    /// Rescales to the requested mass.
    pub fn with_mass(&self, mass: f64) -> Result<Self> {
        if self.mass <= 0.0 {
            return Err(Error::DegenerateField("cannot rescale a zero field".into()));
        }
        let factor = (mass / self.mass).sqrt();
        Self::new(self.grid.clone(), self.values.iter().map(|v| v * factor).collect())
    }

    /// Grid index of the maximum; ties go to the smallest index.
    pub fn argmax(&self) -> (usize, usize) {
        let n = self.grid.n();
        let mut best = 0;
        for (idx, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = idx;
            }
        }
        (best / n, best % n)
    }

    pub fn peak_location(&self) -> [f64; 2] {
        let (i, j) = self.argmax();
        [self.grid.coord(i), self.grid.coord(j)]
    }

    /// Off-grid maximum of the trigonometric interpolant, by Newton's
    /// method started from the largest node.
    pub fn refine_peak(&self) -> Result<[f64; 2]> {
        let spec = self.grid.spectrum(&self.values);
        let h = self.grid.spacing();
        let mut x = self.peak_location();
        for _ in 0..30 {
            let j = self.grid.eval_spectrum(&spec, x);
            let det = j.dxx * j.dyy - j.dxy * j.dxy;
            if !(j.dxx < 0.0 && det > 0.0) {
                return Err(Error::Centering(format!("no strict maximum near ({:.4}, {:.4})", x[0], x[1])));
            }
            let sx = (j.dyy * j.dx - j.dxy * j.dy) / det;
            let sy = (j.dxx * j.dy - j.dxy * j.dx) / det;
            if sx.abs().max(sy.abs()) > 2.0 * h {
                return Err(Error::Centering("Newton step left the peak cell".into()));
            }
            x = [x[0] - sx, x[1] - sy];
            if sx.hypot(sy) < 1e-13 * h.max(1.0) {
                return Ok(x);
            }
        }
        Ok(x)
    }
}

/// Value and derivatives up to second order at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointJet {
    pub value: f64,
    pub dx: f64,
    pub dy: f64,
    pub dxx: f64,
    pub dxy: f64,
    pub dyy: f64,
}

impl Grid2D {
    /// Evaluates the trigonometric interpolant of `spec` (as returned by
    /// [`Grid2D::spectrum`]) and its derivatives at an arbitrary point.
    /// Costs `O(n²)`.
    pub fn eval_spectrum(&self, spec: &[Complex64], point: [f64; 2]) -> PointJet {
        let n = self.n;
        let k = &self.wavenumbers;
        let origin = self.coord(0);
        let ex: Vec<Complex64> = k.iter().map(|&kx| Complex64::from_polar(1.0, kx * (point[0] - origin))).collect();
        let ey: Vec<Complex64> = k.iter().map(|&ky| Complex64::from_polar(1.0, ky * (point[1] - origin))).collect();
        let i = Complex64::new(0.0, 1.0);
        let (mut f, mut fx, mut fy, mut fxx, mut fxy, mut fyy) = Default::default();
        for q in 0..n {
            let row = &spec[q * n..(q + 1) * n];
            let (mut s0, mut s1, mut s2) = (Complex64::default(), Complex64::default(), Complex64::default());
            for p in 0..n {
                let z = row[p] * ex[p];
                s0 += z;
                s1 += z * k[p];
                s2 += z * (k[p] * k[p]);
            }
            let w = ey[q];
            let ky = k[q];
            f += s0 * w;
            fx += i * s1 * w;
            fy += i * ky * s0 * w;
            fxx -= s2 * w;
            fxy -= ky * s1 * w;
            fyy -= ky * ky * s0 * w;
        }
        let scale = 1.0 / self.len() as f64;
        let re = |z: Complex64| z.re * scale;
        PointJet { value: re(f), dx: re(fx), dy: re(fy), dxx: re(fxx), dxy: re(fxy), dyy: re(fyy) }
    }
}

/// Bicubic Hermite interpolation on the periodic grid, with nodal
/// derivatives taken spectrally.
#[derive(Debug, Clone)]
pub struct HermiteInterpolator {
    grid: Arc<Grid2D>,
    f: Vec<f64>,
    fx: Vec<f64>,
    fy: Vec<f64>,
    fxy: Vec<f64>,
}

impl HermiteInterpolator {
    pub fn new(field: &Field2D) -> Self {
        let grid = field.grid().clone();
        let (fx, fy) = grid.gradient_values(field.values());
        let (fxy, _) = grid.gradient_values(&fy);
        Self { grid, f: field.values().to_vec(), fx, fy, fxy }
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let g = &self.grid;
        let n = g.n();
        let h = g.spacing();
        let period = 2.0 * g.half_width();
        let locate = |c: f64| {
            let s = (c - g.coord(0)).rem_euclid(period) / h;
            let i = (s.floor() as usize).min(n - 1);
            (i, s - i as f64)
        };
        let (i0, tx) = locate(x);
        let (j0, ty) = locate(y);
        let i1 = (i0 + 1) % n;
        let j1 = (j0 + 1) % n;
        let basis = |t: f64| {
            let t2 = t * t;
            let t3 = t2 * t;
            // Values at 0 and 1, then slopes at 0 and 1 (scaled by h).
            [2.0 * t3 - 3.0 * t2 + 1.0, -2.0 * t3 + 3.0 * t2, (t3 - 2.0 * t2 + t) * h, (t3 - t2) * h]
        };
        let bx = basis(tx);
        let by = basis(ty);
        let idx = |i: usize, j: usize| i * n + j;
        let corners = [(i0, j0, 0, 0), (i0, j1, 0, 1), (i1, j0, 1, 0), (i1, j1, 1, 1)];
        let mut acc = 0.0;
        for &(i, j, a, b) in &corners {
            let id = idx(i, j);
            acc += bx[a] * by[b] * self.f[id]
                + bx[a + 2] * by[b] * self.fx[id]
                + bx[a] * by[b + 2] * self.fy[id]
                + bx[a + 2] * by[b + 2] * self.fxy[id];
        }
        acc
    }
}

/// Rectangle rule `h² Σ f`.
pub fn integrate(f: &Field2D) -> f64 {
    f.grid().integrate_values(f.values())
}

/// Spectral Laplacian.
pub fn laplacian(f: &Field2D) -> Field2D {
    let grid = f.grid();
    let multiplier: Vec<f64> = grid.k_squared().into_iter().map(|k2| -k2).collect();
    let values = grid.apply_multiplier(f.values(), &multiplier);
    Field2D::new(grid.clone(), values).expect("laplacian of a finite field is finite")
}

/// `∫|∇f|²`, computed in Fourier space.
pub fn grad_norm_sq(f: &Field2D) -> f64 {
    f.grid().grad_norm_sq_values(f.values())
}
