//! Periodic pseudo-spectral substrate on the unit torus.
//!
//! Fields live on an `n x n` grid with period 1 in both directions.
//! Derivatives, Biot-Savart inversion and convolutions are computed in
//! Fourier space; products are formed in physical space and dealiased
//! with the two-thirds rule. Off-grid evaluation uses periodic cubic
//! Lagrange interpolation (exact at nodes, fourth-order on smooth fields).

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Result, VnsError};

pub const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Square periodic grid, period fixed to 1 so wavenumbers are `2*pi*k`
/// with integer `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid2D {
    n: usize,
}

impl Grid2D {
    pub fn new(n: usize) -> Result<Self> {
        if n < 8 || !n.is_power_of_two() {
            return Err(VnsError::Config(format!(
                "grid size must be a power of two >= 8, got {n}"
            )));
        }
        Ok(Self { n })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    /// Grid spacing.
    #[inline]
    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Signed integer frequency of DFT index `idx`.
    #[inline]
    pub fn freq(&self, idx: usize) -> i64 {
        let n = self.n as i64;
        let i = idx as i64;
        if i <= n / 2 - 1 {
            i
        } else {
            i - n
        }
    }

    /// Two-thirds rule: keep only |k| <= n/3 per axis.
    #[inline]
    pub fn keep(&self, kx: i64, ky: i64) -> bool {
        let cut = self.n as i64 / 3;
        kx.abs() <= cut && ky.abs() <= cut
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize) -> [f64; 2] {
        [i as f64 * self.h(), j as f64 * self.h()]
    }
}

/// Wraps a coordinate into [0, 1).
#[inline]
pub fn wrap(x: f64) -> f64 {
    let y = x - x.floor();
    if y >= 1.0 {
        0.0
    } else {
        y
    }
}

thread_local! {
    static FFT_CACHE: RefCell<HashMap<(usize, bool), Arc<dyn Fft<f64>>>> =
        RefCell::new(HashMap::new());
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    FFT_CACHE.with(|c| {
        c.borrow_mut()
            .entry((n, inverse))
            .or_insert_with(|| {
                let mut planner = FftPlanner::new();
                if inverse {
                    planner.plan_fft_inverse(n)
                } else {
                    planner.plan_fft_forward(n)
                }
            })
            .clone()
    })
}

/// In-place 2-D DFT of row-major `n x n` data. The inverse includes the
/// `1/n^2` normalization so forward-then-inverse is the identity.
pub fn fft2(buf: &mut [Complex<f64>], n: usize, inverse: bool) {
    assert_eq!(buf.len(), n * n);
    let fft = plan(n, inverse);
    // rows
    for row in buf.chunks_exact_mut(n) {
        fft.process(row);
    }
    // columns via transpose
    let mut col = vec![Complex::default(); n];
    for j in 0..n {
        for i in 0..n {
            col[i] = buf[i * n + j];
        }
        fft.process(&mut col);
        for i in 0..n {
            buf[i * n + j] = col[i];
        }
    }
    if inverse {
        let scale = 1.0 / (n * n) as f64;
        for z in buf.iter_mut() {
            *z *= scale;
        }
    }
}

/// Scalar or vector field with physical-space samples; spectral
/// representations are computed on demand.
#[derive(Debug, Clone)]
pub struct SpectralField {
    grid: Grid2D,
    ncomp: usize,
    /// Component-major: `data[c * n * n + i * n + j]`, `i` indexing x, `j` indexing y.
    data: Vec<f64>,
}

impl SpectralField {
    pub fn zeros(grid: Grid2D, ncomp: usize) -> Self {
        assert!(ncomp == 1 || ncomp == 2);
        Self {
            grid,
            ncomp,
            data: vec![0.0; ncomp * grid.n() * grid.n()],
        }
    }

    /// Wraps a component-major sample buffer (`ncomp * n * n` values).
    pub fn from_raw(grid: Grid2D, ncomp: usize, data: Vec<f64>) -> Self {
        assert!(ncomp == 1 || ncomp == 2);
        assert_eq!(data.len(), ncomp * grid.n() * grid.n());
        Self { grid, ncomp, data }
    }

    pub fn scalar_from_fn(grid: Grid2D, f: impl Fn(f64, f64) -> f64) -> Self {
        let n = grid.n();
        let mut out = Self::zeros(grid, 1);
        for i in 0..n {
            for j in 0..n {
                let [x, y] = grid.node(i, j);
                out.data[i * n + j] = f(x, y);
            }
        }
        out
    }

    pub fn vector_from_fn(grid: Grid2D, f: impl Fn(f64, f64) -> [f64; 2]) -> Self {
        let n = grid.n();
        let mut out = Self::zeros(grid, 2);
        for i in 0..n {
            for j in 0..n {
                let [x, y] = grid.node(i, j);
                let v = f(x, y);
                out.data[i * n + j] = v[0];
                out.data[n * n + i * n + j] = v[1];
            }
        }
        out
    }

    #[inline]
    pub fn grid(&self) -> Grid2D {
        self.grid
    }

    #[inline]
    pub fn ncomp(&self) -> usize {
        self.ncomp
    }

    #[inline]
    pub fn at(&self, c: usize, i: usize, j: usize) -> f64 {
        self.data[c * self.grid.n() * self.grid.n() + i * self.grid.n() + j]
    }

    #[inline]
    pub fn set(&mut self, c: usize, i: usize, j: usize, v: f64) {
        let n = self.grid.n();
        self.data[c * n * n + i * n + j] = v;
    }

    pub fn component(&self, c: usize) -> &[f64] {
        let nn = self.grid.n() * self.grid.n();
        &self.data[c * nn..(c + 1) * nn]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut [f64] {
        let nn = self.grid.n() * self.grid.n();
        &mut self.data[c * nn..(c + 1) * nn]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Raw DFT of one component. Continuous Fourier coefficients are
    /// `h^2` times these values.
    pub fn spectrum(&self, c: usize) -> Vec<Complex<f64>> {
        let n = self.grid.n();
        let mut buf: Vec<Complex<f64>> = self
            .component(c)
            .iter()
            .map(|&v| Complex::new(v, 0.0))
            .collect();
        fft2(&mut buf, n, false);
        buf
    }

    pub fn from_spectra(grid: Grid2D, spectra: Vec<Vec<Complex<f64>>>) -> Self {
        let n = grid.n();
        let ncomp = spectra.len();
        let mut out = Self::zeros(grid, ncomp);
        for (c, mut buf) in spectra.into_iter().enumerate() {
            fft2(&mut buf, n, true);
            for (dst, z) in out.component_mut(c).iter_mut().zip(buf.iter()) {
                *dst = z.re;
            }
        }
        out
    }

    /// Zeroes modes outside the two-thirds cap in every component.
    pub fn dealias(&mut self) {
        let n = self.grid.n();
        let grid = self.grid;
        for c in 0..self.ncomp {
            let mut buf = self.spectrum(c);
            for i in 0..n {
                for j in 0..n {
                    if !grid.keep(grid.freq(i), grid.freq(j)) {
                        buf[i * n + j] = Complex::default();
                    }
                }
            }
            fft2(&mut buf, n, true);
            for (dst, z) in self.component_mut(c).iter_mut().zip(buf.iter()) {
                *dst = z.re;
            }
        }
    }

    pub fn mean(&self, c: usize) -> f64 {
        let nn = (self.grid.n() * self.grid.n()) as f64;
        self.component(c).iter().sum::<f64>() / nn
    }

    /// L2 norm by grid quadrature over all components.
    pub fn l2_norm(&self) -> f64 {
        let h2 = self.grid.h() * self.grid.h();
        (self.data.iter().map(|v| v * v).sum::<f64>() * h2).sqrt()
    }

    /// Max over nodes of the Euclidean magnitude across components.
    pub fn max_magnitude(&self) -> f64 {
        let nn = self.grid.n() * self.grid.n();
        let mut best = 0.0f64;
        for idx in 0..nn {
            let mut s = 0.0;
            for c in 0..self.ncomp {
                let v = self.data[c * nn + idx];
                s += v * v;
            }
            best = best.max(s);
        }
        best.sqrt()
    }

    pub fn has_nan(&self) -> bool {
        self.data.iter().any(|v| !v.is_finite())
    }

    /// Periodic cubic Lagrange interpolation of every component at a
    /// torus point. Exact at grid nodes.
    pub fn interpolate(&self, point: [f64; 2]) -> [f64; 2] {
        let n = self.grid.n();
        let (ix, wx) = lagrange_stencil(wrap(point[0]), n);
        let (iy, wy) = lagrange_stencil(wrap(point[1]), n);
        let mut out = [0.0; 2];
        for c in 0..self.ncomp {
            let comp = self.component(c);
            let mut acc = 0.0;
            for (a, &wxa) in wx.iter().enumerate() {
                let row = ix[a] * n;
                let mut racc = 0.0;
                for (b, &wyb) in wy.iter().enumerate() {
                    racc += wyb * comp[row + iy[b]];
                }
                acc += wxa * racc;
            }
            out[c] = acc;
        }
        out
    }
}

/// Four-point stencil indices (wrapped) and cubic Lagrange weights for a
/// coordinate in [0, 1).
#[inline]
fn lagrange_stencil(x: f64, n: usize) -> ([usize; 4], [f64; 4]) {
    let xn = x * n as f64;
    let i0 = xn.floor() as i64;
    let t = xn - i0 as f64;
    let w = [
        -t * (t - 1.0) * (t - 2.0) / 6.0,
        (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
        -(t + 1.0) * t * (t - 2.0) / 2.0,
        (t + 1.0) * t * (t - 1.0) / 6.0,
    ];
    let m = n as i64;
    let idx = [
        (i0 - 1).rem_euclid(m) as usize,
        i0.rem_euclid(m) as usize,
        (i0 + 1).rem_euclid(m) as usize,
        (i0 + 2).rem_euclid(m) as usize,
    ];
    (idx, w)
}

/// Spectral partial derivative of one component along `axis` (0 = x, 1 = y).
pub fn derivative(field: &SpectralField, c: usize, axis: usize) -> SpectralField {
    let grid = field.grid();
    let n = grid.n();
    let mut buf = field.spectrum(c);
    for i in 0..n {
        for j in 0..n {
            let k = if axis == 0 { grid.freq(i) } else { grid.freq(j) };
            // the unbalanced Nyquist mode has no meaningful derivative
            let k = if k == -(n as i64) / 2 { 0 } else { k };
            buf[i * n + j] *= Complex::new(0.0, TWO_PI * k as f64);
        }
    }
    SpectralField::from_spectra(grid, vec![buf])
}

/// Biot-Savart inversion `u = grad^perp Delta^{-1} omega` with
/// `grad^perp = (-d_y, d_x)`. The zero mode of `u` is set to `mean_flow`.
pub fn curl_inverse_with_mean(
    omega: &SpectralField,
    mean_flow: [f64; 2],
) -> Result<SpectralField> {
    assert_eq!(omega.ncomp(), 1);
    let grid = omega.grid();
    let n = grid.n();
    let tol = 1e-12;
    let mean = omega.mean(0);
    if mean.abs() > tol {
        return Err(VnsError::NonZeroMean { mean, tol });
    }
    let what = omega.spectrum(0);
    let mut ux = vec![Complex::default(); n * n];
    let mut uy = vec![Complex::default(); n * n];
    for i in 0..n {
        for j in 0..n {
            let kx = grid.freq(i) as f64 * TWO_PI;
            let ky = grid.freq(j) as f64 * TWO_PI;
            let k2 = kx * kx + ky * ky;
            let idx = i * n + j;
            if k2 == 0.0 {
                ux[idx] = Complex::new(mean_flow[0] * (n * n) as f64, 0.0);
                uy[idx] = Complex::new(mean_flow[1] * (n * n) as f64, 0.0);
            } else {
                // psi_hat = -omega_hat / k2; u = (-d_y psi, d_x psi)
                let psi = -what[idx] / k2;
                ux[idx] = -Complex::new(0.0, ky) * psi;
                uy[idx] = Complex::new(0.0, kx) * psi;
            }
        }
    }
    Ok(SpectralField::from_spectra(grid, vec![ux, uy]))
}

pub fn curl_inverse(omega: &SpectralField) -> Result<SpectralField> {
    curl_inverse_with_mean(omega, [0.0, 0.0])
}

/// Scalar curl of a vector field: `d_x g2 - d_y g1`, computed spectrally.
pub fn perp_div(g: &SpectralField) -> Result<SpectralField> {
    if g.ncomp() != 2 {
        return Err(VnsError::ShapeMismatch(format!(
            "perp_div expects a vector field, got {} component(s)",
            g.ncomp()
        )));
    }
    let grid = g.grid();
    let n = grid.n();
    let g1 = g.spectrum(0);
    let g2 = g.spectrum(1);
    let mut out = vec![Complex::default(); n * n];
    for i in 0..n {
        for j in 0..n {
            let kx = grid.freq(i) as f64 * TWO_PI;
            let ky = grid.freq(j) as f64 * TWO_PI;
            let idx = i * n + j;
            out[idx] = Complex::new(0.0, kx) * g2[idx] - Complex::new(0.0, ky) * g1[idx];
        }
    }
    Ok(SpectralField::from_spectra(grid, vec![out]))
}

/// Max over modes of |k . u_hat|, the spectral divergence residual.
pub fn divergence_residual(u: &SpectralField) -> f64 {
    let grid = u.grid();
    let n = grid.n();
    let ux = u.spectrum(0);
    let uy = u.spectrum(1);
    let h2 = grid.h() * grid.h();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let kx = grid.freq(i) as f64 * TWO_PI;
            let ky = grid.freq(j) as f64 * TWO_PI;
            let idx = i * n + j;
            let d = Complex::new(0.0, kx) * ux[idx] + Complex::new(0.0, ky) * uy[idx];
            worst = worst.max((d * h2).norm());
        }
    }
    worst
}

/// Periodic convolution with a unit-mass kernel, as a spectral product.
pub fn convolve(field: &SpectralField, kernel: &SpectralField) -> Result<SpectralField> {
    if field.grid() != kernel.grid() {
        return Err(VnsError::GridMismatch(
            "convolve: field and kernel on different grids".into(),
        ));
    }
    if kernel.ncomp() != 1 {
        return Err(VnsError::ShapeMismatch("convolution kernel must be scalar".into()));
    }
    let integral = kernel.mean(0); // quadrature integral: mean * area, area = 1
    if (integral - 1.0).abs() > 1e-8 {
        return Err(VnsError::KernelNotNormalized {
            integral,
            tol: 1e-8,
        });
    }
    let grid = field.grid();
    let h2 = grid.h() * grid.h();
    let khat = kernel.spectrum(0);
    let mut spectra = Vec::with_capacity(field.ncomp());
    for c in 0..field.ncomp() {
        let mut fhat = field.spectrum(c);
        for (f, k) in fhat.iter_mut().zip(khat.iter()) {
            *f *= k * h2;
        }
        spectra.push(fhat);
    }
    Ok(SpectralField::from_spectra(grid, spectra))
}

/// Sobolev norm `( sum_k (1 + |2 pi k|^2)^s |f_hat(k)|^2 )^{1/2}` summed
/// over components, with continuous-normalization coefficients.
pub fn sobolev_norm(field: &SpectralField, s: f64) -> f64 {
    assert!((-2.0..=3.0).contains(&s), "sobolev exponent out of range");
    let grid = field.grid();
    let n = grid.n();
    let h2 = grid.h() * grid.h();
    let mut total = 0.0;
    for c in 0..field.ncomp() {
        let fhat = field.spectrum(c);
        for i in 0..n {
            for j in 0..n {
                let kx = grid.freq(i) as f64 * TWO_PI;
                let ky = grid.freq(j) as f64 * TWO_PI;
                let w = (1.0 + kx * kx + ky * ky).powf(s);
                total += w * (fhat[i * n + j] * h2).norm_sqr();
            }
        }
    }
    total.sqrt()
}

/// L2 norm of the gradient of every component (spectral Parseval form).
pub fn grad_l2_norm_sq(field: &SpectralField) -> f64 {
    let grid = field.grid();
    let n = grid.n();
    let h2 = grid.h() * grid.h();
    let mut total = 0.0;
    for c in 0..field.ncomp() {
        let fhat = field.spectrum(c);
        for i in 0..n {
            for j in 0..n {
                let kx = grid.freq(i) as f64 * TWO_PI;
                let ky = grid.freq(j) as f64 * TWO_PI;
                total += (kx * kx + ky * ky) * (fhat[i * n + j] * h2).norm_sqr();
            }
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dealiased_random(grid: Grid2D, seed: u64) -> SpectralField {
        let n = grid.n();
        let mut f = SpectralField::zeros(grid, 1);
        for i in 0..n {
            for j in 0..n {
                let v = crate::rng::uniform(seed, i as u64, j as u64, 0) - 0.5;
                f.set(0, i, j, v);
            }
        }
        f.dealias();
        let m = f.mean(0);
        for v in f.component_mut(0) {
            *v -= m;
        }
        f
    }

    #[test]
    fn curl_inverse_zero() {
        let grid = Grid2D::new(16).unwrap();
        let omega = SpectralField::zeros(grid, 1);
        let u = curl_inverse(&omega).unwrap();
        assert!(u.max_magnitude() < 1e-15);
    }

    #[test]
    fn curl_inverse_single_mode() {
        // omega = -2 pi cos(2 pi y)  ->  u = (sin(2 pi y), 0)
        let grid = Grid2D::new(32).unwrap();
        let omega =
            SpectralField::scalar_from_fn(grid, |_, y| -TWO_PI * (TWO_PI * y).cos());
        let u = curl_inverse(&omega).unwrap();
        let n = grid.n();
        for i in 0..n {
            for j in 0..n {
                let [_, y] = grid.node(i, j);
                assert!((u.at(0, i, j) - (TWO_PI * y).sin()).abs() < 1e-12);
                assert!(u.at(1, i, j).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn curl_inverse_round_trip_and_divergence() {
        let grid = Grid2D::new(64).unwrap();
        let omega = dealiased_random(grid, 11);
        let u = curl_inverse(&omega).unwrap();
        assert!(divergence_residual(&u) <= 1e-12, "divergence-free");
        let back = perp_div(&u).unwrap();
        let n = grid.n();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                worst = worst.max((back.at(0, i, j) - omega.at(0, i, j)).abs());
            }
        }
        assert!(worst <= 1e-12, "round trip error {worst}");
    }

    #[test]
    fn curl_inverse_rejects_nonzero_mean() {
        let grid = Grid2D::new(16).unwrap();
        let omega = SpectralField::scalar_from_fn(grid, |_, _| 0.5);
        match curl_inverse(&omega) {
            Err(VnsError::NonZeroMean { mean, .. }) => assert!((mean - 0.5).abs() < 1e-14),
            other => panic!("expected NonZeroMean, got {other:?}"),
        }
    }

    #[test]
    fn perp_div_cases() {
        let grid = Grid2D::new(32).unwrap();
        let constant = SpectralField::vector_from_fn(grid, |_, _| [1.3, -0.4]);
        assert!(perp_div(&constant).unwrap().max_magnitude() < 1e-12);

        let g = SpectralField::vector_from_fn(grid, |x, _| [0.0, (TWO_PI * x).sin()]);
        let d = perp_div(&g).unwrap();
        let n = grid.n();
        for i in 0..n {
            for j in 0..n {
                let [x, _] = grid.node(i, j);
                assert!((d.at(0, i, j) - TWO_PI * (TWO_PI * x).cos()).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn perp_div_of_gradient_vanishes() {
        let grid = Grid2D::new(32).unwrap();
        let phi = SpectralField::scalar_from_fn(grid, |x, y| {
            (TWO_PI * x).sin() * (2.0 * TWO_PI * y).cos() + 0.3 * (TWO_PI * (x + y)).cos()
        });
        let gx = derivative(&phi, 0, 0);
        let gy = derivative(&phi, 0, 1);
        let mut g = SpectralField::zeros(grid, 2);
        g.component_mut(0).copy_from_slice(gx.component(0));
        g.component_mut(1).copy_from_slice(gy.component(0));
        assert!(perp_div(&g).unwrap().max_magnitude() <= 1e-12);
    }

    #[test]
    fn convolve_preserves_constants_and_modes() {
        let grid = Grid2D::new(32).unwrap();
        // narrow normalized kernel
        let mut kernel = SpectralField::scalar_from_fn(grid, |x, y| {
            let dx = if x > 0.5 { x - 1.0 } else { x };
            let dy = if y > 0.5 { y - 1.0 } else { y };
            (-(dx * dx + dy * dy) / (2.0 * 0.05 * 0.05)).exp()
        });
        let mass = kernel.mean(0);
        for v in kernel.component_mut(0) {
            *v /= mass;
        }

        let c = SpectralField::scalar_from_fn(grid, |_, _| 2.7);
        let out = convolve(&c, &kernel).unwrap();
        assert!((out.mean(0) - 2.7).abs() < 1e-12);
        let n = grid.n();
        for i in 0..n {
            for j in 0..n {
                assert!((out.at(0, i, j) - 2.7).abs() < 1e-10);
            }
        }

        // single Fourier mode is multiplied by the kernel coefficient
        let k = 3i64;
        let mode = SpectralField::scalar_from_fn(grid, |x, _| (TWO_PI * k as f64 * x).cos());
        let out = convolve(&mode, &kernel).unwrap();
        let khat = kernel.spectrum(0);
        let h2 = grid.h() * grid.h();
        let factor = (khat[(k as usize) * n] * h2).re;
        for i in 0..n {
            let [x, _] = grid.node(i, 0);
            let expect = factor * (TWO_PI * k as f64 * x).cos();
            assert!((out.at(0, i, 0) - expect).abs() < 1e-10);
        }
    }

    #[test]
    fn convolve_rejects_unnormalized_kernel() {
        let grid = Grid2D::new(16).unwrap();
        let kernel = SpectralField::scalar_from_fn(grid, |_, _| 1.5);
        let f = SpectralField::zeros(grid, 1);
        assert!(matches!(
            convolve(&f, &kernel),
            Err(VnsError::KernelNotNormalized { .. })
        ));
    }

    #[test]
    fn interpolation_nodal_and_analytic() {
        let grid = Grid2D::new(32).unwrap();
        let f = SpectralField::scalar_from_fn(grid, |x, y| {
            (TWO_PI * x).sin() + 0.5 * (2.0 * TWO_PI * y).cos()
        });
        
        for &(i, j) in &[(0usize, 0usize), (5, 17), (31, 31), (16, 3)] {
            let p = grid.node(i, j);
            assert_eq!(f.interpolate(p)[0], f.at(0, i, j), "nodal exactness");
        }
        let v = f.interpolate([0.25, 0.37])[0];
        let exact = (TWO_PI * 0.25f64).sin() + 0.5 * (2.0 * TWO_PI * 0.37f64).cos();
        assert!((v - exact).abs() < 5e-5);
    }

    #[test]
    fn interpolation_fourth_order() {
        let f_exact =
            |x: f64, y: f64| (TWO_PI * x).sin() * (TWO_PI * y).cos() + (2.0 * TWO_PI * y).sin();
        let probe: Vec<[f64; 2]> = (0..200)
            .map(|k| {
                [
                    crate::rng::uniform(5, k, 0, 0),
                    crate::rng::uniform(5, k, 1, 0),
                ]
            })
            .collect();
        let mut errs = Vec::new();
        for &n in &[16usize, 32, 64, 128] {
            let grid = Grid2D::new(n).unwrap();
            let f = SpectralField::scalar_from_fn(grid, f_exact);
            let mut worst = 0.0f64;
            for p in &probe {
                worst = worst.max((f.interpolate(*p)[0] - f_exact(p[0], p[1])).abs());
            }
            errs.push(worst);
        }
        for w in errs.windows(2) {
            assert!(
                w[0] / w[1] >= 8.0,
                "refinement must cut the error by >= 2^3: {errs:?}"
            );
        }
        // measured order over the sweep
        let slope = (errs[0] / errs[3]).log2() / 3.0;
        assert!(slope >= 3.7, "order {slope}");
    }

    #[test]
    fn sobolev_norm_cases() {
        let grid = Grid2D::new(32).unwrap();
        let zero = SpectralField::zeros(grid, 1);
        assert_eq!(sobolev_norm(&zero, 1.0), 0.0);

        let f = SpectralField::scalar_from_fn(grid, |x, _| (TWO_PI * x).sin());
        let s0 = sobolev_norm(&f, 0.0);
        assert!((s0 - 1.0 / 2.0f64.sqrt()).abs() < 1e-12);

        // ratio on a single mode k: (1 + 4 pi^2 k^2)^{1/2}
        let k = 3.0;
        let g = SpectralField::scalar_from_fn(grid, |x, _| (TWO_PI * k * x).sin());
        let ratio = sobolev_norm(&g, 1.0) / sobolev_norm(&g, 0.0);
        let expect = (1.0 + 4.0 * std::f64::consts::PI.powi(2) * k * k).sqrt();
        assert!((ratio - expect).abs() < 1e-10);
    }

    #[test]
    fn parseval() {
        let grid = Grid2D::new(64).unwrap();
        let f = dealiased_random(grid, 3);
        let phys = f.l2_norm().powi(2);
        let spec = sobolev_norm(&f, 0.0).powi(2);
        assert!((phys - spec).abs() <= 1e-12 * phys.max(1.0), "{phys} vs {spec}");
    }
}
