//! Heavy-tailed 2D autoregressive clutter.
//!
//! The disturbance field follows the quarter-plane recursion
//! `c[x][y] = Σ ρ[i][j]·c[x-i][y-j] + w[x][y]` over all `(i, j) ≠ (0, 0)`,
//! driven by circular complex Student-t innovations of variance `σ_w²`.
//! Generation starts from zero boundary values and discards a burn-in margin
//! on the leading edges of both axes.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::array::{SpatialGrid, UpaConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClutterError {
    #[error("AR coefficient matrix must be non-empty and rectangular")]
    BadShape,
    #[error("AR coefficient at lag (0,0) must be zero, got {0}")]
    NonzeroOrigin(f64),
    #[error("AR coefficients must be finite")]
    NonFinite,
    #[error("Student-t shape must exceed 1 (got {0})")]
    TailShape(f64),
    #[error("innovation variance must be positive and finite (got {0})")]
    Variance(f64),
    #[error("AR recursion is unstable: {0}")]
    Unstable(String),
    #[error("PSD denominator {value:e} below 1e-12 at ({nu_x}, {nu_y})")]
    PsdPole { nu_x: f64, nu_y: f64, value: f64 },
    #[error("field dimensions must be at least 1 (got {0}x{1})")]
    EmptyField(usize, usize),
    #[error("field of {rows}x{cols} cannot hold virtual array of {need_rows}x{need_cols}")]
    FieldTooSmall {
        rows: usize,
        cols: usize,
        need_rows: usize,
        need_cols: usize,
    },
    #[error("channel vector has length {actual}, expected {expected}")]
    VectorLength { expected: usize, actual: usize },
}

/// AR coefficients `ρ[i][j]`; row index is the lag along x, column along y.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct ArCoefficients {
    rho: Vec<Vec<f64>>,
}

impl TryFrom<Vec<Vec<f64>>> for ArCoefficients {
    type Error = ClutterError;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self, Self::Error> {
        Self::new(rows)
    }
}

impl From<ArCoefficients> for Vec<Vec<f64>> {
    fn from(c: ArCoefficients) -> Self {
        c.rho
    }
}

impl ArCoefficients {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, ClutterError> {
        let width = rows.first().map_or(0, Vec::len);
        if width == 0 || rows.iter().any(|r| r.len() != width) {
            return Err(ClutterError::BadShape);
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(ClutterError::NonFinite);
        }
        if rows[0][0] != 0.0 {
            return Err(ClutterError::NonzeroOrigin(rows[0][0]));
        }
        Ok(Self { rho: rows })
    }

    /// The 3×3 coefficient matrix used throughout the reference scenarios.
    pub fn reference() -> Self {
        Self {
            rho: vec![
                vec![0.0, 0.1, 0.1],
                vec![0.1, 0.0, 0.0],
                vec![0.05, 0.0, 0.0],
            ],
        }
    }

    /// White field.
    pub fn white() -> Self {
        Self {
            rho: vec![vec![0.0]],
        }
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rho
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            rho: self
                .rho
                .iter()
                .map(|r| r.iter().map(|v| v * factor).collect())
                .collect(),
        }
    }

    /// Non-zero taps as `(lag_x, lag_y, ρ)`.
    pub fn taps(&self) -> Vec<(usize, usize, f64)> {
        let mut taps = Vec::new();
        for (i, row) in self.rho.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if (i, j) != (0, 0) && v != 0.0 {
                    taps.push((i, j, v));
                }
            }
        }
        taps
    }

    /// `A(ν) = 1 − Σ ρ[n][l]·e^{−j2π(nν_x + lν_y)}`.
    pub fn transfer_denominator(&self, nu_x: f64, nu_y: f64) -> Complex64 {
        let mut acc = Complex64::new(1.0, 0.0);
        for (n, l, v) in self.taps() {
            let phase = -2.0 * PI * (n as f64 * nu_x + l as f64 * nu_y);
            acc -= Complex64::from_polar(v, phase);
        }
        acc
    }

    /// `|A(ν)|²`, the PSD denominator.
    pub fn spectral_denominator(&self, nu_x: f64, nu_y: f64) -> f64 {
        self.transfer_denominator(nu_x, nu_y).norm_sqr()
    }

    /// Quarter-plane stability: `A(z1, z2) ≠ 0` on the closed unit bidisc.
    ///
    /// Uses the three-part test of DeCarlo, Strintzis and Goodman: no zeros on
    /// the unit torus, no zeros of `A(z1, 1)` in `|z1| ≤ 1`, and no zeros of
    /// `A(1, z2)` in `|z2| ≤ 1`. The torus part is checked on a dense grid.
    pub fn check_stability(&self) -> Result<(), ClutterError> {
        let l1: f64 = self.taps().iter().map(|t| t.2.abs()).sum();
        if l1 < 1.0 {
            return Ok(());
        }
        const TORUS: usize = 128;
        for a in 0..TORUS {
            for b in 0..TORUS {
                let nu_x = a as f64 / TORUS as f64 - 0.5;
                let nu_y = b as f64 / TORUS as f64 - 0.5;
                let d = self.spectral_denominator(nu_x, nu_y);
                if d < 1e-12 {
                    return Err(ClutterError::Unstable(format!(
                        "transfer function vanishes near ({nu_x:.4}, {nu_y:.4})"
                    )));
                }
            }
        }
        // A(z1, 1): coefficient of z1^i is −Σ_j ρ[i][j] (plus 1 at i = 0)
        let p = self.rho.len();
        let q = self.rho[0].len();
        let mut along_x = vec![0.0; p];
        let mut along_y = vec![0.0; q];
        for (i, row) in self.rho.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                along_x[i] -= v;
                along_y[j] -= v;
            }
        }
        along_x[0] += 1.0;
        along_y[0] += 1.0;
        for (axis, poly) in [("x", along_x), ("y", along_y)] {
            if let Some(r) = min_root_modulus(&poly) {
                if r <= 1.0 + 1e-9 {
                    return Err(ClutterError::Unstable(format!(
                        "edge polynomial along {axis} has a root of modulus {r:.6} inside the unit disc"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Smallest root modulus of `Σ c_k z^k`, `None` for a nonzero constant.
fn min_root_modulus(coeffs: &[f64]) -> Option<f64> {
    let mut deg = coeffs.len();
    while deg > 0 && coeffs[deg - 1].abs() < 1e-300 {
        deg -= 1;
    }
    if deg <= 1 {
        return if deg == 0 { Some(0.0) } else { None };
    }
    let n = deg - 1;
    if coeffs[0] == 0.0 {
        return Some(0.0);
    }
    let lead = coeffs[n];
    // companion matrix of the monic polynomial
    let mut comp = DMatrix::<f64>::zeros(n, n);
    for i in 1..n {
        comp[(i, i - 1)] = 1.0;
    }
    for i in 0..n {
        comp[(i, n - 1)] = -coeffs[i] / lead;
    }
    comp.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .min_by(f64::total_cmp)
}

/// Student-t innovation law, `μ = ∞` meaning complex Gaussian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudentTNoise {
    pub mu: f64,
    pub sigma_w2: f64,
}

impl StudentTNoise {
    pub fn new(mu: f64, sigma_w2: f64) -> Result<Self, ClutterError> {
        let n = Self { mu, sigma_w2 };
        n.validate()?;
        Ok(n)
    }

    pub fn gaussian(sigma_w2: f64) -> Result<Self, ClutterError> {
        Self::new(f64::INFINITY, sigma_w2)
    }

    pub fn validate(&self) -> Result<(), ClutterError> {
        if self.mu.is_nan() || self.mu <= 1.0 {
            return Err(ClutterError::TailShape(self.mu));
        }
        if !(self.sigma_w2.is_finite() && self.sigma_w2 > 0.0) {
            return Err(ClutterError::Variance(self.sigma_w2));
        }
        Ok(())
    }

    pub fn sampler(&self) -> Result<StudentTSampler, ClutterError> {
        self.validate()?;
        let texture = if self.mu.is_finite() {
            Some(Gamma::new(self.mu, 1.0).map_err(|_| ClutterError::TailShape(self.mu))?)
        } else {
            None
        };
        Ok(StudentTSampler {
            texture,
            shape: self.mu,
            scale: (0.5 * self.sigma_w2).sqrt(),
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Complex64, ClutterError> {
        Ok(self.sampler()?.sample(rng))
    }
}

/// Compound-Gaussian draw: `w = √τ·g`, `g ~ CN(0, σ_w²)` and
/// `τ = (μ−1)/G` with `G ~ Gamma(μ, 1)`, so that `E[τ] = 1`.
#[derive(Debug, Clone)]
pub struct StudentTSampler {
    texture: Option<Gamma<f64>>,
    shape: f64,
    scale: f64,
}

impl StudentTSampler {
    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Complex64 {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        let amp = match &self.texture {
            Some(gamma) => {
                let g = gamma.sample(rng);
                self.scale * ((self.shape - 1.0) / g).sqrt()
            }
            None => self.scale,
        };
        Complex64::new(re * amp, im * amp)
    }
}

/// Default number of discarded leading rows/columns.
pub const DEFAULT_BURN_IN: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClutterField {
    pub coefficients: ArCoefficients,
    pub noise: StudentTNoise,
    pub burn_in: usize,
}

impl ClutterField {
    pub fn new(
        coefficients: ArCoefficients,
        noise: StudentTNoise,
        burn_in: usize,
    ) -> Result<Self, ClutterError> {
        coefficients.check_stability()?;
        noise.validate()?;
        Ok(Self {
            coefficients,
            noise,
            burn_in,
        })
    }

    pub fn generator(&self) -> Result<FieldGenerator, ClutterError> {
        self.coefficients.check_stability()?;
        Ok(FieldGenerator {
            taps: self.coefficients.taps(),
            sampler: self.noise.sampler()?,
            burn_in: self.burn_in,
            buffer: Vec::new(),
        })
    }

    /// One `n_x × n_y` realization.
    pub fn generate<R: Rng + ?Sized>(
        &self,
        n_x: usize,
        n_y: usize,
        rng: &mut R,
    ) -> Result<DMatrix<Complex64>, ClutterError> {
        self.generator()?.generate(n_x, n_y, rng)
    }
}

/// Reusable generation state; keeps one scratch buffer across calls.
#[derive(Debug, Clone)]
pub struct FieldGenerator {
    taps: Vec<(usize, usize, f64)>,
    sampler: StudentTSampler,
    burn_in: usize,
    buffer: Vec<Complex64>,
}

impl FieldGenerator {
    // Zero-padded by the tap extents so the recursion needs no bounds checks.
    fn fill<R: Rng + ?Sized>(&mut self, rows: usize, cols: usize, rng: &mut R) -> (usize, usize, usize) {
        let pad_x = self.taps.iter().map(|t| t.0).max().unwrap_or(0);
        let pad_y = self.taps.iter().map(|t| t.1).max().unwrap_or(0);
        let stride = cols + pad_y;
        self.buffer.clear();
        self.buffer.resize((rows + pad_x) * stride, Complex64::new(0.0, 0.0));
        let offsets: Vec<(usize, f64)> = self.taps.iter().map(|&(a, b, r)| (a * stride + b, r)).collect();
        let buf = &mut self.buffer;
        for i in 0..rows {
            let base = (i + pad_x) * stride + pad_y;
            for k in base..base + cols {
                let mut v = self.sampler.sample(rng);
                for &(off, rho) in &offsets {
                    v += buf[k - off] * rho;
                }
                buf[k] = v;
            }
        }
        (pad_x, pad_y, stride)
    }

    pub fn generate<R: Rng + ?Sized>(
        &mut self,
        n_x: usize,
        n_y: usize,
        rng: &mut R,
    ) -> Result<DMatrix<Complex64>, ClutterError> {
        if n_x == 0 || n_y == 0 {
            return Err(ClutterError::EmptyField(n_x, n_y));
        }
        let b = self.burn_in;
        let (rows, cols) = (n_x + b, n_y + b);
        let (px, py, stride) = self.fill(rows, cols, rng);
        let buf = &self.buffer;
        Ok(DMatrix::from_fn(n_x, n_y, |i, j| {
            buf[(i + b + px) * stride + j + b + py]
        }))
    }

    /// Generates straight into channel order for `layout`.
    pub fn generate_channels<R: Rng + ?Sized>(
        &mut self,
        upa: &UpaConfig,
        layout: ChannelLayout,
        rng: &mut R,
    ) -> Vec<Complex64> {
        let (n_x, n_y) = layout.field_dims(upa);
        let b = self.burn_in;
        let (px, py, stride) = self.fill(n_x + b, n_y + b, rng);
        let buf = &self.buffer;
        let mut out = Vec::with_capacity(n_x * n_y);
        for i in 0..n_x {
            let start = (i + b + px) * stride + b + py;
            out.extend_from_slice(&buf[start..start + n_y]);
        }
        out
    }
}

/// `S(ν) = σ_w² / |A(ν)|²` at one point.
pub fn psd_at(
    coefficients: &ArCoefficients,
    sigma_w2: f64,
    nu_x: f64,
    nu_y: f64,
) -> Result<f64, ClutterError> {
    let d = coefficients.spectral_denominator(nu_x, nu_y);
    if d < 1e-12 {
        return Err(ClutterError::PsdPole {
            nu_x,
            nu_y,
            value: d,
        });
    }
    Ok(sigma_w2 / d)
}

/// Theoretical PSD over every grid bin, in bin order.
pub fn psd(
    coefficients: &ArCoefficients,
    sigma_w2: f64,
    grid: &SpatialGrid,
) -> Result<Vec<f64>, ClutterError> {
    grid.bins()
        .iter()
        .map(|b| psd_at(coefficients, sigma_w2, b.nu_x, b.nu_y))
        .collect()
}

/// How virtual channels are placed on the 2D clutter field.
///
/// `Line` puts channel `i` at field position `(i, 0)`, so the vector inherits
/// the fast-decaying correlation along one field axis. `Planar` puts channel
/// `r·N_t + t` at `(r, t)`; neighbouring receive rows then sit `N_t` apart in
/// the vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelLayout {
    #[default]
    Line,
    Planar,
}

impl ChannelLayout {
    /// Field footprint `(rows, cols)` of the virtual array.
    pub fn field_dims(self, upa: &UpaConfig) -> (usize, usize) {
        match self {
            ChannelLayout::Line => (upa.n_virtual(), 1),
            ChannelLayout::Planar => (upa.n_r(), upa.n_t()),
        }
    }

    /// Field position of channel `i`.
    pub fn position(self, upa: &UpaConfig, i: usize) -> (usize, usize) {
        let (_, cols) = self.field_dims(upa);
        (i / cols, i % cols)
    }
}

/// Reads the virtual-array block of `field` out in row-major channel order.
pub fn vectorize_to_channels(
    field: &DMatrix<Complex64>,
    upa: &UpaConfig,
    layout: ChannelLayout,
) -> Result<Vec<Complex64>, ClutterError> {
    let (rows, cols) = layout.field_dims(upa);
    if field.nrows() < rows || field.ncols() < cols {
        return Err(ClutterError::FieldTooSmall {
            rows: field.nrows(),
            cols: field.ncols(),
            need_rows: rows,
            need_cols: cols,
        });
    }
    let mut out = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            out.push(field[(i, j)]);
        }
    }
    Ok(out)
}

/// Inverse of [`vectorize_to_channels`] on the exact footprint.
pub fn devectorize(
    channels: &[Complex64],
    upa: &UpaConfig,
    layout: ChannelLayout,
) -> Result<DMatrix<Complex64>, ClutterError> {
    let (rows, cols) = layout.field_dims(upa);
    if channels.len() != rows * cols {
        return Err(ClutterError::VectorLength {
            expected: rows * cols,
            actual: channels.len(),
        });
    }
    Ok(DMatrix::from_fn(rows, cols, |i, j| channels[i * cols + j]))
}

/// Impulse response `g[m][n]` of the AR filter on an `size × size` support.
pub fn impulse_response(coefficients: &ArCoefficients, size: usize) -> DMatrix<f64> {
    let taps = coefficients.taps();
    let mut g = DMatrix::<f64>::zeros(size, size);
    for i in 0..size {
        for j in 0..size {
            let mut v = if i == 0 && j == 0 { 1.0 } else { 0.0 };
            for &(a, b, rho) in &taps {
                if i >= a && j >= b {
                    v += rho * g[(i - a, j - b)];
                }
            }
            g[(i, j)] = v;
        }
    }
    g
}

/// Exact autocovariance `r(dx, dy) = E[c[x+dx][y+dy]·c[x][y]*]` of the
/// stationary field, truncated to `|dx|, |dy| ≤ max_lag`.
#[derive(Debug, Clone)]
pub struct ArAutocovariance {
    max_lag: usize,
    // r(dx, dy) for dx in 0..=max_lag, dy in -max_lag..=max_lag
    table: Vec<f64>,
}

impl ArAutocovariance {
    pub fn new(
        coefficients: &ArCoefficients,
        sigma_w2: f64,
        max_lag: usize,
    ) -> Result<Self, ClutterError> {
        coefficients.check_stability()?;
        let size = max_lag + 96;
        let g = impulse_response(coefficients, size);
        let span = 2 * max_lag + 1;
        let mut table = vec![0.0; (max_lag + 1) * span];
        for dx in 0..=max_lag {
            for (k, dy) in (-(max_lag as isize)..=max_lag as isize).enumerate() {
                let mut acc = 0.0;
                for m in 0..size - dx {
                    let (n0, n1) = if dy >= 0 {
                        (0, size - dy as usize)
                    } else {
                        ((-dy) as usize, size)
                    };
                    for n in n0..n1 {
                        let n2 = (n as isize + dy) as usize;
                        acc += g[(m, n)] * g[(m + dx, n2)];
                    }
                }
                table[dx * span + k] = sigma_w2 * acc;
            }
        }
        Ok(Self { max_lag, table })
    }

    pub fn max_lag(&self) -> usize {
        self.max_lag
    }

    pub fn at(&self, dx: isize, dy: isize) -> f64 {
        let (dx, dy) = if dx < 0 { (-dx, -dy) } else { (dx, dy) };
        let m = self.max_lag as isize;
        if dx > m || dy.abs() > m {
            return 0.0;
        }
        let span = 2 * self.max_lag + 1;
        self.table[dx as usize * span + (dy + m) as usize]
    }

    pub fn variance(&self) -> f64 {
        self.at(0, 0)
    }

    /// `h^H Γ h` for the channel covariance induced by `layout`.
    pub fn quadratic_form(&self, h: &[Complex64], upa: &UpaConfig, layout: ChannelLayout) -> f64 {
        let pos: Vec<(isize, isize)> = (0..h.len())
            .map(|i| {
                let (x, y) = layout.position(upa, i);
                (x as isize, y as isize)
            })
            .collect();
        let m = self.max_lag as isize;
        let mut acc = Complex64::new(0.0, 0.0);
        for (i, hi) in h.iter().enumerate() {
            let mut row = Complex64::new(0.0, 0.0);
            for (j, hj) in h.iter().enumerate() {
                let dx = pos[i].0 - pos[j].0;
                let dy = pos[i].1 - pos[j].1;
                if dx.abs() > m || dy.abs() > m {
                    continue;
                }
                row += hj * self.at(dx, dy);
            }
            acc += hi.conj() * row;
        }
        acc.re
    }

    /// Dense covariance of the channel vector under `layout`.
    pub fn channel_matrix(&self, n: usize, upa: &UpaConfig, layout: ChannelLayout) -> DMatrix<f64> {
        DMatrix::from_fn(n, n, |i, j| {
            let (xi, yi) = layout.position(upa, i);
            let (xj, yj) = layout.position(upa, j);
            self.at(xi as isize - xj as isize, yi as isize - yj as isize)
        })
    }
}
