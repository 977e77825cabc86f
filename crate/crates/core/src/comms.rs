//! Downlink scene: Rayleigh channel, QPSK symbols, MUI and sum rate.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

type CMat = DMatrix<Complex64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CommsError {
    #[error("K = {k} users exceed N_t = {n_t} transmit antennas")]
    TooManyUsers { k: usize, n_t: usize },
    #[error("scene needs at least one user and one symbol")]
    Empty,
    #[error("noise power must be positive and finite, got {0}")]
    NoisePower(f64),
    #[error("dimension mismatch: {0}")]
    Dimensions(String),
}

/// `N0 = 10^{−snr_db/10}` with unit-power symbols.
pub fn noise_power(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Uniform draw from `{(±1 ± j)/√2}`.
pub fn qpsk<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let bits: u8 = rng.random_range(0..4);
    let a = std::f64::consts::FRAC_1_SQRT_2;
    Complex64::new(
        if bits & 1 == 0 { a } else { -a },
        if bits & 2 == 0 { a } else { -a },
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommScene {
    pub h: CMat,
    pub s: CMat,
    pub n0: f64,
}

impl CommScene {
    pub fn sample<R: Rng + ?Sized>(
        k: usize,
        n_t: usize,
        l: usize,
        snr_db: f64,
        rng: &mut R,
    ) -> Result<Self, CommsError> {
        if k == 0 || l == 0 || n_t == 0 {
            return Err(CommsError::Empty);
        }
        if k > n_t {
            return Err(CommsError::TooManyUsers { k, n_t });
        }
        let n0 = noise_power(snr_db);
        if !(n0.is_finite() && n0 > 0.0) {
            return Err(CommsError::NoisePower(n0));
        }
        let h = CMat::from_fn(k, n_t, |_, _| complex_gaussian(rng));
        let s = CMat::from_fn(k, l, |_, _| qpsk(rng));
        Ok(Self { h, s, n0 })
    }

    pub fn users(&self) -> usize {
        self.h.nrows()
    }

    pub fn code_length(&self) -> usize {
        self.s.ncols()
    }

    /// Fresh symbol frame on the same channel.
    pub fn redraw_symbols<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let (k, l) = self.s.shape();
        self.s = CMat::from_fn(k, l, |_, _| qpsk(rng));
    }

    pub fn metrics(&self, x: &CMat) -> Result<CommMetrics, CommsError> {
        CommMetrics::evaluate(&self.h, x, &self.s, self.n0)
    }
}

fn residual(h: &CMat, x: &CMat, s: &CMat) -> Result<CMat, CommsError> {
    if h.ncols() != x.nrows() || h.nrows() != s.nrows() || x.ncols() != s.ncols() {
        return Err(CommsError::Dimensions(format!(
            "H {}x{}, X {}x{}, S {}x{}",
            h.nrows(),
            h.ncols(),
            x.nrows(),
            x.ncols(),
            s.nrows(),
            s.ncols()
        )));
    }
    Ok(h * x - s)
}

/// `‖HX − S‖_F²`.
pub fn mui_energy(h: &CMat, x: &CMat, s: &CMat) -> Result<f64, CommsError> {
    Ok(residual(h, x, s)?.norm_squared())
}

/// `γ_k = 1 / ((1/L)·Σ_j |h_kᵀx_j − s_kj|² + N0)`.
pub fn per_user_sinr(h: &CMat, x: &CMat, s: &CMat, n0: f64) -> Result<Vec<f64>, CommsError> {
    if !(n0.is_finite() && n0 > 0.0) {
        return Err(CommsError::NoisePower(n0));
    }
    let r = residual(h, x, s)?;
    let l = r.ncols() as f64;
    Ok(r.row_iter()
        .map(|row| 1.0 / (row.norm_squared() / l + n0))
        .collect())
}

/// `Σ log₂(1 + γ_k)`.
pub fn sum_rate(sinrs: &[f64]) -> f64 {
    sinrs.iter().map(|g| (1.0 + g).log2()).sum()
}

/// Sum rate over the zero-MUI benchmark `K·log₂(1 + 1/N0)`.
pub fn normalized_sum_rate(sinrs: &[f64], n0: f64) -> f64 {
    if sinrs.is_empty() {
        return 0.0;
    }
    sum_rate(sinrs) / (sinrs.len() as f64 * (1.0 + 1.0 / n0).log2())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommMetrics {
    pub mui_energy: f64,
    pub sinr: Vec<f64>,
    pub sum_rate: f64,
    pub normalized_sum_rate: f64,
}

impl CommMetrics {
    pub fn evaluate(h: &CMat, x: &CMat, s: &CMat, n0: f64) -> Result<Self, CommsError> {
        let sinr = per_user_sinr(h, x, s, n0)?;
        Ok(Self {
            mui_energy: mui_energy(h, x, s)?,
            sum_rate: sum_rate(&sinr),
            normalized_sum_rate: normalized_sum_rate(&sinr, n0),
            sinr,
        })
    }
}
