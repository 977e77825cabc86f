//! Wald-type detection with a single-snapshot banded covariance estimate.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectorError {
    #[error("false-alarm probability must lie in (0, 1], got {0}")]
    FalseAlarm(f64),
    #[error("loading factor must be finite and non-negative, got {0}")]
    Loading(f64),
    #[error("effective channel has zero norm")]
    DegenerateChannel,
    #[error("lag {lag} must be smaller than the vector length {n}")]
    Lag { lag: usize, n: usize },
    #[error("length mismatch: channel has {h} entries, observation has {y}")]
    Length { h: usize, y: usize },
    #[error("frame has {channels} channels but {observations} observations")]
    FrameSize { channels: usize, observations: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    pub p_fa: f64,
    /// Truncation lag; `None` picks `⌊N^{1/4}⌋`.
    #[serde(default)]
    pub lag: Option<usize>,
    #[serde(default = "default_loading")]
    pub loading: f64,
}

fn default_loading() -> f64 {
    1e-3
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            p_fa: 1e-4,
            lag: None,
            loading: default_loading(),
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), DetectorError> {
        threshold(self.p_fa)?;
        if !(self.loading.is_finite() && self.loading >= 0.0) {
            return Err(DetectorError::Loading(self.loading));
        }
        Ok(())
    }

    pub fn threshold(&self) -> Result<f64, DetectorError> {
        threshold(self.p_fa)
    }

    pub fn lag_for(&self, n: usize) -> usize {
        self.lag.unwrap_or_else(|| default_lag(n))
    }

    /// Message when the lag does not grow slower than `N^{1/3}`.
    pub fn lag_warning(&self, n: usize) -> Option<String> {
        let l = self.lag_for(n);
        let bound = (n as f64).cbrt();
        (l as f64 >= bound).then(|| format!("lag {l} is not below N^(1/3) = {bound:.3} for N = {n}"))
    }
}

/// `⌊N^{1/4}⌋`, guarded against floating-point undershoot at perfect powers.
pub fn default_lag(n: usize) -> usize {
    let mut l = (n as f64).powf(0.25).floor() as usize;
    while (l + 1).pow(4) <= n {
        l += 1;
    }
    while l > 0 && l.pow(4) > n {
        l -= 1;
    }
    l
}

/// `η = −2 ln p_fa`.
pub fn threshold(p_fa: f64) -> Result<f64, DetectorError> {
    if !(p_fa > 0.0 && p_fa <= 1.0) {
        return Err(DetectorError::FalseAlarm(p_fa));
    }
    Ok(-2.0 * p_fa.ln())
}

fn inner(h: &[Complex64], y: &[Complex64]) -> Complex64 {
    h.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
}

fn norm_sqr(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// Least-squares amplitude `h^H y / ‖h‖²`.
pub fn amplitude_estimate(h: &[Complex64], y: &[Complex64]) -> Result<Complex64, DetectorError> {
    if h.len() != y.len() {
        return Err(DetectorError::Length {
            h: h.len(),
            y: y.len(),
        });
    }
    let e = norm_sqr(h);
    if e == 0.0 {
        return Err(DetectorError::DegenerateChannel);
    }
    Ok(inner(h, y) / e)
}

/// Banded residual covariance, kept implicitly as the residual vector.
///
/// Entry `(i, j)` is `ĉ_i·conj(ĉ_j)` for `|i − j| ≤ l` and zero otherwise;
/// the diagonal carries an extra `loading·‖ĉ‖²/N`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedCovariance {
    residual: Vec<Complex64>,
    lag: usize,
    loading: f64,
}

impl BandedCovariance {
    pub fn from_residual(residual: Vec<Complex64>, lag: usize, loading: f64) -> Result<Self, DetectorError> {
        if lag >= residual.len().max(1) {
            return Err(DetectorError::Lag {
                lag,
                n: residual.len(),
            });
        }
        if !(loading.is_finite() && loading >= 0.0) {
            return Err(DetectorError::Loading(loading));
        }
        Ok(Self {
            residual,
            lag,
            loading,
        })
    }

    pub fn residual(&self) -> &[Complex64] {
        &self.residual
    }

    pub fn lag(&self) -> usize {
        self.lag
    }

    pub fn len(&self) -> usize {
        self.residual.len()
    }

    pub fn is_empty(&self) -> bool {
        self.residual.is_empty()
    }

    /// Per-entry diagonal loading `loading·‖ĉ‖²/N`.
    pub fn diagonal_load(&self) -> f64 {
        self.loading * norm_sqr(&self.residual) / self.residual.len() as f64
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        if i.abs_diff(j) > self.lag {
            return Complex64::new(0.0, 0.0);
        }
        let v = self.residual[i] * self.residual[j].conj();
        if i == j {
            v + self.diagonal_load()
        } else {
            v
        }
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<Complex64> {
        let n = self.len();
        nalgebra::DMatrix::from_fn(n, n, |i, j| self.get(i, j))
    }

    /// `h^H Γ̂ h` in `O(N·l)`.
    pub fn quadratic_form(&self, h: &[Complex64]) -> f64 {
        // with u_i = conj(h_i)·ĉ_i the banded part is Σ_{|i−j|≤l} u_i·conj(u_j)
        let u: Vec<Complex64> = h
            .iter()
            .zip(&self.residual)
            .map(|(hi, ci)| hi.conj() * ci)
            .collect();
        let mut acc: f64 = u.iter().map(|z| z.norm_sqr()).sum();
        for k in 1..=self.lag {
            let mut off = Complex64::new(0.0, 0.0);
            for i in 0..u.len().saturating_sub(k) {
                off += u[i] * u[i + k].conj();
            }
            acc += 2.0 * off.re;
        }
        acc + self.diagonal_load() * norm_sqr(h)
    }
}

/// Residual `ĉ = y − α̂h` and its banded covariance.
pub fn banded_covariance(
    y: &[Complex64],
    h: &[Complex64],
    lag: usize,
    loading: f64,
) -> Result<BandedCovariance, DetectorError> {
    let alpha = amplitude_estimate(h, y)?;
    let residual = y.iter().zip(h).map(|(yi, hi)| yi - alpha * hi).collect();
    BandedCovariance::from_residual(residual, lag, loading)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaldOutcome {
    pub statistic: f64,
    /// The denominator fell below `1e-12·‖h‖²·‖ĉ‖²/N` and was floored.
    pub floored: bool,
}

/// `Λ = 2|h^H y|² / (h^H Γ̂ h)`.
pub fn wald_statistic(
    h: &[Complex64],
    y: &[Complex64],
    gamma: &BandedCovariance,
) -> Result<WaldOutcome, DetectorError> {
    if h.len() != y.len() || h.len() != gamma.len() {
        return Err(DetectorError::Length {
            h: h.len(),
            y: y.len(),
        });
    }
    let num = 2.0 * inner(h, y).norm_sqr();
    let den = gamma.quadratic_form(h);
    let floor = 1e-12 * norm_sqr(h) * norm_sqr(gamma.residual()) / h.len() as f64;
    let (den, floored) = if den < floor || den <= 0.0 { (floor, true) } else { (den, false) };
    let statistic = if num == 0.0 {
        0.0
    } else if den == 0.0 {
        f64::INFINITY
    } else {
        num / den
    };
    Ok(WaldOutcome { statistic, floored })
}

/// Oracle-covariance statistic `2|h^H y|² / q` with `q = h^H Γ h` from the
/// true disturbance covariance. Under `H₀` it is `χ²₂` when the disturbance
/// is Gaussian.
pub fn wald_statistic_known(h: &[Complex64], y: &[Complex64], quad: f64) -> Result<f64, DetectorError> {
    if h.len() != y.len() {
        return Err(DetectorError::Length {
            h: h.len(),
            y: y.len(),
        });
    }
    if !(quad.is_finite() && quad > 0.0) {
        return Err(DetectorError::DegenerateChannel);
    }
    Ok(2.0 * inner(h, y).norm_sqr() / quad)
}

/// `κ = 2|α|²‖h‖⁴ / (h^H Γ h)`; the noncentrality of the statistic.
pub fn noncentrality(alpha: Complex64, h: &[Complex64], quad: f64) -> f64 {
    let e = norm_sqr(h);
    2.0 * alpha.norm_sqr() * e * e / quad
}

/// `Q₁(√κ, √η)`.
pub fn asymptotic_pd(kappa: f64, eta: f64) -> f64 {
    marcum_q1(kappa.max(0.0).sqrt(), eta.max(0.0).sqrt())
}

/// `ln k!`: exact sum below 16, Stirling series above.
fn ln_factorial(k: u64) -> f64 {
    if k < 16 {
        return (2..=k).map(|i| (i as f64).ln()).sum();
    }
    let n = k as f64;
    let inv = 1.0 / n;
    let inv2 = inv * inv;
    n * n.ln() - n + 0.5 * (2.0 * std::f64::consts::PI * n).ln()
        + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 / 1680.0)))
}

fn poisson_pmf(k: u64, mean: f64) -> f64 {
    if mean == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    (-mean + k as f64 * mean.ln() - ln_factorial(k)).exp()
}

/// `P(Pois(mean) ≤ k)` by summing away from `k` until terms vanish.
fn poisson_cdf(k: u64, mean: f64) -> f64 {
    if k as f64 >= mean {
        // upper tail is the smaller side
        let mut p = poisson_pmf(k + 1, mean);
        let mut tail = 0.0;
        let mut j = k + 1;
        while p > 0.0 && (p > 1e-20 * tail || (j as f64) < mean) {
            tail += p;
            j += 1;
            p *= mean / j as f64;
        }
        (1.0 - tail).max(0.0)
    } else {
        let mut p = poisson_pmf(k, mean);
        let mut sum = 0.0;
        let mut j = k;
        loop {
            sum += p;
            if j == 0 || p <= 1e-20 * sum {
                break;
            }
            p *= j as f64 / mean;
            j -= 1;
        }
        sum.min(1.0)
    }
}

/// First-order Marcum Q-function.
///
/// Evaluates the Poisson mixture
/// `Q₁(a, b) = Σ_k Pois(k; a²/2)·P(Pois(b²/2) ≤ k)` over the window that
/// carries the mass of `Pois(a²/2)`.
pub fn marcum_q1(a: f64, b: f64) -> f64 {
    let (a, b) = (a.abs(), b.abs());
    if b == 0.0 {
        return 1.0;
    }
    if a == 0.0 {
        return (-0.5 * b * b).exp();
    }
    if a - b > 40.0 {
        return 1.0;
    }
    if b - a > 40.0 {
        return 0.0;
    }
    let x = 0.5 * a * a;
    let y = 0.5 * b * b;
    let spread = 15.0 * x.sqrt() + 30.0;
    let k_lo = (x - spread).floor().max(0.0) as u64;
    let k_hi = (x + spread).ceil() as u64;

    let mut px = poisson_pmf(k_lo, x);
    let mut py = poisson_pmf(k_lo, y);
    let mut cdf = poisson_cdf(k_lo, y);
    let mut q = px * cdf;
    for k in k_lo + 1..=k_hi {
        px *= x / k as f64;
        py *= y / k as f64;
        cdf = (cdf + py).min(1.0);
        q += px * cdf;
    }
    q.clamp(0.0, 1.0)
}

/// Per-bin inputs to [`detect_frame`].
#[derive(Debug, Clone)]
pub struct BinObservation<'a> {
    pub channel: &'a [Complex64],
    pub received: &'a [Complex64],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionFrame {
    pub statistics: Vec<f64>,
    pub amplitudes: Vec<Complex64>,
    pub decisions: Vec<bool>,
    /// `Q₁(√κ̂, √η)` from the estimated amplitude and covariance.
    pub pd_estimates: Vec<f64>,
    pub floored: Vec<bool>,
    /// Bins whose effective channel vanished; they are never detected.
    pub blind: Vec<bool>,
    pub count: usize,
    pub threshold: f64,
}

impl DetectionFrame {
    pub fn len(&self) -> usize {
        self.statistics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.statistics.is_empty()
    }
}

pub fn detect_frame(bins: &[BinObservation<'_>], config: &DetectorConfig) -> Result<DetectionFrame, DetectorError> {
    config.validate()?;
    let eta = config.threshold()?;
    let m = bins.len();
    let mut frame = DetectionFrame {
        statistics: Vec::with_capacity(m),
        amplitudes: Vec::with_capacity(m),
        decisions: Vec::with_capacity(m),
        pd_estimates: Vec::with_capacity(m),
        floored: Vec::with_capacity(m),
        blind: Vec::with_capacity(m),
        count: 0,
        threshold: eta,
    };
    for bin in bins {
        let (h, y) = (bin.channel, bin.received);
        if h.len() != y.len() {
            return Err(DetectorError::FrameSize {
                channels: h.len(),
                observations: y.len(),
            });
        }
        let (alpha, outcome, blind) = match amplitude_estimate(h, y) {
            Ok(alpha) => {
                let gamma = banded_covariance(y, h, config.lag_for(h.len()), config.loading)?;
                (alpha, wald_statistic(h, y, &gamma)?, false)
            }
            Err(DetectorError::DegenerateChannel) => (
                Complex64::new(0.0, 0.0),
                WaldOutcome {
                    statistic: 0.0,
                    floored: false,
                },
                true,
            ),
            Err(e) => return Err(e),
        };
        let decision = outcome.statistic > eta;
        frame.count += usize::from(decision);
        frame.statistics.push(outcome.statistic);
        frame.amplitudes.push(alpha);
        frame.decisions.push(decision);
        // κ̂ = 2|α̂|²‖h‖⁴/(h^H Γ̂ h) coincides with Λ
        frame.pd_estimates.push(if blind { 0.0 } else { asymptotic_pd(outcome.statistic, eta) });
        frame.floored.push(outcome.floored);
        frame.blind.push(blind);
    }
    Ok(frame)
}
