//! Transmit design: covariance (P2), radar reference waveform (P1) and the
//! sensing/communication trade-off (P0).

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

type CMat = DMatrix<Complex64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimizerError {
    #[error("no steering vectors selected")]
    EmptySelection,
    #[error("steering vectors must have length {expected}, got {actual}")]
    SteeringLength { expected: usize, actual: usize },
    #[error("transmit power must be positive and finite, got {0}")]
    Power(f64),
    #[error("covariance is not Hermitian PSD: {0}")]
    NotCovariance(String),
    #[error("dimension mismatch: {0}")]
    Dimensions(String),
    #[error("need K <= N_t <= L, got K = {k}, N_t = {n_t}, L = {l}")]
    Ordering { k: usize, n_t: usize, l: usize },
    #[error("trade-off weight must lie in [0, 1], got {0}")]
    Rho(f64),
    #[error("Cholesky factorization failed after regularization")]
    Cholesky,
    #[error("secular function evaluated within 1e-12 of a pole (lambda = {lambda})")]
    Pole { lambda: f64 },
    #[error("failed to bracket the multiplier after {0} expansions")]
    Bracket(usize),
}

/// Transmit covariance `R` with total power `tr(R)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmitCovariance {
    r: CMat,
    power: f64,
}

impl TransmitCovariance {
    /// Checks Hermitian symmetry to 1e-12 (relative) and PSD to 1e-10.
    pub fn new(r: CMat) -> Result<Self, OptimizerError> {
        if !r.is_square() || r.nrows() == 0 {
            return Err(OptimizerError::Dimensions(format!(
                "covariance must be square and non-empty, got {}x{}",
                r.nrows(),
                r.ncols()
            )));
        }
        let scale = r.norm().max(1.0);
        let asym = (&r - r.adjoint()).norm();
        if asym > 1e-12 * scale {
            return Err(OptimizerError::NotCovariance(format!("asymmetry {asym:e}")));
        }
        let herm = (&r + r.adjoint()) * Complex64::new(0.5, 0.0);
        let min_eig = herm.clone().symmetric_eigenvalues().min();
        if min_eig < -1e-10 * scale {
            return Err(OptimizerError::NotCovariance(format!("min eigenvalue {min_eig:e}")));
        }
        let power = herm.trace().re;
        Ok(Self { r: herm, power })
    }

    /// `(P_T/N_t)·I`.
    pub fn isotropic(n_t: usize, power: f64) -> Result<Self, OptimizerError> {
        check_power(power)?;
        Ok(Self {
            r: CMat::identity(n_t, n_t) * Complex64::new(power / n_t as f64, 0.0),
            power,
        })
    }

    pub fn matrix(&self) -> &CMat {
        &self.r
    }

    pub fn power(&self) -> f64 {
        self.power
    }

    pub fn n_t(&self) -> usize {
        self.r.nrows()
    }

    /// `v^H R v` for a transmit beam vector `v`.
    pub fn gain(&self, v: &[Complex64]) -> f64 {
        let v = DVector::from_column_slice(v);
        (v.adjoint() * &self.r * &v)[(0, 0)].re
    }
}

fn check_power(p: f64) -> Result<(), OptimizerError> {
    if p.is_finite() && p > 0.0 {
        Ok(())
    } else {
        Err(OptimizerError::Power(p))
    }
}

/// Transmit block `X` (`N_t × L`).
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    x: CMat,
}

impl Waveform {
    pub fn new(x: CMat) -> Self {
        Self { x }
    }

    pub fn matrix(&self) -> &CMat {
        &self.x
    }

    pub fn into_matrix(self) -> CMat {
        self.x
    }

    pub fn code_length(&self) -> usize {
        self.x.ncols()
    }

    pub fn n_t(&self) -> usize {
        self.x.nrows()
    }

    /// `‖X‖_F²`.
    pub fn energy(&self) -> f64 {
        self.x.norm_squared()
    }

    /// Sample covariance `X X^H / L`.
    pub fn covariance(&self) -> CMat {
        &self.x * self.x.adjoint() / Complex64::new(self.x.ncols() as f64, 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TradeoffConfig {
    pub rho: f64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_expansions")]
    pub max_expansions: usize,
    #[serde(default = "default_iterations")]
    pub max_iterations: usize,
}

fn default_tolerance() -> f64 {
    1e-10
}
fn default_expansions() -> usize {
    200
}
fn default_iterations() -> usize {
    200
}

impl TradeoffConfig {
    pub fn new(rho: f64) -> Result<Self, OptimizerError> {
        let c = Self {
            rho,
            tolerance: default_tolerance(),
            max_expansions: default_expansions(),
            max_iterations: default_iterations(),
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), OptimizerError> {
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(OptimizerError::Rho(self.rho));
        }
        Ok(())
    }
}

/// Unit vector spanning the dominant eigenspace, fixed up to the tie-break:
/// the first basis vector with a nonzero projection onto the eigenspace is
/// projected and normalized, then rotated so that its first nonzero
/// component is real and positive.
fn dominant_direction(b: &CMat) -> (DVector<Complex64>, f64) {
    let n = b.nrows();
    let eig = b.clone().symmetric_eigen();
    let lmax = eig.eigenvalues.max();
    let tol = 1e-9 * lmax.abs().max(f64::MIN_POSITIVE);
    let cols: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] >= lmax - tol).collect();
    let basis = eig.eigenvectors.select_columns(&cols);
    let proj = &basis * basis.adjoint();
    for i in 0..n {
        let p = proj.column(i).into_owned();
        let norm = p.norm();
        if norm > 1e-8 {
            let lead = p[i];
            let phase = lead.conj() / lead.norm();
            return (p * (phase / norm), lmax);
        }
    }
    unreachable!("a non-empty eigenspace has a nonzero projection of some basis vector")
}

/// Rank-one covariance maximizing `tr(R·B̂)` with `B̂ = Σ v v^H`.
///
/// Returns `R_d = P_T·u·u^H` and the attained objective `P_T·λ_max(B̂)`.
pub fn design_covariance(
    vectors: &[Vec<Complex64>],
    power: f64,
) -> Result<(TransmitCovariance, f64), OptimizerError> {
    check_power(power)?;
    let first = vectors.first().ok_or(OptimizerError::EmptySelection)?;
    let n = first.len();
    let mut b = CMat::zeros(n, n);
    for v in vectors {
        if v.len() != n {
            return Err(OptimizerError::SteeringLength {
                expected: n,
                actual: v.len(),
            });
        }
        let v = DVector::from_column_slice(v);
        b += &v * v.adjoint();
    }
    let (u, lmax) = dominant_direction(&b);
    let r = &u * u.adjoint() * Complex64::new(power, 0.0);
    Ok((TransmitCovariance { r, power }, power * lmax))
}

/// Shape check shared by P1 and P0.
fn check_scene(h: &CMat, s: &CMat, n_t: usize) -> Result<(usize, usize), OptimizerError> {
    let (k, l) = (s.nrows(), s.ncols());
    if h.nrows() != k || h.ncols() != n_t {
        return Err(OptimizerError::Dimensions(format!(
            "channel is {}x{}, expected {k}x{n_t}",
            h.nrows(),
            h.ncols()
        )));
    }
    if !(k <= n_t && n_t <= l) {
        return Err(OptimizerError::Ordering { k, n_t, l });
    }
    Ok((k, l))
}

/// Relative regularization added to a rank-deficient `R_d` before Cholesky.
pub const REGULARIZATION: f64 = 1e-6;

/// Radar reference `X₀` with `X₀X₀^H/L = R_d` closest to the symbols `S`.
///
/// With `R_d = F F^H` and the thin SVD `F^H H^H S = U Σ V^H`, the solution is
/// `X₀ = √L·F·U·V^H`. A rank-deficient `R_d` is loaded with
/// `ε·(P_T/N_t)·I` first and `X₀` rescaled to energy `L·P_T`.
pub fn radar_reference(h: &CMat, s: &CMat, rd: &TransmitCovariance) -> Result<Waveform, OptimizerError> {
    let n_t = rd.n_t();
    let (_, l) = check_scene(h, s, n_t)?;
    let p_t = rd.power();
    check_power(p_t)?;
    let eigs = rd.matrix().clone().symmetric_eigenvalues();
    let deficient = eigs.min() <= 1e-10 * eigs.max().max(f64::MIN_POSITIVE);
    let target = if deficient {
        rd.matrix() + CMat::identity(n_t, n_t) * Complex64::new(REGULARIZATION * p_t / n_t as f64, 0.0)
    } else {
        rd.matrix().clone()
    };
    let f = target.cholesky().ok_or(OptimizerError::Cholesky)?.l();
    let m = f.adjoint() * h.adjoint() * s;
    let svd = m.svd(true, true);
    let u = svd.u.expect("left singular vectors requested");
    let v_t = svd.v_t.expect("right singular vectors requested");
    let mut x0 = &f * u * v_t * Complex64::new((l as f64).sqrt(), 0.0);
    if deficient {
        let scale = (l as f64 * p_t / x0.norm_squared()).sqrt();
        x0 *= Complex64::new(scale, 0.0);
    }
    Ok(Waveform { x: x0 })
}

/// `P(λ) = Σ_{i,j} |[V^H G]_{ij}|² / (λ + λ_i)²`.
pub fn secular_value(lambda: f64, eigenvalues: &[f64], vhg: &CMat) -> Result<f64, OptimizerError> {
    let mut total = 0.0;
    for (i, &li) in eigenvalues.iter().enumerate() {
        let d = lambda + li;
        if d < 1e-12 {
            return Err(OptimizerError::Pole { lambda });
        }
        let row: f64 = vhg.row(i).iter().map(|z| z.norm_sqr()).sum();
        total += row / (d * d);
    }
    Ok(total)
}

/// `ρ‖HX − S‖_F² + (1 − ρ)‖X − X₀‖_F²`.
pub fn tradeoff_objective(h: &CMat, s: &CMat, x0: &CMat, x: &CMat, rho: f64) -> f64 {
    rho * (h * x - s).norm_squared() + (1.0 - rho) * (x - x0).norm_squared()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TradeoffSolution {
    pub waveform: Waveform,
    pub lambda: f64,
    /// Minimal-eigenvector completion was needed to reach the power.
    pub hard_case: bool,
    pub iterations: usize,
}

/// Minimizes `ρ‖HX − S‖² + (1 − ρ)‖X − X₀‖²` over `‖X‖_F² = L·P_T`.
///
/// The optimum is `X = (Q + λI)^{-1}G` with `Q = ρH^H H + (1 − ρ)I`,
/// `G = ρH^H S + (1 − ρ)X₀` and the multiplier `λ ≥ −λ_min(Q)` found by
/// golden-section search on the secular equation `P(λ) = L·P_T`.
pub fn tradeoff_waveform(
    h: &CMat,
    s: &CMat,
    x0: &Waveform,
    power: f64,
    config: &TradeoffConfig,
) -> Result<TradeoffSolution, OptimizerError> {
    config.validate()?;
    check_power(power)?;
    let n_t = x0.n_t();
    let (_, l) = check_scene(h, s, n_t)?;
    if x0.code_length() != l {
        return Err(OptimizerError::Dimensions(format!(
            "reference has {} columns, symbols have {l}",
            x0.code_length()
        )));
    }
    let rho = config.rho;
    let c = |v: f64| Complex64::new(v, 0.0);
    let hh = h.adjoint();
    let q = &hh * h * c(rho) + CMat::identity(n_t, n_t) * c(1.0 - rho);
    let g = &hh * s * c(rho) + x0.matrix() * c(1.0 - rho);
    let q = (&q + q.adjoint()) * c(0.5);
    let eig = q.symmetric_eigen();
    let lam: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let v = eig.eigenvectors;
    let vhg = v.adjoint() * &g;
    let target = l as f64 * power;

    let lmin = lam.iter().copied().fold(f64::INFINITY, f64::min);
    let lmax = lam.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let gap_tol = 1e-10 * lmax.abs().max(1.0);
    let min_space: Vec<usize> = (0..n_t).filter(|&i| lam[i] <= lmin + gap_tol).collect();
    let row_energy = |i: usize| -> f64 { vhg.row(i).iter().map(|z| z.norm_sqr()).sum() };
    let g_energy: f64 = (0..n_t).map(row_energy).sum();
    let min_energy: f64 = min_space.iter().map(|&i| row_energy(i)).sum();

    // value with the minimal eigenspace excluded, used at the pole
    let p_off = |lambda: f64| -> f64 {
        (0..n_t)
            .filter(|i| !min_space.contains(i))
            .map(|i| row_energy(i) / (lambda + lam[i]).powi(2))
            .sum()
    };

    let lo = -lmin + 1e-9 * (1.0 + lmin.abs());
    let orthogonal = min_energy <= 1e-24 * g_energy.max(f64::MIN_POSITIVE) || g_energy == 0.0;
    if orthogonal && p_off(-lmin) <= target {
        // hard case: λ sits at −λ_min and the minimal eigenvector fills the deficit
        let lambda = -lmin;
        let mut x = CMat::zeros(n_t, l);
        for i in 0..n_t {
            if min_space.contains(&i) {
                continue;
            }
            let w = c(1.0 / (lambda + lam[i]));
            x += v.column(i) * (vhg.row(i) * w);
        }
        let deficit = (target - x.norm_squared()).max(0.0);
        let vmin = v.column(min_space[0]);
        for r in 0..n_t {
            x[(r, 0)] += vmin[r] * deficit.sqrt();
        }
        return Ok(TradeoffSolution {
            waveform: Waveform { x },
            lambda,
            hard_case: true,
            iterations: 0,
        });
    }

    let p = |lambda: f64| secular_value(lambda, &lam, &vhg);
    // lower end: P(a) ≥ target; shrink towards the pole if the default start misses it
    let mut a = lo;
    let mut delta = 1e-9 * (1.0 + lmin.abs());
    let mut guard = 0;
    while p(a)? < target {
        delta *= 0.1;
        a = -lmin + delta;
        guard += 1;
        if guard > 280 || a <= -lmin {
            return Err(OptimizerError::Bracket(guard));
        }
    }
    let mut width = 1.0;
    let mut b = a + width;
    let mut expansions = 0;
    while p(b)? >= target {
        expansions += 1;
        if expansions > config.max_expansions {
            return Err(OptimizerError::Bracket(expansions));
        }
        width *= 2.0;
        b = a + width;
    }

    // golden-section on |P(λ) − target|, unimodal since P is decreasing
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let f = |lambda: f64| -> Result<f64, OptimizerError> { Ok((p(lambda)? - target).abs()) };
    let (mut lo_b, mut hi_b) = (a, b);
    let mut x1 = hi_b - inv_phi * (hi_b - lo_b);
    let mut x2 = lo_b + inv_phi * (hi_b - lo_b);
    let (mut f1, mut f2) = (f(x1)?, f(x2)?);
    let mut iterations = 0;
    while iterations < config.max_iterations {
        let mid = 0.5 * (lo_b + hi_b);
        if hi_b - lo_b <= config.tolerance * (1.0 + mid.abs()) {
            break;
        }
        iterations += 1;
        if f1 <= f2 {
            hi_b = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi_b - inv_phi * (hi_b - lo_b);
            f1 = f(x1)?;
        } else {
            lo_b = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo_b + inv_phi * (hi_b - lo_b);
            f2 = f(x2)?;
        }
    }
    let mut lambda = 0.5 * (lo_b + hi_b);
    // bisection polish where P is steep near the pole
    if (p(lambda)? - target).abs() > 1e-12 * target {
        let (mut a2, mut b2) = (a, b);
        for _ in 0..200 {
            let m = 0.5 * (a2 + b2);
            if m <= a2 || m >= b2 {
                break;
            }
            if p(m)? >= target {
                a2 = m;
            } else {
                b2 = m;
            }
            lambda = m;
            if (p(m)? - target).abs() <= 1e-13 * target {
                break;
            }
        }
    }
    let mut x = CMat::zeros(n_t, l);
    for i in 0..n_t {
        let w = c(1.0 / (lambda + lam[i]));
        x += v.column(i) * (vhg.row(i) * w);
    }
    Ok(TradeoffSolution {
        waveform: Waveform { x },
        lambda,
        hard_case: false,
        iterations,
    })
}

/// `√(P_T/N_t)` times the first `N_t` rows of the `L`-point DFT matrix.
pub fn orthogonal_reference(n_t: usize, l: usize, power: f64) -> Result<Waveform, OptimizerError> {
    check_power(power)?;
    if l < n_t || n_t == 0 {
        return Err(OptimizerError::Ordering { k: 0, n_t, l });
    }
    let amp = (power / n_t as f64).sqrt();
    let x = CMat::from_fn(n_t, l, |k, j| {
        let phase = -2.0 * std::f64::consts::PI * ((k * j) % l) as f64 / l as f64;
        Complex64::from_polar(amp, phase)
    });
    Ok(Waveform { x })
}
