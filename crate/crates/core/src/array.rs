//! Uniform planar array geometry and the spatial-frequency grid.
//!
//! Steering vectors use half-wavelength spacing folded into the spatial
//! frequencies: element `(p, q)` of an `n_x × n_y` panel responds with
//! `exp(j2π(p·ν_x + q·ν_y))`, `p, q` counted from zero. Vectors are always
//! laid out as `a_x ⊗ a_y`, so element `(p, q)` sits at index `p·n_y + q`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ArrayError {
    #[error("array panel {side} has a zero dimension ({n_x}x{n_y})")]
    EmptyPanel {
        side: &'static str,
        n_x: usize,
        n_y: usize,
    },
    #[error("grid dimensions must be at least 1 (got {l_x}x{l_y})")]
    EmptyGrid { l_x: usize, l_y: usize },
    #[error("dimension mismatch: {what} expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("bin index {index} outside grid of {len} bins")]
    BinOutOfRange { index: usize, len: usize },
}

/// Which panel of the colocated array a steering vector belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Transmit,
    Receive,
}

/// Transmit and receive UPA shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpaConfig {
    pub tx_x: usize,
    pub tx_y: usize,
    pub rx_x: usize,
    pub rx_y: usize,
}

impl UpaConfig {
    pub fn new(tx_x: usize, tx_y: usize, rx_x: usize, rx_y: usize) -> Result<Self, ArrayError> {
        let cfg = Self {
            tx_x,
            tx_y,
            rx_x,
            rx_y,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Square `side × side` panels on both ends.
    pub fn square(tx_side: usize, rx_side: usize) -> Result<Self, ArrayError> {
        Self::new(tx_side, tx_side, rx_side, rx_side)
    }

    pub fn validate(&self) -> Result<(), ArrayError> {
        if self.tx_x == 0 || self.tx_y == 0 {
            return Err(ArrayError::EmptyPanel {
                side: "tx",
                n_x: self.tx_x,
                n_y: self.tx_y,
            });
        }
        if self.rx_x == 0 || self.rx_y == 0 {
            return Err(ArrayError::EmptyPanel {
                side: "rx",
                n_x: self.rx_x,
                n_y: self.rx_y,
            });
        }
        Ok(())
    }

    pub fn n_t(&self) -> usize {
        self.tx_x * self.tx_y
    }

    pub fn n_r(&self) -> usize {
        self.rx_x * self.rx_y
    }

    /// Virtual channel count `N = N_t·N_r`.
    pub fn n_virtual(&self) -> usize {
        self.n_t() * self.n_r()
    }

    pub fn panel(&self, side: Side) -> (usize, usize) {
        match side {
            Side::Transmit => (self.tx_x, self.tx_y),
            Side::Receive => (self.rx_x, self.rx_y),
        }
    }

    pub fn steering(&self, side: Side, bin: &SpatialBin) -> SteeringVector {
        let (n_x, n_y) = self.panel(side);
        steering(n_x, n_y, bin.nu_x, bin.nu_y)
    }
}

/// One cell of the angular grid, addressed by spatial frequencies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialBin {
    pub index: usize,
    pub nu_x: f64,
    pub nu_y: f64,
}

impl SpatialBin {
    /// True when the bin has a physical direction, i.e. `ν_x² + ν_y² ≤ 1/4`.
    pub fn is_physical(&self) -> bool {
        self.nu_x * self.nu_x + self.nu_y * self.nu_y <= 0.25 + 1e-12
    }

    /// Elevation/azimuth `(θ, φ)` with `θ ∈ [0, π/2]`, if the bin is physical.
    pub fn angles(&self) -> Option<(f64, f64)> {
        if !self.is_physical() {
            return None;
        }
        let s = (2.0 * self.nu_x.hypot(self.nu_y)).min(1.0);
        let theta = s.asin();
        let phi = if s == 0.0 {
            0.0
        } else {
            self.nu_y.atan2(self.nu_x)
        };
        Some((theta, phi))
    }
}

/// `L_x × L_y` grid over `[-0.5, 0.5]²`, row-major: `m = i·L_y + j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialGrid {
    l_x: usize,
    l_y: usize,
    bins: Vec<SpatialBin>,
}

/// Axis points with both endpoints included; a single point sits at 0.
fn axis_value(i: usize, len: usize) -> f64 {
    if len == 1 {
        0.0
    } else {
        // (2i - (L-1)) / (2(L-1)) keeps e.g. -0.4 correctly rounded for L = 11
        (2.0 * i as f64 - (len - 1) as f64) / (2.0 * (len - 1) as f64)
    }
}

pub fn make_grid(l_x: usize, l_y: usize) -> Result<SpatialGrid, ArrayError> {
    if l_x == 0 || l_y == 0 {
        return Err(ArrayError::EmptyGrid { l_x, l_y });
    }
    let mut bins = Vec::with_capacity(l_x * l_y);
    for i in 0..l_x {
        for j in 0..l_y {
            bins.push(SpatialBin {
                index: i * l_y + j,
                nu_x: axis_value(i, l_x),
                nu_y: axis_value(j, l_y),
            });
        }
    }
    Ok(SpatialGrid { l_x, l_y, bins })
}

impl SpatialGrid {
    pub fn dims(&self) -> (usize, usize) {
        (self.l_x, self.l_y)
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn bins(&self) -> &[SpatialBin] {
        &self.bins
    }

    pub fn bin(&self, index: usize) -> Result<&SpatialBin, ArrayError> {
        self.bins.get(index).ok_or(ArrayError::BinOutOfRange {
            index,
            len: self.bins.len(),
        })
    }

    pub fn coords(&self, index: usize) -> (usize, usize) {
        (index / self.l_y, index % self.l_y)
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.l_y + j
    }

    /// Bin whose centre lies within `tol` of `(nu_x, nu_y)` on both axes.
    pub fn locate(&self, nu_x: f64, nu_y: f64, tol: f64) -> Option<usize> {
        let nearest = |v: f64, len: usize| -> Option<usize> {
            (0..len)
                .map(|i| (i, (axis_value(i, len) - v).abs()))
                .filter(|&(_, d)| d <= tol)
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(i, _)| i)
        };
        let i = nearest(nu_x, self.l_x)?;
        let j = nearest(nu_y, self.l_y)?;
        Some(self.index(i, j))
    }
}

/// Unit-modulus array response.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringVector(Vec<Complex64>);

impl SteeringVector {
    pub fn as_slice(&self) -> &[Complex64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<Complex64> {
        self.0
    }

    /// Element-wise conjugate, the beam-forming weight that points the
    /// transmit model `a_tᵀ x` at this direction.
    pub fn conj(&self) -> Vec<Complex64> {
        self.0.iter().map(|z| z.conj()).collect()
    }
}

fn axis_response(n: usize, nu: f64) -> Vec<Complex64> {
    (0..n)
        .map(|p| Complex64::from_polar(1.0, 2.0 * PI * p as f64 * nu))
        .collect()
}

pub fn kron(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for x in a {
        for y in b {
            out.push(x * y);
        }
    }
    out
}

/// Steering vector of an `n_x × n_y` panel toward `(ν_x, ν_y)`.
pub fn steering(n_x: usize, n_y: usize, nu_x: f64, nu_y: f64) -> SteeringVector {
    SteeringVector(kron(&axis_response(n_x, nu_x), &axis_response(n_y, nu_y)))
}

/// `h = a_r ⊗ (a_tᵀ R)`; entry `r·N_t + t` is `a_r[r]·(a_tᵀR)[t]`.
pub fn effective_channel(
    a_t: &[Complex64],
    a_r: &[Complex64],
    r: &DMatrix<Complex64>,
) -> Result<Vec<Complex64>, ArrayError> {
    let n_t = a_t.len();
    if r.nrows() != n_t || r.ncols() != n_t {
        return Err(ArrayError::DimensionMismatch {
            what: "transmit covariance order",
            expected: n_t,
            actual: r.nrows().max(r.ncols()),
        });
    }
    let row = transmit_row(a_t, r);
    Ok(kron(a_r, &row))
}

/// The `1 × N_t` row `a_tᵀ R`.
pub fn transmit_row(a_t: &[Complex64], r: &DMatrix<Complex64>) -> Vec<Complex64> {
    let n_t = a_t.len();
    (0..n_t)
        .map(|col| (0..n_t).map(|k| a_t[k] * r[(k, col)]).sum())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn close(a: &[Complex64], b: &[Complex64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).norm() <= tol)
    }

    #[test]
    fn broadside_is_all_ones() {
        let a = steering(2, 2, 0.0, 0.0);
        assert!(close(a.as_slice(), &[c(1.0, 0.0); 4], 1e-15));
    }

    #[test]
    fn quarter_frequency_on_two_elements() {
        let a = steering(1, 2, 0.0, 0.25);
        assert!(close(a.as_slice(), &[c(1.0, 0.0), c(0.0, 1.0)], 1e-12));
        let a = steering(2, 1, 0.25, 0.0);
        assert!(close(a.as_slice(), &[c(1.0, 0.0), c(0.0, 1.0)], 1e-12));
    }

    #[test]
    fn half_frequency_alternates_along_x() {
        // a_x = [1, -1], a_y = [1, 1]: x is the slow index
        let a = steering(2, 2, 0.5, 0.0);
        let want = [c(1.0, 0.0), c(1.0, 0.0), c(-1.0, 0.0), c(-1.0, 0.0)];
        assert!(close(a.as_slice(), &want, 1e-12));
        let a = steering(2, 2, 0.0, 0.5);
        let want = [c(1.0, 0.0), c(-1.0, 0.0), c(1.0, 0.0), c(-1.0, 0.0)];
        assert!(close(a.as_slice(), &want, 1e-12));
    }

    #[test]
    fn paper_grid_has_121_bins_at_tenth_steps() {
        let g = make_grid(11, 11).unwrap();
        assert_eq!(g.len(), 121);
        let xs: Vec<f64> = (0..11).map(|i| g.bin(g.index(i, 0)).unwrap().nu_x).collect();
        for (i, x) in xs.iter().enumerate() {
            assert!((x - (-0.5 + 0.1 * i as f64)).abs() < 1e-15);
        }
        assert_eq!(g.bin(0).unwrap().nu_x, -0.5);
        assert_eq!(g.bin(120).unwrap().nu_y, 0.5);
        assert_eq!(g.locate(-0.4, -0.4, 1e-9), Some(g.index(1, 1)));
        assert_eq!(g.locate(0.37, 0.0, 1e-6), None);
    }

    #[test]
    fn degenerate_grids() {
        let g = make_grid(1, 1).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!((g.bins()[0].nu_x, g.bins()[0].nu_y), (0.0, 0.0));
        let g = make_grid(3, 1).unwrap();
        let xs: Vec<f64> = g.bins().iter().map(|b| b.nu_x).collect();
        assert_eq!(xs, vec![-0.5, 0.0, 0.5]);
        assert!(make_grid(0, 4).is_err());
    }

    #[test]
    fn grid_index_round_trips() {
        let g = make_grid(7, 5).unwrap();
        for m in 0..g.len() {
            let (i, j) = g.coords(m);
            assert_eq!(g.index(i, j), m);
            assert_eq!(g.bins()[m].index, m);
        }
    }

    #[test]
    fn physical_bins_have_angles() {
        let g = make_grid(11, 11).unwrap();
        let b = g.bins()[g.locate(0.3, 0.1, 1e-9).unwrap()];
        let (theta, phi) = b.angles().unwrap();
        assert!((0.5 * theta.sin() * phi.cos() - 0.3).abs() < 1e-12);
        assert!((0.5 * theta.sin() * phi.sin() - 0.1).abs() < 1e-12);
        let corner = g.bins()[0];
        assert!(!corner.is_physical());
        assert!(corner.angles().is_none());
    }

    #[test]
    fn isotropic_covariance_channel() {
        let p_t = 1.0;
        let n_t = 4;
        let a_t = steering(2, 2, 0.0, 0.0);
        let a_r = steering(2, 1, 0.3, -0.1);
        let r = DMatrix::<Complex64>::identity(n_t, n_t) * c(p_t / n_t as f64, 0.0);
        let h = effective_channel(a_t.as_slice(), a_r.as_slice(), &r).unwrap();
        let want: Vec<Complex64> = kron(a_r.as_slice(), a_t.as_slice())
            .into_iter()
            .map(|z| z * (p_t / n_t as f64))
            .collect();
        assert!(close(&h, &want, 1e-15));
    }

    #[test]
    fn channel_matches_correlated_echo() {
        // a_r a_tᵀ X, correlated with X^H / L and vectorized row by row
        let a_t = steering(2, 1, 0.13, 0.0);
        let a_r = steering(1, 2, 0.0, -0.27);
        let l = 5;
        let x = DMatrix::<Complex64>::from_fn(2, l, |i, j| {
            c((i as f64 + 1.3 * j as f64).sin(), (0.7 * i as f64 - j as f64).cos())
        });
        let r = &x * x.adjoint() / c(l as f64, 0.0);
        let ar = DMatrix::from_column_slice(2, 1, a_r.as_slice());
        let at = DMatrix::from_column_slice(2, 1, a_t.as_slice());
        let echo = &ar * at.transpose() * &x;
        let corr = echo * x.adjoint() / c(l as f64, 0.0);
        let mut vec = Vec::new();
        for i in 0..corr.nrows() {
            for j in 0..corr.ncols() {
                vec.push(corr[(i, j)]);
            }
        }
        let h = effective_channel(a_t.as_slice(), a_r.as_slice(), &r).unwrap();
        assert!(close(&h, &vec, 1e-12));
    }

    #[test]
    fn focused_beam_channel_norm() {
        // R = P_T u u^H with u = conj(a_t)/|a_t| gives |h| = P_T |a_t| |a_r|
        let p_t = 2.0;
        let a_t = steering(3, 2, -0.4, 0.2);
        let a_r = steering(2, 2, -0.4, 0.2);
        let n_t = a_t.len() as f64;
        let u = DMatrix::from_column_slice(6, 1, &a_t.conj()) / c(n_t.sqrt(), 0.0);
        let r = &u * u.adjoint() * c(p_t, 0.0);
        let h = effective_channel(a_t.as_slice(), a_r.as_slice(), &r).unwrap();
        let norm = h.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        assert!((norm - p_t * n_t.sqrt() * 2.0).abs() < 1e-12);
    }

    #[test]
    fn channel_rejects_bad_dims() {
        let a = steering(2, 2, 0.0, 0.0);
        let r = DMatrix::<Complex64>::identity(3, 3);
        assert!(matches!(
            effective_channel(a.as_slice(), a.as_slice(), &r),
            Err(ArrayError::DimensionMismatch { .. })
        ));
    }

    proptest! {
        #[test]
        fn steering_entries_are_unit_phase(nx in 1usize..6, ny in 1usize..6,
                                           vx in -0.5f64..0.5, vy in -0.5f64..0.5) {
            let a = steering(nx, ny, vx, vy);
            let energy: f64 = a.as_slice().iter().map(|z| z.norm_sqr()).sum();
            prop_assert!((energy - (nx * ny) as f64).abs() < 1e-12);
            for p in 0..nx {
                for q in 0..ny {
                    let want = Complex64::from_polar(1.0, 2.0 * PI * (p as f64 * vx + q as f64 * vy));
                    let got = a.as_slice()[p * ny + q];
                    prop_assert!((got - want).norm() < 1e-12);
                    prop_assert!((got.norm() - 1.0).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn channel_is_linear_in_covariance(seed in 0u64..1000) {
            let f = |k: u64| ((seed * 31 + k) as f64 * 0.618).sin();
            let a_t = steering(2, 2, f(1) * 0.5, f(2) * 0.5);
            let a_r = steering(2, 1, f(3) * 0.5, f(4) * 0.5);
            let r1 = DMatrix::<Complex64>::from_fn(4, 4, |i, j| c(f(10 + (i * 4 + j) as u64), f(40 + (i * 4 + j) as u64)));
            let r2 = DMatrix::<Complex64>::from_fn(4, 4, |i, j| c(f(70 + (i * 4 + j) as u64), f(90 + (i * 4 + j) as u64)));
            let h1 = effective_channel(a_t.as_slice(), a_r.as_slice(), &r1).unwrap();
            let h2 = effective_channel(a_t.as_slice(), a_r.as_slice(), &r2).unwrap();
            let h12 = effective_channel(a_t.as_slice(), a_r.as_slice(), &(&r1 + &r2)).unwrap();
            for k in 0..h12.len() {
                prop_assert!((h12[k] - h1[k] - h2[k]).norm() < 1e-12);
            }
        }
    }
}
