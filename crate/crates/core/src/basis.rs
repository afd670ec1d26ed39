//! Cosine eigenbasis of `-∂x²` with homogeneous Neumann conditions on `(0, L)`.
//!
//! `φ_0 = √(1/L)` and `φ_k = √(2/L) cos(kπx/L)` for `k ≥ 1`. The basis is
//! orthonormal in `L²(0, L)`; every odd derivative is a sine series and so
//! vanishes at both endpoints, which is how truncated series satisfy the
//! no-flux conditions `∂x u = ∂x³ u = 0`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Highest derivative order supported by the basis routines.
pub const MAX_DERIV: usize = 3;

/// Coefficients of a function in the truncated basis `{φ_0, …, φ_n}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralCoeffs {
    coeffs: Vec<f64>,
    length: f64,
}

impl SpectralCoeffs {
    pub fn new(coeffs: Vec<f64>, length: f64) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::Input("coefficient vector must be non-empty".into()));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::Input(format!("domain length must be positive, got {length}")));
        }
        if let Some(k) = coeffs.iter().position(|c| !c.is_finite()) {
            return Err(Error::Input(format!("coefficient {k} is not finite")));
        }
        Ok(Self { coeffs, length })
    }

    /// All-zero coefficients for modes `0..=n`.
    pub fn zeros(n: usize, length: f64) -> Self {
        Self { coeffs: vec![0.0; n + 1], length }
    }

    /// The constant function `value`.
    pub fn constant(n: usize, length: f64, value: f64) -> Self {
        let mut c = Self::zeros(n, length);
        c.coeffs[0] = value * length.sqrt();
        c
    }

    /// Highest mode index.
    pub fn n(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.coeffs
    }

    /// Truncate or zero-pad to modes `0..=n`.
    pub fn resized(&self, n: usize) -> Self {
        let mut coeffs = vec![0.0; n + 1];
        let m = coeffs.len().min(self.coeffs.len());
        coeffs[..m].copy_from_slice(&self.coeffs[..m]);
        Self { coeffs, length: self.length }
    }

    /// Value of the `deriv`-th derivative of the represented function at `x`.
    pub fn eval(&self, x: f64, deriv: usize) -> Result<f64> {
        let mut acc = 0.0;
        for (k, c) in self.coeffs.iter().enumerate() {
            acc += c * eval_basis(k, x, self.length, deriv)?;
        }
        Ok(acc)
    }
}

/// Evaluate `∂x^deriv φ_k(x)` on `(0, L)`.
pub fn eval_basis(k: usize, x: f64, length: f64, deriv: usize) -> Result<f64> {
    if !(length.is_finite() && length > 0.0) {
        return Err(Error::Input(format!("domain length must be positive, got {length}")));
    }
    if !(0.0..=length).contains(&x) {
        return Err(Error::Input(format!("position {x} outside [0, {length}]")));
    }
    if deriv > MAX_DERIV {
        return Err(Error::Input(format!("derivative order {deriv} not supported")));
    }
    Ok(basis_value(k, x, length, deriv))
}

/// Unchecked kernel behind [`eval_basis`].
#[inline]
pub(crate) fn basis_value(k: usize, x: f64, length: f64, deriv: usize) -> f64 {
    if k == 0 {
        return if deriv == 0 { (1.0 / length).sqrt() } else { 0.0 };
    }
    let kappa = k as f64 * PI / length;
    let s = (2.0 / length).sqrt();
    let arg = kappa * x;
    match deriv {
        0 => s * arg.cos(),
        1 => -kappa * s * arg.sin(),
        2 => -kappa * kappa * s * arg.cos(),
        _ => kappa.powi(3) * s * arg.sin(),
    }
}

/// Wavenumber `kπ/L` of mode `k`.
#[inline]
pub fn wavenumber(k: usize, length: f64) -> f64 {
    k as f64 * PI / length
}

/// Composite quadrature rule on `[0, L]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    length: f64,
}

/// Composite midpoint rule with `m` uniform panels.
///
/// Midpoint sums of `cos(pπx/L)` vanish for `0 < p < 2m`, so products of two
/// basis functions (or their derivatives) up to mode `n` integrate exactly
/// whenever `2n < 2m`.
pub fn make_grid(m: usize, length: f64) -> Result<QuadratureGrid> {
    if m < 2 {
        return Err(Error::Config(format!("quadrature needs at least 2 nodes, got {m}")));
    }
    if !(length.is_finite() && length > 0.0) {
        return Err(Error::Input(format!("domain length must be positive, got {length}")));
    }
    let h = length / m as f64;
    let nodes = (0..m).map(|i| (i as f64 + 0.5) * h).collect();
    Ok(QuadratureGrid { nodes, weights: vec![h; m], length })
}

impl QuadratureGrid {
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn min_weight(&self) -> f64 {
        self.weights.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Quadrature of a sampled integrand.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }

    /// Reject grids that cannot resolve `n` modes (`M ≥ 4(n+1)`).
    pub fn check_resolves(&self, n: usize) -> Result<()> {
        if self.len() < 4 * (n + 1) {
            return Err(Error::Config(format!(
                "quadrature size {} too small for {} modes (need at least {})",
                self.len(),
                n,
                4 * (n + 1)
            )));
        }
        Ok(())
    }
}

fn check_length(a: f64, b: f64) -> Result<()> {
    if (a - b).abs() > 1e-12 * a.abs().max(b.abs()) {
        return Err(Error::Input(format!("domain length mismatch: {a} vs {b}")));
    }
    Ok(())
}

/// Values of `∂x^deriv u` at the grid nodes.
pub fn synthesize(c: &SpectralCoeffs, grid: &QuadratureGrid, deriv: usize) -> Result<Vec<f64>> {
    check_length(c.length, grid.length)?;
    if deriv > MAX_DERIV {
        return Err(Error::Input(format!("derivative order {deriv} not supported")));
    }
    Ok(grid
        .nodes
        .iter()
        .map(|&x| {
            c.coeffs
                .iter()
                .enumerate()
                .map(|(k, ck)| ck * basis_value(k, x, grid.length, deriv))
                .sum()
        })
        .collect())
}

/// Project grid values onto `φ_0, …, φ_n`.
pub fn analyze(values: &[f64], grid: &QuadratureGrid, n: usize) -> Result<SpectralCoeffs> {
    if values.len() != grid.len() {
        return Err(Error::Input(format!(
            "expected {} grid values, got {}",
            grid.len(),
            values.len()
        )));
    }
    let coeffs = (0..=n)
        .map(|k| {
            grid.nodes
                .iter()
                .zip(&grid.weights)
                .zip(values)
                .map(|((&x, w), v)| w * v * basis_value(k, x, grid.length, 0))
                .sum()
        })
        .collect();
    SpectralCoeffs::new(coeffs, grid.length)
}

/// Tabulated basis functions and derivatives on a fixed grid.
///
/// This is the transform object used by the hot loops; it performs the same
/// synthesis and projection as the free functions without re-evaluating
/// trigonometric functions.
#[derive(Debug, Clone)]
pub struct BasisTable {
    n: usize,
    grid: QuadratureGrid,
    // tables[d][k * M + m] = ∂x^d φ_k(x_m)
    tables: [Vec<f64>; MAX_DERIV + 1],
}

impl BasisTable {
    pub fn new(n: usize, grid: QuadratureGrid) -> Result<Self> {
        grid.check_resolves(n)?;
        let m = grid.len();
        let tables = std::array::from_fn(|d| {
            let mut t = vec![0.0; (n + 1) * m];
            for k in 0..=n {
                for (i, &x) in grid.nodes.iter().enumerate() {
                    t[k * m + i] = basis_value(k, x, grid.length, d);
                }
            }
            t
        });
        Ok(Self { n, grid, tables })
    }

    /// Table on the default grid of `8(n+1)` midpoint panels.
    pub fn with_default_grid(n: usize, length: f64) -> Result<Self> {
        Self::new(n, make_grid(default_grid_size(n), length)?)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn grid(&self) -> &QuadratureGrid {
        &self.grid
    }

    pub fn length(&self) -> f64 {
        self.grid.length
    }

    fn row(&self, deriv: usize, k: usize) -> &[f64] {
        let m = self.grid.len();
        &self.tables[deriv][k * m..(k + 1) * m]
    }

    /// `out[m] = Σ_k coeffs[k] ∂x^deriv φ_k(x_m)`.
    pub fn synthesize_into(&self, coeffs: &[f64], deriv: usize, out: &mut [f64]) {
        debug_assert_eq!(coeffs.len(), self.n + 1);
        debug_assert_eq!(out.len(), self.grid.len());
        out.fill(0.0);
        for (k, &c) in coeffs.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            for (o, b) in out.iter_mut().zip(self.row(deriv, k)) {
                *o += c * b;
            }
        }
    }

    pub fn synthesize(&self, coeffs: &[f64], deriv: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.len()];
        self.synthesize_into(coeffs, deriv, &mut out);
        out
    }

    /// `out[k] = Σ_m w_m values[m] ∂x^deriv φ_k(x_m)`.
    pub fn project_into(&self, values: &[f64], deriv: usize, out: &mut [f64]) {
        debug_assert_eq!(values.len(), self.grid.len());
        for (k, o) in out.iter_mut().enumerate().take(self.n + 1) {
            *o = self
                .row(deriv, k)
                .iter()
                .zip(values)
                .zip(&self.grid.weights)
                .map(|((b, v), w)| w * v * b)
                .sum();
        }
    }

    pub fn project(&self, values: &[f64], deriv: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n + 1];
        self.project_into(values, deriv, &mut out);
        out
    }
}

/// Default quadrature size `8(n+1)`.
pub fn default_grid_size(n: usize) -> usize {
    8 * (n + 1)
}
