//! Galerkin vector field of the regularized two-layer system.
//!
//! Testing the regularized equations against `φ_j` and integrating by parts
//! once gives, for `j ≥ 1`,
//!
//! ```text
//! dF_j/dt = ∫ a_ε(f) ∂x³(A f + B g) ∂xφ_j dx
//! dG_j/dt = ∫ a_ε(g) ∂x³(f + g)     ∂xφ_j dx
//! ```
//!
//! and `dF_0/dt = dG_0/dt = 0`. The integrals are evaluated pseudo-spectrally:
//! fluxes are formed pointwise on the quadrature grid and projected onto
//! `∂xφ_j`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::basis::{wavenumber, BasisTable, SpectralCoeffs};
use crate::error::{Error, Result};
use crate::regularization::{a_eps, RegEps};

/// Physical constants of the two-layer model. Requires `A > B > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPhys")]
pub struct PhysParams {
    #[serde(rename = "A")]
    a: f64,
    #[serde(rename = "B")]
    b: f64,
    #[serde(rename = "L")]
    length: f64,
}

#[derive(Deserialize)]
struct RawPhys {
    #[serde(rename = "A")]
    a: f64,
    #[serde(rename = "B")]
    b: f64,
    #[serde(rename = "L")]
    length: f64,
}

impl TryFrom<RawPhys> for PhysParams {
    type Error = Error;

    fn try_from(r: RawPhys) -> Result<Self> {
        Self::new(r.a, r.b, r.length)
    }
}

impl PhysParams {
    pub fn new(a: f64, b: f64, length: f64) -> Result<Self> {
        if !(b > 0.0 && a > b && a.is_finite()) {
            return Err(Error::Config(format!("need A > B > 0, got A = {a}, B = {b}")));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::Config(format!("domain length must be positive, got {length}")));
        }
        Ok(Self { a, b, length })
    }

    /// Constants from the fluid properties: viscosities below/above and the
    /// surface tensions of the lower (`gamma_w`) and upper (`gamma_d`) interfaces.
    pub fn from_fluids(mu_minus: f64, mu_plus: f64, gamma_w: f64, gamma_d: f64, length: f64) -> Result<Self> {
        if !(mu_minus > 0.0 && mu_plus > 0.0 && gamma_w > 0.0 && gamma_d > 0.0) {
            return Err(Error::Config("viscosities and surface tensions must be positive".into()));
        }
        let b = mu_plus / mu_minus;
        Self::new(b * (gamma_d + gamma_w) / gamma_d, b, length)
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn length(&self) -> f64 {
        self.length
    }
}

/// Both layer profiles at time `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub f: SpectralCoeffs,
    pub g: SpectralCoeffs,
    pub t: f64,
}

impl State {
    pub fn new(f: SpectralCoeffs, g: SpectralCoeffs, t: f64) -> Result<Self> {
        if f.n() != g.n() {
            return Err(Error::Input(format!("mode counts differ: {} vs {}", f.n(), g.n())));
        }
        if f.length() != g.length() {
            return Err(Error::Input("f and g live on different domains".into()));
        }
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::Input(format!("time must be finite and non-negative, got {t}")));
        }
        Ok(Self { f, g, t })
    }

    /// Constant profiles `f ≡ fbar`, `g ≡ gbar`.
    pub fn flat(n: usize, length: f64, fbar: f64, gbar: f64) -> Self {
        Self {
            f: SpectralCoeffs::constant(n, length, fbar),
            g: SpectralCoeffs::constant(n, length, gbar),
            t: 0.0,
        }
    }

    pub fn n(&self) -> usize {
        self.f.n()
    }

    pub fn length(&self) -> f64 {
        self.f.length()
    }

    /// Coefficients as one vector `[F_0..F_n, G_0..G_n]`.
    pub fn pack(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * (self.n() + 1));
        v.extend_from_slice(self.f.as_slice());
        v.extend_from_slice(self.g.as_slice());
        v
    }

    /// Inverse of [`State::pack`], keeping the domain of `self`.
    pub fn unpack(&self, v: &[f64], t: f64) -> Result<Self> {
        let m = self.n() + 1;
        if v.len() != 2 * m {
            return Err(Error::Input(format!("expected {} coefficients, got {}", 2 * m, v.len())));
        }
        Self::new(
            SpectralCoeffs::new(v[..m].to_vec(), self.length())?,
            SpectralCoeffs::new(v[m..].to_vec(), self.length())?,
            t,
        )
    }

    /// Largest modulus among the non-constant modes of `f` and `g`.
    pub fn perturbation_norm(&self) -> f64 {
        self.f.as_slice()[1..]
            .iter()
            .chain(&self.g.as_slice()[1..])
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Which equations are evolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    /// The full coupled system.
    #[default]
    Coupled,
    /// `f` frozen, `∂t g = -∂x[a_ε(g) ∂x³ g]` (single thin-film equation).
    ThinFilm,
}

/// The Galerkin ODE right-hand side together with everything needed to evaluate it.
#[derive(Debug, Clone)]
pub struct GalerkinSystem {
    phys: PhysParams,
    eps: RegEps,
    model: Model,
    table: BasisTable,
}

impl GalerkinSystem {
    pub fn new(phys: PhysParams, eps: RegEps, table: BasisTable) -> Result<Self> {
        if (table.length() - phys.length()).abs() > 1e-12 * phys.length() {
            return Err(Error::Config("grid length does not match L".into()));
        }
        Ok(Self { phys, eps, model: Model::Coupled, table })
    }

    pub fn with_model(mut self, model: Model) -> Self {
        self.model = model;
        self
    }

    pub fn phys(&self) -> &PhysParams {
        &self.phys
    }

    pub fn eps(&self) -> RegEps {
        self.eps
    }

    pub fn model(&self) -> Model {
        self.model
    }

    pub fn table(&self) -> &BasisTable {
        &self.table
    }

    pub fn n(&self) -> usize {
        self.table.n()
    }

    pub fn rhs(&self, state: &State) -> Result<(Vec<f64>, Vec<f64>)> {
        assemble(state, &self.phys, self.eps, self.model, &self.table)
    }

    /// Right-hand side in packed layout.
    pub fn rhs_packed(&self, state: &State) -> Result<Vec<f64>> {
        let (mut df, dg) = self.rhs(state)?;
        df.extend(dg);
        Ok(df)
    }

    pub fn jacobian(&self, state: &State) -> Result<DMatrix<f64>> {
        let base = self.rhs_packed(state)?;
        let x = state.pack();
        let size = x.len();
        let m = state.n() + 1;
        let scale = 1.0 + x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let h = f64::EPSILON.sqrt() * scale;
        let mut jac = DMatrix::zeros(size, size);
        let mut xp = x.clone();
        for col in 0..size {
            if col == 0 || col == m {
                continue;
            }
            xp[col] = x[col] + h;
            let shifted = self.rhs_packed(&state.unpack(&xp, state.t)?)?;
            xp[col] = x[col];
            for row in 0..size {
                jac[(row, col)] = (shifted[row] - base[row]) / h;
            }
        }
        Ok(jac)
    }

    /// Largest mobility values `(max a_ε(f), max a_ε(g))` on the grid.
    pub fn mobility_max(&self, state: &State) -> (f64, f64) {
        let fv = self.table.synthesize(state.f.as_slice(), 0);
        let gv = self.table.synthesize(state.g.as_slice(), 0);
        let mx = |v: &[f64]| v.iter().map(|&s| a_eps(s, self.eps)).fold(f64::NEG_INFINITY, f64::max);
        (mx(&fv), mx(&gv))
    }

    /// Frozen-coefficient fourth-order block. Mode `j` of the stiff part of the
    /// vector field is `-(jπ/L)⁴ · block · (F_j, G_j)`.
    pub fn frozen_block(&self, state: &State) -> [[f64; 2]; 2] {
        let (cf, cg) = self.mobility_max(state);
        match self.model {
            Model::Coupled => [[cf * self.phys.a, cf * self.phys.b], [cg, cg]],
            Model::ThinFilm => [[0.0, 0.0], [0.0, cg]],
        }
    }

    /// Bound on the spectral radius of the linearized vector field, used to
    /// cap explicit steps.
    pub fn stiffness_bound(&self, state: &State) -> f64 {
        let (cf, cg) = self.mobility_max(state);
        let k4 = wavenumber(self.n(), self.phys.length).powi(4);
        cf.max(cg) * (self.phys.a + 1.0) * k4
    }
}

/// Galerkin right-hand side `(dF, dG)` of the coupled system.
pub fn assemble_rhs(
    state: &State,
    phys: &PhysParams,
    eps: RegEps,
    table: &BasisTable,
) -> Result<(Vec<f64>, Vec<f64>)> {
    assemble(state, phys, eps, Model::Coupled, table)
}

/// Finite-difference Jacobian of [`assemble_rhs`] in packed layout.
pub fn assemble_jacobian(state: &State, phys: &PhysParams, eps: RegEps, table: &BasisTable) -> Result<DMatrix<f64>> {
    GalerkinSystem::new(*phys, eps, table.clone())?.jacobian(state)
}

fn assemble(
    state: &State,
    phys: &PhysParams,
    eps: RegEps,
    model: Model,
    table: &BasisTable,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = table.n();
    if state.n() != n {
        return Err(Error::Input(format!("state has {} modes, grid resolves {}", state.n(), n)));
    }
    let (fc, gc) = (state.f.as_slice(), state.g.as_slice());
    let mpts = table.grid().len();

    let mut df = vec![0.0; n + 1];
    let mut dg = vec![0.0; n + 1];
    let mut vals = vec![0.0; mpts];
    let mut d3 = vec![0.0; mpts];

    // lower layer: a_ε(f) ∂x³(A f + B g)
    if model == Model::Coupled {
        let comb: Vec<f64> = fc.iter().zip(gc).map(|(f, g)| phys.a * f + phys.b * g).collect();
        table.synthesize_into(fc, 0, &mut vals);
        table.synthesize_into(&comb, 3, &mut d3);
        for (v, d) in vals.iter_mut().zip(&d3) {
            *v = a_eps(*v, eps) * d;
        }
        table.project_into(&vals, 1, &mut df);
    }

    // upper layer: a_ε(g) ∂x³(f + g), or a_ε(g) ∂x³ g when f is frozen
    let comb: Vec<f64> = match model {
        Model::Coupled => fc.iter().zip(gc).map(|(f, g)| f + g).collect(),
        Model::ThinFilm => gc.to_vec(),
    };
    table.synthesize_into(gc, 0, &mut vals);
    table.synthesize_into(&comb, 3, &mut d3);
    for (v, d) in vals.iter_mut().zip(&d3) {
        *v = a_eps(*v, eps) * d;
    }
    table.project_into(&vals, 1, &mut dg);

    df[0] = 0.0;
    dg[0] = 0.0;
    if let Some(mode) = df.iter().chain(&dg).position(|v| !v.is_finite()) {
        return Err(Error::Overflow { mode: mode % (n + 1) });
    }
    Ok((df, dg))
}

/// Linearization block about the flat state `(fbar, gbar)`:
/// `[[A(f̄+ε), B(f̄+ε)], [ḡ+ε, ḡ+ε]]`. Mode `j` evolves as
/// `d/dt (F_j, G_j) = -(jπ/L)⁴ · block · (F_j, G_j)`.
pub fn linear_block(phys: &PhysParams, eps: RegEps, fbar: f64, gbar: f64) -> [[f64; 2]; 2] {
    let af = a_eps(fbar, eps);
    let ag = a_eps(gbar, eps);
    [[phys.a * af, phys.b * af], [ag, ag]]
}

/// Real eigenvalues of a 2×2 block with positive discriminant, ascending.
/// Returns `None` when the eigenvalues are complex.
pub fn block_eigenvalues(m: &[[f64; 2]; 2]) -> Option<[f64; 2]> {
    let tr = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = tr * tr - 4.0 * det;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    // stable form of the quadratic formula for λ² - tr λ + det = 0
    let q = 0.5 * (tr + if tr >= 0.0 { sq } else { -sq });
    let (r1, r2) = if q != 0.0 { (q, det / q) } else { (0.0, 0.0) };
    Some(if r1 <= r2 { [r1, r2] } else { [r2, r1] })
}

/// Exact decay rates of mode `j` about the flat state: `-(jπ/L)⁴ · eig(block)`.
pub fn flat_decay_rates(phys: &PhysParams, eps: RegEps, j: usize, fbar: f64, gbar: f64) -> [f64; 2] {
    let k4 = wavenumber(j, phys.length()).powi(4);
    let eig = block_eigenvalues(&linear_block(phys, eps, fbar, gbar))
        .expect("flat linearization always has real eigenvalues");
    [-k4 * eig[1], -k4 * eig[0]]
}
