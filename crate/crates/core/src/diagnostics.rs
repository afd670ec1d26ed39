//! Conserved and dissipated quantities of the two-layer flow.
//!
//! Quadratic functionals (`E1`, `D2`) are computed exactly from the
//! coefficients by Parseval; functionals with non-polynomial integrands
//! (`E2`, `E2ε`, `D1`) use the grid quadrature. Quadrature versions of the
//! Parseval quantities are kept as independent cross-checks.

use serde::{Deserialize, Serialize};

use crate::basis::{wavenumber, BasisTable, SpectralCoeffs};
use crate::dynamics::{PhysParams, State};
use crate::error::{Error, Result};
use crate::regularization::{a_eps, phi, phi_eps_value, RegEps};

/// One row of the time series written for every sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub mass_f: f64,
    pub mass_g: f64,
    pub e1: f64,
    pub e2eps: f64,
    /// Absent when either layer is negative somewhere on the grid.
    pub e2: Option<f64>,
    pub d1: f64,
    pub d2: f64,
    pub min_f: f64,
    pub min_g: f64,
    pub dt_last: f64,
}

/// `∫₀ᴸ u dx`.
pub fn mass(c: &SpectralCoeffs) -> f64 {
    c.as_slice()[0] * c.length().sqrt()
}

/// Surface energy `½∫|∂x f|² + B/(A-B) |∂x(f+g)|² dx`.
pub fn energy1(state: &State, phys: &PhysParams) -> f64 {
    let beta = phys.b() / (phys.a() - phys.b());
    let l = state.length();
    let sum: f64 = state
        .f
        .as_slice()
        .iter()
        .zip(state.g.as_slice())
        .enumerate()
        .skip(1)
        .map(|(k, (f, g))| wavenumber(k, l).powi(2) * (f * f + beta * (f + g) * (f + g)))
        .sum();
    0.5 * sum
}

pub fn energy1_quadrature(state: &State, phys: &PhysParams, table: &BasisTable) -> f64 {
    let beta = phys.b() / (phys.a() - phys.b());
    let fx = table.synthesize(state.f.as_slice(), 1);
    let gx = table.synthesize(state.g.as_slice(), 1);
    let integrand: Vec<f64> = fx
        .iter()
        .zip(&gx)
        .map(|(a, b)| a * a + beta * (a + b) * (a + b))
        .collect();
    0.5 * table.grid().integrate(&integrand)
}

/// Gradient of [`energy1`] with respect to `(F, G)`.
pub fn energy1_gradient(state: &State, phys: &PhysParams) -> (Vec<f64>, Vec<f64>) {
    let beta = phys.b() / (phys.a() - phys.b());
    let l = state.length();
    state
        .f
        .as_slice()
        .iter()
        .zip(state.g.as_slice())
        .enumerate()
        .map(|(k, (f, g))| {
            let k2 = wavenumber(k, l).powi(2);
            (k2 * (f + beta * (f + g)), k2 * beta * (f + g))
        })
        .unzip()
}

/// Regularized entropy `∫ Φ_ε(f) + B Φ_ε(g) dx`.
pub fn energy2_eps(state: &State, eps: RegEps, phys: &PhysParams, table: &BasisTable) -> f64 {
    let fv = table.synthesize(state.f.as_slice(), 0);
    let gv = table.synthesize(state.g.as_slice(), 0);
    let integrand: Vec<f64> = fv
        .iter()
        .zip(&gv)
        .map(|(&f, &g)| phi_eps_value(f, eps) + phys.b() * phi_eps_value(g, eps))
        .collect();
    table.grid().integrate(&integrand)
}

/// Entropy `∫ Φ(f) + B Φ(g) dx`; `None` if either layer is negative on the grid.
pub fn energy2(state: &State, phys: &PhysParams, table: &BasisTable) -> Option<f64> {
    let fv = table.synthesize(state.f.as_slice(), 0);
    let gv = table.synthesize(state.g.as_slice(), 0);
    let mut integrand = Vec::with_capacity(fv.len());
    for (&f, &g) in fv.iter().zip(&gv) {
        integrand.push(phi(f).ok()? + phys.b() * phi(g).ok()?);
    }
    Some(table.grid().integrate(&integrand))
}

/// Surface-energy dissipation
/// `(1/(A-B)) ∫ a_ε(f)|∂x³(Af+Bg)|² + B a_ε(g)|∂x³(f+g)|² dx`.
pub fn dissipation1(state: &State, phys: &PhysParams, eps: RegEps, table: &BasisTable) -> f64 {
    let (a, b) = (phys.a(), phys.b());
    let fc = state.f.as_slice();
    let gc = state.g.as_slice();
    let fv = table.synthesize(fc, 0);
    let gv = table.synthesize(gc, 0);
    let f3 = table.synthesize(fc, 3);
    let g3 = table.synthesize(gc, 3);
    let integrand: Vec<f64> = (0..fv.len())
        .map(|m| {
            let p = a * f3[m] + b * g3[m];
            let q = f3[m] + g3[m];
            a_eps(fv[m], eps) * p * p + b * a_eps(gv[m], eps) * q * q
        })
        .collect();
    table.grid().integrate(&integrand) / (a - b)
}

/// Entropy dissipation `∫ (A-B)|∂x² f|² + B|∂x²(f+g)|² dx` by Parseval.
pub fn dissipation2(state: &State, phys: &PhysParams) -> f64 {
    let (a, b) = (phys.a(), phys.b());
    let l = state.length();
    state
        .f
        .as_slice()
        .iter()
        .zip(state.g.as_slice())
        .enumerate()
        .skip(1)
        .map(|(k, (f, g))| wavenumber(k, l).powi(4) * ((a - b) * f * f + b * (f + g) * (f + g)))
        .sum()
}

pub fn dissipation2_quadrature(state: &State, phys: &PhysParams, table: &BasisTable) -> f64 {
    let (a, b) = (phys.a(), phys.b());
    let f2 = table.synthesize(state.f.as_slice(), 2);
    let g2 = table.synthesize(state.g.as_slice(), 2);
    let integrand: Vec<f64> = f2
        .iter()
        .zip(&g2)
        .map(|(f, g)| (a - b) * f * f + b * (f + g) * (f + g))
        .collect();
    table.grid().integrate(&integrand)
}

/// Minimum grid values of `f` and `g`.
pub fn grid_minima(state: &State, table: &BasisTable) -> (f64, f64) {
    let mn = |v: Vec<f64>| v.into_iter().fold(f64::INFINITY, f64::min);
    (
        mn(table.synthesize(state.f.as_slice(), 0)),
        mn(table.synthesize(state.g.as_slice(), 0)),
    )
}

/// All diagnostics of one sample.
pub fn record(state: &State, phys: &PhysParams, eps: RegEps, table: &BasisTable, dt_last: f64) -> DiagnosticsRecord {
    let (min_f, min_g) = grid_minima(state, table);
    DiagnosticsRecord {
        t: state.t,
        mass_f: mass(&state.f),
        mass_g: mass(&state.g),
        e1: energy1(state, phys),
        e2eps: energy2_eps(state, eps, phys, table),
        e2: energy2(state, phys, table),
        d1: dissipation1(state, phys, eps, table),
        d2: dissipation2(state, phys),
        min_f,
        min_g,
        dt_last,
    }
}

/// Trapezoidal rule over (possibly non-uniform) samples.
pub fn trapezoid(ts: &[f64], vals: &[f64]) -> f64 {
    ts.windows(2)
        .zip(vals.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum()
}

/// Residuals of the unregularized weak formulation tested with `ψ = φ_j`:
///
/// ```text
/// r_f = ∫f(T)ψ - ∫f(0)ψ + ∫₀ᵀ∫ (A∂x²f + B∂x²g)(∂xf ∂xψ + f ∂x²ψ) dx dt
/// r_g = ∫g(T)ψ - ∫g(0)ψ + ∫₀ᵀ∫ (∂x²f + ∂x²g)(∂xg ∂xψ + g ∂x²ψ) dx dt
/// ```
///
/// `samples` is the sampled trajectory starting at the initial state; the
/// time integral uses the trapezoidal rule over samples with `t ≤ t_end`,
/// and `t_end` must coincide with a sample time.
pub fn weak_residual(
    samples: &[State],
    phys: &PhysParams,
    table: &BasisTable,
    j: usize,
    t_end: f64,
) -> Result<(f64, f64)> {
    if samples.len() < 2 {
        return Err(Error::Input(format!("need at least 2 samples, got {}", samples.len())));
    }
    if j > table.n() {
        return Err(Error::Input(format!("test mode {j} exceeds mode count {}", table.n())));
    }
    let t0 = samples[0].t;
    let tol = 1e-12 * t_end.abs().max(1.0);
    let last = samples
        .iter()
        .position(|s| (s.t - t_end).abs() <= tol)
        .ok_or_else(|| Error::Input(format!("no sample at t = {t_end}")))?;
    let window = &samples[..=last];
    if window.iter().any(|s| s.n() != table.n()) {
        return Err(Error::Input("sample mode count does not match the grid".into()));
    }

    let length = table.length();
    let grid = table.grid();
    let psi1: Vec<f64> = grid.nodes().iter().map(|&x| crate::basis::basis_value(j, x, length, 1)).collect();
    let psi2: Vec<f64> = grid.nodes().iter().map(|&x| crate::basis::basis_value(j, x, length, 2)).collect();

    let mut space_f = Vec::with_capacity(window.len());
    let mut space_g = Vec::with_capacity(window.len());
    for s in window {
        let (fc, gc) = (s.f.as_slice(), s.g.as_slice());
        let f0 = table.synthesize(fc, 0);
        let g0 = table.synthesize(gc, 0);
        let f1 = table.synthesize(fc, 1);
        let g1 = table.synthesize(gc, 1);
        let f2 = table.synthesize(fc, 2);
        let g2 = table.synthesize(gc, 2);
        let mut ig_f = vec![0.0; f0.len()];
        let mut ig_g = vec![0.0; f0.len()];
        for m in 0..f0.len() {
            let p = phys.a() * f2[m] + phys.b() * g2[m];
            let q = f2[m] + g2[m];
            ig_f[m] = p * (f1[m] * psi1[m] + f0[m] * psi2[m]);
            ig_g[m] = q * (g1[m] * psi1[m] + g0[m] * psi2[m]);
        }
        space_f.push(grid.integrate(&ig_f));
        space_g.push(grid.integrate(&ig_g));
    }
    let ts: Vec<f64> = window.iter().map(|s| s.t).collect();
    let first = &window[0];
    let end = &window[last];
    debug_assert!(first.t == t0);
    let r_f = end.f.as_slice()[j] - first.f.as_slice()[j] + trapezoid(&ts, &space_f);
    let r_g = end.g.as_slice()[j] - first.g.as_slice()[j] + trapezoid(&ts, &space_g);
    Ok((r_f, r_g))
}

/// Outcome of one structural inequality check over a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Largest violation found (negative or zero when the check holds with margin).
    pub worst_excess: f64,
}

/// Exact mass conservation: `|mass(t) - mass(0)| ≤ rel · |mass(0)|` for both layers.
pub fn check_mass(records: &[DiagnosticsRecord], rel: f64) -> CheckResult {
    let mut worst = f64::NEG_INFINITY;
    if let Some(r0) = records.first() {
        for r in records {
            worst = worst
                .max((r.mass_f - r0.mass_f).abs() - rel * r0.mass_f.abs())
                .max((r.mass_g - r0.mass_g).abs() - rel * r0.mass_g.abs());
        }
    }
    CheckResult { name: "mass".into(), passed: worst <= 0.0, worst_excess: worst.max(-f64::MAX) }
}

/// Surface-energy decay between consecutive samples where both layers stay
/// positive: `E1(t_{k+1}) ≤ E1(t_k) + slack_rate · Δt`.
pub fn check_energy_decay(records: &[DiagnosticsRecord], slack_rate: f64) -> CheckResult {
    let mut worst = f64::NEG_INFINITY;
    for w in records.windows(2) {
        let positive = w.iter().all(|r| r.min_f > 0.0 && r.min_g > 0.0);
        if !positive {
            continue;
        }
        let excess = w[1].e1 - w[0].e1 - slack_rate * (w[1].t - w[0].t);
        worst = worst.max(excess);
    }
    CheckResult { name: "energy_decay".into(), passed: worst <= 0.0, worst_excess: worst.max(-f64::MAX) }
}

/// Entropy inequality `E2ε(t) + ∫₀ᵗ D2 ≤ E2ε(0) + slack` at every sample.
pub fn check_entropy(records: &[DiagnosticsRecord], slack: f64) -> CheckResult {
    let mut worst = f64::NEG_INFINITY;
    if let Some(r0) = records.first() {
        let mut acc = 0.0;
        worst = records[0].e2eps - r0.e2eps - slack;
        for w in records.windows(2) {
            acc += 0.5 * (w[1].t - w[0].t) * (w[0].d2 + w[1].d2);
            worst = worst.max(w[1].e2eps + acc - r0.e2eps - slack);
        }
    }
    CheckResult { name: "entropy".into(), passed: worst <= 0.0, worst_excess: worst.max(-f64::MAX) }
}

/// `|E1(T) - E1(0) + ∫₀ᵀ D1 dt|`, the defect of the integrated energy identity.
pub fn energy_identity_defect(records: &[DiagnosticsRecord]) -> f64 {
    let (Some(first), Some(last)) = (records.first(), records.last()) else {
        return 0.0;
    };
    let ts: Vec<f64> = records.iter().map(|r| r.t).collect();
    let d1: Vec<f64> = records.iter().map(|r| r.d1).collect();
    (last.e1 - first.e1 + trapezoid(&ts, &d1)).abs()
}
