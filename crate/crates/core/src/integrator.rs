//! Adaptive time integration of the Galerkin ODEs.
//!
//! Three one-step schemes share the same driver:
//!
//! - `semi_implicit_spectral` (default): the fourth-order part with frozen
//!   mobility `c = max a_ε` is diagonal per mode pair and is solved exactly as
//!   a 2×2 system; the remainder of the vector field is explicit.
//! - `fully_implicit_euler`: backward Euler, modified Newton iteration with
//!   the finite-difference Jacobian.
//! - `explicit_adaptive`: Bogacki–Shampine 3(2) pair, with every step capped
//!   by the explicit stability limit.
//!
//! The two first-order schemes estimate their local error by step doubling.
//! The mean modes `F_0`, `G_0` are copied, never recomputed, so masses are
//! conserved bit for bit.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::wavenumber;
use crate::diagnostics::{self, DiagnosticsRecord};
use crate::dynamics::{GalerkinSystem, State};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    SemiImplicitSpectral,
    FullyImplicitEuler,
    ExplicitAdaptive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepControls {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub max_newton_iters: u32,
    pub scheme: Scheme,
    /// Fraction of the explicit stability limit used by `explicit_adaptive`.
    pub safety: f64,
}

impl Default for StepControls {
    fn default() -> Self {
        Self {
            rel_tol: 1e-6,
            abs_tol: 1e-9,
            dt_init: 1e-7,
            dt_min: 1e-14,
            dt_max: 1e-2,
            max_newton_iters: 12,
            scheme: Scheme::default(),
            safety: 1.0,
        }
    }
}

impl StepControls {
    pub fn validate(&self) -> Result<()> {
        let ok = self.rel_tol > 0.0
            && self.abs_tol > 0.0
            && self.dt_min > 0.0
            && self.dt_min <= self.dt_init
            && self.dt_init <= self.dt_max
            && self.dt_max.is_finite()
            && self.max_newton_iters > 0
            && self.safety > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid step controls: {self:?}")))
        }
    }

    /// Exponent of the step-size controller (local error ~ dt^order).
    fn order(&self) -> f64 {
        match self.scheme {
            Scheme::ExplicitAdaptive => 3.0,
            _ => 2.0,
        }
    }
}

/// Result of one attempted step. `err_est ≤ 1` means the step meets the tolerances.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub next: State,
    pub err_est: f64,
}

/// Advance `state` by `dt` with the configured scheme.
pub fn step(sys: &GalerkinSystem, state: &State, dt: f64, controls: &StepControls) -> Result<StepOutcome> {
    if dt < controls.dt_min {
        return Err(Error::StepTooSmall { dt, state: Box::new(state.clone()) });
    }
    if dt.is_nan() || dt > controls.dt_max {
        return Err(Error::Input(format!("dt = {dt:e} exceeds dt_max = {:e}", controls.dt_max)));
    }
    advance(sys, state, dt, controls)
}

fn advance(sys: &GalerkinSystem, state: &State, dt: f64, controls: &StepControls) -> Result<StepOutcome> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Input(format!("step size must be positive, got {dt}")));
    }
    match controls.scheme {
        Scheme::SemiImplicitSpectral => doubled(state, dt, controls, |s, h| semi_implicit(sys, s, h)),
        Scheme::FullyImplicitEuler => doubled(state, dt, controls, |s, h| implicit_euler(sys, s, h, controls)),
        Scheme::ExplicitAdaptive => bogacki_shampine(sys, state, dt, controls),
    }
}

/// Step doubling: compare one step of size `dt` with two of size `dt/2`
/// and keep the latter.
fn doubled<F>(state: &State, dt: f64, controls: &StepControls, one: F) -> Result<StepOutcome>
where
    F: Fn(&State, f64) -> Result<State>,
{
    let full = one(state, dt)?;
    let half = one(state, 0.5 * dt)?;
    let mut next = one(&half, 0.5 * dt)?;
    next.t = state.t + dt;
    let err_est = error_norm(&full, &next, state, controls);
    Ok(StepOutcome { next, err_est })
}

fn error_norm(a: &State, b: &State, reference: &State, controls: &StepControls) -> f64 {
    let scale = controls.abs_tol + controls.rel_tol * reference.perturbation_norm().max(b.perturbation_norm());
    let diff = a.f.as_slice()[1..]
        .iter()
        .zip(&b.f.as_slice()[1..])
        .chain(a.g.as_slice()[1..].iter().zip(&b.g.as_slice()[1..]))
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    diff / scale
}

fn semi_implicit(sys: &GalerkinSystem, state: &State, dt: f64) -> Result<State> {
    let (df, dg) = sys.rhs(state)?;
    let blk = sys.frozen_block(state);
    let mut next = state.clone();
    next.t = state.t + dt;
    let length = state.length();
    let (fc, gc) = (state.f.as_slice(), state.g.as_slice());
    let mut fnew = fc.to_vec();
    let mut gnew = gc.to_vec();
    for j in 1..=state.n() {
        let k4 = wavenumber(j, length).powi(4);
        let (fj, gj) = (fc[j], gc[j]);
        let lin_f = -k4 * (blk[0][0] * fj + blk[0][1] * gj);
        let lin_g = -k4 * (blk[1][0] * fj + blk[1][1] * gj);
        let rf = fj + dt * (df[j] - lin_f);
        let rg = gj + dt * (dg[j] - lin_g);
        let s = dt * k4;
        let (m00, m01, m10, m11) = (1.0 + s * blk[0][0], s * blk[0][1], s * blk[1][0], 1.0 + s * blk[1][1]);
        let det = m00 * m11 - m01 * m10;
        fnew[j] = (rf * m11 - m01 * rg) / det;
        gnew[j] = (m00 * rg - m10 * rf) / det;
    }
    if let Some(mode) = fnew.iter().chain(&gnew).position(|v| !v.is_finite()) {
        return Err(Error::Overflow { mode: mode % (state.n() + 1) });
    }
    next.f.as_mut_slice().copy_from_slice(&fnew);
    next.g.as_mut_slice().copy_from_slice(&gnew);
    Ok(next)
}

/// Indices of the packed layout that actually evolve (everything but the two mean modes).
fn dynamic_indices(n: usize) -> Vec<usize> {
    (1..=n).chain(n + 2..2 * n + 2).collect()
}

fn implicit_euler(sys: &GalerkinSystem, state: &State, dt: f64, controls: &StepControls) -> Result<State> {
    let n = state.n();
    let idx = dynamic_indices(n);
    let size = idx.len();
    let x0 = state.pack();
    let jac = sys.jacobian(state)?;
    let mut mat = DMatrix::<f64>::identity(size, size);
    for (r, &i) in idx.iter().enumerate() {
        for (c, &k) in idx.iter().enumerate() {
            mat[(r, c)] -= dt * jac[(i, k)];
        }
    }
    let lu = mat.lu();
    let mut x = x0.clone();
    let tol = 0.01 * (controls.abs_tol + controls.rel_tol * state.perturbation_norm());
    for _ in 0..controls.max_newton_iters {
        let trial = state.unpack(&x, state.t + dt)?;
        let psi = sys.rhs_packed(&trial)?;
        let residual = DVector::from_iterator(size, idx.iter().map(|&i| -(x[i] - x0[i] - dt * psi[i])));
        let delta = lu
            .solve(&residual)
            .ok_or_else(|| Error::StepRejected("singular Newton matrix".into()))?;
        for (d, &i) in delta.iter().zip(&idx) {
            x[i] += d;
        }
        let size_of_update = delta.amax();
        if !size_of_update.is_finite() {
            return Err(Error::StepRejected("Newton iteration diverged".into()));
        }
        if size_of_update <= tol {
            return state.unpack(&x, state.t + dt);
        }
    }
    Err(Error::StepRejected(format!(
        "Newton did not converge in {} iterations",
        controls.max_newton_iters
    )))
}

fn bogacki_shampine(sys: &GalerkinSystem, state: &State, dt: f64, controls: &StepControls) -> Result<StepOutcome> {
    let limit = controls.safety / sys.stiffness_bound(state);
    if dt > limit * (1.0 + 1e-12) {
        return Err(Error::StepRejected(format!(
            "dt = {dt:e} exceeds the explicit stability limit {limit:e}"
        )));
    }
    let x0 = state.pack();
    let m = state.n() + 1;
    let combine = |coefs: &[(f64, &Vec<f64>)]| -> Result<State> {
        let mut x = x0.clone();
        for (i, xi) in x.iter_mut().enumerate() {
            if i == 0 || i == m {
                continue;
            }
            for (c, k) in coefs {
                *xi += dt * c * k[i];
            }
        }
        state.unpack(&x, state.t)
    };
    let k1 = sys.rhs_packed(state)?;
    let k2 = sys.rhs_packed(&combine(&[(0.5, &k1)])?)?;
    let k3 = sys.rhs_packed(&combine(&[(0.75, &k2)])?)?;
    let mut next = combine(&[(2.0 / 9.0, &k1), (1.0 / 3.0, &k2), (4.0 / 9.0, &k3)])?;
    let k4 = sys.rhs_packed(&next)?;
    let low = combine(&[(7.0 / 24.0, &k1), (0.25, &k2), (1.0 / 3.0, &k3), (0.125, &k4)])?;
    next.t = state.t + dt;
    let err_est = error_norm(&next, &low, state, controls);
    Ok(StepOutcome { next, err_est })
}

/// Receives one record per sample time.
pub trait DiagnosticsSink {
    fn accept(&mut self, state: &State, record: &DiagnosticsRecord);
}

impl<F: FnMut(&State, &DiagnosticsRecord)> DiagnosticsSink for F {
    fn accept(&mut self, state: &State, record: &DiagnosticsRecord) {
        self(state, record)
    }
}

/// Sink that keeps every sampled state and record.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub states: Vec<State>,
    pub records: Vec<DiagnosticsRecord>,
}

impl DiagnosticsSink for Trajectory {
    fn accept(&mut self, state: &State, record: &DiagnosticsRecord) {
        self.states.push(state.clone());
        self.records.push(record.clone());
    }
}

/// Integrate from `initial.t` to `t_end`, landing exactly on every sample
/// time and emitting a record there.
pub fn integrate(
    sys: &GalerkinSystem,
    initial: &State,
    t_end: f64,
    sample_times: &[f64],
    controls: &StepControls,
    sink: &mut dyn DiagnosticsSink,
) -> Result<State> {
    controls.validate()?;
    if initial.n() != sys.n() {
        return Err(Error::Input(format!("state has {} modes, system has {}", initial.n(), sys.n())));
    }
    if t_end.is_nan() || t_end < initial.t {
        return Err(Error::Input(format!("t_end = {t_end} precedes t0 = {}", initial.t)));
    }
    if sample_times.windows(2).any(|w| w[0] > w[1])
        || sample_times.iter().any(|&s| s < initial.t || s > t_end)
    {
        return Err(Error::Input("sample times must be sorted and lie in [t0, t_end]".into()));
    }

    let phys = *sys.phys();
    let eps = sys.eps();
    let table = sys.table();
    let mut state = initial.clone();
    let mut dt = controls.dt_init;
    let mut dt_last = controls.dt_init;
    let mut next_sample = 0;
    let mut last_sampled: Option<State> = None;

    let mut emit = |state: &State, dt_last: f64, next_sample: &mut usize, last: &mut Option<State>| {
        while *next_sample < sample_times.len() && sample_times[*next_sample] <= state.t {
            let rec = diagnostics::record(state, &phys, eps, table, dt_last);
            sink.accept(state, &rec);
            *last = Some(state.clone());
            *next_sample += 1;
        }
    };
    emit(&state, dt_last, &mut next_sample, &mut last_sampled);

    let fail = |t: f64, source: Error, last: &Option<State>| Error::Integration {
        t,
        source: Box::new(source),
        last_sampled: last.clone().map(Box::new),
    };

    while state.t < t_end {
        let target = sample_times.get(next_sample).copied().unwrap_or(t_end).min(t_end);
        let mut h = dt.min(controls.dt_max);
        if controls.scheme == Scheme::ExplicitAdaptive {
            h = h.min(controls.safety / sys.stiffness_bound(&state));
        }
        let clipped = state.t + h >= target;
        if clipped {
            h = target - state.t;
        }
        match advance(sys, &state, h, controls) {
            Ok(out) if out.err_est <= 1.0 => {
                state = out.next;
                state.t = if clipped { target } else { state.t };
                dt_last = h;
                let grow = if out.err_est > 0.0 {
                    (0.9 * out.err_est.powf(-1.0 / controls.order())).clamp(0.2, 5.0)
                } else {
                    5.0
                };
                dt = if clipped { dt.max(h * grow) } else { h * grow };
                emit(&state, dt_last, &mut next_sample, &mut last_sampled);
            }
            Ok(out) => {
                let shrink = (0.9 * out.err_est.powf(-1.0 / controls.order())).clamp(0.2, 0.9);
                dt = h * shrink;
                if dt < controls.dt_min {
                    let err = Error::StepTooSmall { dt, state: Box::new(state.clone()) };
                    return Err(fail(state.t, err, &last_sampled));
                }
            }
            Err(Error::StepRejected(_)) => {
                dt = 0.5 * h;
                if dt < controls.dt_min {
                    let err = Error::StepTooSmall { dt, state: Box::new(state.clone()) };
                    return Err(fail(state.t, err, &last_sampled));
                }
            }
            Err(e) => return Err(fail(state.t, e, &last_sampled)),
        }
    }
    Ok(state)
}
