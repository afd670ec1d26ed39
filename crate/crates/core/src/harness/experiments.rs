//! Experiment drivers: ε-sweep, mode refinement, thin-film reduction,
//! linearized decay and weak-residual refinement.
//!
//! Member runs are independent and execute in parallel; rows are returned in
//! input order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{wavenumber, BasisTable};
use crate::diagnostics::{self, DiagnosticsRecord};
use crate::dynamics::{linear_block, GalerkinSystem, Model, PhysParams, State};
use crate::error::{Error, Result};
use crate::harness::config::RunConfig;
use crate::harness::run::{simulate_with, RunOutcome, SimulateOptions};
use crate::integrator::{integrate, StepControls, Trajectory};
use crate::regularization::{phi_eps, RegEps};

fn check_decreasing(xs: &[f64], what: &str) -> Result<()> {
    if xs.is_empty() || xs.windows(2).any(|w| w[0] <= w[1]) {
        return Err(Error::Input(format!("{what} must be non-empty and strictly decreasing")));
    }
    Ok(())
}

/// Least-squares slope of `ys` against `xs`.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub eps: f64,
    pub completed: bool,
    /// Minimum over the run of the grid minimum of `f`.
    pub min_f: f64,
    pub e2eps0: f64,
    /// Largest `Φ_ε(min_f)·w_min − E2eps(0)` over samples.
    pub consistency_excess: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub complete: bool,
    /// `f` stayed positive in every run; the slope is then meaningless.
    pub non_degenerate: bool,
    /// Slope of `log|min_f|` against `log ε` over rows where `f` went negative.
    pub slope: Option<f64>,
    /// `|min_f|` does not grow as `ε` decreases.
    pub monotone: bool,
    pub consistency_slack: f64,
    pub consistency_ok: bool,
}

impl SweepTable {
    pub fn passed(&self) -> bool {
        self.complete && self.monotone && self.consistency_ok
    }
}

/// Run `base` once per `ε` in `eps_list` (strictly decreasing).
pub fn eps_sweep(base: &RunConfig, eps_list: &[f64], consistency_slack: f64) -> Result<SweepTable> {
    check_decreasing(eps_list, "eps list")?;
    let configs: Vec<RunConfig> = eps_list
        .iter()
        .map(|&e| Ok(RunConfig { eps: RegEps::new(e)?, ..base.clone() }))
        .collect::<Result<_>>()?;
    for c in &configs {
        c.validate()?;
    }
    let outcomes: Vec<Result<RunOutcome>> =
        configs.par_iter().map(|c| simulate_with(c, SimulateOptions::default())).collect();

    let mut rows = Vec::with_capacity(outcomes.len());
    for (c, out) in configs.iter().zip(outcomes) {
        let row = match out {
            Ok(o) => {
                let w_min = c.basis_table()?.grid().min_weight();
                let e2eps0 = o.records.first().map_or(f64::NAN, |r| r.e2eps);
                let min_f = o.records.iter().map(|r| r.min_f).fold(f64::INFINITY, f64::min);
                let consistency_excess = o
                    .records
                    .iter()
                    .map(|r| phi_eps(r.min_f, c.eps, 0).map(|p| p * w_min - e2eps0))
                    .collect::<Result<Vec<_>>>()?
                    .into_iter()
                    .fold(f64::NEG_INFINITY, f64::max);
                SweepRow {
                    eps: c.eps.get(),
                    completed: o.completed(),
                    min_f,
                    e2eps0,
                    consistency_excess,
                    error: o.failure,
                }
            }
            Err(e) => SweepRow {
                eps: c.eps.get(),
                completed: false,
                min_f: f64::NAN,
                e2eps0: f64::NAN,
                consistency_excess: f64::NAN,
                error: Some(e.to_string()),
            },
        };
        rows.push(row);
    }

    let complete = rows.iter().all(|r| r.completed);
    let done: Vec<&SweepRow> = rows.iter().filter(|r| r.completed).collect();
    let non_degenerate = done.iter().all(|r| r.min_f > 0.0);
    let negative: Vec<&&SweepRow> = done.iter().filter(|r| r.min_f < 0.0).collect();
    let slope = if non_degenerate {
        None
    } else {
        let xs: Vec<f64> = negative.iter().map(|r| r.eps.ln()).collect();
        let ys: Vec<f64> = negative.iter().map(|r| (-r.min_f).ln()).collect();
        fit_slope(&xs, &ys)
    };
    let neg = |r: &SweepRow| (-r.min_f).max(0.0);
    let monotone = done.windows(2).all(|w| neg(w[1]) <= neg(w[0]));
    let consistency_ok = done.iter().all(|r| r.consistency_excess <= consistency_slack);
    Ok(SweepTable { rows, complete, non_degenerate, slope, monotone, consistency_slack, consistency_ok })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementRow {
    pub n: usize,
    pub completed: bool,
    /// Max-coefficient distance to the previous row's final state.
    pub diff_to_previous: Option<f64>,
    /// `ln(d_{i-1}/d_i) / ln(n_i/n_{i-1})`.
    pub order: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementTable {
    pub rows: Vec<RefinementRow>,
    pub strictly_decreasing: bool,
}

/// Max-coefficient distance between two states after zero-padding the shorter one.
pub fn padded_distance(a: &State, b: &State) -> f64 {
    let n = a.n().max(b.n());
    let (af, ag) = (a.f.resized(n), a.g.resized(n));
    let (bf, bg) = (b.f.resized(n), b.g.resized(n));
    af.as_slice()
        .iter()
        .zip(bf.as_slice())
        .chain(ag.as_slice().iter().zip(bg.as_slice()))
        .fold(0.0, |m, (x, y)| f64::max(m, (x - y).abs()))
}

/// Run `base` at every mode count in `n_list` (strictly increasing). Each
/// member uses the default quadrature size for its `n`.
pub fn refinement_study(base: &RunConfig, n_list: &[usize]) -> Result<RefinementTable> {
    if n_list.is_empty() || n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Input("n list must be non-empty and strictly increasing".into()));
    }
    let configs: Vec<RunConfig> = n_list.iter().map(|&n| RunConfig { n, m: None, ..base.clone() }).collect();
    for c in &configs {
        c.validate()?;
    }
    let outcomes: Vec<Result<RunOutcome>> =
        configs.par_iter().map(|c| simulate_with(c, SimulateOptions::default())).collect();

    let mut rows: Vec<RefinementRow> = Vec::new();
    let mut prev: Option<(usize, State)> = None;
    let mut prev_diff: Option<f64> = None;
    for (&n, out) in n_list.iter().zip(outcomes) {
        let (final_state, error) = match out {
            Ok(o) if o.completed() => (Some(o.final_state), None),
            Ok(o) => (None, o.failure),
            Err(e) => (None, Some(e.to_string())),
        };
        let mut row = RefinementRow { n, completed: final_state.is_some(), diff_to_previous: None, order: None, error };
        match final_state {
            Some(s) => {
                if let Some((pn, ps)) = &prev {
                    let d = padded_distance(&s, ps);
                    row.diff_to_previous = Some(d);
                    row.order = prev_diff.map(|pd| (pd / d).ln() / (n as f64 / *pn as f64).ln());
                    prev_diff = Some(d);
                }
                prev = Some((n, s));
            }
            None => {
                prev = None;
                prev_diff = None;
            }
        }
        rows.push(row);
    }
    let diffs: Vec<Option<f64>> = rows.iter().skip(1).map(|r| r.diff_to_previous).collect();
    let strictly_decreasing = rows.iter().all(|r| r.completed)
        && diffs.iter().all(Option::is_some)
        && diffs.windows(2).all(|w| w[1].unwrap() < w[0].unwrap());
    Ok(RefinementTable { rows, strictly_decreasing })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfeReport {
    pub eps: f64,
    pub completed: bool,
    /// Largest `|f|` on the grid over all samples of the coupled run.
    pub sup_f: f64,
    /// Largest `|g_coupled − g_single|` on the grid over all samples.
    pub sup_g_diff: f64,
    /// `sup_g_diff / sup_f`, an empirical stability constant.
    pub stability_constant: Option<f64>,
    pub error: Option<String>,
}

/// Compare the coupled run from `f₀ ≡ 0` with the single thin-film equation for `g`.
pub fn tfe_reduction(base: &RunConfig) -> Result<TfeReport> {
    base.validate()?;
    let table = base.basis_table()?;
    let init = base.initial.build(&table, base.seed)?;
    if init.state.f.as_slice().iter().any(|&c| c.abs() > 1e-14) {
        return Err(Error::Input("thin-film reduction needs f0 = 0".into()));
    }
    let opts = |model| SimulateOptions { model, keep_states: true };
    let (coupled, single) = rayon::join(
        || simulate_with(base, opts(Model::Coupled)),
        || simulate_with(base, opts(Model::ThinFilm)),
    );
    let (coupled, single) = (coupled?, single?);
    let completed = coupled.completed() && single.completed();
    let mut sup_f = 0.0f64;
    let mut sup_g_diff = 0.0f64;
    for (c, s) in coupled.states.iter().zip(&single.states) {
        let fv = table.synthesize(c.f.as_slice(), 0);
        sup_f = fv.iter().fold(sup_f, |m, v| m.max(v.abs()));
        let gc = table.synthesize(c.g.as_slice(), 0);
        let gs = table.synthesize(s.g.as_slice(), 0);
        sup_g_diff = gc.iter().zip(&gs).fold(sup_g_diff, |m, (a, b)| m.max((a - b).abs()));
    }
    Ok(TfeReport {
        eps: base.eps.get(),
        completed,
        sup_f,
        sup_g_diff,
        stability_constant: (sup_f > 0.0).then(|| sup_g_diff / sup_f),
        error: coupled.failure.or(single.failure),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfeScaling {
    pub reports: Vec<TfeReport>,
    /// `sup_f(ε_i) / sup_f(ε_{i+1})` for consecutive entries.
    pub ratios: Vec<f64>,
    /// Each ratio lies within a factor 3 of the ratio of the ε values.
    pub linear_in_eps: bool,
}

/// [`tfe_reduction`] at each ε of a strictly decreasing list.
pub fn tfe_scaling(base: &RunConfig, eps_list: &[f64]) -> Result<TfeScaling> {
    check_decreasing(eps_list, "eps list")?;
    let configs: Vec<RunConfig> = eps_list
        .iter()
        .map(|&e| Ok(RunConfig { eps: RegEps::new(e)?, ..base.clone() }))
        .collect::<Result<_>>()?;
    let reports: Vec<TfeReport> = configs.par_iter().map(tfe_reduction).collect::<Result<_>>()?;
    let ratios: Vec<f64> = reports.windows(2).map(|w| w[0].sup_f / w[1].sup_f).collect();
    let linear_in_eps = reports.iter().all(|r| r.completed)
        && ratios.iter().zip(eps_list.windows(2)).all(|(r, e)| {
            let want = e[0] / e[1];
            *r >= want / 3.0 && *r <= want * 3.0
        });
    Ok(TfeScaling { reports, ratios, linear_in_eps })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayStatus {
    Measured,
    Stationary,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub status: DecayStatus,
    pub j: usize,
    pub t_end: f64,
    /// Eigenvalues of the linearized mode-`j` block, fast one first.
    pub predicted: [f64; 2],
    pub measured: Option<[f64; 2]>,
    pub rel_error: Option<[f64; 2]>,
    pub message: Option<String>,
}

impl DecayReport {
    pub fn max_rel_error(&self) -> Option<f64> {
        self.rel_error.map(|e| e[0].max(e[1]))
    }

    pub fn passed(&self, tol: f64) -> bool {
        match self.status {
            DecayStatus::Stationary => true,
            DecayStatus::Aborted => false,
            DecayStatus::Measured => self.max_rel_error().is_some_and(|e| e <= tol),
        }
    }
}

/// Parameters of [`linear_decay_check`] beyond the physical ones.
#[derive(Debug, Clone, PartialEq)]
pub struct DecaySetup {
    pub j: usize,
    pub fbar: f64,
    pub gbar: f64,
    pub amp: f64,
    /// Run length in units of `1/(jπ/L)⁴`.
    pub time_scale: f64,
    pub sample_count: usize,
    pub controls: StepControls,
}

impl Default for DecaySetup {
    fn default() -> Self {
        Self {
            j: 1,
            fbar: 1.0,
            gbar: 1.0,
            amp: 1e-3,
            time_scale: 1.0,
            sample_count: 41,
            controls: StepControls { rel_tol: 1e-8, abs_tol: 1e-14, ..StepControls::default() },
        }
    }
}

/// Perturb the flat state `(f̄, ḡ)` by `amp·φ_j` in `f`, integrate, project
/// the mode-`j` pair onto the eigenvectors of the linearized block and fit
/// the exponential rate of each component.
pub fn linear_decay_check(phys: &PhysParams, eps: RegEps, setup: &DecaySetup) -> Result<DecayReport> {
    let j = setup.j;
    if j == 0 || !(setup.fbar > 0.0 && setup.gbar > 0.0) || setup.sample_count < 3 {
        return Err(Error::Input("decay check needs j >= 1, positive flats and at least 3 samples".into()));
    }
    let length = phys.length();
    let k4 = wavenumber(j, length).powi(4);
    let blk = linear_block(phys, eps, setup.fbar, setup.gbar);
    let m = [[-k4 * blk[0][0], -k4 * blk[0][1]], [-k4 * blk[1][0], -k4 * blk[1][1]]];
    let eig = crate::dynamics::block_eigenvalues(&m)
        .ok_or_else(|| Error::Domain("linearized block has complex eigenvalues".into()))?;
    let predicted = [eig[0], eig[1]];
    let t_end = setup.time_scale / k4;
    let mut report = DecayReport {
        status: DecayStatus::Stationary,
        j,
        t_end,
        predicted,
        measured: None,
        rel_error: None,
        message: None,
    };
    if setup.amp == 0.0 {
        return Ok(report);
    }

    let n = (2 * j).max(4);
    let table = BasisTable::with_default_grid(n, length)?;
    let mut state = State::flat(n, length, setup.fbar, setup.gbar);
    state.f.as_mut_slice()[j] = setup.amp;
    let (mf, mg) = diagnostics::grid_minima(&state, &table);
    if mf <= 0.0 || mg <= 0.0 {
        report.status = DecayStatus::Aborted;
        report.message = Some(format!("initial data not positive (min f = {mf:e}, min g = {mg:e})"));
        return Ok(report);
    }
    let system = GalerkinSystem::new(*phys, eps, table)?;
    let times: Vec<f64> = (0..setup.sample_count).map(|i| t_end * i as f64 / (setup.sample_count - 1) as f64).collect();
    let mut traj = Trajectory::default();
    if let Err(e) = integrate(&system, &state, t_end, &times, &setup.controls, &mut traj) {
        report.status = DecayStatus::Aborted;
        report.message = Some(e.to_string());
        return Ok(report);
    }
    if let Some(r) = traj.records.iter().find(|r: &&DiagnosticsRecord| r.min_f <= 0.0 || r.min_g <= 0.0) {
        report.status = DecayStatus::Aborted;
        report.message = Some(format!("positivity lost at t = {}", r.t));
        return Ok(report);
    }

    // Columns are eigenvectors of m.
    let vec_for = |l: f64| {
        if m[0][1].abs() >= m[1][0].abs() {
            [m[0][1], l - m[0][0]]
        } else {
            [l - m[1][1], m[1][0]]
        }
    };
    let (v0, v1) = (vec_for(predicted[0]), vec_for(predicted[1]));
    let det = v0[0] * v1[1] - v1[0] * v0[1];
    let mut measured = [0.0; 2];
    for (which, rate) in measured.iter_mut().enumerate() {
        let mut ts = Vec::new();
        let mut ys = Vec::new();
        for s in &traj.states {
            let (fj, gj) = (s.f.as_slice()[j], s.g.as_slice()[j]);
            let c = if which == 0 { (fj * v1[1] - v1[0] * gj) / det } else { (v0[0] * gj - v0[1] * fj) / det };
            if c != 0.0 {
                ts.push(s.t);
                ys.push(c.abs().ln());
            }
        }
        *rate = fit_slope(&ts, &ys).ok_or_else(|| Error::Domain("eigencomponent vanished".into()))?;
    }
    report.status = DecayStatus::Measured;
    report.measured = Some(measured);
    report.rel_error = Some([
        ((measured[0] - predicted[0]) / predicted[0]).abs(),
        ((measured[1] - predicted[1]) / predicted[1]).abs(),
    ]);
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakResidualRow {
    pub eps: f64,
    pub sample_count: usize,
    pub completed: bool,
    pub r_f: f64,
    pub r_g: f64,
}

/// Weak-form residuals against `φ_j` at `T_end` for each `(ε, sample_count)` level.
pub fn weak_residual_study(base: &RunConfig, levels: &[(f64, usize)], j: usize) -> Result<Vec<WeakResidualRow>> {
    let configs: Vec<RunConfig> = levels
        .iter()
        .map(|&(e, k)| Ok(RunConfig { eps: RegEps::new(e)?, sample_count: k, ..base.clone() }))
        .collect::<Result<_>>()?;
    configs
        .par_iter()
        .map(|c| {
            let out = simulate_with(c, SimulateOptions { model: Model::Coupled, keep_states: true })?;
            let table = c.basis_table()?;
            let (r_f, r_g) = if out.completed() {
                diagnostics::weak_residual(&out.states, &c.phys, &table, j, c.t_end)?
            } else {
                (f64::NAN, f64::NAN)
            };
            Ok(WeakResidualRow { eps: c.eps.get(), sample_count: c.sample_count, completed: out.completed(), r_f, r_g })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 0.5 * x - 2.0).collect();
        assert!((fit_slope(&xs, &ys).unwrap() - 0.5).abs() < 1e-14);
        assert!(fit_slope(&[1.0], &[1.0]).is_none());
        assert!(fit_slope(&[1.0, 1.0], &[1.0, 2.0]).is_none());
    }

    #[test]
    fn padded_distance_ignores_padding() {
        let a = State::flat(3, 1.0, 1.0, 2.0);
        let mut b = State::flat(6, 1.0, 1.0, 2.0);
        assert_eq!(padded_distance(&a, &b), 0.0);
        b.g.as_mut_slice()[5] = -0.25;
        assert_eq!(padded_distance(&a, &b), 0.25);
    }

    #[test]
    fn stationary_decay_report() {
        let phys = PhysParams::new(2.0, 1.0, 1.0).unwrap();
        let setup = DecaySetup { amp: 0.0, ..DecaySetup::default() };
        let r = linear_decay_check(&phys, RegEps::new(0.1).unwrap(), &setup).unwrap();
        assert_eq!(r.status, DecayStatus::Stationary);
        assert!(r.predicted.iter().all(|l| *l < 0.0));
        assert!(r.passed(0.02));
    }

    #[test]
    fn oversized_amplitude_aborts() {
        let phys = PhysParams::new(2.0, 1.0, 1.0).unwrap();
        let setup = DecaySetup { amp: 2.0, ..DecaySetup::default() };
        let r = linear_decay_check(&phys, RegEps::new(0.1).unwrap(), &setup).unwrap();
        assert_eq!(r.status, DecayStatus::Aborted);
        assert!(!r.passed(0.02));
    }
}
