//! Single runs: simulate in memory, or simulate and write artifacts.

use std::path::Path;

use crate::basis::{make_grid, BasisTable};
use crate::diagnostics::{self, CheckResult, DiagnosticsRecord};
use crate::dynamics::{GalerkinSystem, Model, State};
use crate::error::{Error, Result};
use crate::harness::config::RunConfig;
use crate::harness::io::{
    self, RunStatus, RunSummary, Snapshot, SNAPSHOT_FINAL_FILE, SNAPSHOT_INITIAL_FILE, SUMMARY_FILE, TIMESERIES_FILE,
};
use crate::integrator::{integrate, DiagnosticsSink};

/// Everything a run produced, including partial results of a failed run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    /// The resolved configuration.
    pub config: RunConfig,
    pub initial: State,
    /// Final state, or the last sampled one if integration failed.
    pub final_state: State,
    pub records: Vec<DiagnosticsRecord>,
    /// Sampled states; empty unless requested.
    pub states: Vec<State>,
    pub checks: Vec<CheckResult>,
    pub failure: Option<String>,
    pub undershoot_f: f64,
    pub undershoot_g: f64,
    pub quadrature_error: f64,
    pub energy_identity_defect: f64,
}

impl RunOutcome {
    pub fn checks_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn completed(&self) -> bool {
        self.failure.is_none()
    }

    pub fn summary(&self) -> RunSummary {
        RunSummary {
            status: if self.completed() { RunStatus::Completed } else { RunStatus::Failed },
            error: self.failure.clone(),
            all_checks_passed: self.checks_passed(),
            checks: self.checks.clone(),
            samples_written: self.records.len(),
            t_final: self.final_state.t,
            energy_identity_defect: self.energy_identity_defect,
            initial_undershoot_f: self.undershoot_f,
            initial_undershoot_g: self.undershoot_g,
            quadrature_error: self.quadrature_error,
            config: self.config.clone(),
        }
    }

    /// Largest `|min_f|` over negative samples (0 if `f` never went negative).
    pub fn worst_negativity_f(&self) -> f64 {
        self.records.iter().map(|r| (-r.min_f).max(0.0)).fold(0.0, f64::max)
    }
}

struct Collect {
    records: Vec<DiagnosticsRecord>,
    states: Option<Vec<State>>,
}

impl DiagnosticsSink for Collect {
    fn accept(&mut self, state: &State, record: &DiagnosticsRecord) {
        self.records.push(record.clone());
        if let Some(s) = &mut self.states {
            s.push(state.clone());
        }
    }
}

/// Options for [`simulate_with`].
#[derive(Debug, Clone, Copy, Default)]
pub struct SimulateOptions {
    pub model: Model,
    pub keep_states: bool,
}

pub fn simulate(config: &RunConfig) -> Result<RunOutcome> {
    simulate_with(config, SimulateOptions::default())
}

/// Run the integration in memory. Configuration problems are errors; an
/// integration failure is reported in [`RunOutcome::failure`] with the
/// samples gathered so far.
pub fn simulate_with(config: &RunConfig, opts: SimulateOptions) -> Result<RunOutcome> {
    config.validate()?;
    let config = config.resolved();
    let table = config.basis_table()?;
    let init = config.initial.build(&table, config.seed)?;
    let quadrature_error = grid_sensitivity(&config, &init.state)?;
    let system = GalerkinSystem::new(config.phys, config.eps, table)?.with_model(opts.model);

    let mut sink = Collect { records: Vec::new(), states: opts.keep_states.then(Vec::new) };
    let times = config.sample_times();
    let (final_state, failure) = match integrate(&system, &init.state, config.t_end, &times, &config.controls, &mut sink)
    {
        Ok(s) => (s, None),
        Err(Error::Integration { t, source, last_sampled }) => {
            let last = last_sampled.map(|b| *b).unwrap_or_else(|| init.state.clone());
            (last, Some(format!("integration failed at t = {t}: {source}")))
        }
        Err(e) => return Err(e),
    };

    let records = sink.records;
    let checks = run_checks(&config, &records);
    Ok(RunOutcome {
        energy_identity_defect: diagnostics::energy_identity_defect(&records),
        config,
        initial: init.state,
        final_state,
        records,
        states: sink.states.unwrap_or_default(),
        checks,
        failure,
        undershoot_f: init.undershoot_f,
        undershoot_g: init.undershoot_g,
        quadrature_error,
    })
}

fn run_checks(config: &RunConfig, records: &[DiagnosticsRecord]) -> Vec<CheckResult> {
    let Some(r0) = records.first() else {
        return Vec::new();
    };
    let s = &config.checks;
    vec![
        diagnostics::check_mass(records, s.mass_rel),
        diagnostics::check_energy_decay(records, s.energy_slack_factor * config.controls.rel_tol * r0.e1.max(1.0)),
        diagnostics::check_entropy(records, s.entropy_slack * r0.e2eps.max(1.0)),
    ]
}

/// Relative change of the grid-quadrature diagnostics of `state` when `M` is doubled.
fn grid_sensitivity(config: &RunConfig, state: &State) -> Result<f64> {
    let fine = BasisTable::new(config.n, make_grid(2 * config.quadrature_size(), config.phys.length())?)?;
    let coarse = config.basis_table()?;
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
    let e = rel(
        diagnostics::energy2_eps(state, config.eps, &config.phys, &coarse),
        diagnostics::energy2_eps(state, config.eps, &config.phys, &fine),
    );
    let d = rel(
        diagnostics::dissipation1(state, &config.phys, config.eps, &coarse),
        diagnostics::dissipation1(state, &config.phys, config.eps, &fine),
    );
    Ok(if e.is_nan() || d.is_nan() { 0.0 } else { e.max(d) })
}

/// Simulate and write `timeseries.csv`, both snapshots and `summary.json`
/// into `out_dir`. Partial artifacts are written when integration fails.
pub fn run(config: &RunConfig, out_dir: &Path) -> Result<RunOutcome> {
    let outcome = simulate(config)?;
    write_artifacts(&outcome, out_dir)?;
    Ok(outcome)
}

pub fn write_artifacts(outcome: &RunOutcome, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let c = &outcome.config;
    io::write_csv(&out_dir.join(TIMESERIES_FILE), &outcome.records)?;
    Snapshot::new(&outcome.initial, &c.phys, c.eps).write(&out_dir.join(SNAPSHOT_INITIAL_FILE))?;
    Snapshot::new(&outcome.final_state, &c.phys, c.eps).write(&out_dir.join(SNAPSHOT_FINAL_FILE))?;
    outcome.summary().write(&out_dir.join(SUMMARY_FILE))
}
