//! Configuration, run artifacts, experiment drivers.

pub mod config;
pub mod experiments;
pub mod io;
pub mod run;

pub use config::{InitialDataSpec, RunConfig, SampleSpacing, OUT_DIR_ENV};
pub use experiments::{
    eps_sweep, linear_decay_check, refinement_study, tfe_reduction, tfe_scaling, weak_residual_study, DecayReport,
    DecaySetup, RefinementTable, SweepTable, TfeReport,
};
pub use run::{run, simulate, simulate_with, RunOutcome, SimulateOptions};
