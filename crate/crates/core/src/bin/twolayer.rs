use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use twolayer_core::harness::experiments::{self, DecaySetup};
use twolayer_core::harness::{run, RunConfig};
use twolayer_core::Result;

#[derive(Parser)]
#[command(name = "twolayer", version, about = "Galerkin simulator for two-layer thin films in a porous medium")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides the config and the environment.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override a config entry, e.g. `--override phys.A=3`.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Single run with CSV, snapshots and summary.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Repeat a run for decreasing ε and tabulate the negativity of f.
    SweepEps {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_values_t = [1e-1, 1e-2, 1e-3])]
        eps: Vec<f64>,
        /// Slack of the single-node entropy bound.
        #[arg(long, default_value_t = 1e-3)]
        slack: f64,
    },
    /// Repeat a run for increasing mode counts and compare final states.
    Refine {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_values_t = [8usize, 16, 32])]
        n_list: Vec<usize>,
    },
    /// Compare the coupled system from f0 = 0 with the single thin-film equation.
    TfeCheck {
        #[command(flatten)]
        common: Common,
        /// ε values; defaults to the config value and a tenth of it.
        #[arg(long, value_delimiter = ',')]
        eps: Vec<f64>,
    },
    /// Measure decay rates of a small perturbation of a flat state.
    DecayCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1)]
        j: usize,
        #[arg(long, default_value_t = 1.0)]
        fbar: f64,
        #[arg(long, default_value_t = 1.0)]
        gbar: f64,
        #[arg(long, default_value_t = 1e-3)]
        amp: f64,
        /// Allowed relative error of each measured rate.
        #[arg(long, default_value_t = 0.02)]
        tol: f64,
    },
}

fn load(common: &Common) -> Result<RunConfig> {
    let path = common
        .config
        .as_deref()
        .ok_or_else(|| twolayer_core::Error::Config("--config is required".into()))?;
    RunConfig::load(path, &common.overrides)
}

fn out_dir(common: &Common, cfg: &RunConfig) -> PathBuf {
    common.out.clone().unwrap_or_else(|| cfg.effective_out_dir())
}

fn write_report<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(dir.join(name), text)?;
    Ok(())
}

const DECAY_DEFAULTS: &str = r#"
n = 4
eps = 0.1
T_end = 0.0
sample_count = 2
[phys]
A = 2.0
B = 1.0
L = 1.0
[initial]
kind = "flat"
f_level = 1.0
g_level = 1.0
"#;

/// `Ok(true)` when every check passed.
fn execute(cmd: Command) -> Result<bool> {
    match cmd {
        Command::Run { common } => {
            let mut cfg = load(&common)?;
            let dir = out_dir(&common, &cfg);
            cfg.out_dir = dir.clone();
            let outcome = run(&cfg, &dir)?;
            for c in &outcome.checks {
                println!("{:<14} {}  worst excess {:.3e}", c.name, if c.passed { "pass" } else { "FAIL" }, c.worst_excess);
            }
            println!("samples {}  t_final {}  output {}", outcome.records.len(), outcome.final_state.t, dir.display());
            if let Some(f) = &outcome.failure {
                return Err(twolayer_core::Error::Input(f.clone()));
            }
            Ok(outcome.checks_passed())
        }
        Command::SweepEps { common, eps, slack } => {
            let cfg = load(&common)?;
            let table = experiments::eps_sweep(&cfg, &eps, slack)?;
            for r in &table.rows {
                println!("eps {:.3e}  min_f {:+.6e}  E2eps(0) {:.6e}  consistency {:+.3e}", r.eps, r.min_f, r.e2eps0, r.consistency_excess);
            }
            match table.slope {
                Some(s) => println!("log-log slope {s:.3}"),
                None if table.non_degenerate => println!("non-degenerate: f stayed positive"),
                None => println!("slope unavailable"),
            }
            println!("monotone {}  consistency {}  complete {}", table.monotone, table.consistency_ok, table.complete);
            write_report(&out_dir(&common, &cfg), "sweep.json", &table)?;
            Ok(table.passed())
        }
        Command::Refine { common, n_list } => {
            let cfg = load(&common)?;
            let table = experiments::refinement_study(&cfg, &n_list)?;
            for r in &table.rows {
                println!("n {:>4}  diff {:>12}  order {:>8}", r.n, fmt_opt(r.diff_to_previous, 3), fmt_opt(r.order, 2));
            }
            println!("strictly decreasing {}", table.strictly_decreasing);
            write_report(&out_dir(&common, &cfg), "refinement.json", &table)?;
            Ok(table.strictly_decreasing)
        }
        Command::TfeCheck { common, eps } => {
            let cfg = load(&common)?;
            let eps = if eps.is_empty() { vec![cfg.eps.get(), cfg.eps.get() / 10.0] } else { eps };
            let scaling = experiments::tfe_scaling(&cfg, &eps)?;
            for r in &scaling.reports {
                println!("eps {:.3e}  sup|f| {:.6e}  sup|g_c - g_s| {:.6e}  ratio {}", r.eps, r.sup_f, r.sup_g_diff, fmt_opt(r.stability_constant, 3));
            }
            println!("sup|f| ratios {:?}  linear in eps {}", scaling.ratios, scaling.linear_in_eps);
            write_report(&out_dir(&common, &cfg), "tfe.json", &scaling)?;
            Ok(scaling.linear_in_eps)
        }
        Command::DecayCheck { common, j, fbar, gbar, amp, tol } => {
            let cfg = match &common.config {
                Some(_) => load(&common)?,
                None => RunConfig::from_toml_with_overrides(DECAY_DEFAULTS, &common.overrides)?,
            };
            let mut setup = DecaySetup { j, fbar, gbar, amp, ..DecaySetup::default() };
            if common.config.is_some() {
                setup.controls = cfg.controls.clone();
            }
            let report = experiments::linear_decay_check(&cfg.phys, cfg.eps, &setup)?;
            println!("status {:?}  predicted {:?}  measured {:?}  rel error {:?}", report.status, report.predicted, report.measured, report.rel_error);
            if let Some(m) = &report.message {
                println!("{m}");
            }
            write_report(&out_dir(&common, &cfg), "decay.json", &report)?;
            Ok(report.passed(tol))
        }
    }
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.digits$e}"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("checks failed");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
