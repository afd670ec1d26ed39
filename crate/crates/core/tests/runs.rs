//! End-to-end properties of single runs and drivers.

use std::path::PathBuf;

use twolayer_core::harness::experiments::{eps_sweep, padded_distance, tfe_reduction};
use twolayer_core::harness::{simulate, RunConfig};
use twolayer_core::integrator::Scheme;

fn config(name: &str, overrides: &[&str]) -> RunConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    RunConfig::load(&path, overrides).unwrap()
}

#[test]
fn flat_run_is_stationary() {
    let cfg = config(
        "smoke.toml",
        &["initial={ kind = \"flat\", f_level = 0.7, g_level = 1.3 }", "T_end=0.1", "sample_count=5"],
    );
    let out = simulate(&cfg).unwrap();
    assert!(out.checks_passed());
    for r in &out.records {
        assert_eq!((r.d1, r.d2), (0.0, 0.0));
    }
    assert_eq!(out.final_state.f, out.initial.f);
}

#[test]
fn tolerance_refinement_changes_little() {
    let loose = simulate(&config("smoke.toml", &["controls.rel_tol=1e-6", "controls.abs_tol=1e-9", "T_end=0.05"])).unwrap();
    let tight = simulate(&config("smoke.toml", &["controls.rel_tol=1e-8", "controls.abs_tol=1e-11", "T_end=0.05"])).unwrap();
    let d = padded_distance(&loose.final_state, &tight.final_state);
    assert!(d <= 1e-4, "{d}");
}

#[test]
fn schemes_agree() {
    let base = ["T_end=0.002", "sample_count=3", "n=8", "controls.rel_tol=1e-9", "controls.abs_tol=1e-12"];
    let semi = simulate(&config("smoke.toml", &base)).unwrap();
    let mut o = base.to_vec();
    o.push("controls.scheme=\"fully_implicit_euler\"");
    let implicit = simulate(&config("smoke.toml", &o)).unwrap();
    let mut o = base.to_vec();
    o.push("controls.scheme=\"explicit_adaptive\"");
    let explicit = simulate(&config("smoke.toml", &o)).unwrap();
    assert!(semi.completed() && implicit.completed() && explicit.completed());
    assert!(padded_distance(&semi.final_state, &implicit.final_state) < 1e-5);
    assert!(padded_distance(&semi.final_state, &explicit.final_state) < 1e-5);
    assert_eq!(explicit.config.controls.scheme, Scheme::ExplicitAdaptive);
}

#[test]
fn positive_data_is_flagged_non_degenerate() {
    let cfg = config("smoke.toml", &["T_end=0.001", "sample_count=11"]);
    let table = eps_sweep(&cfg, &[0.1, 0.01], 1e-3).unwrap();
    assert!(table.non_degenerate);
    assert!(table.slope.is_none());
    let m = cfg.initial.build(&cfg.basis_table().unwrap(), cfg.seed).unwrap();
    let (mf, _) = twolayer_core::diagnostics::grid_minima(&m.state, &cfg.basis_table().unwrap());
    assert!(table.rows.iter().all(|r| r.min_f >= mf / 2.0));
}

#[test]
fn flat_g_gives_stationary_reduction() {
    let cfg = config("tfe.toml", &["initial.g_amp=0.0"]);
    let r = tfe_reduction(&cfg).unwrap();
    assert_eq!(r.sup_f, 0.0);
    assert!(r.sup_g_diff <= 1e-14);
}

#[test]
fn reduction_requires_empty_lower_layer() {
    assert!(tfe_reduction(&config("smoke.toml", &[])).is_err());
}

#[test]
fn compact_support_undershoot_is_reported() {
    let out = simulate(&config("degenerate.toml", &["T_end=0.0"])).unwrap();
    assert!(out.undershoot_f < 0.0);
    assert_eq!(out.records.len(), 101);
    assert_eq!(out.records[0].min_f, out.undershoot_f);
}
