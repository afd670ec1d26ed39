//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::path::PathBuf;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use twolayer_core::basis::{eval_basis, make_grid, BasisTable, SpectralCoeffs};
use twolayer_core::diagnostics::{check_energy_decay, check_entropy, check_mass, energy_identity_defect};
use twolayer_core::dynamics::{assemble_rhs, PhysParams, State};
use twolayer_core::harness::experiments::{
    eps_sweep, linear_decay_check, refinement_study, tfe_scaling, weak_residual_study, DecaySetup,
};
use twolayer_core::harness::{run, simulate, RunConfig};
use twolayer_core::regularization::{a_eps, RegEps};

fn config(name: &str, overrides: &[&str]) -> RunConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    RunConfig::load(&path, overrides).expect("config loads")
}

struct Verdict {
    passed: bool,
    detail: String,
}

type Criterion = (&'static str, fn() -> Verdict);

fn verdict(passed: bool, detail: String) -> Verdict {
    Verdict { passed, detail }
}

fn mass_conservation() -> Verdict {
    let out = simulate(&config("smoke.toml", &[])).unwrap();
    let c = check_mass(&out.records, 1e-13);
    verdict(
        out.completed() && c.passed,
        format!("{} samples, worst |Δmass| − 1e-13·|mass(0)| = {:.2e}", out.records.len(), c.worst_excess),
    )
}

fn energy_decay() -> Verdict {
    let cfg = config("smoke.toml", &[]);
    let out = simulate(&cfg).unwrap();
    let r0 = &out.records[0];
    let bounded = r0.min_f >= 0.5 && r0.min_g >= 0.5;
    let decay = check_energy_decay(&out.records, 10.0 * cfg.controls.rel_tol * r0.e1);
    let positive = out.records.iter().all(|r| r.min_f > 0.0 && r.min_g > 0.0);
    let defect = energy_identity_defect(&out.records);
    verdict(
        out.completed() && bounded && positive && decay.passed && defect <= 1e-3 * r0.e1,
        format!(
            "min f0 {:.3}, min g0 {:.3}; monotonicity excess {:.2e}; |ΔE1 + ∫D1| = {:.2e} vs {:.2e}",
            r0.min_f,
            r0.min_g,
            decay.worst_excess,
            defect,
            1e-3 * r0.e1
        ),
    )
}

fn entropy_inequality() -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for name in ["smoke.toml", "degenerate.toml"] {
        let out = simulate(&config(name, &[])).unwrap();
        let slack = 1e-3 * out.records[0].e2eps.max(1.0);
        let c = check_entropy(&out.records, slack);
        ok &= out.completed() && c.passed;
        parts.push(format!("{name}: excess {:.2e}", c.worst_excess));
    }
    verdict(ok, parts.join("; "))
}

fn negativity_control() -> Verdict {
    let table = eps_sweep(&config("degenerate.toml", &[]), &[1e-1, 1e-2, 1e-3], 1e-3).unwrap();
    let mins: Vec<String> = table.rows.iter().map(|r| format!("{:.2e}", r.min_f)).collect();
    let slope = table.slope.map_or("none".to_string(), |s| format!("{s:.3}"));
    let soft = table.slope.is_some_and(|s| s >= 0.4);
    verdict(
        table.passed(),
        format!(
            "min_f [{}]; monotone {}; entropy consistency {}; slope {slope} (expected >= 0.4: {soft})",
            mins.join(", "),
            table.monotone,
            table.consistency_ok
        ),
    )
}

fn linearized_decay() -> Verdict {
    let phys = PhysParams::new(2.0, 1.0, 1.0).unwrap();
    let setup = DecaySetup { j: 1, fbar: 1.0, gbar: 1.0, amp: 1e-3, ..DecaySetup::default() };
    let r = linear_decay_check(&phys, RegEps::new(0.1).unwrap(), &setup).unwrap();
    verdict(
        r.passed(0.02),
        format!("predicted {:?}, measured {:?}, max rel error {:?}", r.predicted, r.measured, r.max_rel_error()),
    )
}

/// Literal double sum over basis pairs with per-point basis evaluation.
fn literal_rhs(s: &State, phys: &PhysParams, eps: RegEps, m: usize) -> (Vec<f64>, Vec<f64>) {
    let l = phys.length();
    let n = s.n();
    let (fc, gc) = (s.f.as_slice(), s.g.as_slice());
    let h = l / m as f64;
    let mut df = vec![0.0; n + 1];
    let mut dg = vec![0.0; n + 1];
    for i in 0..m {
        let x = (i as f64 + 0.5) * h;
        let fx: f64 = (0..=n).map(|k| fc[k] * eval_basis(k, x, l, 0).unwrap()).sum();
        let gx: f64 = (0..=n).map(|k| gc[k] * eval_basis(k, x, l, 0).unwrap()).sum();
        let (af, ag) = (a_eps(fx, eps), a_eps(gx, eps));
        for j in 0..=n {
            let dpj = eval_basis(j, x, l, 1).unwrap();
            for k in 0..=n {
                let w = h * eval_basis(k, x, l, 3).unwrap() * dpj;
                df[j] += w * af * (phys.a() * fc[k] + phys.b() * gc[k]);
                dg[j] += w * ag * (fc[k] + gc[k]);
            }
        }
    }
    (df, dg)
}

fn rel_max_diff(a: &(Vec<f64>, Vec<f64>), b: &(Vec<f64>, Vec<f64>)) -> f64 {
    let scale = b.0.iter().chain(&b.1).fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = a.0.iter().zip(&b.0).chain(a.1.iter().zip(&b.1)).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    diff / scale
}

fn vector_field() -> Verdict {
    const M: usize = 4096;
    let n = 4;
    let phys = PhysParams::new(2.0, 1.0, 1.0).unwrap();
    let fine = BasisTable::new(n, make_grid(M, 1.0).unwrap()).unwrap();
    let coarse = BasisTable::with_default_grid(n, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst_signed = 0.0f64;
    let mut worst_positive = 0.0f64;
    for i in 0..100 {
        let eps = RegEps::new(rng.random_range(0.01..1.0)).unwrap();
        // half the states change sign, half stay positive
        let level = if i % 2 == 0 { rng.random_range(-0.3..0.3) } else { 3.0 };
        let mut coeffs = |lvl: f64| {
            let mut c: Vec<f64> = (0..=n).map(|_| rng.random_range(-0.5..0.5)).collect();
            c[0] = lvl;
            SpectralCoeffs::new(c, 1.0).unwrap()
        };
        let s = State::new(coeffs(level), coeffs(level), 0.0).unwrap();
        let oracle = literal_rhs(&s, &phys, eps, M);
        worst_signed = worst_signed.max(rel_max_diff(&assemble_rhs(&s, &phys, eps, &fine).unwrap(), &oracle));
        if i % 2 == 1 {
            worst_positive = worst_positive.max(rel_max_diff(&assemble_rhs(&s, &phys, eps, &coarse).unwrap(), &oracle));
        }
    }
    verdict(
        worst_signed <= 1e-8 && worst_positive <= 1e-8,
        format!("max rel diff, M=4096 grid: {worst_signed:.2e}; positive states on default grid: {worst_positive:.2e}"),
    )
}

fn tfe_reduction() -> Verdict {
    let s = tfe_scaling(&config("tfe.toml", &[]), &[1e-2, 1e-3]).unwrap();
    let ratio = s.ratios[0];
    let detail = s
        .reports
        .iter()
        .map(|r| format!("eps {:.0e}: sup|f| {:.3e}, sup|g_c − g_s| {:.3e}", r.eps, r.sup_f, r.sup_g_diff))
        .collect::<Vec<_>>()
        .join("; ");
    verdict(s.linear_in_eps, format!("{detail}; sup|f| ratio {ratio:.2} (want 10 within factor 3)"))
}

fn self_convergence() -> Verdict {
    let table = refinement_study(&config("smoke.toml", &["T_end=0.01"]), &[8, 16, 32]).unwrap();
    let diffs: Vec<String> =
        table.rows.iter().filter_map(|r| r.diff_to_previous).map(|d| format!("{d:.2e}")).collect();
    let rows = weak_residual_study(
        &config("smoke.toml", &["T_end=0.1"]),
        &[(1e-1, 101), (1e-2, 401), (1e-3, 1601)],
        1,
    )
    .unwrap();
    let mags: Vec<f64> = rows.iter().map(|r| r.r_f.abs().max(r.r_g.abs())).collect();
    let decreasing = rows.iter().all(|r| r.completed) && mags.windows(2).all(|w| w[1] < w[0]);
    verdict(
        table.strictly_decreasing && decreasing,
        format!(
            "refinement diffs [{}]; weak residuals [{}]",
            diffs.join(", "),
            mags.iter().map(|m| format!("{m:.2e}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn determinism() -> Verdict {
    let cfg = config("smoke.toml", &[]);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run(&cfg, a.path()).unwrap();
    run(&cfg, b.path()).unwrap();
    let same = ["timeseries.csv", "snapshot_initial.json", "snapshot_final.json"]
        .iter()
        .all(|f| std::fs::read(a.path().join(f)).unwrap() == std::fs::read(b.path().join(f)).unwrap());
    verdict(same, "CSV and snapshots byte-identical across two runs".into())
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("mass conservation", mass_conservation),
        ("energy decay", energy_decay),
        ("entropy inequality", entropy_inequality),
        ("negativity control", negativity_control),
        ("linearized decay", linearized_decay),
        ("vector field", vector_field),
        ("thin-film reduction", tfe_reduction),
        ("self-convergence", self_convergence),
        ("determinism", determinism),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let v = check();
        let tag = if v.passed { "PASS" } else { "FAIL" };
        println!("[{tag}] {}. {name} ({:.1}s): {}", i + 1, start.elapsed().as_secs_f64(), v.detail);
        if !v.passed {
            failures += 1;
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
