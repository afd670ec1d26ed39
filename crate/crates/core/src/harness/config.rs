//! Run configuration: TOML file, dotted overrides, initial data.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::basis::{default_grid_size, make_grid, BasisTable, SpectralCoeffs};
use crate::dynamics::{PhysParams, State};
use crate::error::{Error, Result};
use crate::integrator::StepControls;
use crate::regularization::RegEps;

/// Environment variable that, when set, replaces `out_dir`.
pub const OUT_DIR_ENV: &str = "TWOLAYER_OUT_DIR";

/// Growth factor of geometric sample spacing between the first and last interval.
const GEOMETRIC_RATIO: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleSpacing {
    #[default]
    Uniform,
    /// Dense near `t = 0`, where the dissipations change fastest.
    Geometric,
}

/// Tolerances of the pass/fail checks written to the summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckSettings {
    /// Relative mass drift allowed at any sample.
    pub mass_rel: f64,
    /// Energy slack per unit time, in units of `rel_tol · max(E1(0), 1)`.
    pub energy_slack_factor: f64,
    /// Entropy slack, in units of `max(E2eps(0), 1)`.
    pub entropy_slack: f64,
}

impl Default for CheckSettings {
    fn default() -> Self {
        Self { mass_rel: 1e-13, energy_slack_factor: 10.0, entropy_slack: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub n: usize,
    pub eps: RegEps,
    /// Quadrature size; `8(n+1)` when omitted.
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    pub phys: PhysParams,
    #[serde(rename = "T_end")]
    pub t_end: f64,
    pub sample_count: usize,
    #[serde(default)]
    pub sample_spacing: SampleSpacing,
    #[serde(default)]
    pub controls: StepControls,
    pub initial: InitialDataSpec,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub checks: CheckSettings,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::from_toml_with_overrides::<&str>(text, &[])
    }

    /// Parse `text`, apply `key.path=value` overrides, validate.
    pub fn from_toml_with_overrides<S: AsRef<str>>(text: &str, overrides: &[S]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text)?;
        for o in overrides {
            apply_override(&mut table, o.as_ref())?;
        }
        let cfg: RunConfig = toml::Value::Table(table).try_into()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load<S: AsRef<str>>(path: &Path, overrides: &[S]) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_with_overrides(&text, overrides)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn quadrature_size(&self) -> usize {
        self.m.unwrap_or_else(|| default_grid_size(self.n))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("n must be at least 1".into()));
        }
        let m = self.quadrature_size();
        if m < 4 * (self.n + 1) {
            return Err(Error::Config(format!("M = {m} must be at least 4(n+1) = {}", 4 * (self.n + 1))));
        }
        if self.sample_count < 2 {
            return Err(Error::Config("sample_count must be at least 2".into()));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::Config(format!("T_end must be finite and non-negative, got {}", self.t_end)));
        }
        self.controls.validate()?;
        self.initial.validate(self.n, self.phys.length())
    }

    /// Copy with `M` filled in, as embedded in run artifacts.
    pub fn resolved(&self) -> Self {
        Self { m: Some(self.quadrature_size()), ..self.clone() }
    }

    /// Output directory after applying the environment override.
    pub fn effective_out_dir(&self) -> PathBuf {
        match std::env::var_os(OUT_DIR_ENV) {
            Some(v) if !v.is_empty() => PathBuf::from(v),
            _ => self.out_dir.clone(),
        }
    }

    pub fn basis_table(&self) -> Result<BasisTable> {
        BasisTable::new(self.n, make_grid(self.quadrature_size(), self.phys.length())?)
    }

    /// Sample times from `0` to `T_end`, both included.
    pub fn sample_times(&self) -> Vec<f64> {
        let k = self.sample_count;
        let t = self.t_end;
        let mut ts: Vec<f64> = (0..k)
            .map(|i| {
                let s = i as f64 / (k - 1) as f64;
                match self.sample_spacing {
                    SampleSpacing::Uniform => t * s,
                    SampleSpacing::Geometric => t * ((1.0 + GEOMETRIC_RATIO).powf(s) - 1.0) / GEOMETRIC_RATIO,
                }
            })
            .collect();
        ts[0] = 0.0;
        ts[k - 1] = t;
        ts
    }
}

/// Set `key.path` in `table` to `value`. The value is read as a TOML
/// literal and falls back to a bare string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override '{assignment}' is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(Error::Config(format!("bad override key '{key}'")));
    }
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    let (last, path) = parts.split_last().expect("non-empty key");
    let mut cur = table;
    for p in path {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override '{key}': '{p}' is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Clipped cosine-squared bump on a constant level:
/// `level + height·cos²(π(x − center)/width)` for `|x − center| < width/2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bump {
    #[serde(default)]
    pub level: f64,
    pub height: f64,
    pub center: f64,
    pub width: f64,
}

impl Bump {
    pub fn value(&self, x: f64) -> f64 {
        let u = (x - self.center) / self.width;
        if u.abs() < 0.5 {
            self.level + self.height * (std::f64::consts::PI * u).cos().powi(2)
        } else {
            self.level
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        if self.level >= 0.0 && self.height >= 0.0 && self.width > 0.0 && self.center.is_finite() {
            Ok(())
        } else {
            Err(Error::Config(format!("bump '{name}' needs level, height >= 0 and width > 0")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialDataSpec {
    Flat {
        f_level: f64,
        g_level: f64,
    },
    /// `level + amp·cos(mode·πx/L)`, plus optional seeded noise with
    /// amplitude `noise/k²` on every mode `k ≥ 1`.
    CosineBump {
        f_level: f64,
        g_level: f64,
        f_amp: f64,
        g_amp: f64,
        #[serde(default = "one")]
        mode: usize,
        #[serde(default)]
        noise: f64,
    },
    CompactSupportTouchingZero {
        f: Bump,
        g: Bump,
    },
    /// Raw coefficients; shorter vectors are zero-padded to `n + 1`.
    Coefficients {
        f_coeffs: Vec<f64>,
        g_coeffs: Vec<f64>,
    },
    /// Piecewise-linear profiles through `(x, f)` and `(x, g)`.
    Tabulated {
        x: Vec<f64>,
        f: Vec<f64>,
        g: Vec<f64>,
    },
}

fn one() -> usize {
    1
}

/// Initial state and the most negative synthesized grid value of each layer.
#[derive(Debug, Clone)]
pub struct InitialData {
    pub state: State,
    pub undershoot_f: f64,
    pub undershoot_g: f64,
}

/// Tolerance on negative grid values of initial data that is represented exactly.
pub const EXACT_UNDERSHOOT_TOL: f64 = 1e-12;

impl InitialDataSpec {
    fn validate(&self, n: usize, length: f64) -> Result<()> {
        match self {
            Self::Flat { f_level, g_level } => {
                if *f_level < 0.0 || *g_level < 0.0 {
                    return Err(Error::Config("flat levels must be non-negative".into()));
                }
            }
            Self::CosineBump { mode, noise, .. } => {
                if *mode > n {
                    return Err(Error::Config(format!("cosine_bump mode {mode} exceeds n = {n}")));
                }
                if *noise < 0.0 {
                    return Err(Error::Config("noise must be non-negative".into()));
                }
            }
            Self::CompactSupportTouchingZero { f, g } => {
                f.validate("f")?;
                g.validate("g")?;
            }
            Self::Coefficients { f_coeffs, g_coeffs } => {
                if f_coeffs.len() > n + 1 || g_coeffs.len() > n + 1 {
                    return Err(Error::Config(format!("more than n+1 = {} coefficients given", n + 1)));
                }
            }
            Self::Tabulated { x, f, g } => {
                let sorted = x.windows(2).all(|w| w[0] < w[1]);
                let covers = x.first() == Some(&0.0) && x.last().is_some_and(|&l| (l - length).abs() <= 1e-12 * length);
                if x.len() < 2 || f.len() != x.len() || g.len() != x.len() || !sorted || !covers {
                    return Err(Error::Config(
                        "tabulated data needs matching lengths and increasing x from 0 to L".into(),
                    ));
                }
                if f.iter().chain(g).any(|v| *v < 0.0) {
                    return Err(Error::Config("tabulated values must be non-negative".into()));
                }
            }
        }
        Ok(())
    }

    /// Build the Galerkin initial state on `table`.
    pub fn build(&self, table: &BasisTable, seed: u64) -> Result<InitialData> {
        let n = table.n();
        let length = table.length();
        let half = (length / 2.0).sqrt();
        let (f, g, exact) = match self {
            Self::Flat { f_level, g_level } => (
                SpectralCoeffs::constant(n, length, *f_level),
                SpectralCoeffs::constant(n, length, *g_level),
                true,
            ),
            Self::CosineBump { f_level, g_level, f_amp, g_amp, mode, noise } => {
                let mut f = SpectralCoeffs::constant(n, length, *f_level);
                let mut g = SpectralCoeffs::constant(n, length, *g_level);
                if *mode > 0 {
                    f.as_mut_slice()[*mode] += f_amp * half;
                    g.as_mut_slice()[*mode] += g_amp * half;
                } else {
                    f.as_mut_slice()[0] += f_amp * length.sqrt();
                    g.as_mut_slice()[0] += g_amp * length.sqrt();
                }
                if *noise > 0.0 {
                    // one stream per layer, so the draws for mode k do not depend on n
                    for (stream, c) in [&mut f, &mut g].into_iter().enumerate() {
                        let mut rng = ChaCha8Rng::seed_from_u64(seed);
                        rng.set_stream(stream as u64);
                        for (k, v) in c.as_mut_slice().iter_mut().enumerate().skip(1) {
                            *v += noise * half * rng.random_range(-1.0..1.0) / (k * k) as f64;
                        }
                    }
                }
                (f, g, true)
            }
            Self::CompactSupportTouchingZero { f, g } => {
                let nodes = table.grid().nodes();
                let fv: Vec<f64> = nodes.iter().map(|&x| f.value(x)).collect();
                let gv: Vec<f64> = nodes.iter().map(|&x| g.value(x)).collect();
                (
                    SpectralCoeffs::new(table.project(&fv, 0), length)?,
                    SpectralCoeffs::new(table.project(&gv, 0), length)?,
                    false,
                )
            }
            Self::Coefficients { f_coeffs, g_coeffs } => {
                let pad = |c: &[f64]| {
                    let mut v = c.to_vec();
                    v.resize(n + 1, 0.0);
                    SpectralCoeffs::new(v, length)
                };
                (pad(f_coeffs)?, pad(g_coeffs)?, true)
            }
            Self::Tabulated { x, f, g } => {
                let nodes = table.grid().nodes();
                let fv: Vec<f64> = nodes.iter().map(|&p| interp(x, f, p)).collect();
                let gv: Vec<f64> = nodes.iter().map(|&p| interp(x, g, p)).collect();
                (
                    SpectralCoeffs::new(table.project(&fv, 0), length)?,
                    SpectralCoeffs::new(table.project(&gv, 0), length)?,
                    false,
                )
            }
        };
        let state = State::new(f, g, 0.0)?;
        let (min_f, min_g) = crate::diagnostics::grid_minima(&state, table);
        if exact && (min_f < -EXACT_UNDERSHOOT_TOL || min_g < -EXACT_UNDERSHOOT_TOL) {
            return Err(Error::Config(format!(
                "initial data is negative on the grid (min f = {min_f:e}, min g = {min_g:e})"
            )));
        }
        Ok(InitialData { state, undershoot_f: min_f.min(0.0), undershoot_g: min_g.min(0.0) })
    }
}

fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let i = xs.partition_point(|&p| p <= x).clamp(1, xs.len() - 1);
    let (x0, x1, y0, y1) = (xs[i - 1], xs[i], ys[i - 1], ys[i]);
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMOKE: &str = r#"
n = 16
eps = 0.1
T_end = 1.0
sample_count = 11

[phys]
A = 2.0
B = 1.0
L = 1.0

[initial]
kind = "cosine_bump"
f_level = 1.0
g_level = 1.0
f_amp = 0.3
g_amp = -0.2
"#;

    #[test]
    fn parses_with_defaults() {
        let c = RunConfig::from_toml_str(SMOKE).unwrap();
        assert_eq!(c.quadrature_size(), 136);
        assert_eq!(c.controls, StepControls::default());
        assert_eq!(c.sample_times().len(), 11);
        assert_eq!(c.sample_times()[10], 1.0);
        assert_eq!(c.resolved().m, Some(136));
    }

    #[test]
    fn dotted_overrides() {
        let c = RunConfig::from_toml_with_overrides(
            SMOKE,
            &["eps=0.01", "phys.A=3", "controls.scheme=fully_implicit_euler", "initial.mode=2"],
        )
        .unwrap();
        assert_eq!(c.eps.get(), 0.01);
        assert_eq!(c.phys.a(), 3.0);
        assert_eq!(c.controls.scheme, crate::integrator::Scheme::FullyImplicitEuler);
        assert!(matches!(c.initial, InitialDataSpec::CosineBump { mode: 2, .. }));
    }

    #[test]
    fn rejects_invalid() {
        assert!(RunConfig::from_toml_with_overrides(SMOKE, &["M=40"]).is_err());
        assert!(RunConfig::from_toml_with_overrides(SMOKE, &["sample_count=1"]).is_err());
        assert!(RunConfig::from_toml_with_overrides(SMOKE, &["eps=0"]).is_err());
        assert!(RunConfig::from_toml_with_overrides(SMOKE, &["phys.B=5"]).is_err());
        assert!(RunConfig::from_toml_with_overrides(SMOKE, &["bogus=1"]).is_err());
        assert!(RunConfig::from_toml_with_overrides(SMOKE, &["eps"]).is_err());
        assert!(RunConfig::from_toml_with_overrides(SMOKE, &["eps.x=1"]).is_err());
    }

    #[test]
    fn toml_round_trip() {
        let c = RunConfig::from_toml_str(SMOKE).unwrap().resolved();
        let back = RunConfig::from_toml_str(&c.to_toml_string().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn geometric_samples_are_increasing() {
        let c = RunConfig::from_toml_with_overrides(SMOKE, &["sample_spacing=\"geometric\"", "sample_count=50"]).unwrap();
        let ts = c.sample_times();
        assert!(ts.windows(2).all(|w| w[0] < w[1]));
        assert!(ts[1] < 1e-5);
        assert_eq!(*ts.last().unwrap(), 1.0);
    }

    #[test]
    fn cosine_bump_is_exact() {
        let c = RunConfig::from_toml_str(SMOKE).unwrap();
        let table = c.basis_table().unwrap();
        let init = c.initial.build(&table, 0).unwrap();
        for &x in &[0.0, 0.3, 0.77, 1.0] {
            let want = 1.0 + 0.3 * (std::f64::consts::PI * x).cos();
            assert!((init.state.f.eval(x, 0).unwrap() - want).abs() < 1e-14);
        }
        assert_eq!(init.undershoot_f, 0.0);
    }

    #[test]
    fn negative_exact_data_rejected() {
        let c = RunConfig::from_toml_with_overrides(SMOKE, &["initial.f_amp=1.5"]).unwrap();
        assert!(c.initial.build(&c.basis_table().unwrap(), 0).is_err());
    }

    #[test]
    fn noise_is_seeded() {
        let c = RunConfig::from_toml_with_overrides(SMOKE, &["initial.noise=0.01"]).unwrap();
        let table = c.basis_table().unwrap();
        let a = c.initial.build(&table, 5).unwrap().state;
        let b = c.initial.build(&table, 5).unwrap().state;
        let d = c.initial.build(&table, 6).unwrap().state;
        assert_eq!(a, b);
        assert_ne!(a, d);
        let wide = RunConfig::from_toml_with_overrides(SMOKE, &["initial.noise=0.01", "n=24"]).unwrap();
        let w = wide.initial.build(&wide.basis_table().unwrap(), 5).unwrap().state;
        assert_eq!(&w.f.as_slice()[..17], a.f.as_slice());
        assert_eq!(&w.g.as_slice()[..17], a.g.as_slice());
    }

    #[test]
    fn compact_bump_touches_zero_with_small_undershoot() {
        let spec = InitialDataSpec::CompactSupportTouchingZero {
            f: Bump { level: 0.0, height: 1.0, center: 0.5, width: 0.5 },
            g: Bump { level: 0.5, height: 0.5, center: 0.3, width: 0.4 },
        };
        let table = BasisTable::with_default_grid(32, 1.0).unwrap();
        let init = spec.build(&table, 0).unwrap();
        assert!(init.undershoot_f < 0.0 && init.undershoot_f > -1e-2);
        assert_eq!(init.undershoot_g, 0.0);
        assert!((init.state.f.eval(0.5, 0).unwrap() - 1.0).abs() < 1e-2);
    }

    #[test]
    fn tabulated_interpolates() {
        assert_eq!(interp(&[0.0, 1.0, 2.0], &[0.0, 2.0, 0.0], 0.5), 1.0);
        assert_eq!(interp(&[0.0, 1.0, 2.0], &[0.0, 2.0, 0.0], 1.5), 1.0);
        assert_eq!(interp(&[0.0, 1.0, 2.0], &[0.0, 2.0, 0.0], 2.0), 0.0);
        let spec = InitialDataSpec::Tabulated { x: vec![0.0, 1.0], f: vec![1.0, 1.0], g: vec![2.0, 2.0] };
        let table = BasisTable::with_default_grid(4, 1.0).unwrap();
        let s = spec.build(&table, 0).unwrap().state;
        assert!((s.g.eval(0.4, 0).unwrap() - 2.0).abs() < 1e-13);
    }
}
