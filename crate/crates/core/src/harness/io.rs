//! Run artifacts: CSV time series, JSON snapshots and summary.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::basis::SpectralCoeffs;
use crate::diagnostics::{CheckResult, DiagnosticsRecord};
use crate::dynamics::{PhysParams, State};
use crate::error::{Error, Result};
use crate::harness::config::RunConfig;
use crate::regularization::RegEps;

pub const CSV_HEADER: &str = "t,mass_f,mass_g,E1,E2eps,E2,D1,D2,min_f,min_g,dt_last";
pub const SNAPSHOT_VERSION: u32 = 1;

pub const TIMESERIES_FILE: &str = "timeseries.csv";
pub const SNAPSHOT_INITIAL_FILE: &str = "snapshot_initial.json";
pub const SNAPSHOT_FINAL_FILE: &str = "snapshot_final.json";
pub const SUMMARY_FILE: &str = "summary.json";

fn num(out: &mut String, v: f64) {
    write!(out, "{v:.16e}").expect("write to String");
}

pub fn csv_row(r: &DiagnosticsRecord) -> String {
    let mut s = String::new();
    for (i, v) in [r.t, r.mass_f, r.mass_g, r.e1, r.e2eps].into_iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        num(&mut s, v);
    }
    s.push(',');
    if let Some(e2) = r.e2 {
        num(&mut s, e2);
    }
    for v in [r.d1, r.d2, r.min_f, r.min_g, r.dt_last] {
        s.push(',');
        num(&mut s, v);
    }
    s
}

pub fn csv_string(records: &[DiagnosticsRecord]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in records {
        s.push_str(&csv_row(r));
        s.push('\n');
    }
    s
}

pub fn write_csv(path: &Path, records: &[DiagnosticsRecord]) -> Result<()> {
    std::fs::write(path, csv_string(records))?;
    Ok(())
}

/// Parse a time series written by [`write_csv`].
pub fn read_csv(path: &Path) -> Result<Vec<DiagnosticsRecord>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::Input(format!("{}: unexpected header", path.display())));
    }
    lines
        .map(|line| {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != 11 {
                return Err(Error::Input(format!("bad CSV row: {line}")));
            }
            let p = |i: usize| -> Result<f64> {
                cells[i].parse().map_err(|_| Error::Input(format!("bad number '{}'", cells[i])))
            };
            Ok(DiagnosticsRecord {
                t: p(0)?,
                mass_f: p(1)?,
                mass_g: p(2)?,
                e1: p(3)?,
                e2eps: p(4)?,
                e2: if cells[5].is_empty() { None } else { Some(p(5)?) },
                d1: p(6)?,
                d2: p(7)?,
                min_f: p(8)?,
                min_g: p(9)?,
                dt_last: p(10)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Snapshot {
    pub version: u32,
    pub n: usize,
    #[serde(rename = "L")]
    pub length: f64,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
    pub eps: f64,
    pub t: f64,
    pub f_coeffs: Vec<f64>,
    pub g_coeffs: Vec<f64>,
}

impl Snapshot {
    pub fn new(state: &State, phys: &PhysParams, eps: RegEps) -> Self {
        Self {
            version: SNAPSHOT_VERSION,
            n: state.n(),
            length: state.length(),
            a: phys.a(),
            b: phys.b(),
            eps: eps.get(),
            t: state.t,
            f_coeffs: state.f.as_slice().to_vec(),
            g_coeffs: state.g.as_slice().to_vec(),
        }
    }

    pub fn to_state(&self) -> Result<State> {
        if self.version != SNAPSHOT_VERSION {
            return Err(Error::Input(format!("unsupported snapshot version {}", self.version)));
        }
        if self.f_coeffs.len() != self.n + 1 {
            return Err(Error::Input("snapshot coefficient count does not match n".into()));
        }
        State::new(
            SpectralCoeffs::new(self.f_coeffs.clone(), self.length)?,
            SpectralCoeffs::new(self.g_coeffs.clone(), self.length)?,
            self.t,
        )
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub status: RunStatus,
    pub error: Option<String>,
    pub all_checks_passed: bool,
    pub checks: Vec<CheckResult>,
    pub samples_written: usize,
    pub t_final: f64,
    /// `|E1(T) − E1(0) + ∫D1 dt|` with trapezoidal time quadrature.
    pub energy_identity_defect: f64,
    /// Most negative grid value of the initial data (0 when none).
    pub initial_undershoot_f: f64,
    pub initial_undershoot_g: f64,
    /// Change of the initial `E2eps` and `D1` when the grid is doubled.
    pub quadrature_error: f64,
    pub config: RunConfig,
}

impl RunSummary {
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}
