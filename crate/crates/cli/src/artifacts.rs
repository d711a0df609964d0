//! Artifact files written into a run directory, and their schemas.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use gatefind_core::optimize::{IterationRecord, RefreshRecord};
use gatefind_core::pulse::{basis_sum, window};
use gatefind_core::{control_field, ControlVector, DeviceModel, PulseShape, Trajectory};
use serde::{Deserialize, Serialize};

pub const CONFIG: &str = "config.resolved.toml";
pub const SUMMARY: &str = "summary.json";
pub const TRACE: &str = "trace.csv";
pub const THETA_REFRESH: &str = "theta_refresh.csv";
pub const PULSE: &str = "pulse.csv";
pub const SPECTRUM: &str = "spectrum.csv";
pub const TRANSITIONS: &str = "transitions.csv";
pub const POPULATIONS: &str = "populations.csv";
pub const GRADCHECK: &str = "gradcheck.csv";
pub const COMPARE: &str = "compare.csv";

pub const TRACE_HEADER: [&str; 8] = [
    "iteration",
    "objective",
    "grad_inf_norm",
    "goat_solves",
    "unitary_solves",
    "ode_solves",
    "theta_refreshes",
    "wall_time_s",
];
pub const PULSE_HEADER: [&str; 5] = [
    "time_ns",
    "field_rad_per_ns",
    "envelope_rad_per_ns",
    "window_rad_per_ns",
    "basis_sum",
];
pub const SPECTRUM_HEADER: [&str; 2] = ["frequency_ghz", "magnitude_rad"];
pub const TRANSITIONS_HEADER: [&str; 2] = ["label", "frequency_ghz"];
pub const GRADCHECK_HEADER: [&str; 6] = [
    "index",
    "parameter",
    "analytic",
    "finite_difference",
    "abs_error",
    "rel_error",
];
pub const COMPARE_HEADER: [&str; 8] = [
    "kind",
    "duration_ns",
    "best_objective",
    "final_objective",
    "iterations",
    "goat_solves",
    "unitary_solves",
    "termination",
];
const REFRESH_FIXED: [&str; 5] = ["index", "iteration", "pre_objective", "post_objective", "start_index"];

pub fn refresh_header(n_angles: usize) -> Vec<String> {
    REFRESH_FIXED
        .iter()
        .map(|s| s.to_string())
        .chain((0..n_angles).map(|i| format!("theta_{i}")))
        .collect()
}

pub fn population_header(levels: usize) -> Vec<String> {
    std::iter::once("time_ns".to_string())
        .chain((0..levels * levels).map(|k| format!("p_{}{}", k / levels, k % levels)))
        .collect()
}

fn create(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(csv::Writer::from_writer(BufWriter::new(f)))
}

fn num(x: f64) -> String {
    format!("{x:e}")
}

/// Append-only convergence trace; every row is flushed as it arrives.
pub struct TraceWriter {
    trace: csv::Writer<BufWriter<File>>,
    refresh: Option<csv::Writer<BufWriter<File>>>,
}

impl TraceWriter {
    pub fn create(dir: &Path, n_angles: usize) -> Result<Self> {
        let mut trace = create(&dir.join(TRACE))?;
        trace.write_record(TRACE_HEADER)?;
        trace.flush()?;
        let refresh = if n_angles > 0 {
            let mut w = create(&dir.join(THETA_REFRESH))?;
            w.write_record(refresh_header(n_angles))?;
            w.flush()?;
            Some(w)
        } else {
            None
        };
        Ok(Self { trace, refresh })
    }

    pub fn iteration(&mut self, r: &IterationRecord) -> Result<()> {
        self.trace.write_record([
            r.iteration.to_string(),
            num(r.objective),
            num(r.grad_inf_norm),
            r.goat_solves.to_string(),
            r.unitary_solves.to_string(),
            r.ode_solves().to_string(),
            r.theta_refreshes.to_string(),
            format!("{:.6}", r.wall_time_s),
        ])?;
        self.trace.flush()?;
        Ok(())
    }

    pub fn refresh(&mut self, r: &RefreshRecord) -> Result<()> {
        if let Some(w) = &mut self.refresh {
            let mut row = vec![
                r.index.to_string(),
                r.iteration.to_string(),
                num(r.pre),
                num(r.post),
                r.start_index.to_string(),
            ];
            row.extend(r.theta.iter().map(|&t| num(t)));
            w.write_record(row)?;
            w.flush()?;
        }
        Ok(())
    }
}

/// Samples per ns for the pulse time series; resolves the carrier.
pub const PULSE_SAMPLES_PER_NS: f64 = 50.0;

pub fn write_pulse(path: &Path, alpha: &ControlVector, shape: &PulseShape) -> Result<()> {
    let n = (shape.duration * PULSE_SAMPLES_PER_NS).ceil() as usize;
    let mut w = create(path)?;
    w.write_record(PULSE_HEADER)?;
    for i in 0..=n {
        let t = shape.duration * i as f64 / n as f64;
        let f = basis_sum(alpha, t);
        let eps = window(t, shape).unwrap_or(0.0);
        let env = shape.drive_scale * eps * gatefind_core::pulse::saturate(f, shape);
        w.write_record([num(t), num(control_field(alpha, t, shape)), num(env), num(eps), num(f)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_spectrum(path: &Path, spectrum: &[(f64, f64)]) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(SPECTRUM_HEADER)?;
    for &(f, m) in spectrum {
        w.write_record([num(f), num(m)])?;
    }
    w.flush()?;
    Ok(())
}

/// Lowest device transitions, for annotating spectra.
pub fn transitions(device: &DeviceModel, carrier: f64) -> Vec<(&'static str, f64)> {
    let ghz = |x: f64| x / std::f64::consts::TAU;
    vec![
        ("omega1", ghz(device.omega1)),
        ("omega2", ghz(device.omega2)),
        ("omega1_plus_delta1", ghz(device.omega1 + device.delta1)),
        ("omega2_plus_delta2", ghz(device.omega2 + device.delta2)),
        ("carrier", ghz(carrier)),
    ]
}

pub fn write_transitions(path: &Path, device: &DeviceModel, carrier: f64) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(TRANSITIONS_HEADER)?;
    for (label, f) in transitions(device, carrier) {
        w.write_record([label.to_string(), num(f)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_populations(path: &Path, traj: &Trajectory, levels: usize) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(population_header(levels))?;
    for (t, row) in traj.times.iter().zip(&traj.populations) {
        w.write_record(std::iter::once(num(*t)).chain(row.iter().map(|&p| num(p))))?;
    }
    w.flush()?;
    Ok(())
}

/// Deterministic per-run summary (no timings).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub preset: String,
    pub kind: String,
    pub target: String,
    pub rng_seed: u64,
    pub duration_ns: f64,
    pub n_terms: usize,
    pub final_objective: f64,
    pub best_trace_objective: f64,
    pub termination: String,
    pub iterations: usize,
    pub theta_refreshes: usize,
    pub goat_solves: usize,
    pub unitary_solves: usize,
    pub alpha: Vec<f64>,
    pub theta: Option<Vec<f64>>,
    pub alpha0: Vec<f64>,
    pub failure: Option<String>,
}

impl Summary {
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        serde_json::to_writer_pretty(&mut f, self)?;
        writeln!(f)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        serde_json::from_reader(f).with_context(|| format!("parsing {}", path.display()))
    }
}

/// Accepts a summary file or a run directory containing one.
pub fn summary_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join(SUMMARY)
    } else {
        p.to_path_buf()
    }
}

enum Columns {
    Exact(Vec<String>),
    /// Fixed prefix followed by numbered columns.
    Prefix(Vec<String>, &'static str),
}

fn schema_for(name: &str) -> Option<(Columns, usize)> {
    // second field: number of leading text columns
    let v = |h: &[&str]| h.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    Some(match name {
        TRACE => (Columns::Exact(v(&TRACE_HEADER)), 0),
        PULSE => (Columns::Exact(v(&PULSE_HEADER)), 0),
        SPECTRUM => (Columns::Exact(v(&SPECTRUM_HEADER)), 0),
        TRANSITIONS => (Columns::Exact(v(&TRANSITIONS_HEADER)), 1),
        GRADCHECK => (Columns::Exact(v(&GRADCHECK_HEADER)), 2),
        COMPARE => (Columns::Exact(v(&COMPARE_HEADER)), 1),
        THETA_REFRESH => (Columns::Prefix(v(&REFRESH_FIXED), "theta_"), 0),
        POPULATIONS => (Columns::Prefix(v(&["time_ns"]), "p_"), 0),
        _ => return None,
    })
}

fn check_csv(path: &Path, columns: Columns, text_cols: usize) -> Vec<String> {
    let name = path.file_name().unwrap_or_default().to_string_lossy().to_string();
    let mut problems = Vec::new();
    let mut r = match csv::Reader::from_path(path) {
        Ok(r) => r,
        Err(e) => return vec![format!("{name}: {e}")],
    };
    let header: Vec<String> = match r.headers() {
        Ok(h) => h.iter().map(String::from).collect(),
        Err(e) => return vec![format!("{name}: unreadable header: {e}")],
    };
    let ok = match &columns {
        Columns::Exact(want) => &header == want,
        Columns::Prefix(fixed, prefix) => {
            header.len() > fixed.len()
                && header[..fixed.len()] == fixed[..]
                && header[fixed.len()..].iter().all(|h| h.starts_with(prefix))
        }
    };
    if !ok {
        problems.push(format!("{name}: unexpected header {header:?}"));
        return problems;
    }
    // the compare table's trailing termination column is text too
    let trailing_text = usize::from(name == COMPARE);
    let mut rows = 0usize;
    for (i, rec) in r.records().enumerate() {
        let rec = match rec {
            Ok(rec) => rec,
            Err(e) => {
                problems.push(format!("{name}: row {}: {e}", i + 1));
                continue;
            }
        };
        rows += 1;
        if rec.len() != header.len() {
            problems.push(format!(
                "{name}: row {} has {} fields, header has {}",
                i + 1,
                rec.len(),
                header.len()
            ));
            continue;
        }
        for (j, field) in rec.iter().enumerate() {
            if j < text_cols || j + trailing_text >= rec.len() {
                continue;
            }
            if field.parse::<f64>().is_err() {
                problems.push(format!(
                    "{name}: row {}, column `{}`: not a number: `{field}`",
                    i + 1,
                    header[j]
                ));
            }
        }
    }
    if rows == 0 && name != THETA_REFRESH {
        problems.push(format!("{name}: no data rows"));
    }
    problems
}

/// Validates every known artifact in `dir`; returns the problems found.
pub fn schema_check(dir: &Path) -> Result<Vec<String>> {
    let mut problems = Vec::new();
    let mut known = 0;
    let mut entries: Vec<_> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .collect();
    entries.sort();
    for path in &entries {
        let name = path.file_name().unwrap_or_default().to_string_lossy().to_string();
        if let Some((cols, text)) = schema_for(&name) {
            known += 1;
            problems.extend(check_csv(path, cols, text));
        }
    }
    let summary = dir.join(SUMMARY);
    if summary.exists() {
        known += 1;
        match Summary::read(&summary) {
            Ok(s) => {
                let mut required = vec![CONFIG, TRACE, PULSE, SPECTRUM, TRANSITIONS, POPULATIONS];
                if s.theta.is_some() {
                    required.push(THETA_REFRESH);
                }
                for f in required {
                    if !dir.join(f).exists() {
                        problems.push(format!("missing {f}"));
                    }
                }
            }
            Err(e) => problems.push(format!("{SUMMARY}: {e:#}")),
        }
    }
    let config = dir.join(CONFIG);
    if config.exists() {
        known += 1;
        if let Err(e) = crate::config::ConfigFile::load(&config) {
            problems.push(format!("{CONFIG}: {e}"));
        }
    }
    if known == 0 {
        problems.push(format!("no known artifacts in {}", dir.display()));
    }
    Ok(problems)
}
