//! Run configuration: TOML files layered over named presets.
//!
//! Physical inputs use the lab convention: frequencies and energies as
//! `X/2π` in GHz, times in ns. They are converted to rad/ns on load.

use std::f64::consts::TAU;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use gatefind_core::gates::{cnot, cphase};
use gatefind_core::optimize::initial_alpha;
use gatefind_core::{
    dressed_frequency, CMatrix, ControlVector, DeviceModel, DriveTarget, EnsembleConfig, Frame, IntegratorConfig,
    ObjectiveKind, OptimizerConfig, PulseShape, Saturation, C64,
};
use serde::{Deserialize, Serialize};

use crate::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Table1,
    Desk,
}

/// A named starting point: hardware family plus objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Preset {
    pub family: Family,
    pub kind: ObjectiveKind,
}

impl Preset {
    pub const ALL: [&'static str; 6] = ["table1-g0", "table1-g1", "table1-g2", "desk-g0", "desk-g1", "desk-g2"];

    pub fn name(&self) -> String {
        let family = match self.family {
            Family::Table1 => "table1",
            Family::Desk => "desk",
        };
        format!("{family}-{}", self.kind.name())
    }

    /// Default control time for an objective within this family.
    pub fn duration_ns(family: Family, kind: ObjectiveKind) -> f64 {
        match (family, kind) {
            (Family::Table1, ObjectiveKind::G2) => 100.0,
            (Family::Table1, _) => 200.0,
            (Family::Desk, ObjectiveKind::G2) => 25.0,
            (Family::Desk, _) => 50.0,
        }
    }

    fn file(&self) -> ConfigFile {
        let (n_terms, max_iters) = match self.family {
            Family::Table1 => (22, 400),
            Family::Desk => (6, 150),
        };
        let opt = OptimizerConfig::default();
        let fast = IntegratorConfig::fast();
        ConfigFile {
            preset: Some(self.name()),
            rng_seed: Some(0),
            output_dir: Some(PathBuf::from("runs").join(self.name())),
            device: DeviceSection {
                omega1_ghz: Some(5.114),
                omega2_ghz: Some(4.914),
                delta1_ghz: Some(-0.330),
                delta2_ghz: Some(-0.330),
                coupling_ghz: Some(0.0038),
                levels: Some(3),
                drive: Some(DriveTarget::Transmon1),
            },
            pulse: PulseSection {
                n_terms: Some(n_terms),
                duration_ns: None,
                ramp_fraction: Some(0.3),
                saturation_bound_ghz: Some(0.08),
                gain: Some(4.0),
                window_height_ghz: Some(0.03),
                saturation: Some(Saturation::Logistic),
                drive_scale: Some(1.0),
                carrier_ghz: None,
            },
            objective: ObjectiveSection {
                kind: Some(self.kind),
                target: Some(TargetName::Cnot),
                target_file: None,
            },
            optimizer: OptimizerSection {
                lbfgs_memory: Some(opt.lbfgs_memory),
                backtrack_shrink: Some(opt.backtrack_shrink),
                armijo: Some(opt.armijo),
                max_line_search_shrinks: Some(opt.max_line_search_shrinks),
                max_goat_iterations: Some(max_iters),
                goat_iters_per_theta_refresh: Some(opt.goat_iters_per_theta_refresh),
                grad_inf_tol: Some(opt.grad_inf_tol),
                rel_change_tol: Some(opt.rel_change_tol),
                first_step_inf: Some(opt.first_step_inf),
                max_step_inf: Some(opt.max_step_inf),
                ensemble_starts: Some(opt.ensemble.starts),
                ensemble_max_iters: Some(opt.ensemble.max_iters),
                ensemble_f_tol: Some(opt.ensemble.f_tol),
                ensemble_initial_step: Some(opt.ensemble.initial_step),
            },
            integrator: IntegratorSection {
                rel_tol: Some(fast.rel_tol),
                abs_tol: Some(fast.abs_tol),
                initial_step_ns: Some(fast.initial_step),
                max_step_ns: Some(fast.max_step),
                max_steps: Some(fast.max_steps),
                frame: Some(fast.frame),
            },
            initial: InitialSection::default(),
        }
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (family, kind) = s
            .split_once('-')
            .ok_or_else(|| format!("unknown preset `{s}`; expected one of {}", Preset::ALL.join(", ")))?;
        let family = match family {
            "table1" => Family::Table1,
            "desk" => Family::Desk,
            _ => {
                return Err(format!(
                    "unknown preset `{s}`; expected one of {}",
                    Preset::ALL.join(", ")
                ))
            }
        };
        let kind = match kind {
            "g0" => ObjectiveKind::G0,
            "g1" => ObjectiveKind::G1,
            "g2" => ObjectiveKind::G2,
            _ => {
                return Err(format!(
                    "unknown preset `{s}`; expected one of {}",
                    Preset::ALL.join(", ")
                ))
            }
        };
        Ok(Preset { family, kind })
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetName {
    Cnot,
    Cphase,
    /// 4×4 matrix read from `target_file`.
    Custom,
}

macro_rules! section {
    ($(#[$m:meta])* $name:ident { $($(#[$fm:meta])* $field:ident : $ty:ty),* $(,)? }) => {
        $(#[$m])*
        #[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
        #[serde(deny_unknown_fields)]
        pub struct $name {
            $($(#[$fm])* #[serde(default, skip_serializing_if = "Option::is_none")] pub $field: Option<$ty>,)*
        }

        impl $name {
            /// Fields set in `other` win.
            pub fn overlay(&mut self, other: &Self) {
                $(if other.$field.is_some() { self.$field = other.$field.clone(); })*
            }
        }
    };
}

section!(
    /// Device parameters in GHz (`X/2π`).
    DeviceSection {
        omega1_ghz: f64,
        omega2_ghz: f64,
        delta1_ghz: f64,
        delta2_ghz: f64,
        coupling_ghz: f64,
        levels: usize,
        drive: DriveTarget,
    }
);

section!(PulseSection {
    n_terms: usize,
    /// Defaults by family and objective when unset.
    duration_ns: f64,
    ramp_fraction: f64,
    saturation_bound_ghz: f64,
    gain: f64,
    window_height_ghz: f64,
    saturation: Saturation,
    drive_scale: f64,
    /// Defaults to the dressed frequency of transmon 2.
    carrier_ghz: f64,
});

section!(ObjectiveSection {
    kind: ObjectiveKind,
    target: TargetName,
    /// Four rows of eight numbers: `re im` pairs per column.
    target_file: PathBuf,
});

section!(OptimizerSection {
    lbfgs_memory: usize,
    backtrack_shrink: f64,
    armijo: f64,
    max_line_search_shrinks: usize,
    max_goat_iterations: usize,
    goat_iters_per_theta_refresh: usize,
    grad_inf_tol: f64,
    rel_change_tol: f64,
    first_step_inf: f64,
    max_step_inf: f64,
    ensemble_starts: usize,
    ensemble_max_iters: usize,
    ensemble_f_tol: f64,
    ensemble_initial_step: f64,
});

section!(IntegratorSection {
    rel_tol: f64,
    abs_tol: f64,
    initial_step_ns: f64,
    max_step_ns: f64,
    max_steps: usize,
    frame: Frame,
});

section!(
    InitialSection {
        /// Flat `[amp, freq, phase, …]` list in rad/ns and rad; drawn from
        /// the seed when absent.
        alpha: Vec<f64>,
    }
);

/// On-disk layout. Every field is optional so files only list overrides.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rng_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub device: DeviceSection,
    #[serde(default)]
    pub pulse: PulseSection,
    #[serde(default)]
    pub objective: ObjectiveSection,
    #[serde(default)]
    pub optimizer: OptimizerSection,
    #[serde(default)]
    pub integrator: IntegratorSection,
    #[serde(default)]
    pub initial: InitialSection,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, Failure> {
        toml::from_str(text).map_err(|e| Failure::Config(e.to_string().trim_end().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut file = Self::parse(&text).map_err(|e| match e {
            Failure::Config(m) => Failure::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        // relative target files are resolved against the config's directory
        if let (Some(tf), Some(dir)) = (&file.objective.target_file, path.parent()) {
            if tf.is_relative() {
                file.objective.target_file = Some(dir.join(tf));
            }
        }
        Ok(file)
    }

    pub fn overlay(&mut self, other: &Self) {
        if other.preset.is_some() {
            self.preset = other.preset.clone();
        }
        if other.rng_seed.is_some() {
            self.rng_seed = other.rng_seed;
        }
        if other.output_dir.is_some() {
            self.output_dir = other.output_dir.clone();
        }
        self.device.overlay(&other.device);
        self.pulse.overlay(&other.pulse);
        self.objective.overlay(&other.objective);
        self.optimizer.overlay(&other.optimizer);
        self.integrator.overlay(&other.integrator);
        self.initial.overlay(&other.initial);
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Command-line overrides applied after the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub preset: Option<Preset>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub kind: Option<ObjectiveKind>,
}

/// Fully resolved run settings in internal units.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub preset: Preset,
    /// Snapshot that reproduces this run when fed back in.
    pub resolved: ConfigFile,
    pub device: DeviceModel,
    pub shape: PulseShape,
    pub n_terms: usize,
    pub kind: ObjectiveKind,
    pub target_name: TargetName,
    pub target: CMatrix,
    pub optimizer: OptimizerConfig,
    pub integrator: IntegratorConfig,
    pub rng_seed: u64,
    pub output_dir: PathBuf,
    pub alpha0: ControlVector,
    /// Whether `alpha0` came from the file rather than the seed.
    pub alpha0_explicit: bool,
}

fn need<T: Clone>(v: &Option<T>, name: &str) -> Result<T, Failure> {
    v.clone()
        .ok_or_else(|| Failure::Config(format!("missing value for `{name}`")))
}

fn bad(name: &str, e: impl fmt::Display) -> Failure {
    Failure::Config(format!("invalid `{name}`: {e}"))
}

/// Reads a 4×4 complex matrix: four lines of `re im` pairs, separated by
/// whitespace or commas; `#` starts a comment.
pub fn read_matrix_file(path: &Path) -> Result<CMatrix, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("cannot read target file {}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let nums: Vec<f64> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| Failure::Config(format!("{}:{}: not a number: `{s}`", path.display(), lineno + 1)))
            })
            .collect::<Result<_, _>>()?;
        if nums.len() != 8 {
            return Err(Failure::Config(format!(
                "{}:{}: expected 8 numbers (re/im pairs), found {}",
                path.display(),
                lineno + 1,
                nums.len()
            )));
        }
        rows.push(nums);
    }
    if rows.len() != 4 {
        return Err(Failure::Config(format!(
            "{}: expected 4 rows, found {}",
            path.display(),
            rows.len()
        )));
    }
    Ok(CMatrix::from_fn(4, 4, |i, j| {
        C64::new(rows[i][2 * j], rows[i][2 * j + 1])
    }))
}

impl RunConfig {
    /// Preset, then file, then command-line overrides.
    pub fn resolve(file: Option<&ConfigFile>, ov: &Overrides) -> Result<Self, Failure> {
        let preset = match (ov.preset, file.and_then(|f| f.preset.as_deref())) {
            (Some(p), _) => p,
            (None, Some(name)) => name.parse().map_err(Failure::Config)?,
            (None, None) => Preset {
                family: Family::Table1,
                kind: ObjectiveKind::G0,
            },
        };
        let mut merged = preset.file();
        if let Some(f) = file {
            merged.overlay(f);
        }
        merged.preset = Some(preset.name());
        if let Some(seed) = ov.seed {
            merged.rng_seed = Some(seed);
        }
        if let Some(out) = &ov.out {
            merged.output_dir = Some(out.clone());
        }
        if let Some(kind) = ov.kind {
            merged.objective.kind = Some(kind);
        }
        let kind = need(&merged.objective.kind, "objective.kind")?;
        if merged.pulse.duration_ns.is_none() {
            merged.pulse.duration_ns = Some(Preset::duration_ns(preset.family, kind));
        }
        Self::from_resolved(preset, merged)
    }

    fn from_resolved(preset: Preset, resolved: ConfigFile) -> Result<Self, Failure> {
        let d = &resolved.device;
        let device = DeviceModel {
            omega1: TAU * need(&d.omega1_ghz, "device.omega1_ghz")?,
            omega2: TAU * need(&d.omega2_ghz, "device.omega2_ghz")?,
            delta1: TAU * need(&d.delta1_ghz, "device.delta1_ghz")?,
            delta2: TAU * need(&d.delta2_ghz, "device.delta2_ghz")?,
            coupling: TAU * need(&d.coupling_ghz, "device.coupling_ghz")?,
            levels: need(&d.levels, "device.levels")?,
            drive: need(&d.drive, "device.drive")?,
        };
        device.validate().map_err(|e| bad("device", e))?;

        let p = &resolved.pulse;
        let carrier = match p.carrier_ghz {
            Some(ghz) => TAU * ghz,
            None => dressed_frequency(&device).map_err(|e| bad("pulse.carrier_ghz", e))?,
        };
        let shape = PulseShape {
            saturation_bound: TAU * need(&p.saturation_bound_ghz, "pulse.saturation_bound_ghz")?,
            gain: need(&p.gain, "pulse.gain")?,
            window_height: TAU * need(&p.window_height_ghz, "pulse.window_height_ghz")?,
            ramp_fraction: need(&p.ramp_fraction, "pulse.ramp_fraction")?,
            duration: need(&p.duration_ns, "pulse.duration_ns")?,
            carrier_freq: carrier,
            saturation: need(&p.saturation, "pulse.saturation")?,
            drive_scale: need(&p.drive_scale, "pulse.drive_scale")?,
        };
        shape.validate().map_err(|e| bad("pulse", e))?;
        let n_terms = need(&p.n_terms, "pulse.n_terms")?;
        if n_terms == 0 {
            return Err(bad("pulse.n_terms", "must be positive"));
        }

        let o = &resolved.objective;
        let kind = need(&o.kind, "objective.kind")?;
        let target_name = need(&o.target, "objective.target")?;
        let target = match target_name {
            TargetName::Cnot => cnot(),
            TargetName::Cphase => cphase(),
            TargetName::Custom => {
                let path = o.target_file.as_ref().ok_or_else(|| {
                    Failure::Config("objective.target = \"custom\" needs objective.target_file".into())
                })?;
                let m = read_matrix_file(path)?;
                if !m.is_unitary(1e-12) {
                    return Err(bad("objective.target_file", "matrix is not unitary to 1e-12"));
                }
                m
            }
        };

        let q = &resolved.optimizer;
        let rng_seed = need(&resolved.rng_seed, "rng_seed")?;
        let optimizer = OptimizerConfig {
            lbfgs_memory: need(&q.lbfgs_memory, "optimizer.lbfgs_memory")?,
            backtrack_shrink: need(&q.backtrack_shrink, "optimizer.backtrack_shrink")?,
            armijo: need(&q.armijo, "optimizer.armijo")?,
            max_line_search_shrinks: need(&q.max_line_search_shrinks, "optimizer.max_line_search_shrinks")?,
            max_goat_iterations: need(&q.max_goat_iterations, "optimizer.max_goat_iterations")?,
            goat_iters_per_theta_refresh: need(
                &q.goat_iters_per_theta_refresh,
                "optimizer.goat_iters_per_theta_refresh",
            )?,
            grad_inf_tol: need(&q.grad_inf_tol, "optimizer.grad_inf_tol")?,
            rel_change_tol: need(&q.rel_change_tol, "optimizer.rel_change_tol")?,
            first_step_inf: need(&q.first_step_inf, "optimizer.first_step_inf")?,
            max_step_inf: need(&q.max_step_inf, "optimizer.max_step_inf")?,
            rng_seed,
            ensemble: EnsembleConfig {
                starts: need(&q.ensemble_starts, "optimizer.ensemble_starts")?,
                max_iters: need(&q.ensemble_max_iters, "optimizer.ensemble_max_iters")?,
                f_tol: need(&q.ensemble_f_tol, "optimizer.ensemble_f_tol")?,
                initial_step: need(&q.ensemble_initial_step, "optimizer.ensemble_initial_step")?,
            },
        };
        optimizer.validate().map_err(|e| bad("optimizer", e))?;

        let i = &resolved.integrator;
        let integrator = IntegratorConfig {
            rel_tol: need(&i.rel_tol, "integrator.rel_tol")?,
            abs_tol: need(&i.abs_tol, "integrator.abs_tol")?,
            initial_step: need(&i.initial_step_ns, "integrator.initial_step_ns")?,
            max_step: need(&i.max_step_ns, "integrator.max_step_ns")?,
            max_steps: need(&i.max_steps, "integrator.max_steps")?,
            frame: need(&i.frame, "integrator.frame")?,
        };
        integrator.validate().map_err(|e| bad("integrator", e))?;

        let (alpha0, alpha0_explicit) = match &resolved.initial.alpha {
            Some(v) => {
                let a = ControlVector::new(v.clone()).map_err(|e| bad("initial.alpha", e))?;
                if a.n_terms() != n_terms {
                    return Err(bad(
                        "initial.alpha",
                        format!("has {} terms but pulse.n_terms = {n_terms}", a.n_terms()),
                    ));
                }
                (a, true)
            }
            None => (initial_alpha(n_terms, &shape, rng_seed), false),
        };

        let output_dir = need(&resolved.output_dir, "output_dir")?;
        Ok(Self {
            preset,
            resolved,
            device,
            shape,
            n_terms,
            kind,
            target_name,
            target,
            optimizer,
            integrator,
            rng_seed,
            output_dir,
            alpha0,
            alpha0_explicit,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse_and_round_trip() {
        for name in Preset::ALL {
            let p: Preset = name.parse().unwrap();
            assert_eq!(p.name(), name);
        }
        assert!("table2-g0".parse::<Preset>().is_err());
        assert!("desk-g3".parse::<Preset>().is_err());
    }

    #[test]
    fn durations_follow_objective() {
        let ov = |p: &str| Overrides {
            preset: Some(p.parse().unwrap()),
            ..Default::default()
        };
        let d = |p: &str| RunConfig::resolve(None, &ov(p)).unwrap().shape.duration;
        assert_eq!(d("table1-g0"), 200.0);
        assert_eq!(d("table1-g1"), 200.0);
        assert_eq!(d("table1-g2"), 100.0);
        assert_eq!(d("desk-g0"), 50.0);
        assert_eq!(d("desk-g2"), 25.0);
        // switching the kind in the file keeps the family's default
        let file = ConfigFile::parse("[objective]\nkind = \"g2\"\n").unwrap();
        let rc = RunConfig::resolve(Some(&file), &ov("table1-g0")).unwrap();
        assert_eq!(rc.shape.duration, 100.0);
    }

    #[test]
    fn units_are_converted_once() {
        let rc = RunConfig::resolve(None, &Overrides::default()).unwrap();
        assert_eq!(rc.device.omega1, TAU * 5.114);
        assert_eq!(rc.shape.saturation_bound, TAU * 0.08);
        assert_eq!(rc.shape.window_height, TAU * 0.03);
        assert_eq!(rc.shape.gain, 4.0);
        assert_eq!(rc.n_terms, 22);
        assert_eq!(rc.optimizer.max_goat_iterations, 400);
        assert!((rc.shape.carrier_freq / TAU - 4.914).abs() < 1e-3);
    }

    #[test]
    fn unknown_fields_are_named() {
        let err = ConfigFile::parse("[pulse]\nduration = 5\n").unwrap_err();
        assert!(err.to_string().contains("duration"), "{err}");
        let err = ConfigFile::parse("rng_seed = \"x\"\n").unwrap_err();
        assert!(err.to_string().contains("rng_seed"), "{err}");
    }

    #[test]
    fn resolved_snapshot_reproduces_itself() {
        let file = ConfigFile::parse(
            "preset = \"desk-g1\"\nrng_seed = 9\n[pulse]\nn_terms = 2\nduration_ns = 7.5\n[optimizer]\nmax_goat_iterations = 3\n",
        )
        .unwrap();
        let a = RunConfig::resolve(Some(&file), &Overrides::default()).unwrap();
        let again = ConfigFile::parse(&a.resolved.to_toml()).unwrap();
        assert_eq!(again, a.resolved);
        let b = RunConfig::resolve(Some(&again), &Overrides::default()).unwrap();
        assert_eq!(a.alpha0, b.alpha0);
        assert_eq!(a.shape, b.shape);
        assert_eq!(a.device, b.device);
        assert_eq!(a.optimizer, b.optimizer);
        assert_eq!(a.integrator, b.integrator);
    }

    #[test]
    fn overrides_win() {
        let file = ConfigFile::parse("rng_seed = 1\noutput_dir = \"a\"\n").unwrap();
        let rc = RunConfig::resolve(
            Some(&file),
            &Overrides {
                seed: Some(5),
                out: Some("b".into()),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(rc.rng_seed, 5);
        assert_eq!(rc.output_dir, PathBuf::from("b"));
    }

    #[test]
    fn explicit_alpha_length_checked() {
        let file = ConfigFile::parse("[pulse]\nn_terms = 2\n[initial]\nalpha = [0.1, 0.2, 0.3]\n").unwrap();
        assert!(RunConfig::resolve(Some(&file), &Overrides::default()).is_err());
    }

    #[test]
    fn custom_target_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("swap.txt");
        std::fs::write(
            &path,
            "# SWAP\n1 0 0 0 0 0 0 0\n0 0 0 0 1 0 0 0\n0 0 1 0 0 0 0 0\n0 0 0 0 0 0 1 0\n",
        )
        .unwrap();
        let m = read_matrix_file(&path).unwrap();
        assert_eq!(m.get(1, 2), C64::new(1.0, 0.0));
        assert!(m.is_unitary(0.0));
        std::fs::write(&path, "1 0 0 0\n").unwrap();
        assert!(read_matrix_file(&path).is_err());
    }
}
