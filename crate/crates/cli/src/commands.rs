//! Subcommand implementations.

use std::f64::consts::{FRAC_1_SQRT_2, TAU};
use std::path::Path;

use anyhow::{Context, Result};
use gatefind_core::optimize::{alternating_optimize, TerminationReason, TraceEvent};
use gatefind_core::propagate::{propagate_goat, propagate_state};
use gatefind_core::{
    build_terms, objective_grad_alpha, objective_value, propagate_unitary, ControlProblem, ControlVector, Error,
    Objective, ObjectiveKind, C64,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::artifacts::{self, Summary, TraceWriter};
use crate::config::{ConfigFile, Overrides, RunConfig};
use crate::spectrum::{magnitude_spectrum, sample_field};
use crate::{AlphaArgs, Cli, Command, Failure, GlobalArgs, ToleranceArgs};

pub const SPECTRUM_POINTS: usize = 1 << 20;
pub const SPECTRUM_MAX_GHZ: f64 = 20.0;
pub const POPULATION_SAMPLES: usize = 1001;

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Optimize => {
            let rc = resolve(&cli.global, None)?;
            let summary = optimize(&rc, true)?;
            fail_on_integration(&summary)
        }
        Command::Propagate {
            alpha,
            state,
            samples,
            tolerances,
        } => {
            let rc = with_tolerances(resolve(&cli.global, None)?, tolerances)?;
            let a = alpha_source(&alpha, &rc, false)?;
            propagate(&rc, &a, &state, samples)
        }
        Command::Spectrum {
            alpha,
            points,
            no_carrier,
            max_freq_ghz,
        } => {
            let rc = resolve(&cli.global, None)?;
            let a = alpha_source(&alpha, &rc, false)?;
            spectrum(&rc, &a, points, !no_carrier, max_freq_ghz)
        }
        Command::Gradcheck {
            alpha,
            step,
            threshold,
            tolerances,
        } => {
            let rc = with_tolerances(resolve(&cli.global, None)?, tolerances)?;
            let a = alpha_source(&alpha, &rc, true)?;
            let max = gradcheck(&rc, &a, step)?;
            if max > threshold {
                return Err(Failure::GradCheck { max, threshold }.into());
            }
            Ok(())
        }
        Command::SchemaCheck { dir } => {
            let problems = artifacts::schema_check(&dir)?;
            if problems.is_empty() {
                println!("{}: ok", dir.display());
                Ok(())
            } else {
                Err(Failure::Schema(problems).into())
            }
        }
        Command::Compare => compare(&cli.global),
    }
}

fn resolve(global: &GlobalArgs, kind: Option<ObjectiveKind>) -> Result<RunConfig> {
    let file = global.config.as_deref().map(ConfigFile::load).transpose()?;
    let ov = Overrides {
        preset: global.preset,
        seed: global.seed,
        out: global.out.clone(),
        kind,
    };
    Ok(RunConfig::resolve(file.as_ref(), &ov)?)
}

fn with_tolerances(mut rc: RunConfig, tol: ToleranceArgs) -> Result<RunConfig> {
    rc.integrator.rel_tol = tol.rel_tol;
    rc.integrator.abs_tol = tol.abs_tol;
    rc.integrator.validate().map_err(|e| Failure::Config(e.to_string()))?;
    Ok(rc)
}

fn alpha_source(args: &AlphaArgs, rc: &RunConfig, allow_seeded: bool) -> Result<ControlVector> {
    if let Some(list) = &args.alpha {
        let v: Vec<f64> = list
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| Failure::Config(format!("--alpha: {e}")))?;
        return Ok(ControlVector::new(v).map_err(|e| Failure::Config(format!("--alpha: {e}")))?);
    }
    if let Some(p) = &args.alpha_from {
        let s =
            Summary::read(&artifacts::summary_path(p)).map_err(|e| Failure::Config(format!("--alpha-from: {e:#}")))?;
        return Ok(ControlVector::new(s.alpha).map_err(|e| Failure::Config(format!("--alpha-from: {e}")))?);
    }
    if rc.alpha0_explicit || allow_seeded {
        return Ok(rc.alpha0.clone());
    }
    Err(Failure::Config("no pulse given: pass --alpha, --alpha-from, or set initial.alpha in the config".into()).into())
}

fn output_dir(rc: &RunConfig) -> Result<&Path> {
    std::fs::create_dir_all(&rc.output_dir).with_context(|| format!("creating {}", rc.output_dir.display()))?;
    Ok(&rc.output_dir)
}

fn integration(e: Error) -> anyhow::Error {
    match e {
        Error::Integration { .. } => Failure::Integration(e.to_string()).into(),
        other => other.into(),
    }
}

/// Initial state by name: `hadamard-control` is `(|00⟩ + |10⟩)/√2`.
pub fn initial_state(name: &str, levels: usize) -> Result<Vec<C64>, Failure> {
    let mut psi = vec![C64::new(0.0, 0.0); levels * levels];
    match name {
        "hadamard-control" => {
            psi[0] = C64::new(FRAC_1_SQRT_2, 0.0);
            psi[levels] = C64::new(FRAC_1_SQRT_2, 0.0);
        }
        "ground" => psi[0] = C64::new(1.0, 0.0),
        label => {
            let digits: Vec<usize> = label
                .trim_start_matches('|')
                .trim_end_matches('>')
                .chars()
                .map(|c| c.to_digit(10).map(|d| d as usize))
                .collect::<Option<_>>()
                .filter(|d: &Vec<usize>| d.len() == 2 && d.iter().all(|&x| x < levels))
                .ok_or_else(|| {
                    Failure::Config(format!(
                        "unknown state `{label}`; use hadamard-control, ground, or two level digits like 10"
                    ))
                })?;
            psi[digits[0] * levels + digits[1]] = C64::new(1.0, 0.0);
        }
    }
    Ok(psi)
}

pub fn propagate(rc: &RunConfig, alpha: &ControlVector, state: &str, samples: usize) -> Result<()> {
    let psi0 = initial_state(state, rc.device.levels)?;
    let terms = build_terms(&rc.device)?;
    let traj = propagate_state(&terms, alpha, &rc.shape, &rc.integrator, &psi0, samples).map_err(integration)?;
    let dir = output_dir(rc)?;
    let path = dir.join(artifacts::POPULATIONS);
    artifacts::write_populations(&path, &traj, rc.device.levels)?;
    println!("wrote {} ({} samples)", path.display(), traj.times.len());
    Ok(())
}

pub fn spectrum(rc: &RunConfig, alpha: &ControlVector, points: usize, carrier: bool, max_freq_ghz: f64) -> Result<()> {
    if points < 2 {
        return Err(Failure::Config("--points must be at least 2".into()).into());
    }
    let dir = output_dir(rc)?;
    let x = sample_field(alpha, &rc.shape, points, carrier);
    let spec = magnitude_spectrum(&x, rc.shape.duration / points as f64, max_freq_ghz);
    artifacts::write_spectrum(&dir.join(artifacts::SPECTRUM), &spec)?;
    artifacts::write_transitions(&dir.join(artifacts::TRANSITIONS), &rc.device, rc.shape.carrier_freq)?;
    println!(
        "wrote {} ({} bins)",
        dir.join(artifacts::SPECTRUM).display(),
        spec.len()
    );
    Ok(())
}

/// `|a − n| / max(|a|, |n|)`, or 0 when both are below `1e-8`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale < 1e-8 {
        0.0
    } else {
        (analytic - numeric).abs() / scale
    }
}

/// Returns the largest relative error over all parameters.
pub fn gradcheck(rc: &RunConfig, alpha: &ControlVector, step: f64) -> Result<f64> {
    let terms = build_terms(&rc.device)?;
    let objective = Objective::new(rc.kind, rc.target.clone(), rc.device.levels)?;
    let mut rng = ChaCha8Rng::seed_from_u64(rc.rng_seed);
    let theta: Option<Vec<f64>> =
        (rc.kind != ObjectiveKind::G0).then(|| (0..rc.kind.n_angles()).map(|_| rng.gen_range(0.0..TAU)).collect());
    let goat = propagate_goat(&terms, alpha, &rc.shape, &rc.integrator).map_err(integration)?;
    let analytic = objective_grad_alpha(&objective, &goat, theta.as_deref())?;
    let value = |a: &ControlVector| -> Result<f64> {
        let u = propagate_unitary(&terms, a, &rc.shape, &rc.integrator).map_err(integration)?;
        Ok(objective_value(&objective, &u.u, theta.as_deref())?)
    };
    let dir = output_dir(rc)?;
    let path = dir.join(artifacts::GRADCHECK);
    let mut w = csv::Writer::from_path(&path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(artifacts::GRADCHECK_HEADER)?;
    let mut worst: f64 = 0.0;
    for (k, &a) in analytic.iter().enumerate() {
        let fd = (value(&alpha.shifted(k, step))? - value(&alpha.shifted(k, -step))?) / (2.0 * step);
        let rel = relative_error(a, fd);
        worst = worst.max(rel);
        w.write_record([
            k.to_string(),
            ControlVector::param_label(k),
            format!("{a:e}"),
            format!("{fd:e}"),
            format!("{:e}", (a - fd).abs()),
            format!("{rel:e}"),
        ])?;
    }
    w.flush()?;
    println!(
        "max relative error {worst:e} over {} parameters ({})",
        analytic.len(),
        path.display()
    );
    Ok(worst)
}

/// Runs one optimization and writes every artifact into the run directory.
pub fn optimize(rc: &RunConfig, verbose: bool) -> Result<Summary> {
    let dir = output_dir(rc)?;
    std::fs::write(dir.join(artifacts::CONFIG), rc.resolved.to_toml())?;
    let problem = ControlProblem::new(
        rc.kind,
        rc.target.clone(),
        &rc.device,
        rc.shape.clone(),
        rc.alpha0.clone(),
        rc.integrator,
    )?;
    let mut writer = TraceWriter::create(dir, rc.kind.n_angles())?;
    let mut write_error: Option<anyhow::Error> = None;
    let result = alternating_optimize(&problem, &rc.optimizer, &mut |ev| {
        let r = match ev {
            TraceEvent::Iteration(rec) => {
                if verbose {
                    println!(
                        "[{}] iter {:>4}  objective {:.6e}  |grad| {:.3e}",
                        rc.kind.name(),
                        rec.iteration,
                        rec.objective,
                        rec.grad_inf_norm
                    );
                }
                writer.iteration(rec)
            }
            TraceEvent::Refresh(rec) => writer.refresh(rec),
        };
        if let (Err(e), None) = (r, &write_error) {
            write_error = Some(e);
        }
    })?;
    if let Some(e) = write_error {
        return Err(e);
    }

    let alpha = &result.alpha;
    artifacts::write_pulse(&dir.join(artifacts::PULSE), alpha, &rc.shape)?;
    let x = sample_field(alpha, &rc.shape, SPECTRUM_POINTS, true);
    let spec = magnitude_spectrum(&x, rc.shape.duration / SPECTRUM_POINTS as f64, SPECTRUM_MAX_GHZ);
    artifacts::write_spectrum(&dir.join(artifacts::SPECTRUM), &spec)?;
    artifacts::write_transitions(&dir.join(artifacts::TRANSITIONS), &rc.device, rc.shape.carrier_freq)?;
    let psi0 = initial_state("hadamard-control", rc.device.levels)?;
    match propagate_state(
        &problem.terms,
        alpha,
        &rc.shape,
        &rc.integrator,
        &psi0,
        POPULATION_SAMPLES,
    ) {
        Ok(traj) => artifacts::write_populations(&dir.join(artifacts::POPULATIONS), &traj, rc.device.levels)?,
        Err(e) => eprintln!("populations not written: {e}"),
    }

    let summary = Summary {
        preset: rc.preset.name(),
        kind: rc.kind.name().to_string(),
        target: format!("{:?}", rc.target_name).to_lowercase(),
        rng_seed: rc.rng_seed,
        duration_ns: rc.shape.duration,
        n_terms: rc.n_terms,
        final_objective: result.objective,
        best_trace_objective: result.trace.best_objective(),
        termination: result.termination.as_str().to_string(),
        iterations: result.trace.iterations.last().map_or(0, |r| r.iteration),
        theta_refreshes: result.trace.refreshes.len(),
        goat_solves: result.goat_solves,
        unitary_solves: result.unitary_solves,
        alpha: alpha.as_slice().to_vec(),
        theta: result.theta.clone(),
        alpha0: rc.alpha0.as_slice().to_vec(),
        failure: result.failure.clone(),
    };
    summary.write(&dir.join(artifacts::SUMMARY))?;
    println!(
        "[{}] {} after {} iterations: objective {:.6e} ({})",
        rc.kind.name(),
        summary.termination,
        summary.iterations,
        summary.final_objective,
        dir.display()
    );
    Ok(summary)
}

fn fail_on_integration(summary: &Summary) -> Result<()> {
    if summary.termination == TerminationReason::IntegrationFailure.as_str() {
        let msg = summary.failure.clone().unwrap_or_else(|| "integration failed".into());
        return Err(Failure::Integration(msg).into());
    }
    Ok(())
}

/// G0, G1 and G2 from one seed, each in its own subdirectory, run
/// concurrently.
pub fn compare(global: &GlobalArgs) -> Result<()> {
    let base = resolve(global, None)?;
    let kinds = [ObjectiveKind::G0, ObjectiveKind::G1, ObjectiveKind::G2];
    let configs: Vec<RunConfig> = kinds
        .iter()
        .map(|&k| {
            let g = GlobalArgs {
                out: Some(base.output_dir.join(k.name())),
                ..global.clone()
            };
            resolve(&g, Some(k))
        })
        .collect::<Result<_>>()?;
    let results: Vec<Result<Summary>> = std::thread::scope(|s| {
        let handles: Vec<_> = configs.iter().map(|rc| s.spawn(move || optimize(rc, false))).collect();
        handles
            .into_iter()
            .map(|h| {
                h.join()
                    .unwrap_or_else(|_| Err(anyhow::anyhow!("optimization thread panicked")))
            })
            .collect()
    });
    let dir = output_dir(&base)?;
    let path = dir.join(artifacts::COMPARE);
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(artifacts::COMPARE_HEADER)?;
    let mut summaries = Vec::new();
    for r in results {
        let s = r?;
        w.write_record([
            s.kind.clone(),
            format!("{:e}", s.duration_ns),
            format!("{:e}", s.best_trace_objective),
            format!("{:e}", s.final_objective),
            s.iterations.to_string(),
            s.goat_solves.to_string(),
            s.unitary_solves.to_string(),
            s.termination.clone(),
        ])?;
        summaries.push(s);
    }
    w.flush()?;
    println!("wrote {}", path.display());
    summaries.iter().try_for_each(fail_on_integration)
}
