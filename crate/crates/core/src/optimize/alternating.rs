//! Alternating optimization: cheap angle searches between short L-BFGS runs
//! on the pulse parameters.

use std::f64::consts::TAU;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::lbfgs::{inf_norm, LbfgsConfig, LbfgsProblem, LbfgsState, StepOutcome};
use crate::device::{build_terms, DeviceModel, HamiltonianTerms};
use crate::error::{invalid, Error, Result};
use crate::matrix::CMatrix;
use crate::objectives::{
    minimize_theta, objective_grad_alpha, objective_value, EnsembleConfig, Objective, ObjectiveKind,
};
use crate::ode::IntegratorConfig;
use crate::propagate::{propagate_goat, propagate_unitary, GoatResult};
use crate::pulse::{ControlVector, PulseShape};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub lbfgs_memory: usize,
    pub backtrack_shrink: f64,
    pub armijo: f64,
    pub max_line_search_shrinks: usize,
    /// Accepted L-BFGS iterations allowed in one run.
    pub max_goat_iterations: usize,
    pub goat_iters_per_theta_refresh: usize,
    pub grad_inf_tol: f64,
    pub rel_change_tol: f64,
    /// `‖Δα‖∞` of the steepest-descent step taken without curvature data.
    pub first_step_inf: f64,
    /// Cap on `‖Δα‖∞` for the first trial point of a line search.
    pub max_step_inf: f64,
    pub rng_seed: u64,
    pub ensemble: EnsembleConfig,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            lbfgs_memory: 10,
            backtrack_shrink: 0.5,
            armijo: 1e-4,
            max_line_search_shrinks: 40,
            max_goat_iterations: 400,
            goat_iters_per_theta_refresh: 5,
            grad_inf_tol: 1e-5,
            rel_change_tol: 1e-6,
            first_step_inf: 0.1,
            max_step_inf: 1.0,
            rng_seed: 0,
            ensemble: EnsembleConfig::default(),
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lbfgs_memory", self.lbfgs_memory),
            ("max_line_search_shrinks", self.max_line_search_shrinks),
            ("max_goat_iterations", self.max_goat_iterations),
            ("goat_iters_per_theta_refresh", self.goat_iters_per_theta_refresh),
            ("ensemble.starts", self.ensemble.starts),
            ("ensemble.max_iters", self.ensemble.max_iters),
        ] {
            if v == 0 {
                return Err(invalid(name, "must be positive"));
            }
        }
        for (name, v) in [
            ("grad_inf_tol", self.grad_inf_tol),
            ("rel_change_tol", self.rel_change_tol),
            ("first_step_inf", self.first_step_inf),
            ("max_step_inf", self.max_step_inf),
            ("armijo", self.armijo),
            ("ensemble.f_tol", self.ensemble.f_tol),
            ("ensemble.initial_step", self.ensemble.initial_step),
        ] {
            if !(v > 0.0) || v.is_nan() {
                return Err(invalid(name, format!("must be positive, got {v}")));
            }
        }
        if !(self.armijo < 1.0) {
            return Err(invalid("armijo", "must be below 1"));
        }
        if !(self.backtrack_shrink > 0.0 && self.backtrack_shrink < 1.0) {
            return Err(invalid("backtrack_shrink", "must lie in (0, 1)"));
        }
        Ok(())
    }

    fn lbfgs(&self) -> LbfgsConfig {
        LbfgsConfig {
            memory: self.lbfgs_memory,
            shrink: self.backtrack_shrink,
            armijo: self.armijo,
            max_shrinks: self.max_line_search_shrinks,
            max_step_inf: self.max_step_inf,
            first_step_inf: self.first_step_inf,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    GradTol,
    RelChange,
    MaxIters,
    IntegrationFailure,
    LineSearchStall,
}

impl TerminationReason {
    pub fn as_str(self) -> &'static str {
        match self {
            TerminationReason::GradTol => "grad_tol",
            TerminationReason::RelChange => "rel_change",
            TerminationReason::MaxIters => "max_iters",
            TerminationReason::IntegrationFailure => "integration_failure",
            TerminationReason::LineSearchStall => "line_search_stall",
        }
    }
}

/// One row per GOAT iteration; row 0 is the starting point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    /// `NaN` when the gradient was not computed (final budget iterate).
    pub grad_inf_norm: f64,
    pub goat_solves: usize,
    pub unitary_solves: usize,
    /// Number of θ refreshes performed so far.
    pub theta_refreshes: usize,
    pub wall_time_s: f64,
}

impl IterationRecord {
    pub fn ode_solves(&self) -> usize {
        self.goat_solves + self.unitary_solves
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefreshRecord {
    pub index: usize,
    /// GOAT iterations completed when the refresh ran.
    pub iteration: usize,
    pub pre: f64,
    pub post: f64,
    pub theta: Vec<f64>,
    pub start_index: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTrace {
    pub iterations: Vec<IterationRecord>,
    pub refreshes: Vec<RefreshRecord>,
}

impl ConvergenceTrace {
    pub fn best_objective(&self) -> f64 {
        let it = self.iterations.iter().map(|r| r.objective);
        let rf = self.refreshes.iter().map(|r| r.post);
        it.chain(rf).filter(|v| v.is_finite()).fold(f64::INFINITY, f64::min)
    }
}

/// Streamed to the observer as the run progresses.
#[derive(Debug, Clone, Copy)]
pub enum TraceEvent<'a> {
    Iteration(&'a IterationRecord),
    Refresh(&'a RefreshRecord),
}

#[derive(Debug, Clone)]
pub struct OptResult {
    pub kind: ObjectiveKind,
    pub alpha: ControlVector,
    pub theta: Option<Vec<f64>>,
    pub objective: f64,
    pub termination: TerminationReason,
    pub trace: ConvergenceTrace,
    pub goat_solves: usize,
    pub unitary_solves: usize,
    /// Message from the integrator when the run ended on a failure.
    pub failure: Option<String>,
}

/// Everything needed to evaluate the objective for a pulse.
#[derive(Debug, Clone)]
pub struct ControlProblem {
    pub objective: Objective,
    pub terms: HamiltonianTerms,
    pub shape: PulseShape,
    pub alpha0: ControlVector,
    pub integrator: IntegratorConfig,
}

impl ControlProblem {
    pub fn new(
        kind: ObjectiveKind,
        target: CMatrix,
        device: &DeviceModel,
        shape: PulseShape,
        alpha0: ControlVector,
        integrator: IntegratorConfig,
    ) -> Result<Self> {
        device.validate()?;
        shape.validate()?;
        integrator.validate()?;
        Ok(Self {
            objective: Objective::new(kind, target, device.levels)?,
            terms: build_terms(device)?,
            shape,
            alpha0,
            integrator,
        })
    }

    pub fn kind(&self) -> ObjectiveKind {
        self.objective.kind
    }

    /// Objective at `(α, θ)` from a fresh value-only propagation.
    pub fn evaluate(&self, alpha: &ControlVector, theta: Option<&[f64]>) -> Result<f64> {
        let u = propagate_unitary(&self.terms, alpha, &self.shape, &self.integrator)?;
        objective_value(&self.objective, &u.u, theta)
    }
}

/// Seeded starting pulse: amplitudes uniform in `±0.1·B/g`, envelope
/// frequencies uniform in `±2π·0.15` rad/ns, phases uniform in `[0, 2π)`.
pub fn initial_alpha(n_terms: usize, shape: &PulseShape, seed: u64) -> ControlVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let amp = 0.1 * shape.saturation_bound / shape.gain;
    let freq = TAU * 0.15;
    let params = (0..n_terms.max(1))
        .flat_map(|_| {
            let a = rng.gen_range(-amp..amp);
            let w = rng.gen_range(-freq..freq);
            let p = rng.gen_range(0.0..TAU);
            [a, w, p]
        })
        .collect();
    ControlVector::new(params).expect("finite parameters")
}

fn refresh_seed(rng_seed: u64, index: usize) -> u64 {
    rng_seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index as u64 + 1)
}

struct Evaluator<'a> {
    problem: &'a ControlProblem,
    theta: Option<Vec<f64>>,
    unitary_solves: usize,
    goat_solves: usize,
    probe_u: Option<CMatrix>,
    current_u: CMatrix,
    current_goat: Option<GoatResult>,
    accepted: usize,
    budget: usize,
}

impl Evaluator<'_> {
    fn alpha(&self, x: &[f64]) -> Result<ControlVector> {
        ControlVector::new(x.to_vec())
    }

    fn unitary(&mut self, x: &[f64]) -> Result<CMatrix> {
        let alpha = self.alpha(x)?;
        self.unitary_solves += 1;
        let r = propagate_unitary(
            &self.problem.terms,
            &alpha,
            &self.problem.shape,
            &self.problem.integrator,
        )?;
        Ok(r.u)
    }

    fn goat_gradient(&mut self, x: &[f64]) -> Result<Vec<f64>> {
        let alpha = self.alpha(x)?;
        self.goat_solves += 1;
        let goat = propagate_goat(
            &self.problem.terms,
            &alpha,
            &self.problem.shape,
            &self.problem.integrator,
        )?;
        let g = objective_grad_alpha(&self.problem.objective, &goat, self.theta.as_deref())?;
        self.current_goat = Some(goat);
        Ok(g)
    }

    /// Gradient at the current iterate for the current θ, without solving.
    fn regradient(&self) -> Result<Vec<f64>> {
        let goat = self.current_goat.as_ref().ok_or(Error::MissingDerivatives)?;
        objective_grad_alpha(&self.problem.objective, goat, self.theta.as_deref())
    }
}

impl LbfgsProblem for Evaluator<'_> {
    type Error = Error;

    fn value(&mut self, x: &[f64]) -> Result<f64> {
        let u = self.unitary(x)?;
        let v = objective_value(&self.problem.objective, &u, self.theta.as_deref())?;
        self.probe_u = Some(u);
        Ok(v)
    }

    fn gradient(&mut self, x: &[f64]) -> Result<Vec<f64>> {
        self.accepted += 1;
        if let Some(u) = self.probe_u.take() {
            self.current_u = u;
        }
        self.current_goat = None;
        if self.accepted >= self.budget {
            // the run ends here; skip the solve
            return Ok(vec![f64::NAN; x.len()]);
        }
        self.goat_gradient(x)
    }
}

fn grad_norm(g: &[f64]) -> f64 {
    if g.iter().any(|v| v.is_nan()) {
        f64::NAN
    } else {
        inf_norm(g)
    }
}

/// Re-optimizes θ at the current unitary; returns `(pre, post)`.
fn refresh(
    problem: &ControlProblem,
    cfg: &OptimizerConfig,
    observer: &mut dyn FnMut(TraceEvent<'_>),
    ev: &mut Evaluator,
    trace: &mut ConvergenceTrace,
    iteration: usize,
) -> Result<(f64, f64)> {
    let f = problem.kind().functional().expect("refresh only for G1/G2");
    let index = trace.refreshes.len();
    let proj = problem.objective.project(&ev.current_u)?;
    let warm = ev.theta.clone().unwrap_or_else(|| vec![0.0; f.n_angles()]);
    let pre = objective_value(&problem.objective, &ev.current_u, Some(&warm))?;
    let fit = minimize_theta(
        f,
        problem.objective.target(),
        &proj,
        ev.theta.as_deref(),
        &cfg.ensemble,
        refresh_seed(cfg.rng_seed, index),
    )?;
    let (theta, post) = if fit.value <= pre {
        (fit.theta, fit.value)
    } else {
        (warm, pre)
    };
    let rec = RefreshRecord {
        index,
        iteration,
        pre,
        post,
        theta: theta.clone(),
        start_index: fit.start_index,
    };
    ev.theta = Some(theta);
    observer(TraceEvent::Refresh(&rec));
    trace.refreshes.push(rec);
    Ok((pre, post))
}

fn record(
    observer: &mut dyn FnMut(TraceEvent<'_>),
    started: Instant,
    ev: &Evaluator,
    trace: &mut ConvergenceTrace,
    iteration: usize,
    value: f64,
    g: &[f64],
) {
    let rec = IterationRecord {
        iteration,
        objective: value,
        grad_inf_norm: grad_norm(g),
        goat_solves: ev.goat_solves,
        unitary_solves: ev.unitary_solves,
        theta_refreshes: trace.refreshes.len(),
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    observer(TraceEvent::Iteration(&rec));
    trace.iterations.push(rec);
}

/// Minimizes the problem's objective over `α` (and `θ` for G1/G2).
///
/// For G1/G2 the angles are re-optimized, warm-started from the incumbent,
/// before the first iteration and after every
/// `goat_iters_per_theta_refresh` accepted iterations. When a tolerance is
/// met or the line search stalls, one more refresh is attempted; the run
/// continues only if it lowers the objective by more than `rel_change_tol`.
///
/// Errors are returned for invalid inputs only; integration failures end
/// the run with [`TerminationReason::IntegrationFailure`] and the best
/// parameters found so far.
pub fn alternating_optimize(
    problem: &ControlProblem,
    cfg: &OptimizerConfig,
    observer: &mut dyn FnMut(TraceEvent<'_>),
) -> Result<OptResult> {
    cfg.validate()?;
    let kind = problem.kind();
    let functional = kind.functional();
    let started = Instant::now();
    let lbfgs = cfg.lbfgs();

    let mut ev = Evaluator {
        problem,
        theta: None,
        unitary_solves: 0,
        goat_solves: 0,
        probe_u: None,
        current_u: CMatrix::identity(problem.terms.dim()),
        current_goat: None,
        accepted: 0,
        budget: cfg.max_goat_iterations,
    };
    let mut trace = ConvergenceTrace::default();

    let finish =
        |ev: &Evaluator, trace: ConvergenceTrace, alpha: Vec<f64>, value: f64, reason, failure: Option<Error>| {
            Ok(OptResult {
                kind,
                alpha: ControlVector::new(alpha)?,
                theta: ev.theta.clone(),
                objective: value,
                termination: reason,
                trace,
                goat_solves: ev.goat_solves,
                unitary_solves: ev.unitary_solves,
                failure: failure.map(|e| e.to_string()),
            })
        };

    let x0 = problem.alpha0.as_slice().to_vec();
    match ev.unitary(&x0) {
        Ok(u) => ev.current_u = u,
        Err(e) => return finish(&ev, trace, x0, f64::NAN, TerminationReason::IntegrationFailure, Some(e)),
    }
    let value = match functional {
        Some(_) => refresh(problem, cfg, observer, &mut ev, &mut trace, 0)?.1,
        None => objective_value(&problem.objective, &ev.current_u, None)?,
    };
    let g0 = match ev.goat_gradient(&x0) {
        Ok(g) => g,
        Err(Error::Integration { .. }) | Err(Error::MissingDerivatives) => {
            return finish(&ev, trace, x0, value, TerminationReason::IntegrationFailure, None)
        }
        Err(e) => return Err(e),
    };

    record(observer, started, &ev, &mut trace, 0, value, &g0);

    let mut state = LbfgsState::new(x0, value, g0);
    let mut since_refresh = 0;
    let mut last_rel_change = f64::INFINITY;
    let reason = loop {
        let stop = if state.iterations >= cfg.max_goat_iterations {
            Some(TerminationReason::MaxIters)
        } else if grad_norm(&state.gradient) < cfg.grad_inf_tol {
            Some(TerminationReason::GradTol)
        } else if last_rel_change < cfg.rel_change_tol {
            Some(TerminationReason::RelChange)
        } else {
            None
        };
        let scheduled = functional.is_some() && since_refresh >= cfg.goat_iters_per_theta_refresh;
        let last_chance =
            functional.is_some() && since_refresh > 0 && stop.is_some_and(|r| r != TerminationReason::MaxIters);
        if scheduled || last_chance {
            let (pre, post) = refresh(problem, cfg, observer, &mut ev, &mut trace, state.iterations)?;
            since_refresh = 0;
            state.value = post;
            state.gradient = ev.regradient()?;
            if last_chance {
                if (pre - post).abs() / pre.abs().max(1e-12) <= cfg.rel_change_tol {
                    break stop.unwrap();
                }
                last_rel_change = f64::INFINITY;
                continue;
            }
        } else if let Some(r) = stop {
            break r;
        }

        match state.step(&mut ev, &lbfgs) {
            Ok(StepOutcome::Accepted { previous, value: v }) => {
                since_refresh += 1;
                last_rel_change = (v - previous).abs() / previous.abs().max(1e-12);
                record(observer, started, &ev, &mut trace, state.iterations, v, &state.gradient);
            }
            Ok(StepOutcome::Stalled) => {
                if functional.is_some() && since_refresh > 0 {
                    // let the refresh-before-stopping branch decide
                    last_rel_change = 0.0;
                    continue;
                }
                break TerminationReason::LineSearchStall;
            }
            Err(e @ Error::Integration { .. }) => {
                // a failed gradient solve leaves the accepted point in state
                if state.iterations > trace.iterations.len() - 1 {
                    record(
                        observer,
                        started,
                        &ev,
                        &mut trace,
                        state.iterations,
                        state.value,
                        &vec![f64::NAN; state.x.len()],
                    );
                }
                return finish(
                    &ev,
                    trace,
                    state.x,
                    state.value,
                    TerminationReason::IntegrationFailure,
                    Some(e),
                );
            }
            Err(e) => return Err(e),
        }
    };
    finish(&ev, trace, state.x, state.value, reason, None)
}
