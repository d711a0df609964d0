//! Limited-memory BFGS with an Armijo backtracking line search.
//!
//! The iteration is exposed step by step ([`LbfgsState::step`]) so callers
//! can interleave other work between iterations, and values and gradients
//! are requested separately: line-search probes only need values.

use std::collections::VecDeque;

/// Objective seen by the optimizer.
pub trait LbfgsProblem {
    type Error;

    /// Value at a line-search probe.
    fn value(&mut self, x: &[f64]) -> Result<f64, Self::Error>;

    /// Gradient at a point whose value was just accepted.
    fn gradient(&mut self, x: &[f64]) -> Result<Vec<f64>, Self::Error>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsConfig {
    /// Number of stored curvature pairs.
    pub memory: usize,
    pub shrink: f64,
    /// Sufficient-decrease constant.
    pub armijo: f64,
    pub max_shrinks: usize,
    /// Cap on `‖step‖∞` for the first trial point of every line search.
    pub max_step_inf: f64,
    /// `‖step‖∞` of the steepest-descent step taken without curvature data.
    pub first_step_inf: f64,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self {
            memory: 10,
            shrink: 0.5,
            armijo: 1e-4,
            max_shrinks: 40,
            max_step_inf: f64::INFINITY,
            first_step_inf: 1.0,
        }
    }
}

/// Outcome of one L-BFGS iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepOutcome {
    /// A point with sufficient decrease was accepted.
    Accepted { previous: f64, value: f64 },
    /// No decrease after the allowed number of shrinks; state unchanged.
    Stalled,
}

/// Iterate plus curvature history.
#[derive(Debug, Clone)]
pub struct LbfgsState {
    pub x: Vec<f64>,
    pub value: f64,
    /// Gradient at `x`; may be replaced by the caller when the objective
    /// changes under a fixed iterate.
    pub gradient: Vec<f64>,
    history: VecDeque<(Vec<f64>, Vec<f64>, f64)>,
    pub iterations: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

impl LbfgsState {
    pub fn new(x: Vec<f64>, value: f64, gradient: Vec<f64>) -> Self {
        Self {
            x,
            value,
            gradient,
            history: VecDeque::new(),
            iterations: 0,
        }
    }

    pub fn clear_history(&mut self) {
        self.history.clear();
    }

    pub fn history_len(&self) -> usize {
        self.history.len()
    }

    /// Two-loop recursion: `-H g`.
    fn direction(&self) -> Vec<f64> {
        let mut q = self.gradient.clone();
        let mut alphas = Vec::with_capacity(self.history.len());
        for (s, y, rho) in self.history.iter().rev() {
            let a = rho * dot(s, &q);
            for (qi, yi) in q.iter_mut().zip(y) {
                *qi -= a * yi;
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = self.history.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in self.history.iter().zip(alphas.into_iter().rev()) {
            let b = rho * dot(y, &q);
            for (qi, si) in q.iter_mut().zip(s) {
                *qi += (a - b) * si;
            }
        }
        q.iter_mut().for_each(|v| *v = -*v);
        q
    }

    /// One iteration: direction, backtracking, gradient at the new point.
    ///
    /// If the gradient evaluation fails the iterate has still moved, so the
    /// accepted point is kept in `x`/`value` before the error is returned.
    pub fn step<P: LbfgsProblem>(&mut self, problem: &mut P, cfg: &LbfgsConfig) -> Result<StepOutcome, P::Error> {
        let mut d = self.direction();
        let mut slope = dot(&d, &self.gradient);
        if !(slope < 0.0) || self.history.is_empty() {
            // no usable curvature: scaled steepest descent
            self.history.clear();
            let gn = inf_norm(&self.gradient);
            if gn == 0.0 {
                return Ok(StepOutcome::Stalled);
            }
            let scale = cfg.first_step_inf / gn;
            d = self.gradient.iter().map(|g| -g * scale).collect();
            slope = dot(&d, &self.gradient);
        }
        let dn = inf_norm(&d);
        let mut t = if dn > cfg.max_step_inf {
            cfg.max_step_inf / dn
        } else {
            1.0
        };

        let mut trial = vec![0.0; self.x.len()];
        for _ in 0..=cfg.max_shrinks {
            for ((o, x), di) in trial.iter_mut().zip(&self.x).zip(&d) {
                *o = x + t * di;
            }
            let f = problem.value(&trial)?;
            if f.is_finite() && f <= self.value + cfg.armijo * t * slope && f < self.value {
                let previous = self.value;
                let s: Vec<f64> = trial.iter().zip(&self.x).map(|(a, b)| a - b).collect();
                self.x.copy_from_slice(&trial);
                self.value = f;
                self.iterations += 1;
                let g = problem.gradient(&self.x)?;
                let y: Vec<f64> = g.iter().zip(&self.gradient).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
                    if self.history.len() == cfg.memory {
                        self.history.pop_front();
                    }
                    self.history.push_back((s, y, 1.0 / sy));
                }
                self.gradient = g;
                return Ok(StepOutcome::Accepted { previous, value: f });
            }
            t *= cfg.shrink;
        }
        Ok(StepOutcome::Stalled)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LbfgsStop {
    GradTol,
    RelChange,
    MaxIters,
    LineSearchStall,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    /// Objective after every accepted step, starting with `f(x0)`.
    pub trace: Vec<f64>,
    pub stop: LbfgsStop,
}

struct Closure<F> {
    f: F,
    cache: Option<(Vec<f64>, Vec<f64>)>,
}

impl<F: FnMut(&[f64]) -> (f64, Vec<f64>)> LbfgsProblem for Closure<F> {
    type Error = std::convert::Infallible;

    fn value(&mut self, x: &[f64]) -> Result<f64, Self::Error> {
        let (v, g) = (self.f)(x);
        self.cache = Some((x.to_vec(), g));
        Ok(v)
    }

    fn gradient(&mut self, x: &[f64]) -> Result<Vec<f64>, Self::Error> {
        match self.cache.take() {
            Some((cx, g)) if cx == x => Ok(g),
            _ => Ok((self.f)(x).1),
        }
    }
}

/// Minimizes a smooth function given as `x ↦ (f(x), ∇f(x))`.
///
/// Stops when `‖∇f‖∞ < grad_tol`, when the relative change
/// `|fᵢ − fᵢ₋₁| / max(|fᵢ₋₁|, 1e−12)` drops below `rel_tol`, after
/// `max_iters` accepted steps, or when the line search stalls.
pub fn lbfgs_minimize<F>(
    f: F,
    x0: &[f64],
    cfg: &LbfgsConfig,
    grad_tol: f64,
    rel_tol: f64,
    max_iters: usize,
) -> LbfgsResult
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let mut problem = Closure { f, cache: None };
    let Ok(v0) = problem.value(x0);
    let Ok(g0) = problem.gradient(x0);
    let mut state = LbfgsState::new(x0.to_vec(), v0, g0);
    let mut trace = vec![v0];
    let stop = loop {
        if inf_norm(&state.gradient) < grad_tol {
            break LbfgsStop::GradTol;
        }
        if state.iterations >= max_iters {
            break LbfgsStop::MaxIters;
        }
        let Ok(outcome) = state.step(&mut problem, cfg);
        match outcome {
            StepOutcome::Stalled => break LbfgsStop::LineSearchStall,
            StepOutcome::Accepted { previous, value } => {
                trace.push(value);
                if (value - previous).abs() / previous.abs().max(1e-12) < rel_tol {
                    break LbfgsStop::RelChange;
                }
            }
        }
    };
    LbfgsResult {
        value: state.value,
        iterations: state.iterations,
        x: state.x,
        trace,
        stop,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rosenbrock(x: &[f64]) -> (f64, Vec<f64>) {
        let (a, b) = (x[0], x[1]);
        let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
        (f, g)
    }

    #[test]
    fn quadratic_bowl_converges_quickly() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let c: Vec<f64> = (0..8).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let x0: Vec<f64> = (0..8).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let f = |x: &[f64]| {
                let v = x.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum();
                let g = x.iter().zip(&c).map(|(a, b)| 2.0 * (a - b)).collect();
                (v, g)
            };
            let r = lbfgs_minimize(f, &x0, &LbfgsConfig::default(), 1e-10, 0.0, 50);
            assert!(r.iterations <= 5, "{} iterations", r.iterations);
            for (a, b) in r.x.iter().zip(&c) {
                assert!((a - b).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn rosenbrock_reaches_minimum() {
        let r = lbfgs_minimize(rosenbrock, &[-1.2, 1.0], &LbfgsConfig::default(), 1e-10, 0.0, 1000);
        assert!(
            (r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6,
            "{:?} {:?}",
            r.x,
            r.stop
        );
    }

    #[test]
    fn accepted_values_strictly_decrease() {
        let r = lbfgs_minimize(rosenbrock, &[-1.2, 1.0], &LbfgsConfig::default(), 1e-10, 0.0, 1000);
        assert!(r.trace.len() > 5);
        for w in r.trace.windows(2) {
            assert!(w[1] < w[0]);
        }
    }

    #[test]
    fn budget_and_stationary_start() {
        let r = lbfgs_minimize(rosenbrock, &[-1.2, 1.0], &LbfgsConfig::default(), 0.0, 0.0, 3);
        assert_eq!(r.stop, LbfgsStop::MaxIters);
        assert_eq!(r.iterations, 3);
        let r = lbfgs_minimize(rosenbrock, &[1.0, 1.0], &LbfgsConfig::default(), 1e-10, 0.0, 3);
        assert_eq!(r.stop, LbfgsStop::GradTol);
        assert_eq!(r.iterations, 0);
    }

    #[test]
    fn wrong_gradient_stalls_instead_of_crashing() {
        // gradient points uphill, so no step can satisfy Armijo
        let f = |x: &[f64]| (x[0] * x[0], vec![-2.0 * x[0]]);
        let r = lbfgs_minimize(f, &[1.0], &LbfgsConfig::default(), 1e-12, 0.0, 10);
        assert_eq!(r.stop, LbfgsStop::LineSearchStall);
        assert_eq!(r.x, vec![1.0]);
    }

    #[test]
    fn step_cap_limits_first_trial() {
        let cfg = LbfgsConfig {
            max_step_inf: 0.25,
            ..Default::default()
        };
        let f = |x: &[f64]| (x[0] * x[0], vec![2.0 * x[0]]);
        let mut p = Closure { f, cache: None };
        let mut st = LbfgsState::new(vec![10.0], 100.0, vec![20.0]);
        st.step(&mut p, &cfg).unwrap();
        assert!((st.x[0] - 9.75).abs() < 1e-15);
    }
}
