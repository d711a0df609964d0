//! Dormand–Prince 5(4) integrator for complex linear systems.
//!
//! Embedded error estimate on the 4th-order solution, local extrapolation
//! (the 5th-order solution is propagated), PI step-size control and the
//! 4th-order continuous extension for dense output. Coefficients follow
//! Hairer, Nørsett & Wanner, "Solving ODEs I", `dopri5`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::matrix::C64;

/// Variables the propagators integrate in. Both return the lab-frame
/// propagator; no terms of the Hamiltonian are dropped in either.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Frame {
    /// Interaction picture of the diagonal part of the drift, mapped back
    /// exactly at output times. The fast bare-energy phases are then
    /// analytic, so far fewer steps are needed for the same accuracy.
    #[default]
    Interaction,
    /// Integrate `U' = -i H U` directly.
    Lab,
}

/// Tolerances and step limits for the adaptive integrator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// First trial step (ns).
    pub initial_step: f64,
    /// Upper bound on any step (ns).
    pub max_step: f64,
    /// Accepted + rejected step budget.
    pub max_steps: usize,
    #[serde(default)]
    pub frame: Frame,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            initial_step: 1e-3,
            max_step: 0.1,
            max_steps: 50_000_000,
            frame: Frame::Interaction,
        }
    }
}

impl IntegratorConfig {
    /// Looser tolerances used inside optimization loops.
    pub fn fast() -> Self {
        Self {
            rel_tol: 1e-6,
            abs_tol: 1e-8,
            ..Self::default()
        }
    }

    pub fn with_tolerances(rel_tol: f64, abs_tol: f64) -> Self {
        Self {
            rel_tol,
            abs_tol,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("rel_tol", self.rel_tol),
            ("abs_tol", self.abs_tol),
            ("initial_step", self.initial_step),
            ("max_step", self.max_step),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(name, format!("must be positive, got {v}")));
            }
        }
        if self.max_steps == 0 {
            return Err(invalid("max_steps", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolveStats {
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub rhs_evals: usize,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

#[inline]
fn combine(out: &mut [C64], y: &[C64], h: f64, terms: &[(f64, &[C64])]) {
    out.copy_from_slice(y);
    for &(c, k) in terms {
        if c == 0.0 {
            continue;
        }
        let s = h * c;
        for (o, &ki) in out.iter_mut().zip(k) {
            *o += ki * s;
        }
    }
}

/// Integrates `y' = rhs(t, y)` from `t0` to `t1`.
///
/// `samples` must be sorted and lie in `[t0, t1]`; `on_sample(i, y)` is
/// called once for each, in order, with the dense-output state.
pub(crate) fn integrate<F, S>(
    mut rhs: F,
    y0: &[C64],
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
    samples: &[f64],
    mut on_sample: S,
) -> Result<(Vec<C64>, SolveStats)>
where
    F: FnMut(f64, &[C64], &mut [C64]),
    S: FnMut(usize, &[C64]),
{
    cfg.validate()?;
    let n = y0.len();
    let mut stats = SolveStats::default();
    let mut y = y0.to_vec();
    let mut next_sample = 0;
    while next_sample < samples.len() && samples[next_sample] <= t0 {
        on_sample(next_sample, &y);
        next_sample += 1;
    }
    if t1 <= t0 {
        for i in next_sample..samples.len() {
            on_sample(i, &y);
        }
        return Ok((y, stats));
    }

    let zero = C64::new(0.0, 0.0);
    let mut k1 = vec![zero; n];
    let mut k2 = vec![zero; n];
    let mut k3 = vec![zero; n];
    let mut k4 = vec![zero; n];
    let mut k5 = vec![zero; n];
    let mut k6 = vec![zero; n];
    let mut k7 = vec![zero; n];
    let mut ytmp = vec![zero; n];
    let mut ynew = vec![zero; n];
    let mut dense = vec![zero; n];

    rhs(t0, &y, &mut k1);
    stats.rhs_evals += 1;

    let mut t = t0;
    let mut h = cfg.initial_step.min(cfg.max_step).min(t1 - t0);
    let mut err_old: f64 = 1e-4;
    let mut last_rejected = false;

    loop {
        if stats.accepted_steps + stats.rejected_steps >= cfg.max_steps {
            return Err(Error::Integration {
                t,
                steps: stats.accepted_steps + stats.rejected_steps,
                step_size: h,
                reason: "step budget exhausted".into(),
            });
        }
        if h < 1e-14 * t.abs().max(1.0) {
            return Err(Error::Integration {
                t,
                steps: stats.accepted_steps + stats.rejected_steps,
                step_size: h,
                reason: "step size underflow".into(),
            });
        }
        let last = t + 1.01 * h >= t1;
        if last {
            h = t1 - t;
        }

        combine(&mut ytmp, &y, h, &[(A21, &k1)]);
        rhs(t + C2 * h, &ytmp, &mut k2);
        combine(&mut ytmp, &y, h, &[(A31, &k1), (A32, &k2)]);
        rhs(t + C3 * h, &ytmp, &mut k3);
        combine(&mut ytmp, &y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]);
        rhs(t + C4 * h, &ytmp, &mut k4);
        combine(&mut ytmp, &y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]);
        rhs(t + C5 * h, &ytmp, &mut k5);
        combine(
            &mut ytmp,
            &y,
            h,
            &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
        );
        let t_new = if last { t1 } else { t + h };
        rhs(t_new, &ytmp, &mut k6);
        combine(
            &mut ynew,
            &y,
            h,
            &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)],
        );
        rhs(t_new, &ynew, &mut k7);
        stats.rhs_evals += 6;

        let mut acc = 0.0;
        for i in 0..n {
            let e = (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6 + k7[i] * E7) * h;
            let sk = cfg.abs_tol + cfg.rel_tol * y[i].norm().max(ynew[i].norm());
            let r = e.norm() / sk;
            acc += r * r;
        }
        let err = (acc / n as f64).sqrt();
        if !err.is_finite() {
            return Err(Error::Integration {
                t,
                steps: stats.accepted_steps + stats.rejected_steps,
                step_size: h,
                reason: "non-finite error estimate".into(),
            });
        }

        let expo = 0.2 - BETA * 0.75;
        let fac11 = err.powf(expo);
        if err <= 1.0 {
            // PI controller
            let fac = (fac11 / err_old.powf(BETA) / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            let mut h_new = (h / fac).min(cfg.max_step);
            if last_rejected {
                h_new = h_new.min(h);
            }
            err_old = err.max(1e-4);
            stats.accepted_steps += 1;

            if next_sample < samples.len() && samples[next_sample] <= t_new {
                // continuous extension coefficients, stored in k2/ytmp/dense
                let ydiff = &mut ytmp;
                for i in 0..n {
                    ydiff[i] = ynew[i] - y[i];
                }
                for i in 0..n {
                    let bspl = k1[i] * h - ydiff[i];
                    k2[i] = bspl;
                    dense[i] = (k1[i] * D1 + k3[i] * D3 + k4[i] * D4 + k5[i] * D5 + k6[i] * D6 + k7[i] * D7) * h;
                    // rcont4 kept in k3, which is no longer needed this step
                    k3[i] = ydiff[i] - k7[i] * h - bspl;
                }
                let mut out = vec![zero; n];
                while next_sample < samples.len() && samples[next_sample] <= t_new {
                    let ts = samples[next_sample];
                    if ts >= t_new {
                        on_sample(next_sample, &ynew);
                    } else {
                        let th = (ts - t) / h;
                        let th1 = 1.0 - th;
                        for i in 0..n {
                            out[i] = y[i] + (ytmp[i] + (k2[i] + (k3[i] + dense[i] * th1) * th) * th1) * th;
                        }
                        on_sample(next_sample, &out);
                    }
                    next_sample += 1;
                }
            }

            std::mem::swap(&mut y, &mut ynew);
            std::mem::swap(&mut k1, &mut k7);
            t = t_new;
            if last {
                break;
            }
            h = h_new;
            last_rejected = false;
        } else {
            h /= (fac11 / SAFETY).min(1.0 / FAC_MIN);
            last_rejected = true;
            if stats.accepted_steps > 0 {
                stats.rejected_steps += 1;
            } else {
                // no error history yet: shrink harder
                stats.rejected_steps += 1;
                h *= 0.5;
            }
        }
    }
    for i in next_sample..samples.len() {
        on_sample(i, &y);
    }
    Ok((y, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn exponential_decay_and_rotation() {
        let cfg = IntegratorConfig::with_tolerances(1e-10, 1e-12);
        // y' = (-0.5 + 3i) y
        let lam = C64::new(-0.5, 3.0);
        let (y, stats) = integrate(|_, y, dy| dy[0] = lam * y[0], &[c(1.0)], 0.0, 2.0, &cfg, &[], |_, _| {}).unwrap();
        let exact = (lam * 2.0).exp();
        assert!((y[0] - exact).norm() < 1e-9, "{} vs {}", y[0], exact);
        assert!(stats.accepted_steps > 10);
        assert_eq!(stats.rhs_evals, 1 + 6 * (stats.accepted_steps + stats.rejected_steps));
    }

    #[test]
    fn time_dependent_scalar_problem() {
        // y' = i cos(t) y  =>  y = exp(i sin t)
        let cfg = IntegratorConfig::with_tolerances(1e-10, 1e-12);
        let (y, _) = integrate(
            |t, y, dy| dy[0] = C64::new(0.0, t.cos()) * y[0],
            &[c(1.0)],
            0.0,
            5.0,
            &cfg,
            &[],
            |_, _| {},
        )
        .unwrap();
        assert!((y[0] - C64::new(0.0, 5f64.sin()).exp()).norm() < 1e-9);
    }

    #[test]
    fn dense_output_hits_requested_times() {
        let cfg = IntegratorConfig {
            max_step: 0.5,
            ..IntegratorConfig::with_tolerances(1e-10, 1e-12)
        };
        let lam = C64::new(0.0, -2.0);
        let samples: Vec<f64> = (0..=40).map(|i| 4.0 * i as f64 / 40.0).collect();
        let mut got = vec![C64::new(0.0, 0.0); samples.len()];
        let mut count = 0;
        let (y, _) = integrate(
            |_, y, dy| dy[0] = lam * y[0],
            &[c(1.0)],
            0.0,
            4.0,
            &cfg,
            &samples,
            |i, y| {
                got[i] = y[0];
                count += 1;
            },
        )
        .unwrap();
        assert_eq!(count, samples.len());
        for (t, g) in samples.iter().zip(&got) {
            assert!((g - (lam * *t).exp()).norm() < 1e-7, "t = {t}");
        }
        assert_eq!(got[0], c(1.0));
        assert_eq!(*got.last().unwrap(), y[0]);
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let cfg = IntegratorConfig {
            max_steps: 5,
            ..IntegratorConfig::with_tolerances(1e-12, 1e-14)
        };
        let err = integrate(
            |_, y, dy| dy[0] = C64::new(0.0, -50.0) * y[0],
            &[c(1.0)],
            0.0,
            10.0,
            &cfg,
            &[],
            |_, _| {},
        )
        .unwrap_err();
        assert!(matches!(err, Error::Integration { .. }));
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = IntegratorConfig {
            rel_tol: 0.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
