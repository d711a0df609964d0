//! Discrete Fourier magnitude of the control field.

use gatefind_core::pulse::{basis_sum, saturate, window};
use gatefind_core::{control_field, ControlVector, PulseShape};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// Field sampled at `points` uniform times in `[0, T)`.
///
/// With `carrier = false` the carrier factor is dropped, leaving the
/// envelope `ε(t) S(f(t))`, which isolates the basis frequencies.
pub fn sample_field(alpha: &ControlVector, shape: &PulseShape, points: usize, carrier: bool) -> Vec<f64> {
    let dt = shape.duration / points as f64;
    (0..points)
        .map(|i| {
            let t = i as f64 * dt;
            if carrier {
                control_field(alpha, t, shape)
            } else {
                shape.drive_scale * window(t, shape).unwrap_or(0.0) * saturate(basis_sum(alpha, t), shape)
            }
        })
        .collect()
}

/// One-sided magnitude spectrum `(frequency in GHz, |X_k|·Δt)`.
///
/// The samples are zero-padded to the next power of two and transformed
/// with a rectangular window. Bins above `max_freq_ghz` are dropped.
pub fn magnitude_spectrum(samples: &[f64], dt: f64, max_freq_ghz: f64) -> Vec<(f64, f64)> {
    let m = samples.len().next_power_of_two();
    let mut buf: Vec<Complex<f64>> = samples.iter().map(|&x| Complex::new(x, 0.0)).collect();
    buf.resize(m, Complex::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(m).process(&mut buf);
    let df = 1.0 / (m as f64 * dt);
    buf.iter()
        .take(m / 2 + 1)
        .enumerate()
        .map(|(k, z)| (k as f64 * df, z.norm() * dt))
        .take_while(|(f, _)| *f <= max_freq_ghz)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use gatefind_core::Saturation;
    use std::f64::consts::TAU;

    fn shape(duration: f64, ramp: f64) -> PulseShape {
        PulseShape {
            saturation_bound: TAU * 0.08,
            gain: 4.0,
            window_height: TAU * 0.03,
            ramp_fraction: ramp,
            duration,
            carrier_freq: TAU * 4.914,
            saturation: Saturation::Logistic,
            drive_scale: 1.0,
        }
    }

    fn peak(spec: &[(f64, f64)]) -> (f64, f64) {
        spec.iter()
            .copied()
            .fold((0.0, -1.0), |a, b| if b.1 > a.1 { b } else { a })
    }

    #[test]
    fn single_tone_peaks_at_its_frequency() {
        // reference DFT peak: a pure tone at ν/2π lands within one bin
        let s = shape(200.0, 1e-3);
        let nu_ghz = 0.125;
        let a = ControlVector::from_triples(&[(0.01, TAU * nu_ghz, 0.3)]).unwrap();
        let n = 1 << 14;
        let x = sample_field(&a, &s, n, false);
        let dt = s.duration / n as f64;
        let spec = magnitude_spectrum(&x, dt, 2.0);
        let df = spec[1].0;
        let (f, _) = peak(&spec);
        assert!((f - nu_ghz).abs() <= df, "{f} vs {nu_ghz}");
    }

    #[test]
    fn carrier_dominates_with_default_settings() {
        let s = shape(200.0, 0.3);
        let a = ControlVector::from_triples(&[(0.01, 0.2, 0.0), (0.005, -0.5, 1.0)]).unwrap();
        let n = 1 << 16;
        let x = sample_field(&a, &s, n, true);
        let spec = magnitude_spectrum(&x, s.duration / n as f64, 20.0);
        let (f, _) = peak(&spec);
        assert!((f - 4.914).abs() < 0.1, "{f}");
    }

    #[test]
    fn zero_alpha_gives_zero_spectrum() {
        let s = shape(50.0, 0.3);
        let x = sample_field(&ControlVector::zeros(3), &s, 1000, true);
        let spec = magnitude_spectrum(&x, 0.05, 20.0);
        assert!(spec.iter().all(|&(_, m)| m == 0.0));
    }

    #[test]
    fn padding_and_bin_spacing() {
        let spec = magnitude_spectrum(&vec![1.0; 1000], 0.5, f64::INFINITY);
        assert_eq!(spec.len(), 1024 / 2 + 1);
        assert!((spec[1].0 - 1.0 / (1024.0 * 0.5)).abs() < 1e-15);
        // DC bin of a constant is N·dt
        assert!((spec[0].1 - 500.0).abs() < 1e-9);
    }
}
