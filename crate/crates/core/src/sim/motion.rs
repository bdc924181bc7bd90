//! Target motion models and the dynamic path gain they induce.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::C64;

/// One stretch of constant Doppler shift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DopplerSegment {
    /// Seconds.
    pub duration: f64,
    /// Hz.
    pub doppler: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Motion {
    Static,
    /// Periodic displacement along the line of sight, e.g. chest motion.
    Sinusoid {
        /// Meters.
        amplitude: f64,
        /// Hz.
        frequency: f64,
    },
    /// Piecewise-constant Doppler; zero after the last segment.
    Gesture { segments: Vec<DopplerSegment> },
}

impl Default for Motion {
    fn default() -> Self {
        Motion::Sinusoid {
            amplitude: 0.005,
            frequency: 0.25,
        }
    }
}

impl Motion {
    pub fn validate(&self) -> Result<()> {
        match self {
            Motion::Static => Ok(()),
            Motion::Sinusoid { amplitude, frequency } => {
                if !(amplitude.is_finite() && *amplitude >= 0.0 && frequency.is_finite() && *frequency >= 0.0) {
                    return Err(invalid(format!(
                        "sinusoid needs finite nonnegative amplitude and frequency, got {amplitude}, {frequency}"
                    )));
                }
                Ok(())
            }
            Motion::Gesture { segments } => {
                for (i, s) in segments.iter().enumerate() {
                    if !(s.duration.is_finite() && s.duration >= 0.0 && s.doppler.is_finite()) {
                        return Err(invalid(format!("gesture segment {i} is malformed")));
                    }
                }
                Ok(())
            }
        }
    }

    /// Two-way phase of the target path at `t` seconds.
    pub fn phase(&self, t: f64, wavelength: f64) -> f64 {
        match self {
            Motion::Static => 0.0,
            Motion::Sinusoid { amplitude, frequency } => {
                -4.0 * PI * amplitude * (2.0 * PI * frequency * t).sin() / wavelength
            }
            Motion::Gesture { segments } => {
                let mut start = 0.0;
                let mut phase = 0.0;
                for s in segments {
                    let dt = (t - start).clamp(0.0, s.duration);
                    phase += 2.0 * PI * s.doppler * dt;
                    start += s.duration;
                    if t <= start {
                        break;
                    }
                }
                phase
            }
        }
    }
}

/// `a_s * e^{j phase(t)}`, shared by every row.
pub fn synthesize_dynamic_gain(motion: &Motion, a_s: C64, t: f64, wavelength: f64) -> C64 {
    a_s * C64::from_polar(1.0, motion.phase(t, wavelength))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rustfft::FftPlanner;

    const LAMBDA: f64 = 0.0574;

    #[test]
    fn zero_amplitude_is_constant() {
        let m = Motion::Sinusoid {
            amplitude: 0.0,
            frequency: 0.3,
        };
        let a = C64::new(0.2, -0.7);
        for j in 0..50 {
            assert_eq!(synthesize_dynamic_gain(&m, a, j as f64 * 0.13, LAMBDA), a);
        }
    }

    #[test]
    fn eighth_wavelength_swings_quarter_turn() {
        let m = Motion::Sinusoid {
            amplitude: LAMBDA / 8.0,
            frequency: 0.25,
        };
        let a = C64::new(1.0, 0.0);
        let peak = synthesize_dynamic_gain(&m, a, 1.0, LAMBDA);
        let trough = synthesize_dynamic_gain(&m, a, 3.0, LAMBDA);
        assert!((peak.arg() + PI / 2.0).abs() < 1e-12);
        assert!((trough.arg() - PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn phase_spectrum_peaks_at_motion_rate() {
        let m = Motion::Sinusoid {
            amplitude: 0.004,
            frequency: 0.25,
        };
        let (rate, n) = (20.0, 1600);
        let mut buf: Vec<rustfft::num_complex::Complex64> = (0..n)
            .map(|j| C64::new(m.phase(j as f64 / rate, LAMBDA), 0.0))
            .collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let peak = (1..n / 2).max_by(|&a, &b| buf[a].norm().total_cmp(&buf[b].norm())).unwrap();
        assert!((peak as f64 * rate / n as f64 - 0.25).abs() < 1e-9);
    }

    #[test]
    fn gesture_integrates_doppler() {
        let m = Motion::Gesture {
            segments: vec![
                DopplerSegment { duration: 0.5, doppler: 2.0 },
                DopplerSegment { duration: 0.25, doppler: -4.0 },
            ],
        };
        assert!((m.phase(0.25, LAMBDA) - PI).abs() < 1e-12);
        assert!((m.phase(0.5, LAMBDA) - 2.0 * PI).abs() < 1e-12);
        assert!(m.phase(0.75, LAMBDA).abs() < 1e-12);
        assert!(m.phase(5.0, LAMBDA).abs() < 1e-12);
    }
}
