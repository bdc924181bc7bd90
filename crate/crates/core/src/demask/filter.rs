//! Zero-phase low-pass smoothing of irregularly sampled CSI.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use super::CsiSample;
use crate::error::{invalid, Result};
use crate::C64;

pub const TAPS: usize = 63;

#[derive(Debug, Clone, PartialEq)]
pub struct Filtered {
    pub samples: Vec<CsiSample>,
    /// Set when the input was returned unfiltered.
    pub warning: Option<String>,
}

/// Blackman-windowed sinc, normalized to unit DC gain. `fc` is in cycles
/// per sample.
pub fn design_kernel(fc: f64) -> Vec<f64> {
    let mid = (TAPS - 1) as f64 / 2.0;
    let mut h: Vec<f64> = (0..TAPS)
        .map(|k| {
            let x = k as f64 - mid;
            let sinc = if x == 0.0 { 2.0 * fc } else { (2.0 * PI * fc * x).sin() / (PI * x) };
            let a = 2.0 * PI * k as f64 / (TAPS - 1) as f64;
            sinc * (0.42 - 0.5 * a.cos() + 0.08 * (2.0 * a).cos())
        })
        .collect();
    let sum: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v /= sum);
    h
}

/// Linear interpolation of `values` at `t`, clamped to the end points.
/// `times` must be sorted.
fn interpolate(times: &[f64], values: &[DMatrix<C64>], t: f64) -> DMatrix<C64> {
    let i = times.partition_point(|&x| x <= t);
    if i == 0 {
        return values[0].clone();
    }
    if i == times.len() {
        return values[i - 1].clone();
    }
    let (t0, t1) = (times[i - 1], times[i]);
    let f = if t1 > t0 { (t - t0) / (t1 - t0) } else { 0.0 };
    &values[i - 1] * C64::new(1.0 - f, 0.0) + &values[i] * C64::new(f, 0.0)
}

/// Smooth with a 63-tap windowed-sinc on a uniform grid.
///
/// The sequence is interpolated onto a grid at its mean rate, box-averaged
/// down to roughly eight samples per cutoff period so the kernel resolves the
/// band, filtered with a centred kernel (renormalized where it overhangs the
/// ends) and interpolated back to the original timestamps.
pub fn lowpass(samples: &[CsiSample], cutoff: f64) -> Result<Filtered> {
    if !(cutoff.is_finite() && cutoff > 0.0) {
        return Err(invalid(format!("cutoff must be positive, got {cutoff}")));
    }
    if samples.len() < 2 {
        return Ok(Filtered {
            samples: samples.to_vec(),
            warning: Some(format!("{} samples, nothing to filter", samples.len())),
        });
    }
    let times: Vec<f64> = samples.iter().map(|s| s.timestamp).collect();
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("timestamps must be strictly increasing"));
    }
    let span = times[times.len() - 1] - times[0];
    let rate = (times.len() - 1) as f64 / span;
    if cutoff >= rate / 2.0 {
        return Err(invalid(format!("cutoff {cutoff} Hz is not below half the mean rate {rate:.3} Hz")));
    }
    let decimation = ((rate / (8.0 * cutoff)).floor() as usize).max(1);
    let grid_len = times.len() / decimation;
    if grid_len < TAPS {
        return Ok(Filtered {
            samples: samples.to_vec(),
            warning: Some(format!("{grid_len} grid points after decimation, fewer than {TAPS} taps; returned unfiltered")),
        });
    }
    let values: Vec<DMatrix<C64>> = samples.iter().map(|s| s.csi.clone()).collect();
    let step = 1.0 / rate;
    let scale = C64::new(1.0 / decimation as f64, 0.0);
    let mut grid_t = Vec::with_capacity(grid_len);
    let mut grid_v = Vec::with_capacity(grid_len);
    for g in 0..grid_len {
        let base = g * decimation;
        let mut acc = DMatrix::<C64>::zeros(values[0].nrows(), values[0].ncols());
        for j in base..base + decimation {
            acc += interpolate(&times, &values, times[0] + j as f64 * step);
        }
        grid_t.push(times[0] + (base as f64 + (decimation - 1) as f64 / 2.0) * step);
        grid_v.push(acc * scale);
    }

    let kernel = design_kernel(cutoff * step * decimation as f64);
    let half = (TAPS / 2) as isize;
    let smoothed: Vec<DMatrix<C64>> = (0..grid_len as isize)
        .map(|i| {
            let mut acc = DMatrix::<C64>::zeros(grid_v[0].nrows(), grid_v[0].ncols());
            let mut weight = 0.0;
            for (k, &h) in kernel.iter().enumerate() {
                let j = i + k as isize - half;
                if j >= 0 && (j as usize) < grid_len {
                    acc += &grid_v[j as usize] * C64::new(h, 0.0);
                    weight += h;
                }
            }
            acc * C64::new(1.0 / weight, 0.0)
        })
        .collect();

    let out = samples
        .iter()
        .map(|s| CsiSample {
            timestamp: s.timestamp,
            csi: interpolate(&grid_t, &smoothed, s.timestamp),
        })
        .collect();
    Ok(Filtered { samples: out, warning: None })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, rate: f64, n: usize) -> Vec<CsiSample> {
        (0..n)
            .map(|j| {
                let t = j as f64 / rate;
                CsiSample {
                    timestamp: t,
                    csi: DMatrix::from_element(1, 1, C64::new((2.0 * PI * freq * t).sin(), 0.0)),
                }
            })
            .collect()
    }

    fn middle_amplitude(s: &[CsiSample]) -> f64 {
        let n = s.len();
        s[n / 4..3 * n / 4].iter().map(|x| x.csi[(0, 0)].norm()).fold(0.0, f64::max)
    }

    #[test]
    fn kernel_has_unit_dc_gain() {
        let h = design_kernel(0.1);
        assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_passes_unchanged() {
        let s: Vec<CsiSample> = (0..400)
            .map(|j| CsiSample {
                timestamp: j as f64 * 0.002 + if j % 3 == 0 { 3e-4 } else { 0.0 },
                csi: DMatrix::from_element(2, 2, C64::new(1.5, -0.5)),
            })
            .collect();
        let f = lowpass(&s, 10.0).unwrap();
        assert!(f.warning.is_none());
        for x in &f.samples {
            assert!((x.csi[(1, 1)] - C64::new(1.5, -0.5)).norm() < 1e-6);
        }
    }

    #[test]
    fn slow_tone_preserved() {
        let f = lowpass(&tone(0.3, 500.0, 10_000), 10.0).unwrap();
        let amp = middle_amplitude(&f.samples);
        assert!((amp - 1.0).abs() < 0.02, "amplitude {amp}");
    }

    #[test]
    fn fast_tone_attenuated() {
        let f = lowpass(&tone(40.0, 100.0, 2000), 10.0).unwrap();
        let amp = middle_amplitude(&f.samples);
        assert!(amp < 0.1, "amplitude {amp}");
    }

    #[test]
    fn short_sequence_returned_with_warning() {
        let s = tone(1.0, 100.0, 40);
        let f = lowpass(&s, 10.0).unwrap();
        assert!(f.warning.is_some());
        assert_eq!(f.samples, s);
    }

    #[test]
    fn cutoff_above_nyquist_rejected() {
        assert!(lowpass(&tone(1.0, 100.0, 200), 60.0).is_err());
    }
}
