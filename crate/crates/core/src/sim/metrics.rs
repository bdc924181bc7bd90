//! Scoring recovered sequences against ground truth.

use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::{active_rows, Motion, Scenario, SimOutput};
use crate::beamform::BeamVectorPair;
use crate::channel::{comm_snr, RowChannels};
use crate::demask::{demask_pipeline, lowpass, CsiSample, DemaskParams, Diagnostics};
use crate::error::{invalid, Error, Result};
use crate::scheduler::{random_wrong_key, CandidateSampling};
use crate::C64;

/// Peaks weaker than this multiple of the band median count as absent.
pub const PROMINENCE_THRESHOLD: f64 = 10.0;

/// Share of the recovered sequence explained by the ground-truth motion:
/// `sqrt(sum_i |<x_i, u>|^2 / (sum_i |x_i|^2 |u|^2))` over centred series,
/// where `i` runs over antenna/subcarrier entries. Samples are matched to
/// the truth by exact timestamp; unmatched samples are ignored.
pub fn correlation(samples: &[CsiSample], truth_times: &[f64], truth: &[C64]) -> Result<f64> {
    if truth_times.len() != truth.len() {
        return Err(crate::error::shape("truth times and values differ in length"));
    }
    let mut xs = Vec::new();
    let mut us = Vec::new();
    for s in samples {
        let i = truth_times.partition_point(|&t| t < s.timestamp);
        if i < truth_times.len() && truth_times[i] == s.timestamp {
            xs.push(&s.csi);
            us.push(truth[i]);
        }
    }
    if xs.len() < 2 {
        return Err(Error::InsufficientData("fewer than two samples overlap the ground truth".into()));
    }
    let n = xs.len() as f64;
    let u_mean = us.iter().sum::<C64>() / n;
    let u: Vec<C64> = us.iter().map(|z| z - u_mean).collect();
    let u_energy: f64 = u.iter().map(|z| z.norm_sqr()).sum();
    let entries = xs[0].len();
    let (mut explained, mut total) = (0.0, 0.0);
    for e in 0..entries {
        let mean = xs.iter().map(|x| x[e]).sum::<C64>() / n;
        let mut inner = C64::new(0.0, 0.0);
        for (x, uu) in xs.iter().zip(&u) {
            let c = x[e] - mean;
            inner += c * uu.conj();
            total += c.norm_sqr();
        }
        explained += inner.norm_sqr();
    }
    if total == 0.0 || u_energy == 0.0 {
        return Ok(0.0);
    }
    Ok((explained / (total * u_energy)).sqrt().min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralPeak {
    /// Hz.
    pub frequency: f64,
    /// Peak power over the median power in the band.
    pub prominence: f64,
}

/// Dominant frequency of a complex multichannel sequence within `band`.
///
/// The sequence is resampled to its mean rate, mean-removed, Hann-windowed
/// and zero-padded; periodograms are summed over entries with positive and
/// negative frequencies folded together, and the peak bin is refined with a
/// parabola through its neighbours.
pub fn spectral_peak(samples: &[CsiSample], band: (f64, f64)) -> Result<SpectralPeak> {
    if samples.len() < 16 {
        return Err(Error::InsufficientData("spectral analysis needs at least 16 samples".into()));
    }
    if !(band.0 >= 0.0 && band.1 > band.0) {
        return Err(invalid(format!("bad band {band:?}")));
    }
    let t0 = samples[0].timestamp;
    let span = samples[samples.len() - 1].timestamp - t0;
    let rate = (samples.len() - 1) as f64 / span;
    // decimate to a modest rate above the band before transforming
    let target = (8.0 * band.1).min(rate);
    let step = 1.0 / target;
    let len = (span * target).floor() as usize + 1;
    let fft_len = (4 * len).next_power_of_two();
    let entries = samples[0].csi.len();
    let fft = FftPlanner::new().plan_fft_forward(fft_len);
    let mut power = vec![0.0; fft_len];

    // cheap anti-aliasing before picking grid points
    let smoothed = if target < rate / 2.0 {
        lowpass(samples, target / 2.0 * 0.8)?.samples
    } else {
        samples.to_vec()
    };
    let times: Vec<f64> = smoothed.iter().map(|s| s.timestamp).collect();
    for e in 0..entries {
        let mut buf: Vec<C64> = (0..len)
            .map(|j| {
                let t = t0 + j as f64 * step;
                let i = times.partition_point(|&x| x <= t).clamp(1, times.len() - 1);
                let (ta, tb) = (times[i - 1], times[i]);
                let f = ((t - ta) / (tb - ta)).clamp(0.0, 1.0);
                smoothed[i - 1].csi[e] * (1.0 - f) + smoothed[i].csi[e] * f
            })
            .collect();
        let mean = buf.iter().sum::<C64>() / len as f64;
        for (j, z) in buf.iter_mut().enumerate() {
            let w = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * j as f64 / (len - 1) as f64).cos();
            *z = (*z - mean) * w;
        }
        buf.resize(fft_len, C64::new(0.0, 0.0));
        fft.process(&mut buf);
        for (p, z) in power.iter_mut().zip(&buf) {
            *p += z.norm_sqr();
        }
    }
    let df = target / fft_len as f64;
    let folded = |k: usize| power[k] + if k == 0 { 0.0 } else { power[fft_len - k] };
    let lo = (band.0 / df).ceil() as usize;
    let hi = ((band.1 / df).floor() as usize).min(fft_len / 2);
    if hi <= lo + 2 {
        return Err(Error::InsufficientData("sequence too short to resolve the band".into()));
    }
    let values: Vec<f64> = (lo..=hi).map(folded).collect();
    let (best, &peak) = values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("band is nonempty");
    let k = lo + best;
    let shift = if k > 0 && k + 1 < fft_len / 2 {
        let (a, b, c) = (folded(k - 1), peak, folded(k + 1));
        let den = a - 2.0 * b + c;
        if den != 0.0 { (0.5 * (a - c) / den).clamp(-0.5, 0.5) } else { 0.0 }
    } else {
        0.0
    };
    let mut sorted = values.clone();
    let mid = sorted.len() / 2;
    let median = *sorted.select_nth_unstable_by(mid, f64::total_cmp).1;
    Ok(SpectralPeak {
        frequency: (k as f64 + shift) * df,
        prominence: if median > 0.0 { peak / median } else { f64::INFINITY },
    })
}

/// Max minus min communication SNR (dB) over all `2^K` row selections.
pub fn exhaustive_snr_spread(rows: &RowChannels, pairs: &[BeamVectorPair], tx_power: f64, noise_power: f64, m_comm: usize) -> Result<f64> {
    let k = pairs.len();
    if k > 24 {
        return Err(invalid(format!("exhaustive enumeration over K = {k} rows is too large")));
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for mask in 0u32..(1 << k) {
        let phis: Vec<&[C64]> = pairs.iter().enumerate().map(|(i, p)| p.select(mask >> i & 1 == 1)).collect();
        let snr = 10.0 * comm_snr(rows, &phis, tx_power, noise_power, m_comm)?.log10();
        lo = lo.min(snr);
        hi = hi.max(snr);
    }
    Ok(hi - lo)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalParams {
    pub demask: DemaskParams,
    /// Seeds the eavesdropper's guessed key.
    pub wrong_key_seed: u64,
    pub wrong_key_sampling: CandidateSampling,
    /// Hz; searched for the dominant motion frequency.
    pub peak_band: (f64, f64),
}

impl Default for EvalParams {
    fn default() -> Self {
        EvalParams {
            demask: DemaskParams::default(),
            wrong_key_seed: 0x5eed,
            wrong_key_sampling: CandidateSampling::Complementary,
            peak_band: (0.1, 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    /// Keyed receiver, correct key.
    pub legit_correlation: f64,
    /// Eavesdropper running the pipeline with a guessed key.
    pub attacker_correlation: f64,
    /// Eavesdropper using its CSI as received.
    pub raw_attacker_correlation: f64,
    /// Set when the guessed-key pipeline failed and the raw trace stood in.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attacker_fallback: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recovered_frequency: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub legit_peak: Option<SpectralPeak>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attacker_peak: Option<SpectralPeak>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raw_attacker_peak: Option<SpectralPeak>,
    #[serde(skip)]
    pub snr_series: Vec<f64>,
    pub snr_spread_db: f64,
    pub legit_diagnostics: Diagnostics,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attacker_diagnostics: Option<Diagnostics>,
}

/// What the eavesdropper ends up with after trying a guessed key.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackerView {
    /// Guessed-key output, or the raw trace when that pipeline failed.
    pub samples: Vec<CsiSample>,
    pub diagnostics: Option<Diagnostics>,
    pub fallback: Option<String>,
}

/// Run the eavesdropper's trace through the pipeline under a random wrong
/// key drawn like the real one, accepting low-confidence sync.
pub fn attacker_view(scenario: &Scenario, out: &SimOutput, params: &EvalParams) -> Result<AttackerView> {
    let key = &scenario.key;
    let wrong = random_wrong_key(key, params.wrong_key_seed, active_rows(key), params.wrong_key_sampling)?;
    let permissive = DemaskParams {
        permissive_sync: true,
        ..params.demask.clone()
    };
    Ok(match demask_pipeline(&out.attacker, &wrong, &permissive) {
        Ok(r) => AttackerView {
            samples: r.samples,
            diagnostics: Some(r.diagnostics),
            fallback: None,
        },
        Err(e) => AttackerView {
            samples: out.attacker.samples.clone(),
            diagnostics: None,
            fallback: Some(e.to_string()),
        },
    })
}

/// Demask both traces and score them. Spectral peaks are reported for
/// sinusoidal motion only.
pub fn evaluate(scenario: &Scenario, out: &SimOutput, rows: &RowChannels, params: &EvalParams) -> Result<RunReport> {
    let legit = demask_pipeline(&out.legit, &scenario.key, &params.demask)?;
    let legit_correlation = correlation(&legit.samples, &out.truth.legit_times, &out.truth.motion)?;
    let AttackerView {
        samples: attacker_samples,
        diagnostics: attacker_diagnostics,
        fallback: attacker_fallback,
    } = attacker_view(scenario, out, params)?;
    let attacker_correlation = correlation(&attacker_samples, &out.truth.attacker_times, &out.truth.motion)?;
    let raw_attacker_correlation = correlation(&out.attacker.samples, &out.truth.attacker_times, &out.truth.motion)?;

    let (legit_peak, attacker_peak, raw_attacker_peak) = if matches!(scenario.motion, Motion::Sinusoid { .. }) {
        (
            Some(spectral_peak(&legit.samples, params.peak_band)?),
            Some(spectral_peak(&attacker_samples, params.peak_band)?),
            Some(spectral_peak(&out.attacker.samples, params.peak_band)?),
        )
    } else {
        (None, None, None)
    };
    let g = &scenario.geometry;
    Ok(RunReport {
        legit_correlation,
        attacker_correlation,
        raw_attacker_correlation,
        attacker_fallback,
        recovered_frequency: legit_peak.map(|p| p.frequency),
        legit_peak,
        attacker_peak,
        raw_attacker_peak,
        snr_series: out.truth.comm_snr_db.clone(),
        snr_spread_db: exhaustive_snr_spread(rows, &scenario.pairs, g.tx_power, g.noise_power, g.m_comm)?,
        legit_diagnostics: legit.diagnostics,
        attacker_diagnostics,
    })
}
