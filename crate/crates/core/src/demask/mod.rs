//! Keyed receiver pipeline: find the sync segments, label packets by the
//! configuration in force, strip static paths, equalize configuration gains
//! and smooth the merged sequence.

mod filter;
mod gains;
mod ratio;
mod sync;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use filter::{design_kernel, lowpass, Filtered, TAPS};
pub use gains::{
    adjacent_noise_variance, drop_weak_configs, estimate_relative_gains, normalize_and_merge, remove_static, silent_configs, solve_relative_gains,
    GainSolution,
};
pub use ratio::{aggregate_cv, coefficient_of_variation, csi_ratio, AggregateCv, CvSeries, RatioStreams, CV_SENTINEL, RATIO_FLOOR};
pub use sync::{detect_sync, label_configs, sync_anchors, ClockEstimate, Labeled, LabeledSample};

use crate::error::{invalid, shape, Error, Result, Stage};
use crate::scheduler::MaskingKey;
use crate::C64;

#[derive(Debug, Clone, PartialEq)]
pub struct CsiSample {
    /// Seconds on the receiver clock.
    pub timestamp: f64,
    /// Antennas by subcarriers.
    pub csi: DMatrix<C64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CsiTrace {
    pub samples: Vec<CsiSample>,
}

impl CsiTrace {
    /// `(antennas, subcarriers)`, after checking the trace is nonempty,
    /// uniformly shaped and strictly increasing in time.
    pub fn dims(&self) -> Result<(usize, usize)> {
        let first = self
            .samples
            .first()
            .ok_or_else(|| Error::InsufficientData("empty trace".into()))?;
        let dims = first.csi.shape();
        if dims.0 == 0 || dims.1 == 0 {
            return Err(shape("CSI matrices must be nonempty"));
        }
        for (i, pair) in self.samples.windows(2).enumerate() {
            if pair[1].csi.shape() != dims {
                return Err(shape(format!("sample {} is {:?}, expected {:?}", i + 1, pair[1].csi.shape(), dims)));
            }
            if !(pair[1].timestamp > pair[0].timestamp) {
                return Err(invalid(format!("timestamps not strictly increasing at sample {}", i + 1)));
            }
        }
        Ok(dims)
    }

    /// Copy with every CSI entry multiplied by `c`.
    pub fn scaled(&self, c: C64) -> CsiTrace {
        CsiTrace {
            samples: self
                .samples
                .iter()
                .map(|s| CsiSample {
                    timestamp: s.timestamp,
                    csi: s.csi.map(|z| z * c),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemaskParams {
    /// Seconds; adjacent packets further apart do not feed gain estimates.
    pub coherence_gap: f64,
    /// Seconds; defaults to a quarter slot.
    pub guard: Option<f64>,
    /// Hz.
    pub cutoff: f64,
    /// Seconds; defaults to 2.5 slots.
    pub cv_window: Option<f64>,
    /// Seconds of RMS sync-fit error tolerated; defaults to a quarter slot.
    pub sync_residual_threshold: Option<f64>,
    /// Carry on past a low-confidence sync fit instead of failing.
    pub permissive_sync: bool,
    pub min_pairs_per_edge: usize,
    /// Configurations whose gain is below this fraction of the strongest
    /// are left out of the merged sequence.
    pub min_relative_gain: f64,
}

impl Default for DemaskParams {
    fn default() -> Self {
        DemaskParams {
            coherence_gap: 0.005,
            guard: None,
            cutoff: 10.0,
            cv_window: None,
            sync_residual_threshold: None,
            permissive_sync: false,
            min_pairs_per_edge: 3,
            min_relative_gain: 0.2,
        }
    }
}

impl DemaskParams {
    pub fn guard_for(&self, key: &MaskingKey) -> f64 {
        self.guard.unwrap_or(0.25 * key.t_ris)
    }

    pub fn cv_window_for(&self, key: &MaskingKey) -> f64 {
        self.cv_window.unwrap_or((key.sync_len as f64 - 0.5) * key.t_ris)
    }

    pub fn threshold_for(&self, key: &MaskingKey) -> f64 {
        self.sync_residual_threshold.unwrap_or(0.25 * key.t_ris)
    }
}

/// What each stage saw and dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub input_samples: usize,
    pub ratio_excluded: usize,
    pub sync_windows: usize,
    pub clock_offset: f64,
    pub clock_drift: f64,
    pub sync_residual: f64,
    pub low_confidence: bool,
    pub labeled_samples: usize,
    pub sync_samples: usize,
    pub guard_dropped: usize,
    pub span_dropped: usize,
    /// Row-major `n x n` adjacent-pair counts per configuration pair.
    pub pair_counts: Vec<Vec<usize>>,
    pub excluded_edges: Vec<[usize; 2]>,
    pub gains_re: Vec<f64>,
    pub gains_im: Vec<f64>,
    pub gain_residual: f64,
    pub gain_gradient_norm: f64,
    pub noise_variance: f64,
    pub weak_configs: Vec<usize>,
    pub weak_dropped: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lowpass_warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemaskOutput {
    pub samples: Vec<CsiSample>,
    pub clock: ClockEstimate,
    pub gains: GainSolution,
    pub diagnostics: Diagnostics,
}

/// Run the whole chain on one trace.
///
/// Errors carry the stage that raised them. A sync fit whose residual exceeds
/// the threshold fails at the sync stage unless `permissive_sync` is set.
pub fn demask_pipeline(trace: &CsiTrace, key: &MaskingKey, params: &DemaskParams) -> Result<DemaskOutput> {
    key.validate()?;
    if !(params.coherence_gap > 0.0 && params.cutoff > 0.0) {
        return Err(invalid("coherence gap and cutoff must be positive"));
    }
    let ratios = csi_ratio(trace).map_err(Error::at(Stage::Ratio))?;
    let clock = coefficient_of_variation(&ratios, params.cv_window_for(key))
        .and_then(|cv| detect_sync(&aggregate_cv(&cv), key, params.threshold_for(key)))
        .map_err(Error::at(Stage::Sync))?;
    if clock.low_confidence && !params.permissive_sync {
        return Err(Error::at(Stage::Sync)(Error::InsufficientData(format!(
            "sync fit residual {:.3e} s exceeds threshold {:.3e} s",
            clock.residual,
            params.threshold_for(key)
        ))));
    }
    let labeled = label_configs(trace, key, &clock, params.guard_for(key)).map_err(Error::at(Stage::Label))?;
    let zero_mean = remove_static(&labeled).map_err(Error::at(Stage::Static))?;
    let gains = estimate_relative_gains(&zero_mean, params.coherence_gap, params.min_pairs_per_edge, &[])
        .or_else(|e| {
            // a configuration with no visible target path cannot be linked to
            // the others; give it a zero gain and let the weak drop remove it
            let silent = silent_configs(&zero_mean, adjacent_noise_variance(&zero_mean, params.coherence_gap), params.min_relative_gain);
            match e {
                Error::UnresolvableGains(_) if !silent.is_empty() => {
                    estimate_relative_gains(&zero_mean, params.coherence_gap, params.min_pairs_per_edge, &silent)
                }
                e => Err(e),
            }
        })
        .map_err(Error::at(Stage::Gains))?;
    let (strong, weak_configs) =
        drop_weak_configs(&zero_mean, &gains, params.min_relative_gain).map_err(Error::at(Stage::Normalize))?;
    let merged = normalize_and_merge(&strong, &gains).map_err(Error::at(Stage::Normalize))?;
    let filtered = lowpass(&merged, params.cutoff).map_err(Error::at(Stage::Lowpass))?;

    let n = gains.g.len();
    let diagnostics = Diagnostics {
        input_samples: trace.samples.len(),
        ratio_excluded: ratios.excluded,
        sync_windows: clock.sync_times.len(),
        clock_offset: clock.offset,
        clock_drift: clock.drift,
        sync_residual: clock.residual,
        low_confidence: clock.low_confidence,
        labeled_samples: labeled.samples.len(),
        sync_samples: labeled.sync_samples,
        guard_dropped: labeled.guard_dropped,
        span_dropped: labeled.span_dropped,
        pair_counts: (0..n)
            .map(|i| (0..n).map(|j| gains.pair_counts[(i, j)] + gains.pair_counts[(j, i)]).collect())
            .collect(),
        excluded_edges: gains.excluded_edges.iter().map(|&(a, b)| [a, b]).collect(),
        gains_re: gains.g.iter().map(|g| g.re).collect(),
        gains_im: gains.g.iter().map(|g| g.im).collect(),
        gain_residual: gains.residual,
        gain_gradient_norm: gains.gradient_norm,
        noise_variance: gains.noise_var,
        weak_dropped: zero_mean.samples.len() - strong.samples.len(),
        weak_configs,
        lowpass_warning: filtered.warning,
    };
    Ok(DemaskOutput {
        samples: filtered.samples,
        clock,
        gains,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dims_rejects_ragged_traces() {
        let s = |t: f64, m: usize| CsiSample {
            timestamp: t,
            csi: DMatrix::from_element(m, 2, C64::ONE),
        };
        assert!(CsiTrace::default().dims().is_err());
        assert!(CsiTrace { samples: vec![s(0.0, 3), s(1.0, 2)] }.dims().is_err());
        assert!(CsiTrace { samples: vec![s(1.0, 3), s(0.5, 3)] }.dims().is_err());
        assert_eq!(CsiTrace { samples: vec![s(0.0, 3), s(1.0, 3)] }.dims().unwrap(), (3, 2));
    }

    #[test]
    fn empty_trace_fails_at_ratio_stage() {
        let key = MaskingKey::generate(1, 4, 4, 3, Default::default(), 0.002, 0.5, 3).unwrap();
        let err = demask_pipeline(&CsiTrace::default(), &key, &DemaskParams::default()).unwrap_err();
        assert_eq!(err.stage(), Some(Stage::Ratio));
    }
}
