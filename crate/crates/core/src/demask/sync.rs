//! Clock recovery from sync segments and key-driven labeling.

use super::{CsiSample, CsiTrace};
use crate::demask::ratio::AggregateCv;
use crate::error::{invalid, Error, Result};
use crate::scheduler::{build_schedule, MaskingKey};

/// Affine map from transmitter time to receiver time:
/// `t_rx = (1 + drift) * t_tx + offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClockEstimate {
    pub offset: f64,
    pub drift: f64,
    /// RMS fit residual in seconds.
    pub residual: f64,
    pub low_confidence: bool,
    /// Detected CV minima (receiver time) kept by the fit.
    pub sync_times: Vec<f64>,
    /// Matching nominal positions (transmitter time).
    pub anchors: Vec<f64>,
}

impl ClockEstimate {
    pub fn identity() -> Self {
        ClockEstimate {
            offset: 0.0,
            drift: 0.0,
            residual: 0.0,
            low_confidence: false,
            sync_times: Vec::new(),
            anchors: Vec::new(),
        }
    }

    pub fn to_tx(&self, t_rx: f64) -> f64 {
        (t_rx - self.offset) / (1.0 + self.drift)
    }

    pub fn to_rx(&self, t_tx: f64) -> f64 {
        (1.0 + self.drift) * t_tx + self.offset
    }
}

/// Transmitter-time instants where the CV of a mid-slot packet stream bottoms
/// out: the middle of the last slot of each sync run.
pub fn sync_anchors(key: &MaskingKey, until: f64) -> Vec<f64> {
    let per_window = key.slots_per_window();
    let first = key.sync_offset() + key.sync_len - 1;
    (0..)
        .map(|m| ((m * per_window + first) as f64 + 0.5) * key.t_ris)
        .take_while(|&a| a <= until)
        .collect()
}

/// Seconds either side of a sample used for its local CV baseline.
const BASELINE_HALF_SPAN: f64 = 0.05;

/// CV divided by a local baseline, so motion that raises the CV over a
/// stretch does not bury the sync dips inside it. The baseline is the smaller
/// of the medians just before and just after each sample, which keeps the
/// edge of a quiet stretch from looking like a dip.
fn relative_cv(cv: &AggregateCv) -> Vec<f64> {
    let t = &cv.timestamps;
    let mut buf = Vec::new();
    let mut median = |lo: usize, hi: usize| {
        buf.clear();
        buf.extend_from_slice(&cv.values[lo..hi]);
        let mid = buf.len() / 2;
        *buf.select_nth_unstable_by(mid, f64::total_cmp).1
    };
    (0..t.len())
        .map(|i| {
            let lo = t.partition_point(|&x| x < t[i] - BASELINE_HALF_SPAN);
            let hi = t.partition_point(|&x| x <= t[i] + BASELINE_HALF_SPAN);
            let base = median(lo, i + 1).min(median(i, hi));
            if base > 0.0 {
                cv.values[i] / base
            } else {
                cv.values[i]
            }
        })
        .collect()
}

/// Locate one CV minimum per sync window and fit offset and drift.
///
/// The CV is first scaled by its local median. A single lag common to all windows is found first by pooling the CV over
/// every window, since one window alone can hold runs of similar
/// configurations that dip as low as the sync run. Each window is then
/// searched within a slot and a half of that lag, and minima more than half a
/// slot off the fitted line are dropped before the final fit. The receiver
/// clock must be within `t_sync / 2` of the transmitter.
pub fn detect_sync(cv: &AggregateCv, key: &MaskingKey, residual_threshold: f64) -> Result<ClockEstimate> {
    key.validate()?;
    let (Some(&first), Some(&last)) = (cv.timestamps.first(), cv.timestamps.last()) else {
        return Err(Error::InsufficientData("empty CV series".into()));
    };
    if last - first < 2.0 * key.t_sync {
        return Err(Error::InsufficientData(format!(
            "CV series spans {:.4} s, need at least 2 * t_sync = {:.4} s",
            last - first,
            2.0 * key.t_sync
        )));
    }
    let half = 0.5 * key.t_sync;
    let windows: Vec<f64> = sync_anchors(key, last + half)
        .into_iter()
        .filter(|&a| {
            let lo = cv.timestamps.partition_point(|&t| t < a - half);
            let hi = cv.timestamps.partition_point(|&t| t < a + half);
            hi > lo && cv.timestamps[hi - 1].min(a + half) - cv.timestamps[lo].max(a - half) >= half
        })
        .collect();
    if windows.is_empty() {
        return Err(Error::InsufficientData("no complete sync window in the CV series".into()));
    }

    let values = relative_cv(cv);
    let nearest = |t: f64| {
        let i = cv.timestamps.partition_point(|&x| x < t);
        match (i.checked_sub(1), cv.timestamps.get(i)) {
            (Some(j), Some(&next)) if t - cv.timestamps[j] <= next - t => j,
            (_, Some(_)) => i,
            (Some(j), None) => j,
            (None, None) => unreachable!(),
        }
    };
    let step = 0.25 * key.t_ris;
    let n_lags = (half / step).floor() as i64;
    let mut lag = 0.0;
    let mut best = f64::INFINITY;
    for l in -n_lags..=n_lags {
        let l = l as f64 * step;
        let cost: f64 = windows.iter().map(|a| values[nearest(a + l)]).sum();
        if cost <= best {
            best = cost;
            lag = l;
        }
    }

    let reach = 1.5 * key.t_ris;
    let mut anchors = Vec::new();
    let mut sync_times = Vec::new();
    for &a in &windows {
        let lo = cv.timestamps.partition_point(|&t| t < a + lag - reach);
        let hi = cv.timestamps.partition_point(|&t| t <= a + lag + reach);
        if hi <= lo {
            continue;
        }
        let mut best = lo;
        for i in lo..hi {
            if values[i] <= values[best] {
                best = i;
            }
        }
        anchors.push(a);
        sync_times.push(cv.timestamps[best]);
    }
    if anchors.is_empty() {
        return Err(Error::InsufficientData("no CV samples near the pooled sync lag".into()));
    }

    let (mut offset, mut drift) = fit_clock(&anchors, &sync_times);
    loop {
        let worst = anchors
            .iter()
            .zip(&sync_times)
            .map(|(a, t)| (t - ((1.0 + drift) * a + offset)).abs())
            .enumerate()
            .max_by(|x, y| x.1.total_cmp(&y.1));
        match worst {
            Some((i, r)) if r > 0.5 * key.t_ris && 2 * (anchors.len() - 1) >= windows.len() && anchors.len() > 2 => {
                anchors.remove(i);
                sync_times.remove(i);
                (offset, drift) = fit_clock(&anchors, &sync_times);
            }
            _ => break,
        }
    }
    let residual = rms_residual(&anchors, &sync_times, offset, drift);
    Ok(ClockEstimate {
        offset,
        drift,
        residual,
        low_confidence: residual > residual_threshold || 2 * anchors.len() < windows.len(),
        sync_times,
        anchors,
    })
}

fn fit_clock(anchors: &[f64], times: &[f64]) -> (f64, f64) {
    let n = anchors.len() as f64;
    if anchors.len() < 2 {
        return (times[0] - anchors[0], 0.0);
    }
    let ma = anchors.iter().sum::<f64>() / n;
    let mt = times.iter().sum::<f64>() / n;
    let sxx: f64 = anchors.iter().map(|a| (a - ma).powi(2)).sum();
    let sxy: f64 = anchors.iter().zip(times).map(|(a, t)| (a - ma) * (t - mt)).sum();
    let slope = sxy / sxx;
    (mt - slope * ma, slope - 1.0)
}

fn rms_residual(anchors: &[f64], times: &[f64], offset: f64, drift: f64) -> f64 {
    let ss: f64 = anchors
        .iter()
        .zip(times)
        .map(|(a, t)| (t - ((1.0 + drift) * a + offset)).powi(2))
        .sum();
    (ss / anchors.len() as f64).sqrt()
}

/// A sensing sample with its configuration label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    /// Receiver timestamp, unchanged from the trace.
    pub timestamp: f64,
    pub config: usize,
    pub csi: nalgebra::DMatrix<crate::C64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Labeled {
    /// Chronological non-sync samples.
    pub samples: Vec<LabeledSample>,
    pub n_configs: usize,
    pub sync_samples: usize,
    pub guard_dropped: usize,
    pub span_dropped: usize,
}

/// Assign each sample the configuration active at its corrected timestamp.
///
/// Samples within `guard` seconds of a slot boundary, in a sync slot, or
/// outside the replayed schedule are left out and counted.
pub fn label_configs(trace: &CsiTrace, key: &MaskingKey, clock: &ClockEstimate, guard: f64) -> Result<Labeled> {
    key.validate()?;
    if !(guard >= 0.0 && guard < 0.5 * key.t_ris) {
        return Err(invalid(format!("guard must lie in [0, t_ris / 2), got {guard}")));
    }
    if !(1.0 + clock.drift > 0.0) {
        return Err(invalid(format!("clock drift {} is not physical", clock.drift)));
    }
    let mut out = Labeled {
        samples: Vec::with_capacity(trace.samples.len()),
        n_configs: key.candidates.len(),
        sync_samples: 0,
        guard_dropped: 0,
        span_dropped: 0,
    };
    let latest = trace.samples.iter().map(|s| clock.to_tx(s.timestamp)).fold(0.0, f64::max);
    let schedule = build_schedule(key, latest + key.t_ris)?;
    for CsiSample { timestamp, csi } in &trace.samples {
        let t = clock.to_tx(*timestamp);
        let Some(slot) = schedule.slot_index_at(t) else {
            out.span_dropped += 1;
            continue;
        };
        let pos = t - slot as f64 * key.t_ris;
        if pos < guard || pos > key.t_ris - guard {
            out.guard_dropped += 1;
            continue;
        }
        let s = &schedule.slots[slot];
        if s.is_sync {
            out.sync_samples += 1;
            continue;
        }
        out.samples.push(LabeledSample {
            timestamp: *timestamp,
            config: s.config_index,
            csi: csi.clone(),
        });
    }
    Ok(out)
}
