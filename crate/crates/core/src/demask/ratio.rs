//! Antenna-ratio streams and their coefficient of variation.

use super::CsiTrace;
use crate::error::{invalid, Error, Result};
use crate::C64;

/// Denominators smaller than this fraction of the trace's median magnitude
/// exclude the sample.
pub const RATIO_FLOOR: f64 = 1e-9;
/// Reported instead of SD/|mean| when the mean vanishes.
pub const CV_SENTINEL: f64 = 1e6;
const MEAN_FLOOR: f64 = 1e-12;

/// Per-sample antenna ratios, laid out `stream * subcarriers + subcarrier`.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioStreams {
    pub timestamps: Vec<f64>,
    pub streams: usize,
    pub subcarriers: usize,
    pub values: Vec<Vec<C64>>,
    pub excluded: usize,
}

/// Divide CSI between antenna pairs: `1/2, 2/3, 3/1` with three or more
/// antennas, `1/2` with two.
pub fn csi_ratio(trace: &CsiTrace) -> Result<RatioStreams> {
    let (antennas, subcarriers) = trace.dims()?;
    let pairs: Vec<(usize, usize)> = match antennas {
        0 | 1 => return Err(invalid(format!("ratio streams need at least 2 antennas, got {antennas}"))),
        2 => vec![(0, 1)],
        _ => vec![(0, 1), (1, 2), (2, 0)],
    };
    let mut mags: Vec<f64> = trace.samples.iter().flat_map(|s| s.csi.iter().map(|z| z.norm())).collect();
    if mags.is_empty() {
        return Err(Error::InsufficientData("empty trace".into()));
    }
    let mid = mags.len() / 2;
    let median = *mags.select_nth_unstable_by(mid, f64::total_cmp).1;
    let floor = RATIO_FLOOR * median;

    let mut out = RatioStreams {
        timestamps: Vec::with_capacity(trace.samples.len()),
        streams: pairs.len(),
        subcarriers,
        values: Vec::with_capacity(trace.samples.len()),
        excluded: 0,
    };
    'samples: for s in &trace.samples {
        let mut row = Vec::with_capacity(pairs.len() * subcarriers);
        for &(num, den) in &pairs {
            for f in 0..subcarriers {
                let d = s.csi[(den, f)];
                if !(d.norm() >= floor) || d.norm() == 0.0 {
                    out.excluded += 1;
                    continue 'samples;
                }
                row.push(s.csi[(num, f)] / d);
            }
        }
        out.timestamps.push(s.timestamp);
        out.values.push(row);
    }
    Ok(out)
}

/// Sliding-window statistics, one row per evaluated timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct CvSeries {
    pub timestamps: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

/// `SD / |mean|` of each stream over the trailing window `[t - window, t]`.
///
/// SD is the root mean square distance of the complex samples from their
/// complex mean. Timestamps whose window holds fewer than three samples are
/// skipped.
pub fn coefficient_of_variation(ratios: &RatioStreams, window: f64) -> Result<CvSeries> {
    if !(window.is_finite() && window > 0.0) {
        return Err(invalid(format!("CV window must be positive, got {window}")));
    }
    let width = ratios.streams * ratios.subcarriers;
    let mut out = CvSeries {
        timestamps: Vec::new(),
        values: Vec::new(),
    };
    let mut lo = 0;
    for (j, &t) in ratios.timestamps.iter().enumerate() {
        while ratios.timestamps[lo] < t - window {
            lo += 1;
        }
        let count = j + 1 - lo;
        if count < 3 {
            continue;
        }
        let inv = 1.0 / count as f64;
        let mut row = Vec::with_capacity(width);
        for e in 0..width {
            let mean: C64 = ratios.values[lo..=j].iter().map(|v| v[e]).sum::<C64>() * inv;
            let var: f64 = ratios.values[lo..=j].iter().map(|v| (v[e] - mean).norm_sqr()).sum::<f64>() * inv;
            let m = mean.norm();
            row.push(if m < MEAN_FLOOR { CV_SENTINEL } else { var.sqrt() / m });
        }
        out.timestamps.push(t);
        out.values.push(row);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateCv {
    pub timestamps: Vec<f64>,
    pub values: Vec<f64>,
}

/// Sum of CV over every stream and subcarrier at each timestamp.
pub fn aggregate_cv(cv: &CvSeries) -> AggregateCv {
    AggregateCv {
        timestamps: cv.timestamps.clone(),
        values: cv.values.iter().map(|row| row.iter().sum()).collect(),
    }
}
