//! Static-path removal and relative-gain calibration between configurations.

use nalgebra::{DMatrix, DVector};

use super::sync::{Labeled, LabeledSample};
use super::CsiSample;
use crate::error::{invalid, Error, Result};
use crate::C64;

/// Remove each configuration's temporal mean, entry by entry.
pub fn remove_static(labeled: &Labeled) -> Result<Labeled> {
    let Some(first) = labeled.samples.first() else {
        return Ok(labeled.clone());
    };
    let shape = first.csi.shape();
    let mut sums = vec![DMatrix::<C64>::zeros(shape.0, shape.1); labeled.n_configs];
    let mut counts = vec![0usize; labeled.n_configs];
    for s in &labeled.samples {
        if s.csi.shape() != shape {
            return Err(crate::error::shape("samples differ in CSI dimensions"));
        }
        if s.config >= labeled.n_configs {
            return Err(invalid(format!("label {} exceeds configuration count {}", s.config, labeled.n_configs)));
        }
        sums[s.config] += &s.csi;
        counts[s.config] += 1;
    }
    let means: Vec<DMatrix<C64>> = sums
        .into_iter()
        .zip(&counts)
        .map(|(sum, &c)| if c > 0 { sum / C64::new(c as f64, 0.0) } else { sum })
        .collect();
    let mut out = labeled.clone();
    for s in &mut out.samples {
        s.csi -= &means[s.config];
    }
    Ok(out)
}

/// Relative gains between configurations and their least-squares fit.
#[derive(Debug, Clone, PartialEq)]
pub struct GainSolution {
    /// `w[(n1, n2)]` estimates `g[n1] / g[n2]`; unobserved pairs hold 0.
    pub w: DMatrix<C64>,
    /// Adjacent-pair observations behind each entry of `w`.
    pub pair_counts: DMatrix<usize>,
    pub g: Vec<C64>,
    /// Sum of squared equation residuals at `g`.
    pub residual: f64,
    /// Norm of the objective gradient at `g`.
    pub gradient_norm: f64,
    /// Per-entry noise variance used to debias the estimates.
    pub noise_var: f64,
    pub excluded_edges: Vec<(usize, usize)>,
}

/// Per-entry noise variance from adjacent same-configuration samples that lie
/// within `coherence_gap` of each other; 0 when there are none.
pub fn adjacent_noise_variance(zero_mean: &Labeled, coherence_gap: f64) -> f64 {
    let (mut acc, mut entries) = (0.0, 0usize);
    for pair in zero_mean.samples.windows(2) {
        let (x, y) = (&pair[0], &pair[1]);
        if x.config == y.config && y.timestamp - x.timestamp < coherence_gap {
            acc += (&x.csi - &y.csi).iter().map(|z| z.norm_sqr()).sum::<f64>() * 0.5;
            entries += x.csi.len();
        }
    }
    if entries > 0 {
        acc / entries as f64
    } else {
        0.0
    }
}

/// Configurations whose power above the noise floor is below `min_relative`
/// squared times the strongest one's, so their gain cannot be told apart
/// from zero.
pub fn silent_configs(zero_mean: &Labeled, noise_var: f64, min_relative: f64) -> Vec<usize> {
    let n = zero_mean.n_configs;
    let (mut power, mut entries) = (vec![0.0; n], vec![0usize; n]);
    for s in &zero_mean.samples {
        if s.config < n {
            power[s.config] += s.csi.norm_squared();
            entries[s.config] += s.csi.len();
        }
    }
    let excess: Vec<f64> = (0..n)
        .map(|c| if entries[c] > 0 { power[c] / entries[c] as f64 - noise_var } else { 0.0 })
        .collect();
    let strongest = excess.iter().copied().fold(0.0, f64::max);
    (0..n)
        .filter(|&c| entries[c] > 0 && excess[c] <= min_relative * min_relative * strongest)
        .collect()
}

/// Estimate `g` from chronologically adjacent samples of different
/// configurations that lie within `coherence_gap` of each other.
///
/// Each edge pools its observations as
/// `sum a conj(b) / sum (|b|^2 - noise_var)` over all entries, where `a`
/// and `b` are the lower and higher indexed configuration's samples. The
/// noise variance comes from adjacent same-configuration samples.
///
/// Configurations in `ignore` get a zero gain and take no part in the fit;
/// the lowest remaining one is the unit reference.
pub fn estimate_relative_gains(zero_mean: &Labeled, coherence_gap: f64, min_pairs: usize, ignore: &[usize]) -> Result<GainSolution> {
    if !(coherence_gap > 0.0) {
        return Err(invalid(format!("coherence gap must be positive, got {coherence_gap}")));
    }
    let n = zero_mean.n_configs;
    let kept: Vec<usize> = (0..n).filter(|c| !ignore.contains(c)).collect();
    if kept.is_empty() {
        return Err(invalid("no configurations to calibrate"));
    }
    let noise_var = adjacent_noise_variance(zero_mean, coherence_gap);
    let mut cross = DMatrix::<C64>::zeros(n, n);
    let mut power = DMatrix::<f64>::zeros(n, n);
    let mut entries = DMatrix::<f64>::zeros(n, n);
    let mut counts = DMatrix::<usize>::zeros(n, n);
    for pair in zero_mean.samples.windows(2) {
        let (x, y) = (&pair[0], &pair[1]);
        if x.config == y.config || y.timestamp - x.timestamp >= coherence_gap || ignore.contains(&x.config) || ignore.contains(&y.config) {
            continue;
        }
        let (a, b): (&LabeledSample, &LabeledSample) = if x.config < y.config { (x, y) } else { (y, x) };
        let (i, j) = (a.config, b.config);
        cross[(i, j)] += a.csi.iter().zip(b.csi.iter()).map(|(p, q)| p * q.conj()).sum::<C64>();
        power[(i, j)] += b.csi.iter().map(|q| q.norm_sqr()).sum::<f64>();
        entries[(i, j)] += b.csi.len() as f64;
        counts[(i, j)] += 1;
    }

    let mut w = DMatrix::<C64>::zeros(n, n);
    let mut edges = Vec::new();
    let mut excluded_edges = Vec::new();
    for i in 0..n {
        w[(i, i)] = C64::new(1.0, 0.0);
        for j in i + 1..n {
            if counts[(i, j)] == 0 {
                continue;
            }
            let den = power[(i, j)] - noise_var * entries[(i, j)];
            let ratio = cross[(i, j)] / den;
            if counts[(i, j)] < min_pairs || !(den > 0.0) || !ratio.is_finite() || ratio.norm() == 0.0 {
                excluded_edges.push((i, j));
                continue;
            }
            w[(i, j)] = ratio;
            w[(j, i)] = ratio.inv();
            edges.push((i, j));
        }
    }
    // fit over the kept configurations only, reindexed from 0
    let pos = |c: usize| kept.iter().position(|&k| k == c).expect("edge between kept configurations");
    let sub_edges: Vec<(usize, usize)> = edges.iter().map(|&(i, j)| (pos(i), pos(j))).collect();
    let parts = components(kept.len(), &sub_edges);
    if parts.len() > 1 {
        return Err(Error::UnresolvableGains(parts.into_iter().map(|p| p.into_iter().map(|c| kept[c]).collect()).collect()));
    }
    let sub_w = DMatrix::from_fn(kept.len(), kept.len(), |r, c| w[(kept[r], kept[c])]);
    let (sub_g, residual, gradient_norm) = solve_relative_gains(&sub_w, &sub_edges)?;
    let mut g = vec![C64::new(0.0, 0.0); n];
    for (r, &c) in kept.iter().enumerate() {
        g[c] = sub_g[r];
    }
    Ok(GainSolution {
        w,
        pair_counts: counts,
        g,
        residual,
        gradient_norm,
        noise_var,
        excluded_edges,
    })
}

fn components(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for &(a, b) in edges {
        let (ra, rb) = (root(&mut parent, a), root(&mut parent, b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut index = vec![usize::MAX; n];
    for x in 0..n {
        let r = root(&mut parent, x);
        if index[r] == usize::MAX {
            index[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[index[r]].push(x);
    }
    groups
}

/// Minimize `sum_{(n1, n2) in edges} |g[n1] - w[(n1, n2)] g[n2]|^2` with
/// `g[0] = 1` through the normal equations. Returns `g`, the residual and
/// the gradient norm at the solution.
pub fn solve_relative_gains(w: &DMatrix<C64>, edges: &[(usize, usize)]) -> Result<(Vec<C64>, f64, f64)> {
    let n = w.nrows();
    if w.ncols() != n || n == 0 {
        return Err(crate::error::shape("relative gain matrix must be square and nonempty"));
    }
    if n == 1 {
        return Ok((vec![C64::new(1.0, 0.0)], 0.0, 0.0));
    }
    let mut a = DMatrix::<C64>::zeros(edges.len(), n - 1);
    let mut rhs = DVector::<C64>::zeros(edges.len());
    for (r, &(i, j)) in edges.iter().enumerate() {
        if i >= n || j >= n || i == j {
            return Err(invalid(format!("invalid edge ({i}, {j})")));
        }
        let coef = w[(i, j)];
        for (idx, c) in [(i, C64::new(1.0, 0.0)), (j, -coef)] {
            if idx == 0 {
                rhs[r] -= c;
            } else {
                a[(r, idx - 1)] += c;
            }
        }
    }
    let ah = a.adjoint();
    let normal = &ah * &a;
    let x = normal
        .clone()
        .lu()
        .solve(&(&ah * &rhs))
        .ok_or_else(|| Error::UnresolvableGains(vec![(0..n).collect()]))?;
    let res = &a * &x - &rhs;
    let residual = res.iter().map(|z| z.norm_sqr()).sum();
    let gradient_norm = (&ah * &res).norm() * 2.0;
    let mut g = vec![C64::new(1.0, 0.0)];
    g.extend(x.iter().copied());
    Ok((g, residual, gradient_norm))
}

/// Remove samples of configurations whose gain magnitude falls below
/// `min_relative` times the largest. Their target path is too weak for the
/// division by `g` to do anything but amplify noise. Returns the kept
/// samples and the dropped configuration indices.
pub fn drop_weak_configs(zero_mean: &Labeled, gains: &GainSolution, min_relative: f64) -> Result<(Labeled, Vec<usize>)> {
    if !(0.0..1.0).contains(&min_relative) {
        return Err(invalid(format!("min_relative must lie in [0, 1), got {min_relative}")));
    }
    let strongest = gains.g.iter().map(|g| g.norm()).fold(0.0, f64::max);
    let weak: Vec<usize> = (0..gains.g.len())
        .filter(|&n| gains.g[n].norm() < min_relative * strongest)
        .collect();
    let mut kept = zero_mean.clone();
    kept.samples.retain(|s| !weak.contains(&s.config));
    Ok((kept, weak))
}

/// Divide each configuration's samples by its gain and interleave them in
/// time order.
pub fn normalize_and_merge(zero_mean: &Labeled, gains: &GainSolution) -> Result<Vec<CsiSample>> {
    let mut merged: Vec<CsiSample> = zero_mean
        .samples
        .iter()
        .map(|s| {
            let g = gains.g.get(s.config).copied().ok_or(Error::InvalidGain {
                index: s.config,
                value: "missing".into(),
            })?;
            if !(g.is_finite() && g.norm() > 0.0) {
                return Err(Error::InvalidGain {
                    index: s.config,
                    value: g.to_string(),
                });
            }
            Ok(CsiSample {
                timestamp: s.timestamp,
                csi: s.csi.map(|z| z / g),
            })
        })
        .collect::<Result<_>>()?;
    merged.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
    Ok(merged)
}
