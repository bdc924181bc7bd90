//! Update of the common communication phase reference.

use std::f64::consts::{FRAC_PI_2, PI};

use super::{check_pairs, BeamVectorPair};
use crate::channel::{row_response, RowChannels};
use crate::error::Result;
use crate::C64;

const TWO_PI: f64 = 2.0 * PI;
const BREAKPOINT_DEDUP: f64 = 1e-12;

/// `min_i Re((h_comm_k)^H phi_{k,i} e^{-j varphi})` for row `k`.
pub fn comm_min_term(rows: &RowChannels, k: usize, pair: &BeamVectorPair, varphi: f64) -> f64 {
    let rot = C64::from_polar(1.0, -varphi);
    let c1 = row_response(&rows.h_comm_eff[k], &pair.phi1);
    let c2 = row_response(&rows.h_comm_eff[k], &pair.phi2);
    f64::min((c1 * rot).re, (c2 * rot).re)
}

pub(crate) fn min_sum(responses: &[(C64, C64)], varphi: f64) -> f64 {
    let rot = C64::from_polar(1.0, -varphi);
    responses.iter().map(|(c1, c2)| f64::min((c1 * rot).re, (c2 * rot).re)).sum()
}

/// Maximizer of `sum_k min(Re(c1_k e^{-j v}), Re(c2_k e^{-j v}))` over `v`.
pub(crate) fn best_varphi(responses: &[(C64, C64)]) -> f64 {
    let mut breaks: Vec<f64> = Vec::with_capacity(2 * responses.len());
    for (c1, c2) in responses {
        let d = c1 - c2;
        if d == C64::new(0.0, 0.0) {
            continue;
        }
        let base = d.arg();
        breaks.push((base + FRAC_PI_2).rem_euclid(TWO_PI));
        breaks.push((base - FRAC_PI_2).rem_euclid(TWO_PI));
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|a, b| (*a - *b).abs() <= BREAKPOINT_DEDUP);
    if breaks.len() > 1 && breaks[0] + TWO_PI - breaks[breaks.len() - 1] <= BREAKPOINT_DEDUP {
        breaks.pop();
    }

    if breaks.is_empty() {
        let total: C64 = responses.iter().map(|(c1, _)| c1).sum();
        return total.arg().rem_euclid(TWO_PI);
    }

    let mut best = breaks[0];
    let mut best_val = min_sum(responses, best);
    let consider = |v: f64, best: &mut f64, best_val: &mut f64| {
        let val = min_sum(responses, v);
        if val > *best_val {
            *best = v.rem_euclid(TWO_PI);
            *best_val = val;
        }
    };
    for &b in &breaks[1..] {
        consider(b, &mut best, &mut best_val);
    }
    for i in 0..breaks.len() {
        let lo = breaks[i];
        let hi = if i + 1 < breaks.len() { breaks[i + 1] } else { breaks[0] + TWO_PI };
        let mid = 0.5 * (lo + hi);
        let rot = C64::from_polar(1.0, -mid);
        let aggregate: C64 = responses
            .iter()
            .map(|(c1, c2)| if (c1 * rot).re <= (c2 * rot).re { *c1 } else { *c2 })
            .sum();
        if aggregate == C64::new(0.0, 0.0) {
            continue;
        }
        let mut v = aggregate.arg().rem_euclid(TWO_PI);
        if v < lo {
            v += TWO_PI;
        }
        if v > lo && v < hi {
            consider(v, &mut best, &mut best_val);
        }
    }
    best
}

/// Exact update of the phase reference with the beam pairs held fixed.
pub fn varphi_update_step3(pairs: &[BeamVectorPair], rows: &RowChannels) -> Result<f64> {
    check_pairs(pairs, rows)?;
    let responses: Vec<(C64, C64)> = pairs
        .iter()
        .enumerate()
        .map(|(k, p)| (row_response(&rows.h_comm_eff[k], &p.phi1), row_response(&rows.h_comm_eff[k], &p.phi2)))
        .collect();
    Ok(best_varphi(&responses))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_responses(rng: &mut impl Rng, k: usize) -> Vec<(C64, C64)> {
        (0..k)
            .map(|_| {
                (
                    C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
                    C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
                )
            })
            .collect()
    }

    #[test]
    fn identical_branches_take_aggregate_angle() {
        let c = C64::from_polar(2.0, 1.3);
        let v = best_varphi(&[(c, c)]);
        assert!((min_sum(&[(c, c)], v) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn real_positive_sums_give_zero() {
        let r = [(C64::new(1.0, 0.0), C64::new(2.0, 0.0)), (C64::new(0.5, 0.0), C64::new(0.5, 0.0))];
        let v = best_varphi(&r);
        assert!(v.min(TWO_PI - v) < 1e-9, "{v}");
    }

    #[test]
    fn beats_coarse_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let r = random_responses(&mut rng, 3);
            let v = best_varphi(&r);
            let grid = (0..50_000)
                .map(|i| min_sum(&r, TWO_PI * i as f64 / 50_000.0))
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(min_sum(&r, v) >= grid - 1e-6);
        }
    }
}
