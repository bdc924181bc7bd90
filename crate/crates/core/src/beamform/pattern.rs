use super::BeamVectorPair;
use crate::channel::steering_vector;
use crate::error::{shape, Result};
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatternPoint {
    pub angle: f64,
    pub mag1: f64,
    pub mag2: f64,
    /// `arg(r1 / r2)` in `(-pi, pi]`.
    pub phase_diff: f64,
}

/// Far-field response `alpha^H(theta) Diag(h_tx) phi_i` of one row for both
/// profiles of a pair.
pub fn beampattern(pair: &BeamVectorPair, h_tx_row: &[C64], angles: &[f64], spacing: f64) -> Result<Vec<PatternPoint>> {
    let n = h_tx_row.len();
    if pair.phi1.len() != n || pair.phi2.len() != n {
        return Err(shape("beam pair length differs from row length"));
    }
    angles
        .iter()
        .map(|&angle| {
            let alpha = steering_vector(angle, n, spacing)?;
            let (mut r1, mut r2) = (C64::default(), C64::default());
            for i in 0..n {
                let base = alpha[i].conj() * h_tx_row[i];
                r1 += base * pair.phi1[i];
                r2 += base * pair.phi2[i];
            }
            Ok(PatternPoint {
                angle,
                mag1: r1.norm(),
                mag2: r2.norm(),
                phase_diff: (r1 * r2.conj()).arg(),
            })
        })
        .collect()
}
