//! Beam-pair design: each RIS row gets two reflection profiles that look the
//! same to the communication receiver and opposite to the sensing target.

mod bcd;
mod element;
mod pattern;
mod phase;

pub use bcd::{bcd_optimize, element_update_step1, element_update_step2, onebit_element_update, onebit_optimize, BcdState, Profile};
pub use element::{solve_relaxed_binary, solve_unit_modulus, BinaryCoefficients, ElementCoefficients};
pub use pattern::{beampattern, PatternPoint};
pub use phase::{comm_min_term, varphi_update_step3};

use serde::{Deserialize, Serialize};

use crate::channel::{row_response, RowChannels};
use crate::error::{invalid, shape, Result};
use crate::C64;

#[derive(Debug, Clone, PartialEq)]
pub struct BeamVectorPair {
    pub phi1: Vec<C64>,
    pub phi2: Vec<C64>,
}

impl BeamVectorPair {
    pub fn new(phi1: Vec<C64>, phi2: Vec<C64>) -> Self {
        BeamVectorPair { phi1, phi2 }
    }

    /// The profile a row uses for selection bit `bit`.
    pub fn select(&self, bit: bool) -> &[C64] {
        if bit {
            &self.phi2
        } else {
            &self.phi1
        }
    }

    pub fn is_unit_modulus(&self, tol: f64) -> bool {
        self.phi1.iter().chain(&self.phi2).all(|z| (z.norm() - 1.0).abs() <= tol)
    }

    pub fn is_binary(&self) -> bool {
        self.phi1.iter().chain(&self.phi2).all(|z| z.im == 0.0 && (z.re == 1.0 || z.re == -1.0))
    }
}

/// Resolved objective weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weights {
    pub omega1: f64,
    pub omega2: f64,
    pub omega3: f64,
}

impl Weights {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [("omega1", self.omega1), ("omega2", self.omega2), ("omega3", self.omega3)] {
            if !(w.is_finite() && w >= 0.0) {
                return Err(invalid(format!("{name} must be finite and nonnegative, got {w}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub omega1: f64,
    pub omega2: f64,
    /// `None` balances the communication term against the sensing terms.
    pub omega3: Option<f64>,
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Recorded with the result; the solver itself draws no random numbers.
    pub rng_seed: u64,
    pub onebit: bool,
    /// `None` derives the starting penalty from the sensing channel power.
    pub penalty_init: Option<f64>,
    pub penalty_growth: f64,
    pub penalty_rounds: usize,
    /// Weight of the sensing-aligned component, relative to the comm-aligned
    /// one, in the starting profiles of the continuous solver.
    pub init_sensing_weight: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            omega1: 1.0,
            omega2: 1.0,
            omega3: None,
            tolerance: 1e-4,
            max_iterations: 30,
            rng_seed: 0,
            onebit: false,
            penalty_init: None,
            penalty_growth: 5.0,
            penalty_rounds: 6,
            init_sensing_weight: 0.6,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(invalid(format!("tolerance must be positive, got {}", self.tolerance)));
        }
        if !(self.init_sensing_weight.is_finite() && self.init_sensing_weight > 0.0) {
            return Err(invalid(format!(
                "init_sensing_weight must be finite and positive, got {}",
                self.init_sensing_weight
            )));
        }
        if self.max_iterations == 0 {
            return Err(invalid("max_iterations must be at least 1"));
        }
        if self.onebit {
            if !(self.penalty_growth > 1.0) {
                return Err(invalid(format!("penalty_growth must exceed 1, got {}", self.penalty_growth)));
            }
            if let Some(rho) = self.penalty_init {
                if !(rho.is_finite() && rho >= 0.0) {
                    return Err(invalid(format!("penalty_init must be nonnegative, got {rho}")));
                }
            }
        }
        Weights {
            omega1: self.omega1,
            omega2: self.omega2,
            omega3: self.omega3.unwrap_or(0.0),
        }
        .validate()
    }

    /// Fill in an automatic `omega3` that puts the communication term on the
    /// same scale as the sensing terms, comparing the largest value each can
    /// reach with coherently aligned elements.
    pub fn resolve_weights(&self, rows: &RowChannels) -> Result<Weights> {
        self.validate()?;
        let omega3 = match self.omega3 {
            Some(w) => w,
            None => {
                let coherent = |h: &Vec<C64>| h.iter().map(|z| z.norm()).sum::<f64>();
                let sense: f64 = rows.h_sense_eff.iter().map(|h| 2.0 * coherent(h).powi(2)).sum();
                let comm: f64 = rows.h_comm_eff.iter().map(coherent).sum();
                if comm > 0.0 {
                    self.omega1 * sense / comm
                } else {
                    0.0
                }
            }
        };
        let w = Weights {
            omega1: self.omega1,
            omega2: self.omega2,
            omega3,
        };
        w.validate()?;
        Ok(w)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerResult {
    pub pairs: Vec<BeamVectorPair>,
    pub varphi: f64,
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Final (unpenalized) objective value.
    pub objective: f64,
    pub weights: Weights,
}

pub(crate) fn check_pairs(pairs: &[BeamVectorPair], rows: &RowChannels) -> Result<()> {
    if pairs.len() != rows.rows() {
        return Err(shape(format!("{} beam pairs for {} rows", pairs.len(), rows.rows())));
    }
    let n = rows.elements();
    for (k, p) in pairs.iter().enumerate() {
        if p.phi1.len() != n || p.phi2.len() != n {
            return Err(shape(format!("beam pair {k} length differs from N = {n}")));
        }
    }
    Ok(())
}

/// Weighted privacy/communication objective summed over rows.
pub fn objective(pairs: &[BeamVectorPair], varphi: f64, rows: &RowChannels, w: &Weights) -> Result<f64> {
    w.validate()?;
    check_pairs(pairs, rows)?;
    let mut total = 0.0;
    for (k, pair) in pairs.iter().enumerate() {
        let hs = &rows.h_sense_eff[k];
        let s1 = row_response(hs, &pair.phi1);
        let s2 = row_response(hs, &pair.phi2);
        total += w.omega1 * (s1.norm_sqr() + s2.norm_sqr()) - w.omega2 * (s1 + s2).norm_sqr();
        if w.omega3 != 0.0 {
            total += w.omega3 * comm_min_term(rows, k, pair, varphi);
        }
    }
    Ok(total)
}
