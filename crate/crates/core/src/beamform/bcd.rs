//! Block coordinate ascent over the two beam profiles and the phase reference.

use super::element::{solve_relaxed_binary, solve_unit_modulus, BinaryCoefficients, ElementCoefficients};
use super::phase::best_varphi;
use super::{check_pairs, objective, BeamVectorPair, OptimizerConfig, OptimizerResult, Weights};
use crate::channel::{row_response, RowChannels};
use crate::error::{invalid, Result};
use crate::C64;

/// Which profile of a pair an update acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    First,
    Second,
}

/// Beam pairs, phase reference and cached per-row responses.
#[derive(Debug, Clone)]
pub struct BcdState {
    pub pairs: Vec<BeamVectorPair>,
    pub varphi: f64,
    s: Vec<[C64; 2]>,
    c: Vec<[C64; 2]>,
}

impl BcdState {
    pub fn new(pairs: Vec<BeamVectorPair>, varphi: f64, rows: &RowChannels) -> Result<Self> {
        check_pairs(&pairs, rows)?;
        let mut state = BcdState {
            pairs,
            varphi,
            s: Vec::new(),
            c: Vec::new(),
        };
        state.refresh(rows);
        Ok(state)
    }

    /// Recompute the cached responses from scratch.
    pub fn refresh(&mut self, rows: &RowChannels) {
        self.s = self
            .pairs
            .iter()
            .zip(&rows.h_sense_eff)
            .map(|(p, h)| [row_response(h, &p.phi1), row_response(h, &p.phi2)])
            .collect();
        self.c = self
            .pairs
            .iter()
            .zip(&rows.h_comm_eff)
            .map(|(p, h)| [row_response(h, &p.phi1), row_response(h, &p.phi2)])
            .collect();
    }

    fn comm_responses(&self) -> Vec<(C64, C64)> {
        self.c.iter().map(|c| (c[0], c[1])).collect()
    }

    fn slot(profile: Profile) -> (usize, usize) {
        match profile {
            Profile::First => (0, 1),
            Profile::Second => (1, 0),
        }
    }

    fn current(&self, profile: Profile, k: usize, n: usize) -> C64 {
        match profile {
            Profile::First => self.pairs[k].phi1[n],
            Profile::Second => self.pairs[k].phi2[n],
        }
    }

    /// Coefficients of the single-element problem for `profile` at `(k, n)`.
    pub fn coefficients(&self, rows: &RowChannels, w: &Weights, profile: Profile, k: usize, n: usize) -> ElementCoefficients {
        let (own, other) = Self::slot(profile);
        let x = self.current(profile, k, n);
        let hs = rows.h_sense_eff[k][n].conj();
        let hc = rows.h_comm_eff[k][n].conj();
        let rot = C64::from_polar(1.0, -self.varphi);
        let beta1 = self.s[k][own] - hs * x;
        let beta2 = beta1 + self.s[k][other];
        ElementCoefficients {
            eta1: 2.0 * (w.omega1 * beta1.conj() - w.omega2 * beta2.conj()) * hs,
            eta3: rot * hc,
            beta3: ((self.c[k][own] - hc * x) * rot).re,
            beta4: (self.c[k][other] * rot).re,
            omega3: w.omega3,
        }
    }

    fn binary_coefficients(&self, rows: &RowChannels, w: &Weights, profile: Profile, k: usize, n: usize, rho: f64) -> BinaryCoefficients {
        let base = self.coefficients(rows, w, profile, k, n);
        BinaryCoefficients {
            q: (w.omega1 - w.omega2) * rows.h_sense_eff[k][n].norm_sqr() + rho,
            a: base.eta3.re,
            b: base.eta1.re,
            beta3: base.beta3,
            beta4: base.beta4,
            omega3: w.omega3,
        }
    }

    fn set(&mut self, rows: &RowChannels, profile: Profile, k: usize, n: usize, value: C64) {
        let (own, _) = Self::slot(profile);
        let delta = value - self.current(profile, k, n);
        self.s[k][own] += rows.h_sense_eff[k][n].conj() * delta;
        self.c[k][own] += rows.h_comm_eff[k][n].conj() * delta;
        match profile {
            Profile::First => self.pairs[k].phi1[n] = value,
            Profile::Second => self.pairs[k].phi2[n] = value,
        }
    }

    fn sweep(&mut self, rows: &RowChannels, w: &Weights, profile: Profile, rho: Option<f64>) {
        self.refresh(rows);
        for k in 0..self.pairs.len() {
            for n in 0..rows.elements() {
                let value = match rho {
                    None => solve_unit_modulus(&self.coefficients(rows, w, profile, k, n)),
                    Some(rho) => C64::new(solve_relaxed_binary(&self.binary_coefficients(rows, w, profile, k, n, rho)), 0.0),
                };
                self.set(rows, profile, k, n, value);
            }
        }
    }

    fn update_varphi(&mut self, rows: &RowChannels) {
        self.refresh(rows);
        self.varphi = best_varphi(&self.comm_responses());
    }

    fn penalty(&self, rho: f64) -> f64 {
        rho * self
            .pairs
            .iter()
            .flat_map(|p| p.phi1.iter().chain(&p.phi2))
            .map(|x| x.re * x.re - 1.0)
            .sum::<f64>()
    }
}

/// Closed-form update of `phi_{k,1}[n]` with everything else fixed.
pub fn element_update_step1(k: usize, n: usize, state: &BcdState, rows: &RowChannels, w: &Weights) -> C64 {
    solve_unit_modulus(&state.coefficients(rows, w, Profile::First, k, n))
}

/// Closed-form update of `phi_{k,2}[n]` with everything else fixed.
pub fn element_update_step2(k: usize, n: usize, state: &BcdState, rows: &RowChannels, w: &Weights) -> C64 {
    solve_unit_modulus(&state.coefficients(rows, w, Profile::Second, k, n))
}

/// Relaxed binary update of one element under penalty `rho`.
pub fn onebit_element_update(k: usize, n: usize, state: &BcdState, rows: &RowChannels, w: &Weights, profile: Profile, rho: f64) -> f64 {
    solve_relaxed_binary(&state.binary_coefficients(rows, w, profile, k, n, rho))
}

fn unit(z: C64) -> C64 {
    if z == C64::new(0.0, 0.0) {
        C64::new(1.0, 0.0)
    } else {
        C64::from_polar(1.0, z.arg())
    }
}

/// Without a communication term the antipodal sensing-aligned pair is already
/// optimal. With one, that pair sits on a kink of the min (both comm branches
/// cancel) that coordinate moves cannot leave, so each profile instead starts
/// as the projection of the comm-aligned vector plus or minus a weighted
/// sensing-aligned vector. A weight below one keeps the two profiles close,
/// which keeps their comm-side patterns matched over a wider angular range.
fn default_init(rows: &RowChannels, w: &Weights, sensing_weight: f64) -> Vec<BeamVectorPair> {
    rows.h_sense_eff
        .iter()
        .zip(&rows.h_comm_eff)
        .map(|(hs, hc)| {
            if w.omega3 == 0.0 {
                let phi1: Vec<C64> = hs.iter().map(|z| unit(*z)).collect();
                let phi2 = phi1.iter().map(|z| -z).collect();
                return BeamVectorPair::new(phi1, phi2);
            }
            let (phi1, phi2) = hs
                .iter()
                .zip(hc)
                .map(|(s, c)| (unit(unit(*c) + sensing_weight * unit(*s)), unit(unit(*c) - sensing_weight * unit(*s))))
                .unzip();
            BeamVectorPair::new(phi1, phi2)
        })
        .collect()
}

fn relaxed_init(rows: &RowChannels) -> Vec<BeamVectorPair> {
    rows.h_sense_eff
        .iter()
        .map(|h| {
            let x1: Vec<C64> = h.iter().map(|z| C64::new(z.arg().cos(), 0.0)).collect();
            let x2 = x1.iter().map(|z| -z).collect();
            BeamVectorPair::new(x1, x2)
        })
        .collect()
}

/// Alternate the two profile sweeps and the phase update until the
/// objective gain drops below the tolerance.
pub fn bcd_optimize(rows: &RowChannels, cfg: &OptimizerConfig, init: Option<&[BeamVectorPair]>) -> Result<OptimizerResult> {
    if cfg.onebit {
        return Err(invalid("bcd_optimize needs onebit = false; use onebit_optimize"));
    }
    rows.check_finite()?;
    let w = cfg.resolve_weights(rows)?;
    let pairs = match init {
        Some(p) => {
            check_pairs(p, rows)?;
            p.to_vec()
        }
        None => default_init(rows, &w, cfg.init_sensing_weight),
    };
    let mut state = BcdState::new(pairs, 0.0, rows)?;
    state.update_varphi(rows);
    let mut prev = objective(&state.pairs, state.varphi, rows, &w)?;
    let mut trace = Vec::with_capacity(cfg.max_iterations);
    let mut converged = false;
    for _ in 0..cfg.max_iterations {
        state.sweep(rows, &w, Profile::First, None);
        state.sweep(rows, &w, Profile::Second, None);
        state.update_varphi(rows);
        let value = objective(&state.pairs, state.varphi, rows, &w)?;
        trace.push(value);
        let gain = value - prev;
        prev = value;
        if gain.abs() < cfg.tolerance {
            converged = true;
            break;
        }
    }
    Ok(OptimizerResult {
        pairs: state.pairs,
        varphi: state.varphi,
        iterations: trace.len(),
        objective: prev,
        objective_trace: trace,
        converged,
        weights: w,
    })
}

/// Penalty continuation on the relaxed `[-1, 1]` problem, then rounding.
///
/// The trace holds the unpenalized objective after every inner iteration
/// across all penalty rounds, followed by the value of the rounded result.
pub fn onebit_optimize(rows: &RowChannels, cfg: &OptimizerConfig) -> Result<OptimizerResult> {
    if !cfg.onebit {
        return Err(invalid("onebit_optimize needs onebit = true"));
    }
    rows.check_finite()?;
    let w = cfg.resolve_weights(rows)?;
    let count = (rows.rows() * rows.elements()).max(1) as f64;
    let mut rho = cfg
        .penalty_init
        .unwrap_or_else(|| 0.1 * rows.h_sense_eff.iter().flatten().map(|z| z.norm_sqr()).sum::<f64>() / count);

    let mut state = BcdState::new(relaxed_init(rows), 0.0, rows)?;
    state.update_varphi(rows);
    let mut trace = Vec::new();
    let mut converged = false;
    for _ in 0..cfg.penalty_rounds {
        let mut prev = objective(&state.pairs, state.varphi, rows, &w)? + state.penalty(rho);
        converged = false;
        for _ in 0..cfg.max_iterations {
            state.sweep(rows, &w, Profile::First, Some(rho));
            state.sweep(rows, &w, Profile::Second, Some(rho));
            state.update_varphi(rows);
            let plain = objective(&state.pairs, state.varphi, rows, &w)?;
            trace.push(plain);
            let value = plain + state.penalty(rho);
            let gain = value - prev;
            prev = value;
            if gain.abs() < cfg.tolerance {
                converged = true;
                break;
            }
        }
        rho *= cfg.penalty_growth;
    }
    let iterations = trace.len();
    for pair in &mut state.pairs {
        for x in pair.phi1.iter_mut().chain(pair.phi2.iter_mut()) {
            *x = C64::new(if x.re >= 0.0 { 1.0 } else { -1.0 }, 0.0);
        }
    }
    state.update_varphi(rows);
    let value = objective(&state.pairs, state.varphi, rows, &w)?;
    trace.push(value);
    Ok(OptimizerResult {
        pairs: state.pairs,
        varphi: state.varphi,
        objective_trace: trace,
        converged,
        iterations,
        objective: value,
        weights: w,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_util::random_rows;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_state(rng: &mut impl Rng, rows: &RowChannels) -> BcdState {
        let n = rows.elements();
        let mut draw = || -> Vec<C64> { (0..n).map(|_| C64::from_polar(1.0, rng.random_range(0.0..2.0 * PI))).collect() };
        let pairs = (0..rows.rows()).map(|_| BeamVectorPair::new(draw(), draw())).collect();
        BcdState::new(pairs, 0.4, rows).unwrap()
    }

    #[test]
    fn element_update_maximizes_full_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..50 {
            let rows = random_rows(&mut rng, 2, 4);
            let state = random_state(&mut rng, &rows);
            let w = Weights { omega1: 1.0, omega2: 0.7, omega3: 1.5 };
            let (k, n) = (rng.random_range(0..2), rng.random_range(0..4));
            let best = element_update_step1(k, n, &state, &rows, &w);
            let eval = |v: C64| {
                let mut pairs = state.pairs.clone();
                pairs[k].phi1[n] = v;
                objective(&pairs, state.varphi, &rows, &w).unwrap()
            };
            let grid = (0..5000)
                .map(|i| eval(C64::from_polar(1.0, 2.0 * PI * i as f64 / 5000.0)))
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(eval(best) >= grid - 1e-6);
        }
    }

    #[test]
    fn step2_mirrors_step1_on_swapped_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let rows = random_rows(&mut rng, 2, 4);
        let state = random_state(&mut rng, &rows);
        let mut swapped = state.clone();
        for p in &mut swapped.pairs {
            std::mem::swap(&mut p.phi1, &mut p.phi2);
        }
        swapped.refresh(&rows);
        let w = Weights { omega1: 1.0, omega2: 1.0, omega3: 0.8 };
        assert_eq!(
            element_update_step2(1, 2, &state, &rows, &w),
            element_update_step1(1, 2, &swapped, &rows, &w)
        );
    }

    #[test]
    fn step2_without_comm_aligns_with_eta1() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let rows = random_rows(&mut rng, 1, 4);
        let state = random_state(&mut rng, &rows);
        let w = Weights { omega1: 1.0, omega2: 0.5, omega3: 0.0 };
        let eta1 = state.coefficients(&rows, &w, Profile::Second, 0, 1).eta1;
        let got = element_update_step2(0, 1, &state, &rows, &w);
        assert!((got - C64::from_polar(1.0, -eta1.arg())).norm() < 1e-12);
    }

    #[test]
    fn sensing_only_reaches_alignment_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let rows = random_rows(&mut rng, 3, 6);
        let cfg = OptimizerConfig {
            omega2: 0.0,
            omega3: Some(0.0),
            ..OptimizerConfig::default()
        };
        let res = bcd_optimize(&rows, &cfg, None).unwrap();
        let want: f64 = rows
            .h_sense_eff
            .iter()
            .map(|h| 2.0 * h.iter().map(|z| z.norm()).sum::<f64>().powi(2))
            .sum();
        assert!((res.objective - want).abs() <= 1e-9 * want);
        assert!(res.converged);
        assert_eq!(res.iterations, 1);
    }

    #[test]
    fn objective_trace_never_decreases() {
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        for seed in 0..20 {
            let rows = random_rows(&mut rng, 3, 5);
            let cfg = OptimizerConfig { rng_seed: seed, tolerance: 1e-9, ..OptimizerConfig::default() };
            let res = bcd_optimize(&rows, &cfg, None).unwrap();
            assert!(res.pairs.iter().all(|p| p.is_unit_modulus(1e-9)));
            for pair in res.objective_trace.windows(2) {
                assert!(pair[1] - pair[0] >= -1e-9);
            }
        }
    }

    #[test]
    fn onebit_output_is_binary() {
        let mut rng = ChaCha8Rng::seed_from_u64(36);
        let rows = random_rows(&mut rng, 2, 4);
        let cfg = OptimizerConfig { onebit: true, ..OptimizerConfig::default() };
        let res = onebit_optimize(&rows, &cfg).unwrap();
        assert!(res.pairs.iter().all(BeamVectorPair::is_binary));
    }

    #[test]
    fn onebit_sensing_only_with_real_channel_returns_all_ones() {
        let h = vec![vec![C64::new(0.5, 0.0), C64::new(0.8, 0.0), C64::new(0.3, 0.0)]];
        let rows = RowChannels { h_tx: h.clone(), h_comm_eff: h.clone(), h_sense_eff: h };
        let cfg = OptimizerConfig { onebit: true, omega2: 0.0, omega3: Some(0.0), ..OptimizerConfig::default() };
        let res = onebit_optimize(&rows, &cfg).unwrap();
        let ones = vec![C64::new(1.0, 0.0); 3];
        assert_eq!(res.pairs[0].phi1, ones);
        // the second profile starts opposite and stays at the equally good -1 vector
        let all_ones = objective(&[BeamVectorPair::new(ones.clone(), ones.clone())], 0.0, &rows, &res.weights).unwrap();
        assert!((res.objective - all_ones).abs() < 1e-12);
        assert!(res.pairs[0].phi2.iter().all(|x| *x == res.pairs[0].phi2[0]));
    }

    #[test]
    fn mode_mismatch_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let rows = random_rows(&mut rng, 1, 2);
        let onebit = OptimizerConfig { onebit: true, ..OptimizerConfig::default() };
        assert!(bcd_optimize(&rows, &onebit, None).is_err());
        assert!(onebit_optimize(&rows, &OptimizerConfig::default()).is_err());
    }

    #[test]
    fn non_finite_channel_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(38);
        let mut rows = random_rows(&mut rng, 1, 2);
        rows.h_sense_eff[0][0] = C64::new(f64::NAN, 0.0);
        assert!(bcd_optimize(&rows, &OptimizerConfig::default(), None).is_err());
    }
}
