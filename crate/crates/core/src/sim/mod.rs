//! Synthetic experiments: play a moving target through the masked channel,
//! record CSI at the keyed receiver and at an eavesdropper, and score both.
//!
//! There is no direct Tx-Rx path; every contribution is reflected by the
//! RIS. The dynamic (target) path carries the motion, the static path is a
//! fixed random scattering matrix per receiver.

mod metrics;
mod motion;

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub use metrics::{
    attacker_view, correlation, evaluate, exhaustive_snr_spread, spectral_peak, AttackerView, EvalParams, RunReport, SpectralPeak,
    PROMINENCE_THRESHOLD,
};
pub use motion::{synthesize_dynamic_gain, DopplerSegment, Motion};

use crate::beamform::BeamVectorPair;
use crate::channel::{aggregate_sensing_csi, comm_snr, effective_channels, tx_ris_channel, RowChannels, ScenarioGeometry};
use crate::demask::{CsiSample, CsiTrace};
use crate::error::{invalid, shape, Result};
use crate::scheduler::{build_schedule, packet_times, packet_triggered_timeline, MaskingKey, MaskingSchedule, Timeline};
use crate::C64;

const PACKET_STREAM: u64 = 0;
const LEGIT_STATIC_STREAM: u64 = 1;
const ATTACKER_STATIC_STREAM: u64 = 2;
const LEGIT_NOISE_STREAM: u64 = 3;
const ATTACKER_NOISE_STREAM: u64 = 4;

/// Receiver clock relative to the RIS controller:
/// `t_rx = (1 + drift) * t_tx + offset`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClockModel {
    pub offset: f64,
    pub drift: f64,
}

impl ClockModel {
    /// Receiver timestamp of `t`, rounded to whole nanoseconds so traces
    /// survive a round trip through the nanosecond text format unchanged.
    pub fn apply(&self, t: f64) -> f64 {
        ((((1.0 + self.drift) * t + self.offset) * 1e9).round()) / 1e9
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimParams {
    /// Seconds.
    pub duration: f64,
    /// Hz.
    pub packet_rate: f64,
    /// Seconds on air per packet.
    pub packet_duration: f64,
    /// Nominal position of each packet inside its interval, in [0, 1).
    pub packet_phase: f64,
    /// Uniform jitter as a fraction of the interval.
    pub jitter: f64,
    /// Mean per-packet SNR at both sensing receivers.
    pub snr_db: f64,
    /// Mean static-path power over mean dynamic-path power.
    pub static_to_dynamic_db: f64,
    pub subcarriers: usize,
    /// Hz.
    pub bandwidth: f64,
    /// Path delays in seconds, giving each subcarrier its phase slope.
    pub dynamic_delay: f64,
    pub static_delay: f64,
    pub legit_clock: ClockModel,
    pub attacker_clock: ClockModel,
    /// Radians; angle of arrival at the eavesdropper.
    pub attacker_aoa: f64,
    /// Replace each candidate's target-path gain with `gain * |G_sync|`,
    /// where `G_sync` is the sync configuration's physical gain. Pairs are
    /// `[re, im]`.
    pub gain_override: Option<Vec<[f64; 2]>>,
    pub rng_seed: u64,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            duration: 10.0,
            packet_rate: 500.0,
            packet_duration: 3e-4,
            packet_phase: 0.5,
            jitter: 0.1,
            snr_db: 20.0,
            static_to_dynamic_db: 10.0,
            subcarriers: 30,
            bandwidth: 20e6,
            dynamic_delay: 40e-9,
            static_delay: 25e-9,
            legit_clock: ClockModel {
                offset: 1.3e-3,
                drift: 1e-5,
            },
            attacker_clock: ClockModel {
                offset: 0.7e-3,
                drift: -2e-5,
            },
            attacker_aoa: (-40.0f64).to_radians(),
            gain_override: None,
            rng_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub geometry: ScenarioGeometry,
    pub key: MaskingKey,
    pub pairs: Vec<BeamVectorPair>,
    pub motion: Motion,
    pub params: SimParams,
}

impl Scenario {
    /// Shape and range checks; run before any simulation work.
    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.key.validate()?;
        self.motion.validate()?;
        let g = &self.geometry;
        if self.pairs.len() != g.k {
            return Err(shape(format!("{} beam pairs for K = {} rows", self.pairs.len(), g.k)));
        }
        if self.pairs.iter().any(|p| p.phi1.len() != g.n || p.phi2.len() != g.n) {
            return Err(shape(format!("every beam vector must have N = {} elements", g.n)));
        }
        if self.key.rows() != g.k {
            return Err(shape(format!("key covers {} rows, geometry has {}", self.key.rows(), g.k)));
        }
        let p = &self.params;
        if !(p.packet_rate > 0.0 && p.packet_duration >= 0.0 && p.packet_rate * p.packet_duration < 1.0) {
            return Err(invalid("packet_rate * packet_duration must lie in [0, 1)"));
        }
        if !(p.duration >= 2.0 * self.key.t_sync) {
            return Err(invalid(format!(
                "duration {} s is shorter than 2 * t_sync = {} s",
                p.duration,
                2.0 * self.key.t_sync
            )));
        }
        if !(0.0..1.0).contains(&p.packet_phase) {
            return Err(invalid("packet_phase must lie in [0, 1)"));
        }
        if !(p.snr_db.is_finite() || p.snr_db == f64::INFINITY) || !p.static_to_dynamic_db.is_finite() {
            return Err(invalid("snr_db and static_to_dynamic_db must be numbers"));
        }
        if p.subcarriers == 0 || !(p.bandwidth > 0.0) {
            return Err(invalid("need at least one subcarrier and a positive bandwidth"));
        }
        if let Some(gains) = &p.gain_override {
            if gains.len() != self.key.candidates.len() {
                return Err(shape(format!(
                    "gain_override has {} entries for {} configurations",
                    gains.len(),
                    self.key.candidates.len()
                )));
            }
        }
        Ok(())
    }

    /// Number of leading rows the key's candidates switch.
    pub fn active_rows(&self) -> usize {
        active_rows(&self.key)
    }
}

pub fn active_rows(key: &MaskingKey) -> usize {
    (0..key.rows())
        .rev()
        .find(|&k| key.candidates.iter().any(|c| c.selection[k]))
        .map_or(1, |k| k + 1)
}

/// Everything the simulator knows that the receivers do not.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// Packet start times on the RIS controller clock.
    pub tx_times: Vec<f64>,
    pub legit_times: Vec<f64>,
    pub attacker_times: Vec<f64>,
    /// `e^{j phase}` of the target path per packet.
    pub motion: Vec<C64>,
    /// Schedule index in force per packet (sync uses the key's sync index).
    pub configs: Vec<usize>,
    /// Communication SNR per packet, dB.
    pub comm_snr_db: Vec<f64>,
    /// Target-path gain per schedule index at the keyed receiver.
    pub config_gains: Vec<C64>,
    pub legit_noise_var: f64,
    pub attacker_noise_var: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub legit: CsiTrace,
    pub attacker: CsiTrace,
    pub truth: GroundTruth,
    pub schedule: MaskingSchedule,
    pub timeline: Timeline,
}

/// Per-configuration CSI pieces for one receiver.
struct ReceiverModel {
    /// Target path, antennas by subcarriers, for unit motion.
    dynamic: Vec<DMatrix<C64>>,
    static_part: Vec<DMatrix<C64>>,
    gains: Vec<C64>,
}

fn subcarrier_phases(params: &SimParams, delay: f64) -> Vec<C64> {
    let f = params.subcarriers;
    let spacing = params.bandwidth / f as f64;
    (0..f)
        .map(|i| {
            let df = (i as f64 + 0.5) * spacing - params.bandwidth / 2.0;
            C64::from_polar(1.0, -2.0 * PI * df * delay)
        })
        .collect()
}

fn complex_gaussian(rng: &mut ChaCha8Rng, var: f64) -> C64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re * s, im * s)
}

fn receiver_model(scenario: &Scenario, h_tx: &[Vec<C64>], aoa: f64, static_stream: u64) -> Result<ReceiverModel> {
    let g = &scenario.geometry;
    let p = &scenario.params;
    let mut geometry = g.clone();
    geometry.theta_sense_aoa = aoa;
    let h_tx = h_tx.to_vec();
    let (m, n) = (g.m_sense, g.n);
    let zero_static = vec![DMatrix::<C64>::zeros(m, n); g.k];
    let zero_dynamic = vec![C64::new(0.0, 0.0); g.k];
    let a_s: Vec<C64> = g.pathloss_sense.iter().map(|&a| C64::new(a, 0.0)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(p.rng_seed);
    rng.set_stream(static_stream);
    let mut scatter: Vec<DMatrix<C64>> = (0..g.k)
        .map(|_| DMatrix::from_fn(m, n, |_, _| complex_gaussian(&mut rng, 1.0)))
        .collect();

    let n_idx = scenario.key.candidates.len() + 1;
    let mut dyn_vecs = Vec::with_capacity(n_idx);
    let mut static_vecs = Vec::with_capacity(n_idx);
    for idx in 0..n_idx {
        let config = scenario.key.configuration(idx).expect("index within key");
        let phis: Vec<&[C64]> = scenario.pairs.iter().zip(&config.selection).map(|(pr, &b)| pr.select(b)).collect();
        dyn_vecs.push(aggregate_sensing_csi(&geometry, &h_tx, &phis, &a_s, &zero_static)?);
        static_vecs.push(aggregate_sensing_csi(&geometry, &h_tx, &phis, &zero_dynamic, &scatter)?);
    }
    // receive steering for the target path; recover G_c from antenna 0
    let alpha_rx = crate::channel::steering_vector(aoa, m, g.element_spacing)?;
    let mut gains: Vec<C64> = dyn_vecs.iter().map(|v| v[0] / alpha_rx[0]).collect();
    if let Some(over) = &p.gain_override {
        let g_ref = gains[over.len()].norm();
        for (c, o) in over.iter().enumerate() {
            gains[c] = C64::new(o[0], o[1]) * g_ref;
            dyn_vecs[c] = alpha_rx.iter().map(|a| a * gains[c]).collect();
        }
    }

    let power = |vs: &[Vec<C64>]| vs.iter().flatten().map(|z| z.norm_sqr()).sum::<f64>();
    let (pd, ps) = (power(&dyn_vecs), power(&static_vecs));
    if ps > 0.0 {
        let scale = (pd * 10f64.powf(p.static_to_dynamic_db / 10.0) / ps).sqrt();
        for s in &mut scatter {
            *s *= C64::new(scale, 0.0);
        }
        for v in static_vecs.iter_mut().flatten() {
            *v *= scale;
        }
    }
    let ph_d = subcarrier_phases(p, p.dynamic_delay);
    let ph_s = subcarrier_phases(p, p.static_delay);
    let outer = |v: &[C64], ph: &[C64]| DMatrix::from_fn(m, ph.len(), |i, f| v[i] * ph[f]);
    Ok(ReceiverModel {
        dynamic: dyn_vecs.iter().map(|v| outer(v, &ph_d)).collect(),
        static_part: static_vecs.iter().map(|v| outer(v, &ph_s)).collect(),
        gains,
    })
}

fn render(model: &ReceiverModel, configs: &[usize], motion: &[C64], times: &[f64], snr_db: f64, noise_stream: u64, seed: u64) -> (CsiTrace, f64) {
    let clean: Vec<DMatrix<C64>> = configs
        .iter()
        .zip(motion)
        .map(|(&c, &u)| &model.dynamic[c] * u + &model.static_part[c])
        .collect();
    let entries = clean.first().map_or(1, |x| x.len()) as f64;
    let mean_power = clean.iter().map(|x| x.norm_squared()).sum::<f64>() / (clean.len().max(1) as f64 * entries);
    let noise_var = if snr_db == f64::INFINITY { 0.0 } else { mean_power / 10f64.powf(snr_db / 10.0) };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(noise_stream);
    let samples = clean
        .into_iter()
        .zip(times)
        .map(|(x, &t)| CsiSample {
            timestamp: t,
            csi: if noise_var > 0.0 { x.map(|z| z + complex_gaussian(&mut rng, noise_var)) } else { x },
        })
        .collect();
    (CsiTrace { samples }, noise_var)
}

/// Simulate one run: packets, switching, CSI at both receivers and the
/// quantities needed to score them.
pub fn run_scenario(scenario: &Scenario) -> Result<SimOutput> {
    scenario.validate()?;
    let g = &scenario.geometry;
    let p = &scenario.params;
    let h_tx = tx_ris_channel(g)?;
    let rows: RowChannels = effective_channels(g, &h_tx)?;

    let mut rng = ChaCha8Rng::seed_from_u64(p.rng_seed);
    rng.set_stream(PACKET_STREAM);
    let tx_times = packet_times(p.packet_rate, p.duration, p.packet_phase, p.jitter, &mut rng)?;
    let schedule = build_schedule(&scenario.key, p.duration)?;
    let durations = vec![p.packet_duration; tx_times.len()];
    let timeline = packet_triggered_timeline(&schedule, &tx_times, &durations)?;
    let configs = timeline.packet_configs.clone();

    let lambda = g.wavelength();
    let motion: Vec<C64> = tx_times
        .iter()
        .map(|&t| synthesize_dynamic_gain(&scenario.motion, C64::new(1.0, 0.0), t, lambda))
        .collect();

    let snr_by_config: Vec<f64> = (0..=scenario.key.candidates.len())
        .map(|idx| {
            let config = scenario.key.configuration(idx).expect("index within key");
            let phis: Vec<&[C64]> = scenario.pairs.iter().zip(&config.selection).map(|(pr, &b)| pr.select(b)).collect();
            comm_snr(&rows, &phis, g.tx_power, g.noise_power, g.m_comm).map(|s| 10.0 * s.log10())
        })
        .collect::<Result<_>>()?;

    let legit_model = receiver_model(scenario, &h_tx, g.theta_sense_aoa, LEGIT_STATIC_STREAM)?;
    let attacker_model = receiver_model(scenario, &h_tx, p.attacker_aoa, ATTACKER_STATIC_STREAM)?;
    let legit_times: Vec<f64> = tx_times.iter().map(|&t| p.legit_clock.apply(t)).collect();
    let attacker_times: Vec<f64> = tx_times.iter().map(|&t| p.attacker_clock.apply(t)).collect();
    let (legit, legit_noise_var) = render(&legit_model, &configs, &motion, &legit_times, p.snr_db, LEGIT_NOISE_STREAM, p.rng_seed);
    let (attacker, attacker_noise_var) =
        render(&attacker_model, &configs, &motion, &attacker_times, p.snr_db, ATTACKER_NOISE_STREAM, p.rng_seed);

    Ok(SimOutput {
        legit,
        attacker,
        truth: GroundTruth {
            comm_snr_db: configs.iter().map(|&c| snr_by_config[c]).collect(),
            tx_times,
            legit_times,
            attacker_times,
            motion,
            configs,
            config_gains: legit_model.gains,
            legit_noise_var,
            attacker_noise_var,
        },
        schedule,
        timeline,
    })
}
