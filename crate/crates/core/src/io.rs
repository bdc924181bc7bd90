//! Text formats: CSI traces and numeric series as CSV with a header row,
//! keys, optimizer results, scenarios and reports as TOML.
//!
//! Floats are written in Rust's shortest round-trip form, so reading a file
//! back reproduces the values bit for bit.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::beamform::{bcd_optimize, onebit_optimize, BeamVectorPair, OptimizerConfig, OptimizerResult, PatternPoint, Weights};
use crate::channel::{effective_channels, tx_ris_channel, RowChannels, ScenarioGeometry};
use crate::demask::{CsiSample, CsiTrace};
use crate::error::{Error, Result};
use crate::scheduler::{CandidateSampling, MaskingKey, MaskingSchedule, RisConfiguration};
use crate::sim::{EvalParams, GroundTruth, Motion, Scenario, SimParams};
use crate::C64;

pub const TRACE_HEADER: &str = "timestamp_ns,antenna,subcarrier,real,imag";

fn parse_err(msg: impl Into<String>) -> Error {
    Error::Parse(msg.into())
}

fn to_ns(t: f64) -> i64 {
    (t * 1e9).round() as i64
}

fn from_ns(ns: i64) -> f64 {
    ns as f64 / 1e9
}

/// One line per CSI entry, samples in order, antenna-major within a sample.
pub fn trace_to_csv(trace: &CsiTrace) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for s in &trace.samples {
        let ns = to_ns(s.timestamp);
        for a in 0..s.csi.nrows() {
            for f in 0..s.csi.ncols() {
                let z = s.csi[(a, f)];
                let _ = writeln!(out, "{ns},{a},{f},{},{}", z.re, z.im);
            }
        }
    }
    out
}

/// Parse a trace written by [`trace_to_csv`] or any tool emitting the same
/// columns. Every sample must fill the full antenna-by-subcarrier grid.
pub fn trace_from_csv(text: &str) -> Result<CsiTrace> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == TRACE_HEADER => {}
        Some((_, h)) => return Err(parse_err(format!("trace header must be `{TRACE_HEADER}`, got `{}`", h.trim()))),
        None => return Err(parse_err("trace file is empty")),
    }
    let mut groups: Vec<(i64, Vec<(usize, usize, C64)>)> = Vec::new();
    let (mut antennas, mut subcarriers) = (0, 0);
    for (no, line) in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 5 {
            return Err(parse_err(format!("line {}: expected 5 fields, got {}", no + 1, fields.len())));
        }
        let bad = |what: &str| parse_err(format!("line {}: bad {what}", no + 1));
        let ns: i64 = fields[0].parse().map_err(|_| bad("timestamp_ns"))?;
        let a: usize = fields[1].parse().map_err(|_| bad("antenna"))?;
        let f: usize = fields[2].parse().map_err(|_| bad("subcarrier"))?;
        let re: f64 = fields[3].parse().map_err(|_| bad("real"))?;
        let im: f64 = fields[4].parse().map_err(|_| bad("imag"))?;
        antennas = antennas.max(a + 1);
        subcarriers = subcarriers.max(f + 1);
        match groups.last_mut() {
            Some((t, entries)) if *t == ns => entries.push((a, f, C64::new(re, im))),
            _ => groups.push((ns, vec![(a, f, C64::new(re, im))])),
        }
    }
    let mut samples = Vec::with_capacity(groups.len());
    for (ns, entries) in groups {
        let mut csi = DMatrix::from_element(antennas, subcarriers, C64::new(f64::NAN, 0.0));
        let mut filled = 0;
        for (a, f, z) in entries {
            if !csi[(a, f)].re.is_nan() {
                return Err(parse_err(format!("timestamp {ns}: duplicate entry ({a}, {f})")));
            }
            csi[(a, f)] = z;
            filled += 1;
        }
        if filled != antennas * subcarriers {
            return Err(parse_err(format!(
                "timestamp {ns}: {filled} entries, expected {antennas} x {subcarriers}"
            )));
        }
        samples.push(CsiSample {
            timestamp: from_ns(ns),
            csi,
        });
    }
    let trace = CsiTrace { samples };
    trace.dims()?;
    Ok(trace)
}

fn toml_err(e: impl std::fmt::Display) -> Error {
    // toml messages span several lines (position, source excerpt, carets,
    // reason); fold them into one line that names the offending key
    let text = e.to_string();
    let lines: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    let head = lines.first().copied().unwrap_or("malformed TOML");
    let reason = lines.last().copied().filter(|l| *l != head && !l.contains('|')).unwrap_or_default();
    let key = lines
        .iter()
        .filter_map(|l| l.split_once('|').map(|(_, src)| src.trim()))
        .find(|src| !src.is_empty() && !src.chars().all(|c| c == '^'))
        .and_then(|src| src.split_once('=').map(|(k, _)| k.trim()))
        .filter(|k| !k.is_empty());
    let mut msg = head.to_string();
    if let Some(k) = key {
        msg.push_str(&format!(", field `{k}`"));
    }
    if !reason.is_empty() {
        msg.push_str(": ");
        msg.push_str(reason);
    }
    parse_err(msg)
}

fn to_toml<T: Serialize>(value: &T) -> Result<String> {
    toml::to_string(value).map_err(|e| Error::InvalidArgument(format!("cannot serialize: {e}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KeyFile {
    seed: u64,
    t_ris: f64,
    t_sync: f64,
    sync_len: usize,
    /// Row selections as `0`/`1` strings, row 0 first.
    sync_config: String,
    candidates: Vec<String>,
}

pub fn key_to_toml(key: &MaskingKey) -> Result<String> {
    to_toml(&KeyFile {
        seed: key.seed,
        t_ris: key.t_ris,
        t_sync: key.t_sync,
        sync_len: key.sync_len,
        sync_config: key.sync_config.to_bit_string(),
        candidates: key.candidates.iter().map(|c| c.to_bit_string()).collect(),
    })
}

pub fn key_from_toml(text: &str) -> Result<MaskingKey> {
    let file: KeyFile = toml::from_str(text).map_err(toml_err)?;
    let key = MaskingKey {
        seed: file.seed,
        candidates: file
            .candidates
            .iter()
            .map(|s| RisConfiguration::from_bit_string(s))
            .collect::<Result<_>>()?,
        sync_config: RisConfiguration::from_bit_string(&file.sync_config)?,
        t_ris: file.t_ris,
        t_sync: file.t_sync,
        sync_len: file.sync_len,
    };
    key.validate()?;
    Ok(key)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairFile {
    phi1_re: Vec<f64>,
    phi1_im: Vec<f64>,
    phi2_re: Vec<f64>,
    phi2_im: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightsFile {
    omega1: f64,
    omega2: f64,
    omega3: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ResultFile {
    varphi: f64,
    objective: f64,
    iterations: usize,
    converged: bool,
    objective_trace: Vec<f64>,
    weights: WeightsFile,
    pairs: Vec<PairFile>,
}

fn split(v: &[C64]) -> (Vec<f64>, Vec<f64>) {
    (v.iter().map(|z| z.re).collect(), v.iter().map(|z| z.im).collect())
}

fn join(re: &[f64], im: &[f64], what: &str) -> Result<Vec<C64>> {
    if re.len() != im.len() {
        return Err(parse_err(format!("{what}: real and imaginary parts differ in length")));
    }
    Ok(re.iter().zip(im).map(|(&a, &b)| C64::new(a, b)).collect())
}

pub fn result_to_toml(result: &OptimizerResult) -> Result<String> {
    to_toml(&ResultFile {
        varphi: result.varphi,
        objective: result.objective,
        iterations: result.iterations,
        converged: result.converged,
        objective_trace: result.objective_trace.clone(),
        weights: WeightsFile {
            omega1: result.weights.omega1,
            omega2: result.weights.omega2,
            omega3: result.weights.omega3,
        },
        pairs: result
            .pairs
            .iter()
            .map(|p| {
                let (phi1_re, phi1_im) = split(&p.phi1);
                let (phi2_re, phi2_im) = split(&p.phi2);
                PairFile {
                    phi1_re,
                    phi1_im,
                    phi2_re,
                    phi2_im,
                }
            })
            .collect(),
    })
}

pub fn result_from_toml(text: &str) -> Result<OptimizerResult> {
    let file: ResultFile = toml::from_str(text).map_err(toml_err)?;
    let pairs = file
        .pairs
        .iter()
        .enumerate()
        .map(|(k, p)| {
            Ok(BeamVectorPair::new(
                join(&p.phi1_re, &p.phi1_im, &format!("pairs[{k}].phi1"))?,
                join(&p.phi2_re, &p.phi2_im, &format!("pairs[{k}].phi2"))?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    if pairs.is_empty() {
        return Err(parse_err("result holds no beam pairs"));
    }
    Ok(OptimizerResult {
        pairs,
        varphi: file.varphi,
        objective_trace: file.objective_trace,
        converged: file.converged,
        iterations: file.iterations,
        objective: file.objective,
        weights: Weights {
            omega1: file.weights.omega1,
            omega2: file.weights.omega2,
            omega3: file.weights.omega3,
        },
    })
}

pub fn objective_trace_csv(trace: &[f64]) -> String {
    let mut out = String::from("iteration,objective\n");
    for (i, v) in trace.iter().enumerate() {
        let _ = writeln!(out, "{},{v}", i + 1);
    }
    out
}

pub fn beampattern_csv(points: &[PatternPoint]) -> String {
    let mut out = String::from("angle_deg,mag1,mag2,phase_diff\n");
    for p in points {
        let _ = writeln!(out, "{},{},{},{}", p.angle.to_degrees(), p.mag1, p.mag2, p.phase_diff);
    }
    out
}

pub fn schedule_csv(schedule: &MaskingSchedule, key: &MaskingKey) -> String {
    let mut out = String::from("slot,start,config_index,is_sync,selection\n");
    for (i, s) in schedule.slots.iter().enumerate() {
        let bits = key.configuration(s.config_index).map(|c| c.to_bit_string()).unwrap_or_default();
        let _ = writeln!(out, "{i},{},{},{},{bits}", s.start, s.config_index, s.is_sync as u8);
    }
    out
}

/// Per-packet ground truth, one row per packet.
pub fn truth_csv(truth: &GroundTruth) -> String {
    let mut out = String::from("packet,tx_time,legit_timestamp_ns,attacker_timestamp_ns,config_index,motion_re,motion_im,comm_snr_db\n");
    for i in 0..truth.tx_times.len() {
        let _ = writeln!(
            out,
            "{i},{},{},{},{},{},{},{}",
            truth.tx_times[i],
            to_ns(truth.legit_times[i]),
            to_ns(truth.attacker_times[i]),
            truth.configs[i],
            truth.motion[i].re,
            truth.motion[i].im,
            truth.comm_snr_db[i]
        );
    }
    out
}

/// Receiver timestamps and motion phasors recovered from [`truth_csv`];
/// `attacker` selects which receiver's clock to return.
pub fn truth_from_csv(text: &str, attacker: bool) -> Result<(Vec<f64>, Vec<C64>)> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| parse_err("truth file is empty"))?;
    let cols: BTreeMap<&str, usize> = header.split(',').map(str::trim).enumerate().map(|(i, c)| (c, i)).collect();
    let col = |name: &str| cols.get(name).copied().ok_or_else(|| parse_err(format!("truth file lacks column `{name}`")));
    let t_col = col(if attacker { "attacker_timestamp_ns" } else { "legit_timestamp_ns" })?;
    let (re_col, im_col) = (col("motion_re")?, col("motion_im")?);
    let mut times = Vec::new();
    let mut motion = Vec::new();
    for (no, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        let get = |i: usize| f.get(i).copied().ok_or_else(|| parse_err(format!("truth row {}: too few fields", no + 1)));
        let ns: i64 = get(t_col)?.parse().map_err(|_| parse_err(format!("truth row {}: bad timestamp", no + 1)))?;
        let re: f64 = get(re_col)?.parse().map_err(|_| parse_err(format!("truth row {}: bad motion_re", no + 1)))?;
        let im: f64 = get(im_col)?.parse().map_err(|_| parse_err(format!("truth row {}: bad motion_im", no + 1)))?;
        times.push(from_ns(ns));
        motion.push(C64::new(re, im));
    }
    Ok((times, motion))
}

/// How a scenario file describes its key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KeySpec {
    /// Path to a key file; overrides the generation fields when set.
    pub file: Option<String>,
    pub seed: u64,
    pub n_configs: usize,
    /// Defaults to every row.
    pub active_rows: Option<usize>,
    pub sampling: CandidateSampling,
    pub t_ris: f64,
    pub t_sync: f64,
    pub sync_len: usize,
}

impl Default for KeySpec {
    fn default() -> Self {
        KeySpec {
            file: None,
            seed: 1,
            n_configs: 8,
            active_rows: None,
            sampling: CandidateSampling::Complementary,
            t_ris: 0.002,
            t_sync: 0.5,
            sync_len: 3,
        }
    }
}

impl KeySpec {
    pub fn generate(&self, k: usize) -> Result<MaskingKey> {
        MaskingKey::generate(
            self.seed,
            k,
            self.active_rows.unwrap_or(k),
            self.n_configs,
            self.sampling,
            self.t_ris,
            self.t_sync,
            self.sync_len,
        )
    }
}

/// Everything one experiment needs. Missing sections take their defaults;
/// a missing `[geometry]` means the built-in 8x16 deployment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioFile {
    /// Path to an optimizer result; when absent the pairs are optimized.
    pub pairs: Option<String>,
    pub geometry: Option<ScenarioGeometry>,
    pub optimizer: OptimizerConfig,
    pub key: KeySpec,
    pub motion: Motion,
    pub sim: SimParams,
    pub eval: EvalParams,
}

impl Default for ScenarioFile {
    fn default() -> Self {
        ScenarioFile {
            pairs: None,
            geometry: None,
            optimizer: OptimizerConfig::default(),
            key: KeySpec::default(),
            motion: Motion::default(),
            sim: SimParams::default(),
            eval: EvalParams::default(),
        }
    }
}

impl ScenarioFile {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut file: ScenarioFile = toml::from_str(text).map_err(toml_err)?;
        if let Some(g) = &mut file.geometry {
            if g.ris_element_positions.is_empty() {
                g.fill_grid();
            }
            g.validate()?;
        }
        file.optimizer.validate()?;
        file.motion.validate()?;
        Ok(file)
    }

    pub fn to_toml(&self) -> Result<String> {
        to_toml(self)
    }

    pub fn geometry(&self) -> ScenarioGeometry {
        self.geometry.clone().unwrap_or_else(ScenarioGeometry::default_scenario)
    }

    /// Assemble the runnable scenario and its effective channels. A key or
    /// pairs given here win over the file; missing pairs are optimized with
    /// the file's optimizer settings.
    pub fn build(&self, key: Option<MaskingKey>, pairs: Option<Vec<BeamVectorPair>>) -> Result<(Scenario, RowChannels)> {
        let geometry = self.geometry();
        let rows = effective_channels(&geometry, &tx_ris_channel(&geometry)?)?;
        let key = match key {
            Some(k) => k,
            None => self.key.generate(geometry.k)?,
        };
        let pairs = match pairs {
            Some(p) => p,
            None if self.optimizer.onebit => onebit_optimize(&rows, &self.optimizer)?.pairs,
            None => bcd_optimize(&rows, &self.optimizer, None)?.pairs,
        };
        let scenario = Scenario {
            geometry,
            key,
            pairs,
            motion: self.motion.clone(),
            params: self.sim.clone(),
        };
        scenario.validate()?;
        Ok((scenario, rows))
    }
}

pub fn to_toml_string<T: Serialize>(value: &T) -> Result<String> {
    to_toml(value)
}
