//! Keyed masking schedules and packet-triggered RIS switching.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

use crate::error::{invalid, Error, Result};

const CANDIDATE_STREAM: u64 = 0;
const SCHEDULE_STREAM: u64 = 1;

/// Per-row profile selection: bit `k` false picks `phi_{k,1}`, true picks `phi_{k,2}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RisConfiguration {
    pub selection: Vec<bool>,
}

impl RisConfiguration {
    pub fn zeros(k: usize) -> Self {
        RisConfiguration { selection: vec![false; k] }
    }

    pub fn rows(&self) -> usize {
        self.selection.len()
    }

    /// `'0'`/`'1'` per row, row 0 first.
    pub fn to_bit_string(&self) -> String {
        self.selection.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }

    pub fn from_bit_string(s: &str) -> Result<Self> {
        let selection = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::Parse(format!("configuration bit must be 0 or 1, got {other:?}"))),
            })
            .collect::<Result<Vec<bool>>>()?;
        if selection.is_empty() {
            return Err(Error::Parse("empty configuration".into()));
        }
        Ok(RisConfiguration { selection })
    }

    fn complement(&self, active_rows: usize) -> Self {
        let mut out = self.clone();
        for b in out.selection.iter_mut().take(active_rows) {
            *b = !*b;
        }
        out
    }
}

/// How candidate configurations are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateSampling {
    /// Distinct selections drawn uniformly.
    Uniform,
    /// Half the set drawn uniformly, the other half their bitwise complements,
    /// so every row uses each of its two profiles equally often.
    #[default]
    Complementary,
}

/// Draw `n_configs` distinct selections over `k` rows. Only the first
/// `active_rows` rows vary; the rest stay on their first profile.
pub fn generate_candidates(k: usize, active_rows: usize, n_configs: usize, seed: u64, sampling: CandidateSampling) -> Result<Vec<RisConfiguration>> {
    if k == 0 {
        return Err(invalid("configurations need at least one row"));
    }
    if active_rows == 0 || active_rows > k {
        return Err(invalid(format!("active_rows must lie in 1..={k}, got {active_rows}")));
    }
    let space = if active_rows >= 63 { u64::MAX } else { 1u64 << active_rows };
    if n_configs < 1 || n_configs as u64 > space {
        return Err(invalid(format!(
            "n_configs must lie in 1..=2^{active_rows}, got {n_configs}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(CANDIDATE_STREAM);
    let draw = |rng: &mut ChaCha8Rng| {
        let mut selection = vec![false; k];
        for b in selection.iter_mut().take(active_rows) {
            *b = rng.random();
        }
        RisConfiguration { selection }
    };
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(n_configs);
    match sampling {
        CandidateSampling::Uniform => {
            while out.len() < n_configs {
                let c = draw(&mut rng);
                if seen.insert(c.clone()) {
                    out.push(c);
                }
            }
        }
        CandidateSampling::Complementary => {
            while out.len() + 1 < n_configs {
                let c = draw(&mut rng);
                let flipped = c.complement(active_rows);
                if seen.contains(&c) || seen.contains(&flipped) {
                    continue;
                }
                seen.insert(c.clone());
                seen.insert(flipped.clone());
                out.push(c);
                out.push(flipped);
            }
            while out.len() < n_configs {
                let c = draw(&mut rng);
                if seen.insert(c.clone()) {
                    out.push(c);
                }
            }
        }
    }
    Ok(out)
}

/// Shared secret between the transmitter-side controller and the keyed receiver.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskingKey {
    pub seed: u64,
    pub candidates: Vec<RisConfiguration>,
    pub sync_config: RisConfiguration,
    /// Seconds.
    pub t_ris: f64,
    pub t_sync: f64,
    /// Slots.
    pub sync_len: usize,
}

impl MaskingKey {
    /// Key with freshly drawn candidates and the all-zeros sync configuration.
    #[allow(clippy::too_many_arguments)]
    pub fn generate(
        seed: u64,
        k: usize,
        active_rows: usize,
        n_configs: usize,
        sampling: CandidateSampling,
        t_ris: f64,
        t_sync: f64,
        sync_len: usize,
    ) -> Result<Self> {
        let key = MaskingKey {
            seed,
            candidates: generate_candidates(k, active_rows, n_configs, seed, sampling)?,
            sync_config: RisConfiguration::zeros(k),
            t_ris,
            t_sync,
            sync_len,
        };
        key.validate()?;
        Ok(key)
    }

    pub fn rows(&self) -> usize {
        self.sync_config.rows()
    }

    /// Index used for sync slots in schedules and labels.
    pub fn sync_index(&self) -> usize {
        self.candidates.len()
    }

    /// The configuration behind a schedule index, sync included.
    pub fn configuration(&self, index: usize) -> Option<&RisConfiguration> {
        if index == self.sync_index() {
            Some(&self.sync_config)
        } else {
            self.candidates.get(index)
        }
    }

    pub fn slots_per_window(&self) -> usize {
        (self.t_sync / self.t_ris).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.candidates.is_empty() {
            return Err(invalid("key needs at least one candidate configuration"));
        }
        let k = self.rows();
        if k == 0 || self.candidates.iter().any(|c| c.rows() != k) {
            return Err(invalid("candidates and sync configuration must share one row count"));
        }
        let distinct: HashSet<_> = self.candidates.iter().collect();
        if distinct.len() != self.candidates.len() {
            return Err(invalid("candidate configurations must be pairwise distinct"));
        }
        if !(self.t_ris.is_finite() && self.t_ris > 0.0) {
            return Err(invalid(format!("t_ris must be positive, got {}", self.t_ris)));
        }
        if self.sync_len == 0 {
            return Err(invalid("sync_len must be at least 1"));
        }
        if !(self.t_sync.is_finite()) || self.t_sync < self.sync_len as f64 * self.t_ris * (1.0 - 1e-12) {
            return Err(invalid(format!(
                "t_sync = {} is shorter than sync_len * t_ris = {}",
                self.t_sync,
                self.sync_len as f64 * self.t_ris
            )));
        }
        let ratio = self.t_sync / self.t_ris;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio {
            return Err(invalid(format!("t_sync must be a whole number of t_ris periods, got ratio {ratio}")));
        }
        Ok(())
    }

    /// Slot offset of the sync run inside every window.
    pub fn sync_offset(&self) -> usize {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(SCHEDULE_STREAM);
        rng.random_range(0..=self.slots_per_window() - self.sync_len)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Slot {
    /// Seconds.
    pub start: f64,
    pub config_index: usize,
    pub is_sync: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskingSchedule {
    pub t_ris: f64,
    pub slots: Vec<Slot>,
}

impl MaskingSchedule {
    pub fn slot_index_at(&self, t: f64) -> Option<usize> {
        if !(t >= 0.0) {
            return None;
        }
        let i = (t / self.t_ris).floor() as usize;
        (i < self.slots.len()).then_some(i)
    }

    pub fn slot_at(&self, t: f64) -> Option<&Slot> {
        self.slot_index_at(t).map(|i| &self.slots[i])
    }

    pub fn duration(&self) -> f64 {
        self.slots.len() as f64 * self.t_ris
    }

    /// Start index of every sync run.
    pub fn sync_runs(&self) -> Vec<usize> {
        (0..self.slots.len())
            .filter(|&i| self.slots[i].is_sync && (i == 0 || !self.slots[i - 1].is_sync))
            .collect()
    }
}

/// Replay the key's schedule over `duration` seconds.
///
/// Every `t_sync` window holds one run of `sync_len` sync slots at the same
/// key-derived offset. Other slots are uniform over the candidates that
/// neither complete a run of `sync_len` identical non-sync slots nor put the
/// sync configuration right next to a sync run. When no candidate satisfies
/// both, the run rule is dropped, and when none satisfies even the adjacency
/// rule every candidate is allowed.
pub fn build_schedule(key: &MaskingKey, duration: f64) -> Result<MaskingSchedule> {
    key.validate()?;
    if !(duration.is_finite() && duration > 0.0) {
        return Err(invalid(format!("duration must be positive, got {duration}")));
    }
    let n_slots = ((duration / key.t_ris) - 1e-9).ceil().max(1.0) as usize;
    let per_window = key.slots_per_window();
    let offset = key.sync_offset();
    let sync_index = key.sync_index();
    let n_r = key.candidates.len();
    let sync_like: Vec<bool> = key.candidates.iter().map(|c| *c == key.sync_config).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(key.seed);
    rng.set_stream(SCHEDULE_STREAM);
    // consume the offset draw so slot draws do not reuse it
    let _: usize = rng.random_range(0..=per_window - key.sync_len);

    let is_sync_slot = |i: usize| {
        let pos = i % per_window;
        pos >= offset && pos < offset + key.sync_len
    };
    let mut indices: Vec<usize> = Vec::with_capacity(n_slots);
    let mut allowed = Vec::with_capacity(n_r);
    for i in 0..n_slots {
        if is_sync_slot(i) {
            indices.push(sync_index);
            continue;
        }
        let near_sync = (i > 0 && is_sync_slot(i - 1)) || is_sync_slot(i + 1);
        let adjacent_ok = |c: &usize| !(near_sync && sync_like[*c]);
        let run_ok = |c: &usize| indices.iter().rev().take_while(|&&x| x == *c).count() + 1 < key.sync_len;
        allowed.clear();
        allowed.extend((0..n_r).filter(|c| adjacent_ok(c) && run_ok(c)));
        if allowed.is_empty() {
            allowed.extend((0..n_r).filter(adjacent_ok));
        }
        if allowed.is_empty() {
            allowed.extend(0..n_r);
        }
        indices.push(allowed[rng.random_range(0..allowed.len())]);
    }
    let slots = indices
        .into_iter()
        .enumerate()
        .map(|(i, config_index)| Slot {
            start: i as f64 * key.t_ris,
            config_index,
            is_sync: config_index == sync_index,
        })
        .collect();
    Ok(MaskingSchedule { t_ris: key.t_ris, slots })
}

/// Outcome of packet-triggered switching.
#[derive(Debug, Clone, PartialEq)]
pub struct Timeline {
    /// Configuration index in force for each packet.
    pub packet_configs: Vec<usize>,
    /// Slot index applied by each packet (the period containing its start).
    pub packet_slots: Vec<usize>,
    /// `(time, slot index)` of every update, one per period with traffic.
    pub updates: Vec<(f64, usize)>,
}

/// The RIS applies a period's configuration at the first packet trigger inside
/// that period and holds it until the next update, so a packet always sees
/// the configuration of the period its transmission starts in.
pub fn packet_triggered_timeline(schedule: &MaskingSchedule, packet_times: &[f64], packet_durations: &[f64]) -> Result<Timeline> {
    if packet_times.len() != packet_durations.len() {
        return Err(crate::error::shape("packet_times and packet_durations differ in length"));
    }
    let mut packet_configs = Vec::with_capacity(packet_times.len());
    let mut packet_slots = Vec::with_capacity(packet_times.len());
    let mut updates: Vec<(f64, usize)> = Vec::new();
    for (i, (&start, &dur)) in packet_times.iter().zip(packet_durations).enumerate() {
        if !(dur >= 0.0) {
            return Err(invalid(format!("packet {i} has negative duration {dur}")));
        }
        if i > 0 && start < packet_times[i - 1] {
            return Err(invalid("packet times must be sorted"));
        }
        let slot = schedule
            .slot_index_at(start)
            .ok_or_else(|| invalid(format!("packet {i} at {start} s lies outside the schedule")))?;
        if updates.last().is_none_or(|&(_, s)| s != slot) {
            updates.push((start, slot));
        }
        packet_configs.push(schedule.slots[slot].config_index);
        packet_slots.push(slot);
    }
    // the next update is the next packet's trigger; it must not land inside
    // the current transmission
    for i in 0..packet_times.len() {
        let end = packet_times[i] + packet_durations[i];
        if let Some(&next) = packet_times.get(i + 1) {
            if next < end && packet_slots[i + 1] != packet_slots[i] {
                return Err(Error::SwitchingViolation {
                    packet: i,
                    detail: format!("update at {next} s inside transmission [{}, {end}] s", packet_times[i]),
                });
            }
            if next < end {
                return Err(invalid(format!("packets {i} and {} overlap", i + 1)));
            }
        }
    }
    Ok(Timeline {
        packet_configs,
        packet_slots,
        updates,
    })
}

/// Reconstruct the configuration in force at `t` from the update list.
pub fn config_in_force(schedule: &MaskingSchedule, updates: &[(f64, usize)], t: f64) -> Option<usize> {
    let pos = updates.partition_point(|&(time, _)| time <= t);
    (pos > 0).then(|| schedule.slots[updates[pos - 1].1].config_index)
}

/// Nominal packet start times: `phase` of the way into each inter-packet
/// interval, jittered uniformly by `jitter` of the interval.
pub fn packet_times(rate: f64, duration: f64, phase: f64, jitter: f64, rng: &mut impl Rng) -> Result<Vec<f64>> {
    if !(rate.is_finite() && rate > 0.0) {
        return Err(invalid(format!("packet rate must be positive, got {rate}")));
    }
    if !(0.0..0.5).contains(&jitter) {
        return Err(invalid(format!("jitter must lie in [0, 0.5), got {jitter}")));
    }
    let interval = 1.0 / rate;
    let count = (duration * rate).floor() as usize;
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let j = if jitter > 0.0 { rng.random_range(-jitter..jitter) } else { 0.0 };
        out.push((i as f64 + phase + j) * interval);
    }
    Ok(out)
}

/// A key other than `key`, drawn the same way.
pub fn random_wrong_key(key: &MaskingKey, seed: u64, active_rows: usize, sampling: CandidateSampling) -> Result<MaskingKey> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let s: u64 = rng.random();
        let mut wrong = MaskingKey::generate(
            s,
            key.rows(),
            active_rows,
            key.candidates.len(),
            sampling,
            key.t_ris,
            key.t_sync,
            key.sync_len,
        )?;
        wrong.sync_config = key.sync_config.clone();
        if wrong.candidates != key.candidates || wrong.sync_offset() != key.sync_offset() {
            return Ok(wrong);
        }
    }
}
