//! Synthetic PLC plant.
//!
//! A plant is a fixed sequence of states, each holding a base signal pattern
//! and a base dwell time. A cycle walks every state in order, emitting a few
//! log rows per state; a handful of "noisy" signals flip at random from row to
//! row. Anomalous cycles perturb one to three signals with one of three fault
//! archetypes and stall the machine long enough that the cycle overruns
//! `1.1 × ideal`:
//!
//! * stuck signal: the signal holds the wrong value through two or three
//!   consecutive states, and the machine times out at the end of the span;
//! * delayed transition: a gating signal switches late when entering a state,
//!   and the machine waits for it;
//! * dropped signal: an expected pulse is missing and the machine retries
//!   until it finally arrives.
//!
//! Each cycle draws from two independent streams (base behaviour and faults)
//! so that a fault-free regeneration with the same seed reproduces every
//! unperturbed value exactly.

use std::collections::BTreeSet;
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cycle::{LogRow, SignalLog};
use crate::error::{RcaError, Result};
use crate::seed::derive_seed;

/// Duration overrun factor anomalies are guaranteed to exceed.
pub const OVERRUN_FACTOR: f64 = 1.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    SyntheticPlc,
    Welding,
    InjectionMolding,
}

impl std::str::FromStr for Preset {
    type Err = RcaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "synthetic-plc" => Ok(Preset::SyntheticPlc),
            "welding" => Ok(Preset::Welding),
            "injection-molding" => Ok(Preset::InjectionMolding),
            other => Err(RcaError::Config(format!("unknown preset `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnomalyKind {
    StuckSignal,
    DelayedTransition,
    DroppedSignal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlantConfig {
    pub d: usize,
    pub num_cycles: usize,
    pub num_states: usize,
    pub ideal_cycle_seconds: f64,
    pub anomaly_rate: f64,
    pub duration_jitter_frac: f64,
    pub seed: u64,
    pub preset: Option<Preset>,
    /// Log rows per state visit, inclusive range.
    pub rows_per_state: (usize, usize),
    /// Probability that a pattern bit is 1.
    pub base_density: f64,
    /// Fraction of signals that flip at random (operational variance).
    pub noisy_signal_frac: f64,
    /// Per-row flip probability of a noisy signal.
    pub toggle_prob: f64,
    /// Fault stall as a fraction of the ideal cycle time, inclusive range.
    pub stall_frac: (f64, f64),
    /// If non-empty, faults only ever hit these signals (0-based).
    pub culprit_features: Vec<usize>,
}

impl Default for PlantConfig {
    fn default() -> Self {
        Self::preset(Preset::SyntheticPlc)
    }
}

impl PlantConfig {
    pub fn preset(preset: Preset) -> Self {
        let (d, num_cycles, num_states, ideal) = match preset {
            Preset::SyntheticPlc => (26, 400, 14, 140.0),
            Preset::Welding => (20, 2381, 13, 94.0),
            Preset::InjectionMolding => (83, 32, 18, 70.0),
        };
        Self {
            d,
            num_cycles,
            num_states,
            ideal_cycle_seconds: ideal,
            anomaly_rate: 0.1,
            duration_jitter_frac: 0.1,
            seed: 0,
            preset: Some(preset),
            rows_per_state: (2, 4),
            base_density: 0.35,
            noisy_signal_frac: 0.1,
            toggle_prob: 0.1,
            stall_frac: (0.2, 0.5),
            culprit_features: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(RcaError::Config(m));
        if self.d < 2 {
            return fail(format!("d must be at least 2, got {}", self.d));
        }
        if self.num_states < 2 {
            return fail(format!("num_states must be at least 2, got {}", self.num_states));
        }
        if !(0.0..=1.0).contains(&self.anomaly_rate) {
            return fail(format!("anomaly_rate must lie in [0, 1], got {}", self.anomaly_rate));
        }
        if !(0.0..=OVERRUN_FACTOR - 1.0).contains(&self.duration_jitter_frac) {
            return fail(format!(
                "duration_jitter_frac must lie in [0, {:.1}] so normal cycles never overrun",
                OVERRUN_FACTOR - 1.0
            ));
        }
        if !(self.ideal_cycle_seconds > 0.0) {
            return fail("ideal_cycle_seconds must be positive".into());
        }
        let (lo, hi) = self.rows_per_state;
        if lo == 0 || lo > hi {
            return fail(format!("rows_per_state must be a non-empty range of positive counts, got {lo}..={hi}"));
        }
        if !(0.0..=1.0).contains(&self.base_density)
            || !(0.0..=1.0).contains(&self.noisy_signal_frac)
            || !(0.0..=1.0).contains(&self.toggle_prob)
        {
            return fail("densities and probabilities must lie in [0, 1]".into());
        }
        let (slo, shi) = self.stall_frac;
        if !(slo > 0.0 && slo <= shi) {
            return fail(format!("stall_frac must be a positive range, got {slo}..={shi}"));
        }
        if let Some(&f) = self.culprit_features.iter().find(|&&f| f >= self.d) {
            return fail(format!("culprit feature {f} out of range for d = {}", self.d));
        }
        Ok(())
    }
}

/// Structure of a plant: state patterns, dwell times and noisy signals.
#[derive(Debug, Clone, PartialEq)]
pub struct Plant {
    pub config: PlantConfig,
    /// `num_states × d` base patterns.
    pub patterns: Vec<Vec<u8>>,
    pub base_dwell_seconds: f64,
    pub noisy: Vec<usize>,
    /// Signals eligible as fault targets.
    pub candidates: Vec<usize>,
}

impl Plant {
    pub fn feature_names(&self) -> Vec<String> {
        (1..=self.config.d).map(|i| format!("signal_{i}")).collect()
    }
}

pub fn build_plant(config: &PlantConfig) -> Result<Plant> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "plant-structure"));
    let (d, s) = (config.d, config.num_states);
    let mut patterns: Vec<Vec<u8>> = (0..s)
        .map(|_| (0..d).map(|_| u8::from(rng.gen_bool(config.base_density))).collect())
        .collect();
    // every signal transitions at least once between consecutive states
    for f in 0..d {
        if (1..s).all(|k| patterns[k][f] == patterns[k - 1][f]) {
            let k = rng.gen_range(1..s);
            for row in patterns.iter_mut().skip(k) {
                row[f] ^= 1;
            }
        }
    }
    let n_noisy = ((config.noisy_signal_frac * d as f64).round() as usize).min(d - 1);
    let mut order: Vec<usize> = (0..d).collect();
    order.shuffle(&mut rng);
    let mut noisy = order[..n_noisy].to_vec();
    noisy.sort_unstable();
    let candidates: Vec<usize> = if config.culprit_features.is_empty() {
        (0..d).filter(|f| !noisy.contains(f)).collect()
    } else {
        let mut c = config.culprit_features.clone();
        c.sort_unstable();
        c.dedup();
        noisy.retain(|f| !c.contains(f));
        c
    };
    Ok(Plant {
        config: config.clone(),
        patterns,
        base_dwell_seconds: config.ideal_cycle_seconds / s as f64,
        noisy,
        candidates,
    })
}

/// Ground truth for one cycle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthEntry {
    pub cycle: u32,
    pub flag: u8,
    pub root_cause_features: Vec<usize>,
    pub anomaly_kind: Option<AnomalyKind>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GroundTruth {
    pub cycles: Vec<TruthEntry>,
}

impl GroundTruth {
    pub fn flagged(&self) -> impl Iterator<Item = &TruthEntry> + '_ {
        self.cycles.iter().filter(|c| c.flag == 1)
    }

    pub fn write_json<W: Write>(&self, sink: W) -> Result<()> {
        serde_json::to_writer_pretty(sink, self)?;
        Ok(())
    }

    pub fn read_json<R: Read>(source: R) -> Result<Self> {
        let truth: GroundTruth = serde_json::from_reader(source)?;
        for c in &truth.cycles {
            if (c.flag == 1) == c.root_cause_features.is_empty() {
                return Err(RcaError::Config(format!(
                    "ground truth for cycle {} must list root causes iff flagged",
                    c.cycle
                )));
            }
        }
        Ok(truth)
    }
}

struct StateVisit {
    rows: Vec<Vec<u8>>,
    seconds: f64,
}

struct Fault {
    kind: AnomalyKind,
    features: Vec<usize>,
    /// First affected state (0-based).
    state: usize,
    /// Number of affected states (stuck signals only).
    span: usize,
    stall_seconds: f64,
}

fn clean_cycle(plant: &Plant, rng: &mut ChaCha8Rng) -> Vec<StateVisit> {
    let cfg = &plant.config;
    let (lo, hi) = cfg.rows_per_state;
    plant
        .patterns
        .iter()
        .map(|pattern| {
            let jitter = if cfg.duration_jitter_frac > 0.0 {
                rng.gen_range(-cfg.duration_jitter_frac..=cfg.duration_jitter_frac)
            } else {
                0.0
            };
            let k = rng.gen_range(lo..=hi);
            let rows = (0..k)
                .map(|_| {
                    let mut row = pattern.clone();
                    for &f in &plant.noisy {
                        if rng.gen_bool(cfg.toggle_prob) {
                            row[f] ^= 1;
                        }
                    }
                    row
                })
                .collect();
            StateVisit {
                rows,
                seconds: plant.base_dwell_seconds * (1.0 + jitter),
            }
        })
        .collect()
}

fn draw_fault(plant: &Plant, rng: &mut ChaCha8Rng) -> Fault {
    let cfg = &plant.config;
    let s = cfg.num_states;
    let p = &plant.patterns;
    let kind = [
        AnomalyKind::StuckSignal,
        AnomalyKind::DelayedTransition,
        AnomalyKind::DroppedSignal,
    ][rng.gen_range(0..3)];
    let want = rng.gen_range(1..=3usize);
    let stall_seconds = rng.gen_range(cfg.stall_frac.0..=cfg.stall_frac.1) * cfg.ideal_cycle_seconds;

    // (state, eligible features) options for the chosen archetype
    let options: Vec<(usize, Vec<usize>)> = match kind {
        AnomalyKind::StuckSignal => (0..s - 1).map(|k| (k, plant.candidates.clone())).collect(),
        AnomalyKind::DelayedTransition => (1..s)
            .map(|k| {
                let f: Vec<usize> = plant.candidates.iter().copied().filter(|&f| p[k][f] != p[k - 1][f]).collect();
                (k, f)
            })
            .filter(|(_, f)| !f.is_empty())
            .collect(),
        AnomalyKind::DroppedSignal => (0..s)
            .map(|k| {
                let f: Vec<usize> = plant.candidates.iter().copied().filter(|&f| p[k][f] == 1).collect();
                (k, f)
            })
            .filter(|(_, f)| !f.is_empty())
            .collect(),
    };
    if options.is_empty() {
        // pattern admits no transition/pulse on the candidates; a stuck fault always applies
        return Fault {
            kind: AnomalyKind::StuckSignal,
            features: pick(&plant.candidates, want, rng),
            state: rng.gen_range(0..s - 1),
            span: 2,
            stall_seconds,
        };
    }
    let (state, eligible) = &options[rng.gen_range(0..options.len())];
    let span = if kind == AnomalyKind::StuckSignal {
        rng.gen_range(2..=3usize).min(s - state)
    } else {
        1
    };
    Fault {
        kind,
        features: pick(eligible, want, rng),
        state: *state,
        span,
        stall_seconds,
    }
}

fn pick(pool: &[usize], want: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut f: Vec<usize> = pool.choose_multiple(rng, want.min(pool.len())).copied().collect();
    f.sort_unstable();
    f
}

fn apply_fault(plant: &Plant, visits: &mut [StateVisit], fault: &Fault, wait_rows: usize) {
    let p = &plant.patterns;
    match fault.kind {
        AnomalyKind::StuckSignal => {
            let first = fault.state;
            let last = first + fault.span - 1;
            for &f in &fault.features {
                let stuck = 1 - p[first][f];
                for v in &mut visits[first..=last] {
                    for row in &mut v.rows {
                        row[f] = stuck;
                    }
                }
            }
            let v = &mut visits[last];
            let tail = v.rows.last().cloned().expect("states have rows");
            v.rows.extend(std::iter::repeat(tail).take(wait_rows));
            v.seconds += fault.stall_seconds;
        }
        AnomalyKind::DelayedTransition => {
            let k = fault.state;
            let v = &mut visits[k];
            let mut waiting = v.rows[0].clone();
            for &f in &fault.features {
                waiting[f] = p[k - 1][f];
            }
            v.rows.splice(0..0, std::iter::repeat(waiting).take(wait_rows.max(1)));
            v.seconds += fault.stall_seconds;
        }
        AnomalyKind::DroppedSignal => {
            let k = fault.state;
            let v = &mut visits[k];
            for row in &mut v.rows {
                for &f in &fault.features {
                    row[f] = 0;
                }
            }
            let tail = v.rows.last().cloned().expect("states have rows");
            v.rows.extend(std::iter::repeat(tail.clone()).take(wait_rows));
            // the retry finally succeeds
            let mut ok = tail;
            for &f in &fault.features {
                ok[f] = 1;
            }
            v.rows.push(ok);
            v.seconds += fault.stall_seconds;
        }
    }
}

/// Seconds from the first to the last row when each state's rows are spread evenly over its visit.
fn measured_duration(visits: &[StateVisit]) -> f64 {
    let total: f64 = visits.iter().map(|v| v.seconds).sum();
    let last = visits.last().expect("at least two states");
    total - last.seconds / last.rows.len() as f64
}

fn to_micros(seconds: f64) -> i64 {
    (seconds * 1e6).round() as i64
}

/// Runs the plant for `num_cycles` cycles.
pub fn generate(plant: &Plant, seed: u64) -> (SignalLog, GroundTruth) {
    let cfg = &plant.config;
    let ideal = cfg.ideal_cycle_seconds;
    let mut base_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "plant-cycles"));
    let mut fault_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "plant-faults"));
    let mut rows = Vec::new();
    let mut truth = Vec::with_capacity(cfg.num_cycles);
    // 2024-01-01T06:00:00
    let mut clock_us: i64 = 1_704_088_800_000_000;
    let wait_period = plant.base_dwell_seconds / ((cfg.rows_per_state.0 + cfg.rows_per_state.1) as f64 / 2.0);

    for c in 0..cfg.num_cycles {
        let cycle_id = c as u32 + 1;
        for rng in [&mut base_rng, &mut fault_rng] {
            rng.set_stream(c as u64);
            rng.set_word_pos(0);
        }
        let mut visits = clean_cycle(plant, &mut base_rng);

        let faulty = fault_rng.gen::<f64>() < cfg.anomaly_rate && !plant.candidates.is_empty();
        let entry = if faulty {
            let mut fault = draw_fault(plant, &mut fault_rng);
            loop {
                let wait_rows = (fault.stall_seconds / wait_period).ceil() as usize;
                let mut trial: Vec<StateVisit> = visits
                    .iter()
                    .map(|v| StateVisit {
                        rows: v.rows.clone(),
                        seconds: v.seconds,
                    })
                    .collect();
                apply_fault(plant, &mut trial, &fault, wait_rows);
                if measured_duration(&trial) > OVERRUN_FACTOR * ideal * (1.0 + 1e-9) + 1e-3 {
                    visits = trial;
                    break;
                }
                fault.stall_seconds += 0.05 * ideal;
            }
            TruthEntry {
                cycle: cycle_id,
                flag: 1,
                root_cause_features: fault.features.clone(),
                anomaly_kind: Some(fault.kind),
            }
        } else {
            TruthEntry {
                cycle: cycle_id,
                flag: 0,
                root_cause_features: Vec::new(),
                anomaly_kind: None,
            }
        };

        let mut t = clock_us;
        for (k, v) in visits.iter().enumerate() {
            let m = v.rows.len();
            for (i, r) in v.rows.iter().enumerate() {
                rows.push(LogRow {
                    timestamp_us: t + to_micros(v.seconds * i as f64 / m as f64),
                    signals: r.clone(),
                    cycle: cycle_id,
                    state: k as u32 + 1,
                });
            }
            t += to_micros(v.seconds);
        }
        clock_us = t;
        truth.push(entry);
    }

    (
        SignalLog {
            feature_names: plant.feature_names(),
            rows,
        },
        GroundTruth { cycles: truth },
    )
}

/// Per-(state, feature) sets of observed values; used to diff a faulty run against a fault-free one.
pub fn state_value_sets(rows: &[LogRow], d: usize) -> Vec<Vec<BTreeSet<u8>>> {
    let states = rows.iter().map(|r| r.state as usize).max().unwrap_or(0);
    let mut sets = vec![vec![BTreeSet::new(); d]; states];
    for r in rows {
        for (f, &v) in r.signals.iter().enumerate() {
            sets[r.state as usize - 1][f].insert(v);
        }
    }
    sets
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cycle::{flag_productivity, segment_cycles, FlagPolicy};

    fn small(anomaly_rate: f64) -> PlantConfig {
        PlantConfig {
            num_cycles: 120,
            anomaly_rate,
            seed: 11,
            ..PlantConfig::preset(Preset::SyntheticPlc)
        }
    }

    #[test]
    fn presets_match_reported_setups() {
        let p = PlantConfig::preset(Preset::SyntheticPlc);
        assert_eq!((p.d, p.num_cycles, p.num_states, p.ideal_cycle_seconds, p.anomaly_rate), (26, 400, 14, 140.0, 0.1));
        let w = PlantConfig::preset(Preset::Welding);
        assert_eq!((w.d, w.num_cycles, w.num_states, w.ideal_cycle_seconds), (20, 2381, 13, 94.0));
        let m = PlantConfig::preset(Preset::InjectionMolding);
        assert_eq!((m.d, m.num_cycles, m.num_states, m.ideal_cycle_seconds), (83, 32, 18, 70.0));
    }

    #[test]
    fn zero_rate_has_no_faults() {
        let plant = build_plant(&small(0.0)).unwrap();
        let (_, truth) = generate(&plant, 3);
        assert!(truth.cycles.iter().all(|c| c.flag == 0 && c.root_cause_features.is_empty()));
    }

    #[test]
    fn flags_agree_with_duration_policy() {
        let plant = build_plant(&small(0.3)).unwrap();
        let (log, truth) = generate(&plant, 5);
        let cycles = segment_cycles(&log);
        assert_eq!(cycles.len(), 120);
        let flags = flag_productivity(&cycles, &FlagPolicy::duration(Some(140.0))).unwrap();
        for (f, t) in flags.iter().zip(&truth.cycles) {
            assert_eq!(f.flag, t.flag, "cycle {}", t.cycle);
            assert_eq!(t.flag == 1, !t.root_cause_features.is_empty());
        }
        for c in &cycles {
            let states: Vec<u32> = c.states.clone();
            assert!(states.windows(2).all(|w| w[0] <= w[1]));
            assert_eq!(states[0], 1);
            assert_eq!(*states.last().unwrap(), 14);
        }
    }

    #[test]
    fn truth_is_exactly_the_perturbed_signals() {
        let cfg = small(0.4);
        let plant = build_plant(&cfg).unwrap();
        let (log, truth) = generate(&plant, 9);
        let clean_plant = build_plant(&PlantConfig {
            anomaly_rate: 0.0,
            ..cfg
        })
        .unwrap();
        let (clean, _) = generate(&clean_plant, 9);
        let faulty = segment_cycles(&log);
        let reference = segment_cycles(&clean);
        for ((a, b), t) in faulty.iter().zip(&reference).zip(&truth.cycles) {
            let sa = state_value_sets(&a.to_log_rows(), 26);
            let sb = state_value_sets(&b.to_log_rows(), 26);
            let changed: Vec<usize> = (0..26).filter(|&f| (0..14).any(|k| sa[k][f] != sb[k][f])).collect();
            assert_eq!(changed, t.root_cause_features, "cycle {}", t.cycle);
        }
    }

    #[test]
    fn culprit_pool_restricts_faults() {
        let plant = build_plant(&PlantConfig {
            culprit_features: vec![11, 14],
            ..small(0.5)
        })
        .unwrap();
        let (_, truth) = generate(&plant, 1);
        assert!(truth.flagged().count() > 0);
        assert!(truth.flagged().all(|c| c.root_cause_features.iter().all(|f| [11, 14].contains(f))));
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(build_plant(&PlantConfig { d: 1, ..small(0.1) }).is_err());
        assert!(build_plant(&PlantConfig { num_states: 1, ..small(0.1) }).is_err());
        assert!(build_plant(&PlantConfig { anomaly_rate: 1.5, ..small(0.1) }).is_err());
        assert!(build_plant(&PlantConfig { duration_jitter_frac: 0.2, ..small(0.1) }).is_err());
    }
}
