//! Seeded bursty traffic generator.
//!
//! Every initiator alternates burst and gap periods. Burst start times follow a
//! shared master schedule (burst length plus a jittered gap), shifted per
//! initiator by a phase offset drawn uniformly from
//! `[0, (1 - phase_correlation) * period)`; initiator 0 is the phase reference
//! and is never shifted. A burst is a train of `packet_len`-cycle transactions,
//! one every `packet_len / burst_duty` cycles, addressed to the initiator's home
//! target (or to `hot_target` with probability `hot_fraction`). At the end of a
//! burst an initiator touches a random shared target with probability 1/2.
//! Shared targets are then capped at 10% of the mean busy mass of the active
//! private targets. Bursts that would cross the horizon are dropped.
//!
//! Randomness comes from ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded with
//! `seed_from_u64(seed)`. Stream 0 drives the master gap schedule; stream
//! `i + 1` drives initiator `i`. A `u64` maps to `[0, 1)` as
//! `(x >> 11) * 2^-53` and to an index below `n` as `(x * n) >> 64`.

use std::fmt::Write as _;
use std::str::FromStr;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::{Direction, Trace, Transaction};

/// Cap on a shared target's busy mass relative to the mean active private target.
pub const SHARED_MASS_CAP: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub num_initiators: usize,
    pub num_targets: usize,
    /// Mean burst length in cycles.
    pub burst_len_mean: u64,
    /// Relative spread of burst and gap lengths, in `[0, 1)`.
    pub burst_len_jitter: f64,
    pub inter_burst_gap_mean: u64,
    /// 1 = all initiators start their bursts together, 0 = independent phases.
    pub phase_correlation: f64,
    /// 0-based ids of low-rate targets.
    pub shared_target_ids: Vec<usize>,
    /// 0-based `(initiator, target)` streams flagged critical.
    pub critical_stream_pairs: Vec<(usize, usize)>,
    pub horizon: u64,
    pub seed: u64,
    /// Cycles per transaction inside a burst.
    pub packet_len: u64,
    /// Fraction of burst cycles carrying packets, in `(0, 1]`.
    pub burst_duty: f64,
    pub hot_target: Option<usize>,
    pub hot_fraction: f64,
}

impl GenSpec {
    /// A plain spec: no jitter, full correlation, back-to-back packets of 8 cycles.
    pub fn new(
        num_initiators: usize,
        num_targets: usize,
        burst_len_mean: u64,
        inter_burst_gap_mean: u64,
        horizon: u64,
        seed: u64,
    ) -> Self {
        GenSpec {
            num_initiators,
            num_targets,
            burst_len_mean,
            burst_len_jitter: 0.0,
            inter_burst_gap_mean,
            phase_correlation: 1.0,
            shared_target_ids: Vec::new(),
            critical_stream_pairs: Vec::new(),
            horizon,
            seed,
            packet_len: 8,
            burst_duty: 1.0,
            hot_target: None,
            hot_fraction: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParam(m.to_string()));
        if self.num_initiators == 0 || self.num_targets == 0 {
            return bad("initiators and targets must be positive");
        }
        if self.burst_len_mean == 0 || self.inter_burst_gap_mean == 0 {
            return bad("burst_len_mean and inter_burst_gap_mean must be positive");
        }
        if !(0.0..1.0).contains(&self.burst_len_jitter) {
            return bad("burst_len_jitter must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.phase_correlation) {
            return bad("phase_correlation must lie in [0, 1]");
        }
        if !(self.burst_duty > 0.0 && self.burst_duty <= 1.0) {
            return bad("burst_duty must lie in (0, 1]");
        }
        if self.packet_len == 0 {
            return bad("packet_len must be positive");
        }
        if self.horizon == 0 {
            return bad("horizon must be positive");
        }
        if self.shared_target_ids.iter().any(|&t| t >= self.num_targets) {
            return bad("shared_target_ids must be valid targets");
        }
        if self.private_targets().is_empty() {
            return bad("at least one target must be private");
        }
        if let Some(h) = self.hot_target {
            if h >= self.num_targets || self.shared_target_ids.contains(&h) {
                return bad("hot_target must be a private target");
            }
        }
        if !(0.0..=1.0).contains(&self.hot_fraction) {
            return bad("hot_fraction must lie in [0, 1]");
        }
        if self
            .critical_stream_pairs
            .iter()
            .any(|&(i, t)| i >= self.num_initiators || t >= self.num_targets)
        {
            return bad("critical_stream_pairs must reference valid cores");
        }
        Ok(())
    }

    pub fn private_targets(&self) -> Vec<usize> {
        (0..self.num_targets)
            .filter(|t| !self.shared_target_ids.contains(t))
            .collect()
    }

    /// Home target of an initiator: private targets are dealt round-robin.
    pub fn home_target(&self, initiator: usize) -> usize {
        let private = self.private_targets();
        private[initiator % private.len()]
    }

    /// Renders the spec as a `key=value` config file (ids 1-based).
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let ids = |v: &[usize]| {
            v.iter()
                .map(|t| (t + 1).to_string())
                .collect::<Vec<_>>()
                .join(" ")
        };
        let _ = writeln!(s, "initiators={}", self.num_initiators);
        let _ = writeln!(s, "targets={}", self.num_targets);
        let _ = writeln!(s, "burst_len_mean={}", self.burst_len_mean);
        let _ = writeln!(s, "burst_len_jitter={}", self.burst_len_jitter);
        let _ = writeln!(s, "inter_burst_gap_mean={}", self.inter_burst_gap_mean);
        let _ = writeln!(s, "phase_correlation={}", self.phase_correlation);
        let _ = writeln!(s, "shared_targets={}", ids(&self.shared_target_ids));
        let pairs: Vec<String> = self
            .critical_stream_pairs
            .iter()
            .map(|(i, t)| format!("{}:{}", i + 1, t + 1))
            .collect();
        let _ = writeln!(s, "critical_pairs={}", pairs.join(" "));
        let _ = writeln!(s, "horizon={}", self.horizon);
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "packet_len={}", self.packet_len);
        let _ = writeln!(s, "burst_duty={}", self.burst_duty);
        match self.hot_target {
            Some(h) => {
                let _ = writeln!(s, "hot_target={}", h + 1);
            }
            None => {
                let _ = writeln!(s, "hot_target=none");
            }
        }
        let _ = writeln!(s, "hot_fraction={}", self.hot_fraction);
        s
    }

    /// Parses a `key=value` config. Missing keys keep the values of `base`.
    pub fn parse_config(text: &str, base: GenSpec) -> Result<GenSpec> {
        let mut spec = base;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |m: String| Error::Parse {
                line: idx + 1,
                message: m,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key=value, got '{line}'")))?;
            let value = value.trim();
            fn num<T: FromStr>(v: &str, key: &str, line: usize) -> Result<T> {
                v.parse().map_err(|_| Error::Parse {
                    line,
                    message: format!("invalid value '{v}' for {key}"),
                })
            }
            let one_based = |tok: &str| -> Result<usize> {
                let id: usize = num(tok, key, idx + 1)?;
                id.checked_sub(1)
                    .ok_or_else(|| err(format!("ids are 1-based, got 0 in {key}")))
            };
            match key.trim() {
                "initiators" => spec.num_initiators = num(value, key, idx + 1)?,
                "targets" => spec.num_targets = num(value, key, idx + 1)?,
                "burst_len_mean" => spec.burst_len_mean = num(value, key, idx + 1)?,
                "burst_len_jitter" => spec.burst_len_jitter = num(value, key, idx + 1)?,
                "inter_burst_gap_mean" => spec.inter_burst_gap_mean = num(value, key, idx + 1)?,
                "phase_correlation" => spec.phase_correlation = num(value, key, idx + 1)?,
                "shared_targets" => {
                    spec.shared_target_ids = value
                        .split_whitespace()
                        .map(one_based)
                        .collect::<Result<_>>()?
                }
                "critical_pairs" => {
                    spec.critical_stream_pairs = value
                        .split_whitespace()
                        .map(|tok| {
                            let (a, b) = tok
                                .split_once(':')
                                .ok_or_else(|| err(format!("expected i:t pair, got '{tok}'")))?;
                            Ok((one_based(a)?, one_based(b)?))
                        })
                        .collect::<Result<_>>()?
                }
                "horizon" => spec.horizon = num(value, key, idx + 1)?,
                "seed" => spec.seed = num(value, key, idx + 1)?,
                "packet_len" => spec.packet_len = num(value, key, idx + 1)?,
                "burst_duty" => spec.burst_duty = num(value, key, idx + 1)?,
                "hot_target" => {
                    spec.hot_target = match value {
                        "none" | "" => None,
                        v => Some(one_based(v)?),
                    }
                }
                "hot_fraction" => spec.hot_fraction = num(value, key, idx + 1)?,
                other => return Err(err(format!("unknown key '{other}'"))),
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// Built-in traffic shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    /// 9 cores with private memories plus three low-rate shared devices,
    /// with strongly correlated burst phases.
    Mat2Like,
    /// 20 initiators on 20 private targets with independent phases.
    Uniform,
    /// Most bursts funnel into target 1.
    Hotspot,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mat2like" => Ok(Preset::Mat2Like),
            "uniform" => Ok(Preset::Uniform),
            "hotspot" => Ok(Preset::Hotspot),
            other => Err(Error::UnknownPreset(other.to_string())),
        }
    }
}

/// Preset specs. All presets use 1000-cycle bursts.
pub fn benchmark_preset(preset: Preset) -> GenSpec {
    match preset {
        Preset::Mat2Like => GenSpec {
            num_initiators: 9,
            num_targets: 12,
            burst_len_mean: 1000,
            burst_len_jitter: 0.2,
            inter_burst_gap_mean: 1500,
            phase_correlation: 0.6,
            shared_target_ids: vec![9, 10, 11],
            critical_stream_pairs: Vec::new(),
            horizon: 100_000,
            seed: 2005,
            packet_len: 6,
            burst_duty: 0.2,
            hot_target: None,
            hot_fraction: 0.0,
        },
        Preset::Uniform => GenSpec {
            num_initiators: 20,
            num_targets: 20,
            burst_len_mean: 1000,
            burst_len_jitter: 0.1,
            inter_burst_gap_mean: 2500,
            phase_correlation: 0.0,
            shared_target_ids: Vec::new(),
            critical_stream_pairs: Vec::new(),
            horizon: 120_000,
            seed: 2005,
            packet_len: 8,
            burst_duty: 0.2,
            hot_target: None,
            hot_fraction: 0.0,
        },
        Preset::Hotspot => GenSpec {
            num_initiators: 8,
            num_targets: 8,
            burst_len_mean: 1000,
            burst_len_jitter: 0.1,
            inter_burst_gap_mean: 3000,
            phase_correlation: 0.3,
            shared_target_ids: Vec::new(),
            critical_stream_pairs: Vec::new(),
            horizon: 100_000,
            seed: 2005,
            packet_len: 8,
            burst_duty: 0.5,
            hot_target: Some(0),
            hot_fraction: 0.7,
        },
    }
}

pub(crate) fn unit(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub(crate) fn below(rng: &mut ChaCha8Rng, n: usize) -> usize {
    ((rng.next_u64() as u128 * n as u128) >> 64) as usize
}

fn jittered(rng: &mut ChaCha8Rng, mean: u64, jitter: f64) -> u64 {
    let scale = 1.0 + jitter * (2.0 * unit(rng) - 1.0);
    ((mean as f64 * scale).round() as u64).max(1)
}

pub(crate) fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Generates a trace; a pure function of `spec`.
pub fn generate(spec: &GenSpec) -> Result<Trace> {
    spec.validate()?;
    let period_mean = spec.burst_len_mean + spec.inter_burst_gap_mean;

    // Master schedule: burst start times and the span until the next start.
    let mut master = Vec::new();
    {
        let mut rng = stream(spec.seed, 0);
        let mut start = 0u64;
        while start < spec.horizon {
            let gap = jittered(&mut rng, spec.inter_burst_gap_mean, spec.burst_len_jitter);
            let span = spec.burst_len_mean + gap;
            master.push((start, span));
            start += span;
        }
    }

    let stride = ((spec.packet_len as f64 / spec.burst_duty).round() as u64).max(spec.packet_len);
    let mut transactions = Vec::new();
    let mut shared_hits: Vec<Transaction> = Vec::new();
    for initiator in 0..spec.num_initiators {
        let mut rng = stream(spec.seed, initiator as u64 + 1);
        let spread = (1.0 - spec.phase_correlation) * period_mean as f64;
        let offset = if initiator == 0 {
            0
        } else {
            (spread * unit(&mut rng)).floor() as u64
        };
        let home = spec.home_target(initiator);
        let critical_to =
            |target: usize| spec.critical_stream_pairs.contains(&(initiator, target));
        let mut bursts = 0usize;
        for &(master_start, span) in &master {
            let len = jittered(&mut rng, spec.burst_len_mean, spec.burst_len_jitter)
                .min(span.saturating_sub(1).max(1));
            let start = master_start + offset;
            let end = start + len;
            let target = match spec.hot_target {
                Some(hot) if unit(&mut rng) < spec.hot_fraction => hot,
                _ => home,
            };
            let touch_shared = !spec.shared_target_ids.is_empty() && unit(&mut rng) < 0.5;
            let shared = if spec.shared_target_ids.is_empty() {
                0
            } else {
                spec.shared_target_ids[below(&mut rng, spec.shared_target_ids.len())]
            };
            if end > spec.horizon {
                break;
            }
            bursts += 1;
            let mut t = start;
            while t < end {
                let duration = spec.packet_len.min(end - t);
                transactions.push(Transaction {
                    start_cycle: t,
                    duration,
                    initiator,
                    target,
                    critical: critical_to(target),
                    direction: Direction::Request,
                });
                t += stride;
            }
            if touch_shared && end + spec.packet_len <= spec.horizon {
                shared_hits.push(Transaction {
                    start_cycle: end,
                    duration: spec.packet_len,
                    initiator,
                    target: shared,
                    critical: critical_to(shared),
                    direction: Direction::Request,
                });
            }
        }
        if bursts == 0 {
            return Err(Error::InvalidParam(format!(
                "horizon {} too small to fit one burst for initiator {}",
                spec.horizon,
                initiator + 1
            )));
        }
    }

    // Keep every shared target within the mass cap, dropping its latest hits first.
    let mut private_mass = vec![0u64; spec.num_targets];
    for t in &transactions {
        private_mass[t.target] += t.duration;
    }
    let active: Vec<u64> = private_mass.iter().copied().filter(|&m| m > 0).collect();
    let mean_private = active.iter().sum::<u64>() as f64 / active.len().max(1) as f64;
    let cap = (SHARED_MASS_CAP * mean_private).floor() as u64;
    shared_hits.sort_by_key(|t| (t.start_cycle, t.target, t.initiator));
    let mut shared_mass = vec![0u64; spec.num_targets];
    for hit in shared_hits {
        if shared_mass[hit.target] + hit.duration <= cap {
            shared_mass[hit.target] += hit.duration;
            transactions.push(hit);
        }
    }

    Trace::new(
        spec.num_initiators,
        spec.num_targets,
        Direction::Request,
        transactions,
    )?
    .with_horizon(spec.horizon)
}
