//! Trace data model and the `#xbar-trace v1` CSV format.
//!
//! A trace file starts with a header line
//!
//! ```text
//! #xbar-trace v1,initiators=<n>,targets=<n>[,horizon=<cycles>]
//! ```
//!
//! followed by rows `start_cycle,duration,initiator_id,target_id,direction,critical`
//! with `direction` in `{req,resp}` and `critical` in `{0,1}`. Ids in the file are
//! 1-based; in memory every index is 0-based. Any other line starting with `#`
//! is a comment.
//!
//! A trace is always held in the *design frame* of one crossbar: the side that
//! gets bound to buses is called the target. Loading with
//! [`Direction::Response`] keeps only response rows and swaps the initiator and
//! target roles, so the same analysis designs the target-initiator crossbar.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const HEADER_TAG: &str = "#xbar-trace v1";

/// Which crossbar a transaction travels through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    /// Initiator to target.
    Request,
    /// Target back to initiator.
    Response,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Request => "req",
            Direction::Response => "resp",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "req" | "request" => Ok(Direction::Request),
            "resp" | "response" => Ok(Direction::Response),
            other => Err(Error::InvalidParam(format!(
                "direction must be req or resp, got '{other}'"
            ))),
        }
    }
}

/// One atomic burst occupying its target for `[start_cycle, start_cycle + duration)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Transaction {
    pub start_cycle: u64,
    pub duration: u64,
    /// 0-based initiator index (design frame).
    pub initiator: usize,
    /// 0-based target index (design frame).
    pub target: usize,
    pub critical: bool,
    pub direction: Direction,
}

impl Transaction {
    /// First cycle after the transaction.
    pub fn end_cycle(&self) -> u64 {
        self.start_cycle + self.duration
    }

    fn sort_key(&self) -> (u64, usize, usize) {
        (self.start_cycle, self.target, self.initiator)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub num_initiators: usize,
    pub num_targets: usize,
    /// Sorted by `(start_cycle, target, initiator)`.
    pub transactions: Vec<Transaction>,
    /// Total simulated cycles; at least the end of the last transaction.
    pub horizon: u64,
    /// The crossbar this trace is framed for.
    pub direction: Direction,
}

impl Trace {
    /// Validates and sorts `transactions`. The horizon is derived from the
    /// latest transaction end.
    pub fn new(
        num_initiators: usize,
        num_targets: usize,
        direction: Direction,
        mut transactions: Vec<Transaction>,
    ) -> Result<Self> {
        if num_initiators == 0 || num_targets == 0 {
            return Err(Error::InvalidParam(
                "a trace needs at least one initiator and one target".into(),
            ));
        }
        for (idx, t) in transactions.iter().enumerate() {
            if t.duration == 0 {
                return Err(Error::NonPositiveDuration { line: idx + 1 });
            }
            if t.initiator >= num_initiators {
                return Err(Error::IdOutOfRange {
                    kind: "initiator",
                    id: t.initiator + 1,
                    max: num_initiators,
                    line: idx + 1,
                });
            }
            if t.target >= num_targets {
                return Err(Error::IdOutOfRange {
                    kind: "target",
                    id: t.target + 1,
                    max: num_targets,
                    line: idx + 1,
                });
            }
        }
        transactions.sort_by_key(Transaction::sort_key);
        let horizon = derived_horizon(&transactions);
        Ok(Trace {
            num_initiators,
            num_targets,
            transactions,
            horizon,
            direction,
        })
    }

    /// Overrides the horizon. It may only grow past the last transaction end.
    pub fn with_horizon(mut self, horizon: u64) -> Result<Self> {
        let min = derived_horizon(&self.transactions);
        if horizon < min {
            return Err(Error::InvalidParam(format!(
                "horizon {horizon} ends before the last transaction ({min})"
            )));
        }
        self.horizon = horizon;
        Ok(self)
    }

    pub fn is_empty(&self) -> bool {
        self.transactions.is_empty()
    }

    /// Serializes back to the file frame. Parsing the result with the same
    /// direction yields an equal trace.
    pub fn to_csv(&self) -> String {
        let (ni, nt) = match self.direction {
            Direction::Request => (self.num_initiators, self.num_targets),
            Direction::Response => (self.num_targets, self.num_initiators),
        };
        let mut out = format!("{HEADER_TAG},initiators={ni},targets={nt}");
        if self.horizon != derived_horizon(&self.transactions) {
            out.push_str(&format!(",horizon={}", self.horizon));
        }
        out.push('\n');
        for t in &self.transactions {
            let (ini, tgt) = match self.direction {
                Direction::Request => (t.initiator, t.target),
                Direction::Response => (t.target, t.initiator),
            };
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                t.start_cycle,
                t.duration,
                ini + 1,
                tgt + 1,
                t.direction,
                u8::from(t.critical)
            ));
        }
        out
    }
}

fn derived_horizon(transactions: &[Transaction]) -> u64 {
    transactions.iter().map(Transaction::end_cycle).max().unwrap_or(0)
}

struct Header {
    initiators: usize,
    targets: usize,
    horizon: Option<u64>,
}

fn parse_header(line: &str) -> Result<Header> {
    let err = |message: String| Error::Parse { line: 1, message };
    let rest = line
        .trim()
        .strip_prefix(HEADER_TAG)
        .ok_or_else(|| err(format!("expected header starting with '{HEADER_TAG}'")))?;
    let mut initiators = None;
    let mut targets = None;
    let mut horizon = None;
    for field in rest.split(',').map(str::trim).filter(|f| !f.is_empty()) {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| err(format!("malformed header field '{field}'")))?;
        let value: u64 = value
            .trim()
            .parse()
            .map_err(|_| err(format!("header field '{key}' is not an integer")))?;
        match key.trim() {
            "initiators" => initiators = Some(value as usize),
            "targets" => targets = Some(value as usize),
            "horizon" => horizon = Some(value),
            other => return Err(err(format!("unknown header field '{other}'"))),
        }
    }
    match (initiators, targets) {
        (Some(i), Some(t)) if i > 0 && t > 0 => Ok(Header {
            initiators: i,
            targets: t,
            horizon,
        }),
        _ => Err(err("header must declare positive initiators= and targets=".into())),
    }
}

fn parse_field<T: FromStr>(value: &str, name: &str, line: usize) -> Result<T> {
    value.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("invalid {name} '{}'", value.trim()),
    })
}

/// Parses trace text, keeping only rows travelling in `direction`.
pub fn parse_trace(text: &str, direction: Direction) -> Result<Trace> {
    let mut lines = text.lines().enumerate();
    let header = match lines.next() {
        Some((_, line)) => parse_header(line)?,
        None => {
            return Err(Error::Parse {
                line: 1,
                message: "empty file".into(),
            })
        }
    };
    let mut transactions = Vec::new();
    for (idx, raw) in lines {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 6 fields, found {}", fields.len()),
            });
        }
        let start_cycle: u64 = parse_field(fields[0], "start_cycle", line_no)?;
        let duration: i64 = parse_field(fields[1], "duration", line_no)?;
        if duration <= 0 {
            return Err(Error::NonPositiveDuration { line: line_no });
        }
        let initiator: usize = parse_field(fields[2], "initiator_id", line_no)?;
        let target: usize = parse_field(fields[3], "target_id", line_no)?;
        let row_dir: Direction = fields[4].parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("invalid direction '{}'", fields[4].trim()),
        })?;
        let critical = match fields[5].trim() {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("critical must be 0 or 1, got '{other}'"),
                })
            }
        };
        if initiator == 0 || initiator > header.initiators {
            return Err(Error::IdOutOfRange {
                kind: "initiator",
                id: initiator,
                max: header.initiators,
                line: line_no,
            });
        }
        if target == 0 || target > header.targets {
            return Err(Error::IdOutOfRange {
                kind: "target",
                id: target,
                max: header.targets,
                line: line_no,
            });
        }
        if row_dir != direction {
            continue;
        }
        let (initiator, target) = match direction {
            Direction::Request => (initiator - 1, target - 1),
            Direction::Response => (target - 1, initiator - 1),
        };
        transactions.push(Transaction {
            start_cycle,
            duration: duration as u64,
            initiator,
            target,
            critical,
            direction: row_dir,
        });
    }
    let (ni, nt) = match direction {
        Direction::Request => (header.initiators, header.targets),
        Direction::Response => (header.targets, header.initiators),
    };
    let trace = Trace::new(ni, nt, direction, transactions)?;
    match header.horizon {
        Some(h) => trace.with_horizon(h),
        None => Ok(trace),
    }
}

/// Reads and parses a trace file.
pub fn load_trace(path: &Path, direction: Direction) -> Result<Trace> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_trace(&text, direction)
}

pub fn save_trace(path: &Path, trace: &Trace) -> Result<()> {
    std::fs::write(path, trace.to_csv()).map_err(|e| Error::io(path, e))
}

/// Per-target demand totals, the inputs of an average-bandwidth design.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceStats {
    /// Sum of transaction durations per target.
    pub busy_cycles: Vec<u64>,
    pub transaction_count: Vec<usize>,
    pub horizon: u64,
}

pub fn trace_stats(trace: &Trace) -> TraceStats {
    let mut busy_cycles = vec![0; trace.num_targets];
    let mut transaction_count = vec![0; trace.num_targets];
    for t in &trace.transactions {
        busy_cycles[t.target] += t.duration;
        transaction_count[t.target] += 1;
    }
    TraceStats {
        busy_cycles,
        transaction_count,
        horizon: trace.horizon,
    }
}
