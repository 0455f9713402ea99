//! Per-application request streams: seeded synthetic generators and
//! plain-text trace ingestion.
//!
//! A stream's address sequence depends only on its spec and seed, never on
//! when requests get serviced, so an application replayed alone sees
//! exactly the requests it issued while sharing memory.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dram::DramConfig;
use crate::error::{Result, SimError};
use crate::scheduling::RngState;

/// Address mapping applied to trace addresses and synthetic row frames.
pub const ADDRESS_MAPPING: &str =
    "channel = addr mod channels; bank = (addr / channels) mod banks; row = addr / (banks * channels)";

pub const MICROBENCH_LEVELS: std::ops::RangeInclusive<u32> = 1..=8;
const MICROBENCH_GAPS: [u64; 8] = [1000, 500, 250, 120, 60, 30, 10, 0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AppKind {
    Synthetic,
    Trace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppSpec {
    pub kind: AppKind,
    /// Non-memory instructions retired between consecutive memory requests.
    pub compute_gap: u64,
    /// Probability that the next request reuses the current row.
    pub row_locality: f64,
    pub working_rows: u64,
    /// Maximum outstanding requests before the core stalls.
    pub mlp_limit: u32,
    pub trace_path: Option<PathBuf>,
    /// Instructions to retire before the core halts; 0 runs until the horizon.
    pub instruction_budget: u64,
}

impl Default for AppSpec {
    fn default() -> Self {
        AppSpec {
            kind: AppKind::Synthetic,
            compute_gap: 100,
            row_locality: 0.5,
            working_rows: 256,
            mlp_limit: 1,
            trace_path: None,
            instruction_budget: 0,
        }
    }
}

impl AppSpec {
    pub fn synthetic(compute_gap: u64, row_locality: f64, working_rows: u64, mlp_limit: u32) -> Self {
        AppSpec { compute_gap, row_locality, working_rows, mlp_limit, ..AppSpec::default() }
    }

    pub fn trace(path: impl Into<PathBuf>, mlp_limit: u32) -> Self {
        AppSpec { kind: AppKind::Trace, trace_path: Some(path.into()), mlp_limit, ..AppSpec::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.row_locality) {
            return Err(SimError::config(format!("row_locality {} outside [0, 1]", self.row_locality)));
        }
        if self.mlp_limit == 0 {
            return Err(SimError::config("mlp_limit must be >= 1"));
        }
        match self.kind {
            AppKind::Synthetic if self.working_rows == 0 => Err(SimError::config("working_rows must be >= 1")),
            AppKind::Trace => match &self.trace_path {
                Some(p) if p.exists() => Ok(()),
                Some(p) => Err(SimError::config(format!("trace file {} does not exist", p.display()))),
                None => Err(SimError::config("trace app without trace_path")),
            },
            _ => Ok(()),
        }
    }
}

/// One memory request of a stream, preceded by `instruction_gap` compute instructions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamEntry {
    pub instruction_gap: u64,
    pub channel: usize,
    pub bank: usize,
    pub row: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestStream {
    pub entries: Vec<StreamEntry>,
    pub mapping: String,
}

impl RequestStream {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Requests per thousand instructions.
    pub fn rpki(&self) -> f64 {
        let instructions: u64 = self.entries.iter().map(|e| e.instruction_gap + 1).sum();
        if instructions == 0 {
            return 0.0;
        }
        1000.0 * self.entries.len() as f64 / instructions as f64
    }

    /// Fraction of consecutive request pairs that target the same row of the same bank.
    pub fn row_reuse_fraction(&self) -> f64 {
        if self.entries.len() < 2 {
            return 0.0;
        }
        let same = self
            .entries
            .windows(2)
            .filter(|w| (w[0].channel, w[0].bank, w[0].row) == (w[1].channel, w[1].bank, w[1].row))
            .count();
        same as f64 / (self.entries.len() - 1) as f64
    }
}

/// Unbounded synthetic request generator.
///
/// Rows are picked from a private window of `working_rows` frames that
/// starts at a seed-derived base; frame `f` maps through [`ADDRESS_MAPPING`].
#[derive(Debug, Clone)]
pub struct SyntheticStream {
    gap: u64,
    locality: f64,
    working_rows: u64,
    base_frame: u64,
    current: u64,
    started: bool,
    rng: RngState,
    dram: DramConfig,
}

impl SyntheticStream {
    pub fn new(spec: &AppSpec, seed: u64, dram: &DramConfig) -> Self {
        let mut rng = RngState::new(seed);
        let base_row = rng.next_u64() % (1 << 24);
        let base_frame = base_row * dram.total_banks() as u64;
        let working_rows = spec.working_rows.max(1);
        let current = rng.next_u64() % working_rows;
        SyntheticStream {
            gap: spec.compute_gap,
            locality: spec.row_locality,
            working_rows,
            base_frame,
            current,
            started: false,
            rng,
            dram: *dram,
        }
    }
}

impl Iterator for SyntheticStream {
    type Item = StreamEntry;

    fn next(&mut self) -> Option<StreamEntry> {
        if self.started {
            let u = self.rng.next_unit();
            if self.working_rows > 1 && u >= self.locality {
                let hop = 1 + self.rng.next_u64() % (self.working_rows - 1);
                self.current = (self.current + hop) % self.working_rows;
            }
        }
        self.started = true;
        let (channel, bank, row) = self.dram.decompose(self.base_frame + self.current);
        Some(StreamEntry { instruction_gap: self.gap, channel, bank, row })
    }
}

/// The first `count` requests of a synthetic app's stream.
pub fn gen_app_stream(spec: &AppSpec, seed: u64, dram: &DramConfig, count: usize) -> RequestStream {
    RequestStream {
        entries: SyntheticStream::new(spec, seed, dram).take(count).collect(),
        mapping: ADDRESS_MAPPING.to_string(),
    }
}

/// Streaming microbenchmark at `level` in 1..=8; higher levels compute less between requests.
pub fn microbench_spec(level: u32) -> Result<AppSpec> {
    if !MICROBENCH_LEVELS.contains(&level) {
        return Err(SimError::config(format!(
            "microbenchmark level {level} outside {}..={}",
            MICROBENCH_LEVELS.start(),
            MICROBENCH_LEVELS.end()
        )));
    }
    Ok(AppSpec::synthetic(MICROBENCH_GAPS[level as usize - 1], 0.95, 1024, 1))
}

/// A seeded mix of `n` synthetic apps spanning memory intensity and row locality.
pub fn synthetic_mix(seed: u64, n: usize) -> Vec<AppSpec> {
    const GAPS: [u64; 8] = [0, 5, 10, 25, 50, 100, 250, 500];
    const LOCALITY: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];
    const ROWS: [u64; 4] = [32, 128, 512, 2048];
    let mut rng = RngState::new(seed);
    let mut pick = |len: usize| (rng.next_u64() % len as u64) as usize;
    (0..n)
        .map(|_| {
            AppSpec::synthetic(
                GAPS[pick(GAPS.len())],
                LOCALITY[pick(LOCALITY.len())],
                ROWS[pick(ROWS.len())],
                1 + pick(2) as u32,
            )
        })
        .collect()
}

fn parse_field(field: &str, line: usize, name: &str) -> Result<u64> {
    let f = field.trim();
    if f.is_empty() || !f.bytes().all(|b| b.is_ascii_digit()) {
        return Err(SimError::Parse { line, msg: format!("{name} '{f}' is not a decimal unsigned integer") });
    }
    f.parse::<u64>().map_err(|_| SimError::Range { line, msg: format!("{name} '{f}' does not fit in 64 bits") })
}

/// Parses trace text: one `instruction_gap,address` per line, `#` comment lines.
pub fn parse_trace_str(text: &str, dram: &DramConfig) -> Result<RequestStream> {
    let mut entries = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let t = raw.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = t.split(',').collect();
        if fields.len() != 2 {
            return Err(SimError::Parse {
                line,
                msg: format!("expected 2 fields `instruction_gap,address`, found {}", fields.len()),
            });
        }
        let gap = parse_field(fields[0], line, "instruction_gap")?;
        let addr = parse_field(fields[1], line, "address")?;
        let (channel, bank, row) = dram.decompose(addr);
        entries.push(StreamEntry { instruction_gap: gap, channel, bank, row });
    }
    Ok(RequestStream { entries, mapping: ADDRESS_MAPPING.to_string() })
}

pub fn parse_trace(path: &Path, dram: &DramConfig) -> Result<RequestStream> {
    let text = std::fs::read_to_string(path).map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
    parse_trace_str(&text, dram)
}

/// Request source driving one core. Traces replay from the start once exhausted.
#[derive(Debug, Clone)]
pub enum StreamSource {
    Synthetic(SyntheticStream),
    Trace { entries: Arc<Vec<StreamEntry>>, pos: usize },
}

impl StreamSource {
    pub fn open(spec: &AppSpec, seed: u64, dram: &DramConfig) -> Result<Self> {
        match spec.kind {
            AppKind::Synthetic => Ok(StreamSource::Synthetic(SyntheticStream::new(spec, seed, dram))),
            AppKind::Trace => {
                let path =
                    spec.trace_path.as_deref().ok_or_else(|| SimError::config("trace app without trace_path"))?;
                let stream = parse_trace(path, dram)?;
                Ok(StreamSource::Trace { entries: Arc::new(stream.entries), pos: 0 })
            }
        }
    }

    /// Next request; `None` only for an empty trace.
    pub fn next_entry(&mut self) -> Option<StreamEntry> {
        match self {
            StreamSource::Synthetic(s) => s.next(),
            StreamSource::Trace { entries, pos } => {
                if entries.is_empty() {
                    return None;
                }
                let e = entries[*pos];
                *pos = (*pos + 1) % entries.len();
                Some(e)
            }
        }
    }
}
