//! Three-latency open-page DRAM timing model.
//!
//! Each bank keeps its last row open. An access to the open row costs
//! `row_hit_latency`, an access to a precharged bank `row_closed_latency`,
//! and an access to a different row `row_conflict_latency`. Every channel
//! has one shared bus slot that is held for `bus_occupancy` cycles each time
//! a request starts service. A request started at `now` occupies its bank
//! through cycle `now + latency`, when its data transfer finishes.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DramConfig {
    pub num_channels: usize,
    pub banks_per_channel: usize,
    pub row_hit_latency: u64,
    pub row_closed_latency: u64,
    pub row_conflict_latency: u64,
    pub bus_occupancy: u64,
}

impl Default for DramConfig {
    fn default() -> Self {
        DramConfig {
            num_channels: 1,
            banks_per_channel: 8,
            row_hit_latency: 50,
            row_closed_latency: 100,
            row_conflict_latency: 150,
            bus_occupancy: 4,
        }
    }
}

impl DramConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_channels == 0 || self.banks_per_channel == 0 {
            return Err(SimError::config("dram needs at least one channel and one bank"));
        }
        if self.row_hit_latency == 0 || self.bus_occupancy == 0 {
            return Err(SimError::config("latencies and bus occupancy must be >= 1"));
        }
        if !(self.row_hit_latency < self.row_closed_latency && self.row_closed_latency < self.row_conflict_latency) {
            return Err(SimError::config("expected row_hit_latency < row_closed_latency < row_conflict_latency"));
        }
        Ok(())
    }

    pub fn total_banks(&self) -> usize {
        self.num_channels * self.banks_per_channel
    }

    /// Block address to (channel, bank, row):
    /// `channel = addr mod C`, `bank = (addr / C) mod B`, `row = addr / (B * C)`.
    pub fn decompose(&self, addr: u64) -> (usize, usize, u64) {
        let c = self.num_channels as u64;
        let b = self.banks_per_channel as u64;
        ((addr % c) as usize, ((addr / c) % b) as usize, addr / (b * c))
    }
}

/// One memory access from an application.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemRequest {
    pub app_id: usize,
    pub channel: usize,
    pub bank: usize,
    pub row: u64,
    pub arrival_cycle: u64,
    pub completion_cycle: Option<u64>,
}

impl MemRequest {
    pub fn new(app_id: usize, channel: usize, bank: usize, row: u64, arrival_cycle: u64) -> Self {
        MemRequest { app_id, channel, bank, row, arrival_cycle, completion_cycle: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BankState {
    pub open_row: Option<u64>,
    pub busy_until: u64,
    pub current_owner: Option<usize>,
}

impl BankState {
    /// A bank is busy through its `busy_until` cycle; a never-used bank is free.
    pub fn is_free(&self, now: u64) -> bool {
        self.current_owner.is_none() || self.busy_until < now
    }

    /// True when `row` would hit in this bank's row buffer.
    pub fn hits(&self, row: u64) -> bool {
        self.open_row == Some(row)
    }
}

/// Access latency of `req` against `bank` and the bank state after the access starts at `now`.
pub fn service_request(bank: &BankState, req: &MemRequest, cfg: &DramConfig, now: u64) -> (u64, BankState) {
    debug_assert!(bank.busy_until <= now, "bank still busy");
    let latency = match bank.open_row {
        Some(r) if r == req.row => cfg.row_hit_latency,
        None => cfg.row_closed_latency,
        Some(_) => cfg.row_conflict_latency,
    };
    let next = BankState { open_row: Some(req.row), busy_until: now + latency, current_owner: Some(req.app_id) };
    (latency, next)
}
