//! Request selection: FR-FCFS, the highest-priority overlay used for
//! alone-rate measurement, and lottery draws that enforce bandwidth shares.

use serde::{Deserialize, Serialize};

use crate::dram::{BankState, MemRequest};
use crate::error::{Result, SimError};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Portable 64-bit splitmix generator state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngState(pub u64);

pub fn splitmix_next(s: RngState) -> (RngState, u64) {
    let state = s.0.wrapping_add(GOLDEN_GAMMA);
    let mut z = state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    (RngState(state), z ^ (z >> 31))
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        RngState(seed)
    }

    pub fn next_u64(&mut self) -> u64 {
        let (s, v) = splitmix_next(*self);
        *self = s;
        v
    }

    /// Uniform in [0, 1) using `value / 2^64`.
    pub fn next_unit(&mut self) -> f64 {
        to_unit(self.next_u64())
    }
}

fn to_unit(v: u64) -> f64 {
    v as f64 / 18_446_744_073_709_551_616.0
}

/// Derives an independent seed for sub-stream `index` of `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let (_, a) = splitmix_next(RngState(seed ^ index.wrapping_mul(GOLDEN_GAMMA)));
    let (_, b) = splitmix_next(RngState(a ^ index));
    b
}

/// Per-app bandwidth weights, summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthShares(Vec<f64>);

pub const SHARE_SUM_TOLERANCE: f64 = 1e-9;

impl BandwidthShares {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(SimError::config("bandwidth shares need at least one app"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(SimError::config("bandwidth shares must be finite and non-negative"));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SHARE_SUM_TOLERANCE {
            return Err(SimError::config(format!("bandwidth shares sum to {sum}, expected 1")));
        }
        Ok(BandwidthShares(weights))
    }

    /// Scales non-negative weights so they sum to one.
    pub fn normalized(weights: Vec<f64>) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0) {
            return Err(SimError::config("all-zero bandwidth weights"));
        }
        Self::new(weights.into_iter().map(|w| w / sum).collect())
    }

    pub fn equal(n: usize) -> Self {
        BandwidthShares(vec![1.0 / n as f64; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn weight(&self, app: usize) -> f64 {
        self.0[app]
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }
}

/// Picks the app holding highest priority for the next epoch.
///
/// `u = value / 2^64` is mapped onto the cumulative weights in ascending app order.
pub fn lottery_draw(shares: &BandwidthShares, rng: RngState) -> Result<(usize, RngState)> {
    let w = shares.weights();
    if !w.iter().any(|x| *x > 0.0) {
        return Err(SimError::config("lottery over all-zero weights"));
    }
    let (next, value) = splitmix_next(rng);
    let u = to_unit(value);
    let mut cum = 0.0;
    for (app, weight) in w.iter().enumerate() {
        cum += weight;
        if *weight > 0.0 && u < cum {
            return Ok((app, next));
        }
    }
    // rounding left u above the final cumulative sum
    let last = w.iter().rposition(|x| *x > 0.0).expect("checked above");
    Ok((last, next))
}

fn serviceable(req: &MemRequest, banks: &[BankState], now: u64) -> bool {
    req.arrival_cycle <= now && banks[req.bank].is_free(now)
}

/// Sort key: row hits first, then oldest, then lowest app, then queue position.
fn frfcfs_key(req: &MemRequest, pos: usize, banks: &[BankState]) -> (bool, u64, usize, usize) {
    (!banks[req.bank].hits(req.row), req.arrival_cycle, req.app_id, pos)
}

fn pick_where(
    queue: &[MemRequest],
    banks: &[BankState],
    now: u64,
    filter: impl Fn(&MemRequest) -> bool,
) -> Option<usize> {
    queue
        .iter()
        .enumerate()
        .filter(|(_, r)| filter(r) && serviceable(r, banks, now))
        .min_by_key(|(pos, r)| frfcfs_key(r, *pos, banks))
        .map(|(pos, _)| pos)
}

/// FR-FCFS over one channel's queue. `banks` is indexed by `MemRequest::bank`.
/// Returns the queue position of the chosen request.
pub fn frfcfs_pick(queue: &[MemRequest], banks: &[BankState], now: u64) -> Option<usize> {
    pick_where(queue, banks, now, |_| true)
}

/// FR-FCFS restricted to `hp_app` when it has a serviceable request, otherwise plain FR-FCFS.
pub fn priority_overlay_pick(queue: &[MemRequest], banks: &[BankState], now: u64, hp_app: usize) -> Option<usize> {
    pick_where(queue, banks, now, |r| r.app_id == hp_app).or_else(|| frfcfs_pick(queue, banks, now))
}
