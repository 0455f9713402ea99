//! Cycle-by-cycle simulation loop.
//!
//! Order of work inside one cycle:
//! 1. interval boundary (estimates + policy update), then epoch boundary (lottery draw);
//! 2. requests whose service finished are returned to their cores;
//! 3. each core retires one instruction, issues a request, or stalls;
//! 4. each channel starts at most one request (bus slot + free bank);
//! 5. interference counters are sampled.
//!
//! While an app holds highest priority, a cycle counts as interference when
//! one of its waiting requests is held by another app's bank or bus
//! occupancy, or when one of its in-service requests is still busy only
//! because another app changed the open row (the app's shadow row buffer
//! says the access would have been faster alone).
//!
//! A request issued in cycle `t` is queued in cycle `t`; a request whose
//! service completes in cycle `c` keeps its bank busy through `c` and
//! releases its core in cycle `c + 1`.

use serde::{Deserialize, Serialize};

use crate::dram::{service_request, BankState, DramConfig, MemRequest};
use crate::error::{Result, SimError};
use crate::estimators::{EpochCounters, IntervalEstimator, SlowdownEstimate};
use crate::policies::{BandwidthPolicy, PolicyOutcome, PolicyParams, PolicyRegistry};
use crate::scheduling::{derive_seed, lottery_draw, priority_overlay_pick, BandwidthShares, RngState};
use crate::workloads::{AppSpec, StreamEntry, StreamSource};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timing {
    pub epoch_len: u64,
    pub interval_len: u64,
}

impl Default for Timing {
    fn default() -> Self {
        Timing { epoch_len: 10_000, interval_len: 1_000_000 }
    }
}

impl Timing {
    pub fn validate(&self) -> Result<()> {
        if self.epoch_len == 0 || self.interval_len == 0 {
            return Err(SimError::config("epoch and interval lengths must be positive"));
        }
        if !self.interval_len.is_multiple_of(self.epoch_len) {
            return Err(SimError::config("interval_len must be a multiple of epoch_len"));
        }
        Ok(())
    }
}

/// Everything needed to run one simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSetup {
    pub dram: DramConfig,
    pub apps: Vec<AppSpec>,
    pub policy: String,
    pub params: PolicyParams,
    pub seed: u64,
    pub horizon: u64,
    pub timing: Timing,
    /// Keep a per-request service log (for timing audits).
    pub record_service_log: bool,
}

impl SimSetup {
    pub fn new(dram: DramConfig, apps: Vec<AppSpec>, policy: &str, seed: u64, horizon: u64) -> Self {
        SimSetup {
            dram,
            apps,
            policy: policy.to_string(),
            params: PolicyParams::default(),
            seed,
            horizon,
            timing: Timing::default(),
            record_service_log: false,
        }
    }

    pub fn with_timing(mut self, epoch_len: u64, interval_len: u64) -> Self {
        self.timing = Timing { epoch_len, interval_len };
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.apps.is_empty() {
            return Err(SimError::config("workload has no apps"));
        }
        self.dram.validate()?;
        self.timing.validate()?;
        if self.horizon < self.timing.interval_len {
            return Err(SimError::config("horizon shorter than one interval"));
        }
        self.apps.iter().try_for_each(AppSpec::validate)
    }
}

/// Seed of app `index`'s request stream; alone replays reuse it.
pub fn app_stream_seed(seed: u64, index: usize) -> u64 {
    derive_seed(seed, index as u64 + 1)
}

fn lottery_seed(seed: u64) -> u64 {
    derive_seed(seed, 0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CoreState {
    pub app_id: usize,
    pub instructions_retired: u64,
    pub outstanding_requests: u32,
    pub stalled: bool,
    pub stall_cycles: u64,
    pub total_cycles: u64,
}

/// Instruction count of an app at an interval boundary and the cycle its last instruction retired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntervalMark {
    pub instructions: u64,
    pub reach_cycle: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceRecord {
    pub app_id: usize,
    pub channel: usize,
    pub bank: usize,
    pub start: u64,
    pub end: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppResult {
    pub app_id: usize,
    pub shared_ipc: f64,
    pub instructions_retired: u64,
    pub stall_cycles: u64,
    pub total_cycles: u64,
    pub generated_requests: u64,
    pub serviced_requests: u64,
    pub pending_requests: u64,
    pub counters: Vec<EpochCounters>,
    pub estimates: Vec<SlowdownEstimate>,
    pub marks: Vec<IntervalMark>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub apps: Vec<AppResult>,
    pub total_cycles: u64,
    pub seed: u64,
    pub policy: String,
    pub policy_log: Vec<PolicyOutcome>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub service_log: Vec<ServiceRecord>,
}

impl SimResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("sim result serializes")
    }

    pub fn num_intervals(&self) -> usize {
        self.apps.first().map_or(0, |a| a.estimates.len())
    }
}

struct Core {
    state: CoreState,
    mlp_limit: u32,
    budget: u64,
    source: StreamSource,
    next: Option<StreamEntry>,
    gap_left: u64,
    last_retire_cycle: u64,
    done: bool,
    generated: u64,
    serviced: u64,
}

impl Core {
    fn retire(&mut self, now: u64) {
        self.state.instructions_retired += 1;
        self.last_retire_cycle = now;
        if self.budget > 0 && self.state.instructions_retired >= self.budget {
            self.done = true;
        }
    }
}

#[derive(Clone, Copy)]
struct InFlight {
    req: MemRequest,
    /// Completion cycle had the bank held the app's own last row.
    alone_done: u64,
}

#[derive(Clone)]
struct Channel {
    banks: Vec<BankState>,
    queue: Vec<MemRequest>,
    in_flight: Vec<InFlight>,
    bus_free_at: u64,
    bus_owner: Option<usize>,
}

impl Channel {
    /// Whether a waiting request is held back by another app's bank or bus occupancy.
    fn blocked_by_other(&self, req: &MemRequest, now: u64) -> bool {
        let bank = &self.banks[req.bank];
        if !bank.is_free(now) {
            return bank.current_owner != Some(req.app_id);
        }
        self.bus_free_at > now && self.bus_owner != Some(req.app_id)
    }
}

/// A running simulation.
pub struct Simulation {
    dram: DramConfig,
    timing: Timing,
    now: u64,
    cores: Vec<Core>,
    channels: Vec<Channel>,
    counters: Vec<EpochCounters>,
    // per app, per (channel, bank): last row the app itself opened
    shadow_rows: Vec<Vec<Option<u64>>>,
    estimator: IntervalEstimator,
    policy: Box<dyn BandwidthPolicy>,
    shares: BandwidthShares,
    rng: RngState,
    hp_app: usize,
    interval_start: u64,
    history: Vec<Vec<EpochCounters>>,
    estimates: Vec<Vec<SlowdownEstimate>>,
    marks: Vec<Vec<IntervalMark>>,
    policy_log: Vec<PolicyOutcome>,
    service_log: Option<Vec<ServiceRecord>>,
    seed: u64,
    policy_name: String,
    // per-cycle scratch: oldest waiting / in-service arrival per app
    oldest_waiting: Vec<Option<(u64, bool)>>,
    oldest_in_service: Vec<Option<u64>>,
}

impl Simulation {
    pub fn new(setup: &SimSetup) -> Result<Self> {
        let seeds = (0..setup.apps.len()).map(|i| app_stream_seed(setup.seed, i)).collect();
        Self::with_stream_seeds(setup, seeds)
    }

    /// Like [`Simulation::new`] but with explicit per-app stream seeds.
    pub fn with_stream_seeds(setup: &SimSetup, stream_seeds: Vec<u64>) -> Result<Self> {
        setup.validate()?;
        let n = setup.apps.len();
        assert_eq!(stream_seeds.len(), n);
        let registry = PolicyRegistry::builtin();
        let policy = registry.build(&setup.policy, &setup.params, n)?;
        let shares = policy.initial_shares();
        let mut cores = Vec::with_capacity(n);
        for (i, (spec, seed)) in setup.apps.iter().zip(stream_seeds).enumerate() {
            let mut source = StreamSource::open(spec, seed, &setup.dram)?;
            let next = source.next_entry();
            cores.push(Core {
                state: CoreState { app_id: i, ..CoreState::default() },
                mlp_limit: spec.mlp_limit,
                budget: spec.instruction_budget,
                gap_left: next.map_or(0, |e| e.instruction_gap),
                next,
                source,
                last_retire_cycle: 0,
                done: false,
                generated: 0,
                serviced: 0,
            });
        }
        let channel = Channel {
            banks: vec![BankState::default(); setup.dram.banks_per_channel],
            queue: Vec::new(),
            in_flight: Vec::new(),
            bus_free_at: 0,
            bus_owner: None,
        };
        Ok(Simulation {
            dram: setup.dram,
            timing: setup.timing,
            now: 0,
            cores,
            channels: vec![channel; setup.dram.num_channels],
            counters: vec![EpochCounters::default(); n],
            shadow_rows: vec![vec![None; setup.dram.total_banks()]; n],
            estimator: IntervalEstimator::new(n),
            policy,
            shares,
            rng: RngState::new(lottery_seed(setup.seed)),
            hp_app: 0,
            interval_start: 0,
            history: vec![Vec::new(); n],
            estimates: vec![Vec::new(); n],
            marks: vec![Vec::new(); n],
            policy_log: Vec::new(),
            service_log: setup.record_service_log.then(Vec::new),
            seed: setup.seed,
            policy_name: setup.policy.clone(),
            oldest_waiting: vec![None; n],
            oldest_in_service: vec![None; n],
        })
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn hp_app(&self) -> usize {
        self.hp_app
    }

    pub fn shares(&self) -> &BandwidthShares {
        &self.shares
    }

    pub fn cores(&self) -> Vec<CoreState> {
        self.cores.iter().map(|c| c.state).collect()
    }

    pub fn counters(&self) -> &[EpochCounters] {
        &self.counters
    }

    pub fn queued_requests(&self) -> usize {
        self.channels.iter().map(|c| c.queue.len()).sum()
    }

    pub fn in_service_requests(&self) -> usize {
        self.channels.iter().map(|c| c.in_flight.len()).sum()
    }

    fn close_interval(&mut self) -> Result<()> {
        let len = self.now - self.interval_start;
        for c in self.counters.iter_mut() {
            c.interval_cycles = len;
        }
        for (i, c) in self.counters.iter().enumerate() {
            self.history[i].push(*c);
            let core = &self.cores[i];
            self.marks[i].push(IntervalMark {
                instructions: core.state.instructions_retired,
                reach_cycle: core.last_retire_cycle,
            });
        }
        let ests = self.estimator.finalize_interval(&mut self.counters, self.shares.weights());
        let outcome = self.policy.on_interval(&ests, &self.shares)?;
        self.shares = outcome.shares.clone();
        self.policy_log.push(outcome);
        for e in ests {
            self.estimates[e.app_id].push(e);
        }
        self.interval_start = self.now;
        Ok(())
    }

    fn boundaries(&mut self) -> Result<()> {
        if self.now > 0 && self.now.is_multiple_of(self.timing.interval_len) {
            self.close_interval()?;
        }
        if self.now.is_multiple_of(self.timing.epoch_len) {
            let (app, rng) = lottery_draw(&self.shares, self.rng)?;
            self.hp_app = app;
            self.rng = rng;
        }
        Ok(())
    }

    fn complete_requests(&mut self) {
        let now = self.now;
        let hp = self.hp_app;
        for ch in self.channels.iter_mut() {
            let mut i = 0;
            while i < ch.in_flight.len() {
                let done = ch.in_flight[i].req.completion_cycle.is_some_and(|c| c < now);
                if !done {
                    i += 1;
                    continue;
                }
                let req = ch.in_flight.swap_remove(i).req;
                let core = &mut self.cores[req.app_id];
                core.state.outstanding_requests -= 1;
                core.serviced += 1;
                let c = &mut self.counters[req.app_id];
                c.shared_requests += 1;
                if req.app_id == hp {
                    c.hp_requests += 1;
                }
            }
        }
    }

    fn step_cores(&mut self) {
        let now = self.now;
        for core in self.cores.iter_mut() {
            if core.done {
                core.state.stalled = false;
                continue;
            }
            let app = core.state.app_id;
            let counters = &mut self.counters[app];
            core.state.total_cycles += 1;
            counters.total_cycles += 1;
            if core.state.outstanding_requests >= core.mlp_limit {
                core.state.stalled = true;
                core.state.stall_cycles += 1;
                counters.stall_cycles += 1;
                continue;
            }
            core.state.stalled = false;
            match core.next {
                Some(entry) if core.gap_left == 0 => {
                    self.channels[entry.channel].queue.push(MemRequest::new(
                        app,
                        entry.channel,
                        entry.bank,
                        entry.row,
                        now,
                    ));
                    core.state.outstanding_requests += 1;
                    core.generated += 1;
                    core.next = core.source.next_entry();
                    core.gap_left = core.next.map_or(0, |e| e.instruction_gap);
                }
                Some(_) => core.gap_left -= 1,
                None => {}
            }
            core.retire(now);
        }
    }

    fn schedule(&mut self) {
        let now = self.now;
        let hp = self.hp_app;
        for (ch_idx, ch) in self.channels.iter_mut().enumerate() {
            if ch.bus_free_at > now || ch.queue.is_empty() {
                continue;
            }
            let Some(pos) = priority_overlay_pick(&ch.queue, &ch.banks, now, hp) else {
                continue;
            };
            let mut req = ch.queue.remove(pos);
            let (latency, bank) = service_request(&ch.banks[req.bank], &req, &self.dram, now);
            ch.banks[req.bank] = bank;
            let slot = ch_idx * self.dram.banks_per_channel + req.bank;
            let shadow = BankState { open_row: self.shadow_rows[req.app_id][slot], ..BankState::default() };
            let (alone_latency, _) = service_request(&shadow, &req, &self.dram, now);
            self.shadow_rows[req.app_id][slot] = Some(req.row);
            req.completion_cycle = Some(now + latency);
            ch.bus_free_at = now + self.dram.bus_occupancy;
            ch.bus_owner = Some(req.app_id);
            if let Some(log) = self.service_log.as_mut() {
                log.push(ServiceRecord {
                    app_id: req.app_id,
                    channel: ch_idx,
                    bank: req.bank,
                    start: now,
                    end: now + latency,
                });
            }
            ch.in_flight.push(InFlight { req, alone_done: now + alone_latency.min(latency) });
        }
    }

    fn sample_interference(&mut self) {
        let now = self.now;
        let hp = self.hp_app;
        self.oldest_waiting.iter_mut().for_each(|o| *o = None);
        self.oldest_in_service.iter_mut().for_each(|o| *o = None);
        let mut hp_blocked = false;
        for ch in &self.channels {
            for req in ch.queue.iter().filter(|r| r.arrival_cycle <= now) {
                let blocked = ch.blocked_by_other(req, now);
                if req.app_id == hp && blocked {
                    hp_blocked = true;
                }
                let slot = &mut self.oldest_waiting[req.app_id];
                if slot.is_none_or(|(a, _)| req.arrival_cycle < a) {
                    *slot = Some((req.arrival_cycle, blocked));
                }
            }
            for f in &ch.in_flight {
                let req = &f.req;
                if req.app_id == hp && f.alone_done < now {
                    hp_blocked = true;
                }
                let slot = &mut self.oldest_in_service[req.app_id];
                if slot.is_none_or(|a| req.arrival_cycle < a) {
                    *slot = Some(req.arrival_cycle);
                }
            }
        }
        self.counters[hp].hp_cycles += 1;
        if hp_blocked {
            self.counters[hp].interference_cycles_hp += 1;
        }
        for (app, core) in self.cores.iter().enumerate() {
            if !core.state.stalled {
                continue;
            }
            if let Some((arrival, true)) = self.oldest_waiting[app] {
                if self.oldest_in_service[app].is_none_or(|a| arrival < a) {
                    self.counters[app].stfm_interference_cycles += 1;
                }
            }
        }
    }

    /// Advances the simulation by exactly one cycle.
    pub fn step_cycle(&mut self) -> Result<()> {
        self.boundaries()?;
        self.complete_requests();
        self.step_cores();
        self.schedule();
        self.sample_interference();
        self.now += 1;
        Ok(())
    }

    /// Runs to `horizon`; intervals that end exactly at the horizon are closed.
    pub fn run_to(&mut self, horizon: u64) -> Result<()> {
        while self.now < horizon {
            self.step_cycle()?;
        }
        if self.now > self.interval_start && self.now.is_multiple_of(self.timing.interval_len) {
            self.close_interval()?;
        }
        Ok(())
    }

    /// Runs app 0 until it has retired each of `targets` (ascending) instructions,
    /// returning the cycle each count was reached. Fails past `cycle_cap`.
    pub fn run_until_instructions(&mut self, targets: &[u64], cycle_cap: u64) -> Result<Vec<u64>> {
        let mut reached = Vec::with_capacity(targets.len());
        for &t in targets {
            if t == 0 {
                reached.push(0);
                continue;
            }
            loop {
                let core = &self.cores[0];
                if core.state.instructions_retired == t && core.last_retire_cycle < self.now {
                    reached.push(core.last_retire_cycle);
                    break;
                }
                if core.state.instructions_retired > t {
                    return Err(SimError::InsufficientData(format!("instruction target {t} not ascending")));
                }
                if core.done || self.now >= cycle_cap {
                    return Err(SimError::InsufficientData(format!(
                        "alone replay did not reach {t} instructions within {cycle_cap} cycles"
                    )));
                }
                self.step_cycle()?;
            }
        }
        Ok(reached)
    }

    pub fn finish(self) -> SimResult {
        let total = self.now;
        let mut service_log = self.service_log.unwrap_or_default();
        service_log.sort_by_key(|r| (r.start, r.channel));
        let mut pending = vec![0u64; self.cores.len()];
        for ch in &self.channels {
            for r in ch.queue.iter().chain(ch.in_flight.iter().map(|f| &f.req)) {
                pending[r.app_id] += 1;
            }
        }
        let apps = self
            .cores
            .iter()
            .enumerate()
            .map(|(i, core)| AppResult {
                app_id: i,
                shared_ipc: if total == 0 { 0.0 } else { core.state.instructions_retired as f64 / total as f64 },
                instructions_retired: core.state.instructions_retired,
                stall_cycles: core.state.stall_cycles,
                total_cycles: core.state.total_cycles,
                generated_requests: core.generated,
                serviced_requests: core.serviced,
                pending_requests: pending[i],
                counters: self.history[i].clone(),
                estimates: self.estimates[i].clone(),
                marks: self.marks[i].clone(),
            })
            .collect();
        SimResult {
            apps,
            total_cycles: total,
            seed: self.seed,
            policy: self.policy_name,
            policy_log: self.policy_log,
            service_log,
        }
    }
}

pub fn run_simulation(setup: &SimSetup) -> Result<SimResult> {
    let mut sim = Simulation::new(setup)?;
    sim.run_to(setup.horizon)?;
    Ok(sim.finish())
}
