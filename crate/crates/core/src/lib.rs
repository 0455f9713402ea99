//! Cycle-level multicore memory-interference simulator.
//!
//! Applications share a DRAM system scheduled by FR-FCFS with a lottery-drawn
//! highest-priority app per epoch. Per-interval counters feed two slowdown
//! estimators (a request-service-rate model and a stall-time baseline),
//! bandwidth policies turn the estimates into shares for the next interval,
//! and an alone-replay oracle supplies ground-truth slowdowns.

// `!(x > y)` is used on purpose to reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dram;
pub mod error;
pub mod estimators;
pub mod experiment;
pub mod oracle;
pub mod policies;
pub mod scheduling;
pub mod sim;
pub mod workloads;

pub use dram::{BankState, DramConfig, MemRequest};
pub use error::{Result, SimError};
pub use estimators::{EpochCounters, EstimateSource, SlowdownEstimate};
pub use oracle::{evaluate, OracleResult};
pub use policies::{BandwidthPolicy, FairConfig, PolicyParams, PolicyRegistry, QosConfig};
pub use scheduling::{BandwidthShares, RngState};
pub use sim::{run_simulation, SimResult, SimSetup, Simulation, Timing};
pub use workloads::{AppKind, AppSpec};
