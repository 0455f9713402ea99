//! Experiment drivers behind the CLI commands and their CSV reports.
//!
//! All numbers are written with six fractional digits and `\n` line endings
//! so identical runs produce byte-identical files.

use std::fmt::Write;

use crate::error::{Result, SimError};
use crate::oracle::{evaluate, harmonic_speedup, max_slowdown, OracleResult};
use crate::policies::{qos_bound_met_prediction, BoundStatus};
use crate::sim::{run_simulation, SimResult, SimSetup};

pub const INTERVAL_HEADER: &str = "interval,app,srsr,arsr,alpha,mise_slowdown,stfm_slowdown,share,carried_forward_flag";
pub const SUMMARY_HEADER: &str = "app,alone_ipc,shared_ipc,actual_slowdown,mise_error_pct,stfm_error_pct";
pub const SWEEP_HEADER: &str = "bound,aoi_actual_slowdown,bound_met_actual,bound_met_predicted,non_aoi_harmonic_speedup,non_aoi_max_slowdown,final_aoi_share";

fn f6(x: f64) -> String {
    format!("{x:.6}")
}

pub fn interval_csv(result: &SimResult) -> String {
    let mut out = String::from(INTERVAL_HEADER);
    out.push('\n');
    for k in 0..result.num_intervals() {
        for app in &result.apps {
            let e = &app.estimates[k];
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                e.interval,
                e.app_id,
                f6(e.srsr),
                f6(e.arsr),
                f6(e.alpha),
                f6(e.mise_slowdown),
                f6(e.stfm_slowdown),
                f6(e.share),
                u8::from(e.carried_forward)
            );
        }
    }
    out
}

/// Per-app rows plus a final `mean` row (the error columns there are over every scored interval).
pub fn summary_csv(oracle: &OracleResult) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for a in &oracle.apps {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            a.app_id,
            f6(a.alone_ipc),
            f6(a.shared_ipc),
            f6(a.actual_slowdown),
            f6(a.mise_error_pct),
            f6(a.stfm_error_pct)
        );
    }
    let n = oracle.apps.len().max(1) as f64;
    let mean = |f: fn(&crate::oracle::AppOracle) -> f64| oracle.apps.iter().map(f).sum::<f64>() / n;
    let _ = writeln!(
        out,
        "mean,{},{},{},{},{}",
        f6(mean(|a| a.alone_ipc)),
        f6(mean(|a| a.shared_ipc)),
        f6(mean(|a| a.actual_slowdown)),
        f6(oracle.mise_mape),
        f6(oracle.stfm_mape)
    );
    out
}

/// Shared run plus alone replays.
pub fn simulate_and_score(setup: &SimSetup) -> Result<(SimResult, OracleResult)> {
    let mut result = run_simulation(setup)?;
    let oracle = evaluate(setup, &mut result)?;
    Ok((result, oracle))
}

/// Interval rows, a blank line, then the summary block.
pub fn cmd_run(setup: &SimSetup) -> Result<String> {
    let (result, oracle) = simulate_and_score(setup)?;
    Ok(format!("{}\n{}", interval_csv(&result), summary_csv(&oracle)))
}

pub fn cmd_compare_models(setup: &SimSetup) -> Result<String> {
    let (_, oracle) = simulate_and_score(setup)?;
    Ok(summary_csv(&oracle))
}

/// Outcome of one QoS run for the application of interest.
#[derive(Debug, Clone, PartialEq)]
pub struct QosCase {
    pub bound: Option<f64>,
    pub aoi_actual_slowdown: f64,
    pub met_actual: Option<bool>,
    pub met_predicted: Option<bool>,
    pub non_aoi_harmonic_speedup: f64,
    pub non_aoi_max_slowdown: f64,
    /// AoI share at the end of each interval.
    pub aoi_shares: Vec<f64>,
    pub final_status: Option<BoundStatus>,
}

impl QosCase {
    pub fn final_aoi_share(&self) -> f64 {
        self.aoi_shares.last().copied().unwrap_or(0.0)
    }
}

fn qos_case(setup: &SimSetup, bound: Option<f64>) -> Result<QosCase> {
    let aoi = setup.params.qos.aoi;
    if setup.apps.len() < 2 {
        return Err(SimError::config("qos experiments need the aoi plus at least one other app"));
    }
    let (result, oracle) = simulate_and_score(setup)?;
    let aoi_actual = oracle.apps[aoi].actual_slowdown;
    let others = oracle.slowdowns_excluding(aoi);
    let predicted = match bound {
        Some(b) => {
            let post: Vec<f64> = result.apps[aoi].estimates.iter().skip(1).map(|e| e.mise_slowdown).collect();
            Some(qos_bound_met_prediction(&post, b)?)
        }
        None => None,
    };
    Ok(QosCase {
        bound,
        aoi_actual_slowdown: aoi_actual,
        met_actual: bound.map(|b| aoi_actual <= b),
        met_predicted: predicted,
        non_aoi_harmonic_speedup: harmonic_speedup(&others)?,
        non_aoi_max_slowdown: max_slowdown(&others)?,
        aoi_shares: result.policy_log.iter().map(|o| o.shares.weight(aoi)).collect(),
        final_status: result.policy_log.last().and_then(|o| o.bound_status),
    })
}

/// MISE-QoS run of `base` with the given bound.
pub fn run_qos_case(base: &SimSetup, bound: f64) -> Result<QosCase> {
    let mut setup = base.clone();
    setup.policy = "mise-qos".into();
    setup.params.qos.bound = bound;
    setup.params.qos.validate(setup.apps.len())?;
    qos_case(&setup, Some(bound))
}

/// The same workload with the AoI always prioritized.
pub fn run_always_prioritize_case(base: &SimSetup) -> Result<QosCase> {
    let mut setup = base.clone();
    setup.policy = "always-prioritize".into();
    qos_case(&setup, None)
}

fn opt_bool(b: Option<bool>) -> &'static str {
    match b {
        Some(true) => "1",
        Some(false) => "0",
        None => "",
    }
}

fn sweep_row(out: &mut String, label: &str, c: &QosCase) {
    let _ = writeln!(
        out,
        "{label},{},{},{},{},{},{}",
        f6(c.aoi_actual_slowdown),
        opt_bool(c.met_actual),
        opt_bool(c.met_predicted),
        f6(c.non_aoi_harmonic_speedup),
        f6(c.non_aoi_max_slowdown),
        f6(c.final_aoi_share())
    );
}

/// One MISE-QoS run per bound (in the given order), then an Always-Prioritize reference row.
pub fn cmd_sweep_bounds(setup: &SimSetup, bounds: &[f64]) -> Result<String> {
    if setup.policy != "mise-qos" {
        return Err(SimError::config("sweep-bounds needs policy = mise-qos"));
    }
    if bounds.is_empty() {
        return Err(SimError::config("sweep-bounds needs at least one bound"));
    }
    if let Some(b) = bounds.iter().find(|b| !(**b > 1.0)) {
        return Err(SimError::config(format!("bound {b} must exceed 1")));
    }
    setup.params.qos.validate(setup.apps.len())?;
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for &b in bounds {
        let case = run_qos_case(setup, b)?;
        sweep_row(&mut out, &f6(b), &case);
    }
    let reference = run_always_prioritize_case(setup)?;
    sweep_row(&mut out, "always-prioritize", &reference);
    Ok(out)
}
