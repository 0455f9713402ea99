//! Ground truth from alone replays, estimation error and system metrics.
//!
//! Slowdown compares time per instruction: for every interval the oracle
//! replays the app alone over exactly the instructions it retired in that
//! interval of the shared run, so truncation at the horizon cannot bias it.

use serde::{Deserialize, Serialize};

use crate::dram::DramConfig;
use crate::error::{Result, SimError};
use crate::sim::{app_stream_seed, IntervalMark, SimResult, SimSetup, Simulation, Timing};
use crate::workloads::AppSpec;

fn alone_setup(app: &AppSpec, dram: &DramConfig, horizon: u64, timing: Timing) -> SimSetup {
    SimSetup { timing, ..SimSetup::new(*dram, vec![app.clone()], "frfcfs", 0, horizon) }
}

/// Cycles at which `app`, running alone, retires each of the ascending instruction `targets`.
pub fn alone_reach_cycles(
    app: &AppSpec,
    dram: &DramConfig,
    stream_seed: u64,
    targets: &[u64],
    timing: Timing,
    cycle_cap: u64,
) -> Result<Vec<u64>> {
    let setup = alone_setup(app, dram, cycle_cap.max(timing.interval_len), timing);
    let mut sim = Simulation::with_stream_seeds(&setup, vec![stream_seed])?;
    sim.run_until_instructions(targets, cycle_cap)
}

fn window_ipc(first: &IntervalMark, last: &IntervalMark) -> Option<f64> {
    let instructions = last.instructions.checked_sub(first.instructions)?;
    let cycles = last.reach_cycle.checked_sub(first.reach_cycle)?;
    (instructions > 0 && cycles > 0).then(|| instructions as f64 / cycles as f64)
}

/// Alone IPC over the post-warmup window (first interval excluded) of a `horizon`-cycle run.
pub fn replay_alone(app: &AppSpec, dram: &DramConfig, stream_seed: u64, horizon: u64, timing: Timing) -> Result<f64> {
    if horizon < 2 * timing.interval_len {
        return Err(SimError::InsufficientData("alone replay needs at least two intervals".into()));
    }
    let setup = alone_setup(app, dram, horizon, timing);
    let mut sim = Simulation::with_stream_seeds(&setup, vec![stream_seed])?;
    sim.run_to(horizon)?;
    let result = sim.finish();
    let marks = &result.apps[0].marks;
    window_ipc(&marks[0], marks.last().expect("two intervals"))
        .ok_or_else(|| SimError::InsufficientData("no instructions retired after warmup".into()))
}

pub fn actual_slowdown(alone_ipc: f64, shared_ipc: f64) -> Result<f64> {
    if shared_ipc <= 0.0 {
        return Err(SimError::UndefinedSlowdown);
    }
    Ok(alone_ipc / shared_ipc)
}

/// Absolute percentage error of an estimate.
pub fn estimation_error(estimated: f64, actual: f64) -> Result<f64> {
    if actual <= 0.0 {
        return Err(SimError::Domain(format!("actual slowdown {actual} must be positive")));
    }
    Ok((estimated - actual).abs() / actual * 100.0)
}

fn check_slowdowns(slowdowns: &[f64]) -> Result<()> {
    if slowdowns.is_empty() {
        return Err(SimError::Domain("empty slowdown list".into()));
    }
    if slowdowns.iter().any(|s| !(*s > 0.0)) {
        return Err(SimError::Domain("slowdowns must be positive".into()));
    }
    Ok(())
}

pub fn harmonic_speedup(slowdowns: &[f64]) -> Result<f64> {
    check_slowdowns(slowdowns)?;
    Ok(slowdowns.len() as f64 / slowdowns.iter().sum::<f64>())
}

pub fn weighted_speedup(slowdowns: &[f64]) -> Result<f64> {
    check_slowdowns(slowdowns)?;
    Ok(slowdowns.iter().map(|s| 1.0 / s).sum())
}

pub fn max_slowdown(slowdowns: &[f64]) -> Result<f64> {
    if slowdowns.is_empty() {
        return Err(SimError::Domain("empty slowdown list".into()));
    }
    Ok(slowdowns.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppOracle {
    pub app_id: usize,
    pub alone_ipc: f64,
    pub shared_ipc: f64,
    pub actual_slowdown: f64,
    /// Mean over post-warmup intervals of the raw-estimate error.
    pub mise_error_pct: f64,
    pub stfm_error_pct: f64,
    pub intervals_scored: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub apps: Vec<AppOracle>,
    /// Mean absolute percentage error over every scored (app, interval).
    pub mise_mape: f64,
    pub stfm_mape: f64,
}

impl OracleResult {
    pub fn slowdowns(&self) -> Vec<f64> {
        self.apps.iter().map(|a| a.actual_slowdown).collect()
    }

    /// Actual slowdowns of every app except `excluded`.
    pub fn slowdowns_excluding(&self, excluded: usize) -> Vec<f64> {
        self.apps.iter().filter(|a| a.app_id != excluded).map(|a| a.actual_slowdown).collect()
    }
}

/// Replays every app alone, fills `actual_slowdown` into each interval
/// estimate of `result`, and scores both estimators on post-warmup intervals.
pub fn evaluate(setup: &SimSetup, result: &mut SimResult) -> Result<OracleResult> {
    let timing = setup.timing;
    let cap = 4 * setup.horizon + timing.interval_len;
    let mut apps = Vec::with_capacity(result.apps.len());
    let (mut mise_sum, mut stfm_sum, mut scored) = (0.0, 0.0, 0usize);
    for (i, app_result) in result.apps.iter_mut().enumerate() {
        let marks = &app_result.marks;
        if marks.len() < 2 {
            return Err(SimError::InsufficientData("oracle needs at least two completed intervals".into()));
        }
        let targets: Vec<u64> = marks.iter().map(|m| m.instructions).collect();
        let reach =
            alone_reach_cycles(&setup.apps[i], &setup.dram, app_stream_seed(setup.seed, i), &targets, timing, cap)?;
        let alone_marks: Vec<IntervalMark> = targets
            .iter()
            .zip(&reach)
            .map(|(&instructions, &reach_cycle)| IntervalMark { instructions, reach_cycle })
            .collect();

        let (mut app_mise, mut app_stfm, mut app_scored) = (0.0, 0.0, 0usize);
        for k in 0..marks.len() {
            let (shared_prev, alone_prev) = if k == 0 {
                (IntervalMark { instructions: 0, reach_cycle: 0 }, IntervalMark { instructions: 0, reach_cycle: 0 })
            } else {
                (marks[k - 1], alone_marks[k - 1])
            };
            let (Some(shared), Some(alone)) =
                (window_ipc(&shared_prev, &marks[k]), window_ipc(&alone_prev, &alone_marks[k]))
            else {
                continue;
            };
            let actual = actual_slowdown(alone, shared)?;
            let est = &mut app_result.estimates[k];
            est.actual_slowdown = Some(actual);
            if k == 0 {
                continue;
            }
            app_mise += estimation_error(est.mise_slowdown, actual)?;
            app_stfm += estimation_error(est.stfm_slowdown, actual)?;
            app_scored += 1;
        }

        let last = marks.len() - 1;
        let shared_ipc = window_ipc(&marks[0], &marks[last]).ok_or(SimError::UndefinedSlowdown)?;
        let alone_ipc = window_ipc(&alone_marks[0], &alone_marks[last])
            .ok_or_else(|| SimError::InsufficientData("alone replay retired nothing after warmup".into()))?;
        mise_sum += app_mise;
        stfm_sum += app_stfm;
        scored += app_scored;
        let per = |sum: f64| if app_scored == 0 { 0.0 } else { sum / app_scored as f64 };
        apps.push(AppOracle {
            app_id: i,
            alone_ipc,
            shared_ipc,
            actual_slowdown: actual_slowdown(alone_ipc, shared_ipc)?,
            mise_error_pct: per(app_mise),
            stfm_error_pct: per(app_stfm),
            intervals_scored: app_scored,
        });
    }
    let mean = |sum: f64| if scored == 0 { 0.0 } else { sum / scored as f64 };
    Ok(OracleResult { apps, mise_mape: mean(mise_sum), stfm_mape: mean(stfm_sum) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const EPS: f64 = 1e-9;

    #[test]
    fn slowdown_and_error_examples() {
        assert!((actual_slowdown(1.0, 0.5).unwrap() - 2.0).abs() < EPS);
        assert!((actual_slowdown(0.67, 0.67).unwrap() - 1.0).abs() < EPS);
        assert_eq!(actual_slowdown(1.0, 0.0), Err(SimError::UndefinedSlowdown));
        assert!((estimation_error(2.1, 2.0).unwrap() - 5.0).abs() < EPS);
        assert_eq!(estimation_error(2.0, 2.0).unwrap(), 0.0);
        assert!((estimation_error(1.0, 2.0).unwrap() - 50.0).abs() < EPS);
        assert!(estimation_error(1.0, 0.0).is_err());
    }

    #[test]
    fn metric_examples() {
        assert!((harmonic_speedup(&[1.0; 4]).unwrap() - 1.0).abs() < EPS);
        assert!((harmonic_speedup(&[2.0, 2.0]).unwrap() - 0.5).abs() < EPS);
        assert!((harmonic_speedup(&[1.0, 3.0]).unwrap() - 0.5).abs() < EPS);
        assert!((weighted_speedup(&[1.0, 1.0]).unwrap() - 2.0).abs() < EPS);
        assert!((weighted_speedup(&[2.0, 4.0]).unwrap() - 0.75).abs() < EPS);
        assert!((weighted_speedup(&[1.0]).unwrap() - 1.0).abs() < EPS);
        assert_eq!(max_slowdown(&[1.0, 2.0, 3.0]).unwrap(), 3.0);
        assert_eq!(max_slowdown(&[1.0, 1.0]).unwrap(), 1.0);
        assert!(harmonic_speedup(&[]).is_err());
        assert!(weighted_speedup(&[]).is_err());
        assert!(max_slowdown(&[]).is_err());
    }

    #[test]
    fn replay_needs_two_intervals() {
        let t = Timing { epoch_len: 1_000, interval_len: 10_000 };
        let app = AppSpec::synthetic(10, 0.5, 16, 1);
        assert!(matches!(replay_alone(&app, &DramConfig::default(), 1, 15_000, t), Err(SimError::InsufficientData(_))));
        let a = replay_alone(&app, &DramConfig::default(), 1, 30_000, t).unwrap();
        assert_eq!(a, replay_alone(&app, &DramConfig::default(), 1, 30_000, t).unwrap());
    }

    proptest! {
        #[test]
        fn metric_bounds(s in proptest::collection::vec(0.5f64..10.0, 1..16)) {
            let n = s.len() as f64;
            let min = s.iter().copied().fold(f64::INFINITY, f64::min);
            let hs = harmonic_speedup(&s).unwrap();
            let ws = weighted_speedup(&s).unwrap();
            prop_assert!(hs <= 1.0 / min + EPS);
            prop_assert!(ws <= n / min + EPS);
            prop_assert!(hs <= ws / n * n / 1.0 + EPS);
            prop_assert!(max_slowdown(&s).unwrap() >= 1.0 / hs - EPS);
        }

        #[test]
        fn error_non_negative(e in 0.0f64..10.0, a in 0.01f64..10.0) {
            let err = estimation_error(e, a).unwrap();
            prop_assert!(err >= 0.0);
            prop_assert_eq!(err == 0.0, e == a);
        }
    }
}
