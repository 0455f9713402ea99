//! Slowdown estimators fed by per-interval counters.
//!
//! The request-service-rate model estimates slowdown as
//! `(1 - alpha) + alpha * arsr / srsr`, where `arsr` is the app's service
//! rate while it held highest priority (minus cycles still lost to other
//! apps), `srsr` its rate over the whole interval and `alpha` the fraction
//! of cycles its core stalled on memory. The stall-time baseline instead
//! subtracts counted interference cycles from shared execution time.

use serde::{Deserialize, Serialize};

/// Per-app tallies over one interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EpochCounters {
    pub hp_requests: u64,
    pub hp_cycles: u64,
    pub interference_cycles_hp: u64,
    pub shared_requests: u64,
    pub interval_cycles: u64,
    pub stall_cycles: u64,
    pub total_cycles: u64,
    pub stfm_interference_cycles: u64,
}

impl EpochCounters {
    pub fn is_idle(&self) -> bool {
        self.total_cycles == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlowdownEstimate {
    pub app_id: usize,
    pub interval: usize,
    pub arsr: f64,
    pub srsr: f64,
    pub alpha: f64,
    /// Raw interval estimates.
    pub mise_slowdown: f64,
    pub stfm_slowdown: f64,
    /// Exponentially smoothed estimates (weight 0.5 on the previous value).
    pub mise_smoothed: f64,
    pub stfm_smoothed: f64,
    /// Share the app held during the interval.
    pub share: f64,
    pub carried_forward: bool,
    pub actual_slowdown: Option<f64>,
}

/// Which estimate feeds a policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum EstimateSource {
    #[default]
    Mise,
    Stfm,
}

impl EstimateSource {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "mise" => Some(EstimateSource::Mise),
            "stfm" => Some(EstimateSource::Stfm),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EstimateSource::Mise => "mise",
            EstimateSource::Stfm => "stfm",
        }
    }

    pub fn smoothed(&self, e: &SlowdownEstimate) -> f64 {
        match self {
            EstimateSource::Mise => e.mise_smoothed,
            EstimateSource::Stfm => e.stfm_smoothed,
        }
    }
}

/// Alone request service rate; `None` when no effective high-priority cycles remain.
pub fn compute_arsr(c: &EpochCounters) -> Option<f64> {
    let effective = c.hp_cycles.checked_sub(c.interference_cycles_hp)?;
    if effective == 0 {
        return None;
    }
    Some(c.hp_requests as f64 / effective as f64)
}

pub fn compute_srsr(c: &EpochCounters) -> f64 {
    if c.interval_cycles == 0 {
        return 0.0;
    }
    c.shared_requests as f64 / c.interval_cycles as f64
}

/// Fraction of cycles stalled on memory, clamped to [0, 1]. `None` for an idle core.
pub fn estimate_alpha(c: &EpochCounters) -> Option<f64> {
    if c.total_cycles == 0 {
        return None;
    }
    Some((c.stall_cycles as f64 / c.total_cycles as f64).clamp(0.0, 1.0))
}

pub fn estimate_slowdown_mise(alpha: f64, arsr: f64, srsr: f64) -> Option<f64> {
    if alpha == 0.0 {
        return Some(1.0);
    }
    if srsr <= 0.0 {
        return None;
    }
    Some((1.0 - alpha) + alpha * (arsr / srsr))
}

pub fn estimate_slowdown_stfm(c: &EpochCounters) -> Option<f64> {
    if c.stfm_interference_cycles >= c.total_cycles {
        return None;
    }
    Some(c.total_cycles as f64 / (c.total_cycles - c.stfm_interference_cycles) as f64)
}

const SMOOTHING: f64 = 0.5;

#[derive(Debug, Clone, Default)]
struct AppTrack {
    last_arsr: Option<f64>,
    last_mise: Option<f64>,
    last_stfm: Option<f64>,
    smoothed_mise: Option<f64>,
    smoothed_stfm: Option<f64>,
}

/// Turns completed-interval counters into estimates, carrying state across intervals.
#[derive(Debug, Clone)]
pub struct IntervalEstimator {
    tracks: Vec<AppTrack>,
    next_interval: usize,
}

impl IntervalEstimator {
    pub fn new(num_apps: usize) -> Self {
        IntervalEstimator { tracks: vec![AppTrack::default(); num_apps], next_interval: 0 }
    }

    /// Estimates for every app over the interval just completed. Counters are reset.
    pub fn finalize_interval(&mut self, counters: &mut [EpochCounters], shares: &[f64]) -> Vec<SlowdownEstimate> {
        assert_eq!(counters.len(), self.tracks.len());
        let interval = self.next_interval;
        self.next_interval += 1;
        let out = counters
            .iter()
            .zip(self.tracks.iter_mut())
            .enumerate()
            .map(|(app, (c, t))| estimate_one(app, interval, c, t, shares[app]))
            .collect();
        counters.iter_mut().for_each(|c| *c = EpochCounters::default());
        out
    }
}

fn estimate_one(app: usize, interval: usize, c: &EpochCounters, t: &mut AppTrack, share: f64) -> SlowdownEstimate {
    let srsr = compute_srsr(c);
    let mut carried = false;
    // unavailable alone rate: reuse the previous interval's, else assume no slowdown
    let arsr = match compute_arsr(c).or(t.last_arsr) {
        Some(a) => a,
        None => {
            carried = true;
            srsr
        }
    };
    if let Some(a) = compute_arsr(c) {
        t.last_arsr = Some(a);
    }
    let alpha = estimate_alpha(c);
    let mise = alpha.and_then(|a| estimate_slowdown_mise(a, arsr, srsr));
    let mise = match mise {
        Some(m) => m,
        None => {
            carried = true;
            t.last_mise.unwrap_or(1.0)
        }
    };
    let stfm = match estimate_slowdown_stfm(c) {
        Some(s) => s,
        None => {
            carried = true;
            t.last_stfm.unwrap_or(1.0)
        }
    };
    t.last_mise = Some(mise);
    t.last_stfm = Some(stfm);
    let smooth = |prev: Option<f64>, raw: f64| prev.map_or(raw, |p| SMOOTHING * p + (1.0 - SMOOTHING) * raw);
    let mise_smoothed = smooth(t.smoothed_mise, mise);
    let stfm_smoothed = smooth(t.smoothed_stfm, stfm);
    t.smoothed_mise = Some(mise_smoothed);
    t.smoothed_stfm = Some(stfm_smoothed);
    SlowdownEstimate {
        app_id: app,
        interval,
        arsr,
        srsr,
        alpha: alpha.unwrap_or(0.0),
        mise_slowdown: mise,
        stfm_slowdown: stfm,
        mise_smoothed,
        stfm_smoothed,
        share,
        carried_forward: carried,
        actual_slowdown: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const EPS: f64 = 1e-9;

    fn hp(req: u64, cycles: u64, interference: u64) -> EpochCounters {
        EpochCounters {
            hp_requests: req,
            hp_cycles: cycles,
            interference_cycles_hp: interference,
            ..Default::default()
        }
    }

    #[test]
    fn arsr_examples() {
        assert!((compute_arsr(&hp(40, 10_000, 0)).unwrap() - 0.004).abs() < EPS);
        assert!((compute_arsr(&hp(40, 10_000, 2000)).unwrap() - 0.005).abs() < EPS);
        assert_eq!(compute_arsr(&hp(40, 10_000, 10_000)), None);
    }

    #[test]
    fn srsr_examples() {
        let c = EpochCounters { shared_requests: 500, interval_cycles: 1_000_000, ..Default::default() };
        assert!((compute_srsr(&c) - 0.0005).abs() < EPS);
        let c = EpochCounters { interval_cycles: 1_000_000, ..Default::default() };
        assert_eq!(compute_srsr(&c), 0.0);
    }

    #[test]
    fn alpha_examples() {
        let c = EpochCounters { stall_cycles: 70_000, total_cycles: 100_000, ..Default::default() };
        assert!((estimate_alpha(&c).unwrap() - 0.7).abs() < EPS);
        let c = EpochCounters { total_cycles: 100_000, ..Default::default() };
        assert_eq!(estimate_alpha(&c), Some(0.0));
    }

    #[test]
    fn mise_examples() {
        assert!((estimate_slowdown_mise(1.0, 0.004, 0.002).unwrap() - 2.0).abs() < EPS);
        assert_eq!(estimate_slowdown_mise(0.0, 0.3, 0.1), Some(1.0));
        assert!((estimate_slowdown_mise(0.7, 0.003, 0.001).unwrap() - 2.4).abs() < EPS);
        assert_eq!(estimate_slowdown_mise(0.5, 0.003, 0.0), None);
    }

    #[test]
    fn stfm_examples() {
        let c = EpochCounters { total_cycles: 100_000, stfm_interference_cycles: 20_000, ..Default::default() };
        assert!((estimate_slowdown_stfm(&c).unwrap() - 1.25).abs() < EPS);
        let c = EpochCounters { total_cycles: 100_000, ..Default::default() };
        assert_eq!(estimate_slowdown_stfm(&c), Some(1.0));
        let c = EpochCounters { total_cycles: 100_000, stfm_interference_cycles: 100_000, ..Default::default() };
        assert_eq!(estimate_slowdown_stfm(&c), None);
    }

    fn solo(requests: u64) -> EpochCounters {
        EpochCounters {
            hp_requests: requests,
            hp_cycles: 1000,
            shared_requests: requests,
            interval_cycles: 1000,
            stall_cycles: 600,
            total_cycles: 1000,
            ..Default::default()
        }
    }

    #[test]
    fn finalize_single_app_and_reset() {
        let mut est = IntervalEstimator::new(1);
        let mut c = vec![solo(10)];
        let out = est.finalize_interval(&mut c, &[1.0]);
        assert_eq!(out.len(), 1);
        assert!((out[0].mise_slowdown - 1.0).abs() < EPS);
        assert!(!out[0].carried_forward);
        assert_eq!(c[0], EpochCounters::default());
    }

    #[test]
    fn finalize_idle_app_carries_forward() {
        let mut est = IntervalEstimator::new(2);
        let mut c = vec![solo(10), solo(12)];
        est.finalize_interval(&mut c, &[0.5, 0.5]);
        let mut c = vec![solo(10), EpochCounters::default()];
        let out = est.finalize_interval(&mut c, &[0.5, 0.5]);
        assert_eq!(out.len(), 2);
        assert!(out[1].carried_forward);
        assert_eq!(out[1].mise_slowdown, 1.0);
        assert_eq!(out[1].interval, 1);
    }

    #[test]
    fn missing_hp_epochs_reuse_previous_arsr() {
        let mut est = IntervalEstimator::new(1);
        let first = EpochCounters {
            hp_requests: 20,
            hp_cycles: 1000,
            shared_requests: 10,
            interval_cycles: 2000,
            stall_cycles: 1000,
            total_cycles: 2000,
            ..Default::default()
        };
        let out = est.finalize_interval(&mut [first], &[0.5]);
        assert!((out[0].arsr - 0.02).abs() < EPS);
        let second = EpochCounters {
            shared_requests: 10,
            interval_cycles: 2000,
            stall_cycles: 1000,
            total_cycles: 2000,
            ..Default::default()
        };
        let out = est.finalize_interval(&mut [second], &[0.5]);
        assert!((out[0].arsr - 0.02).abs() < EPS);
        // (1 - 0.5) + 0.5 * 0.02 / 0.005
        assert!((out[0].mise_slowdown - 2.5).abs() < EPS);
        assert!((out[0].mise_smoothed - 2.5).abs() < EPS);
    }

    #[test]
    fn first_interval_without_hp_falls_back_to_srsr() {
        let mut est = IntervalEstimator::new(1);
        let c = EpochCounters {
            shared_requests: 10,
            interval_cycles: 2000,
            stall_cycles: 1000,
            total_cycles: 2000,
            ..Default::default()
        };
        let out = est.finalize_interval(&mut [c], &[0.5]);
        assert_eq!(out[0].arsr, out[0].srsr);
        assert!((out[0].mise_slowdown - 1.0).abs() < EPS);
        assert!(out[0].carried_forward);
    }

    proptest! {
        #[test]
        fn mise_reductions_and_bounds(alpha in 0.0f64..=1.0, arsr in 0.0f64..1.0, srsr in 1e-6f64..1.0) {
            let s = estimate_slowdown_mise(alpha, arsr, srsr).unwrap();
            prop_assert!(s >= 1.0 - alpha - EPS);
            prop_assert_eq!(estimate_slowdown_mise(1.0, arsr, srsr).unwrap(), arsr / srsr);
            prop_assert_eq!(estimate_slowdown_mise(0.0, arsr, srsr).unwrap(), 1.0);
        }

        #[test]
        fn mise_monotone(alpha in 0.0f64..=1.0, a in 0.0f64..1.0, da in 0.0f64..1.0, s in 1e-6f64..1.0, ds in 0.0f64..1.0) {
            let base = estimate_slowdown_mise(alpha, a, s).unwrap();
            prop_assert!(estimate_slowdown_mise(alpha, a + da, s).unwrap() >= base);
            prop_assert!(estimate_slowdown_mise(alpha, a, s + ds).unwrap() <= base + EPS);
        }

        #[test]
        fn stfm_at_least_one(total in 1u64..1_000_000, frac in 0.0f64..1.0) {
            let interference = ((total as f64) * frac) as u64;
            let c = EpochCounters { total_cycles: total, stfm_interference_cycles: interference.min(total - 1), ..Default::default() };
            prop_assert!(estimate_slowdown_stfm(&c).unwrap() >= 1.0);
        }
    }
}
