//! Interval-boundary bandwidth policies.
//!
//! Every policy implements [`BandwidthPolicy`] and is registered by name in a
//! [`PolicyRegistry`]; the simulator builds the active one from its
//! configured name. The update rules themselves are pure functions
//! ([`qos_adjust`], [`fair_adjust`], [`always_prioritize_shares`]) so they can
//! be tested without a simulation.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::estimators::{EstimateSource, SlowdownEstimate};
use crate::scheduling::BandwidthShares;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QosConfig {
    /// Application of interest.
    pub aoi: usize,
    pub bound: f64,
    pub step: f64,
    pub hysteresis: f64,
    pub unmeetable_patience: u32,
}

impl Default for QosConfig {
    fn default() -> Self {
        QosConfig { aoi: 0, bound: 2.0, step: 1.0 / 16.0, hysteresis: 0.05, unmeetable_patience: 3 }
    }
}

impl QosConfig {
    pub fn validate(&self, num_apps: usize) -> Result<()> {
        if self.aoi >= num_apps {
            return Err(SimError::config(format!("aoi {} out of range for {num_apps} apps", self.aoi)));
        }
        if !(self.bound > 1.0) {
            return Err(SimError::config("qos bound must exceed 1"));
        }
        if !(self.step > 0.0 && self.step <= 1.0) {
            return Err(SimError::config("qos step must lie in (0, 1]"));
        }
        if !(0.0..1.0).contains(&self.hysteresis) {
            return Err(SimError::config("qos hysteresis must lie in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FairConfig {
    pub initial_bound: f64,
    pub delta: f64,
    pub patience: u32,
    pub min_share: f64,
    /// Shares follow `slowdown^exponent`.
    pub exponent: f64,
}

impl Default for FairConfig {
    fn default() -> Self {
        FairConfig { initial_bound: 3.0, delta: 0.1, patience: 2, min_share: 0.02, exponent: 1.0 }
    }
}

impl FairConfig {
    pub fn validate(&self, num_apps: usize) -> Result<()> {
        if !(self.initial_bound > 1.0) {
            return Err(SimError::config("fair initial bound must exceed 1"));
        }
        if !(self.delta > 0.0) {
            return Err(SimError::config("fair delta must be positive"));
        }
        if !(self.min_share >= 0.0 && self.min_share * (num_apps as f64) < 1.0) {
            return Err(SimError::config("fair min_share * num_apps must be below 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundStatus {
    Met,
    AtRisk,
    Unmeetable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyOutcome {
    pub shares: BandwidthShares,
    pub bound_status: Option<BoundStatus>,
    pub current_bound: Option<f64>,
}

impl PolicyOutcome {
    fn shares_only(shares: BandwidthShares) -> Self {
        PolicyOutcome { shares, bound_status: None, current_bound: None }
    }
}

/// Consecutive intervals the AoI has spent at full share while over its bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct QosState {
    pub full_share_streak: u32,
}

fn aoi_shares(aoi: usize, n: usize, aoi_share: f64) -> Result<BandwidthShares> {
    if n == 1 {
        return BandwidthShares::new(vec![1.0]);
    }
    let rest = (1.0 - aoi_share) / (n - 1) as f64;
    let mut w = vec![rest; n];
    w[aoi] = aoi_share;
    BandwidthShares::new(w)
}

/// One MISE-QoS step: grow the AoI's share while it is estimated over its
/// bound, shrink it once comfortably under, split the rest equally.
pub fn qos_adjust(
    estimated: f64,
    cfg: &QosConfig,
    shares: &BandwidthShares,
    state: QosState,
) -> Result<(PolicyOutcome, QosState)> {
    let n = shares.len();
    if cfg.aoi >= n {
        return Err(SimError::config(format!("aoi {} out of range for {n} apps", cfg.aoi)));
    }
    let current = shares.weight(cfg.aoi);
    let over = estimated > cfg.bound;
    let at_full = current >= 1.0 - 1e-12;
    let state = QosState { full_share_streak: if over && at_full { state.full_share_streak + 1 } else { 0 } };
    let floor = 1.0 / n as f64;
    let next = if over {
        (current + cfg.step).min(1.0)
    } else if estimated < cfg.bound * (1.0 - cfg.hysteresis) {
        (current - cfg.step).max(floor.min(current))
    } else {
        current
    };
    let status = if state.full_share_streak >= cfg.unmeetable_patience {
        BoundStatus::Unmeetable
    } else if over {
        BoundStatus::AtRisk
    } else {
        BoundStatus::Met
    };
    let outcome =
        PolicyOutcome { shares: aoi_shares(cfg.aoi, n, next)?, bound_status: Some(status), current_bound: None };
    Ok((outcome, state))
}

/// Predicts the bound is met when the mean post-warmup estimate is within it.
pub fn qos_bound_met_prediction(post_warmup_estimates: &[f64], bound: f64) -> Result<bool> {
    if post_warmup_estimates.is_empty() {
        return Err(SimError::InsufficientData("no post-warmup estimates for the aoi".into()));
    }
    let mean = post_warmup_estimates.iter().sum::<f64>() / post_warmup_estimates.len() as f64;
    Ok(mean <= bound)
}

pub fn always_prioritize_shares(aoi: usize, n: usize) -> Result<BandwidthShares> {
    if n == 0 || aoi >= n {
        return Err(SimError::config(format!("aoi {aoi} out of range for {n} apps")));
    }
    aoi_shares(aoi, n, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FairStreaks {
    pub over: u32,
    pub under: u32,
}

/// One MISE-Fair step: shares proportional to estimated slowdown (with a
/// floor), and the common bound `B` nudged by `delta` after `patience`
/// consecutive intervals above it or comfortably below it.
pub fn fair_adjust(
    estimates: &[f64],
    cfg: &FairConfig,
    num_apps: usize,
    bound: f64,
    streaks: FairStreaks,
) -> Result<(PolicyOutcome, FairStreaks)> {
    if estimates.len() != num_apps {
        return Err(SimError::config(format!("fair policy needs {num_apps} estimates, got {}", estimates.len())));
    }
    let raw: Vec<f64> = estimates.iter().map(|s| s.max(0.0).powf(cfg.exponent)).collect();
    let total: f64 = raw.iter().sum();
    let shares = if total > 0.0 && total.is_finite() {
        let floored: Vec<f64> = raw.iter().map(|w| (w / total).max(cfg.min_share)).collect();
        BandwidthShares::normalized(floored)?
    } else {
        BandwidthShares::equal(num_apps)
    };

    let worst = estimates.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut next = FairStreaks::default();
    let mut bound = bound;
    if worst > bound {
        next.over = streaks.over + 1;
        if next.over >= cfg.patience {
            bound += cfg.delta;
            next.over = 0;
        }
    } else if worst < bound - cfg.delta {
        next.under = streaks.under + 1;
        if next.under >= cfg.patience {
            bound = (bound - cfg.delta).max(1.0);
            next.under = 0;
        }
    }
    let outcome = PolicyOutcome { shares, bound_status: None, current_bound: Some(bound) };
    Ok((outcome, next))
}

/// A bandwidth allocation strategy invoked at every interval boundary.
pub trait BandwidthPolicy: Send {
    fn name(&self) -> &'static str;

    fn initial_shares(&self) -> BandwidthShares;

    fn on_interval(&mut self, estimates: &[SlowdownEstimate], current: &BandwidthShares) -> Result<PolicyOutcome>;
}

/// Parameters available to every policy factory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub qos: QosConfig,
    pub fair: FairConfig,
    pub source: EstimateSource,
}

/// Static equal shares: plain FR-FCFS with the priority epoch rotated by an equal lottery.
pub struct EqualShare {
    n: usize,
}

impl BandwidthPolicy for EqualShare {
    fn name(&self) -> &'static str {
        "frfcfs"
    }

    fn initial_shares(&self) -> BandwidthShares {
        BandwidthShares::equal(self.n)
    }

    fn on_interval(&mut self, _: &[SlowdownEstimate], current: &BandwidthShares) -> Result<PolicyOutcome> {
        Ok(PolicyOutcome::shares_only(current.clone()))
    }
}

pub struct AlwaysPrioritize {
    shares: BandwidthShares,
}

impl BandwidthPolicy for AlwaysPrioritize {
    fn name(&self) -> &'static str {
        "always-prioritize"
    }

    fn initial_shares(&self) -> BandwidthShares {
        self.shares.clone()
    }

    fn on_interval(&mut self, _: &[SlowdownEstimate], _: &BandwidthShares) -> Result<PolicyOutcome> {
        Ok(PolicyOutcome::shares_only(self.shares.clone()))
    }
}

pub struct MiseQos {
    cfg: QosConfig,
    n: usize,
    source: EstimateSource,
    state: QosState,
}

impl BandwidthPolicy for MiseQos {
    fn name(&self) -> &'static str {
        "mise-qos"
    }

    fn initial_shares(&self) -> BandwidthShares {
        BandwidthShares::equal(self.n)
    }

    fn on_interval(&mut self, estimates: &[SlowdownEstimate], current: &BandwidthShares) -> Result<PolicyOutcome> {
        let est = estimates
            .iter()
            .find(|e| e.app_id == self.cfg.aoi)
            .ok_or_else(|| SimError::config("no estimate for the aoi"))?;
        let (outcome, state) = qos_adjust(self.source.smoothed(est), &self.cfg, current, self.state)?;
        self.state = state;
        Ok(outcome)
    }
}

pub struct MiseFair {
    cfg: FairConfig,
    n: usize,
    source: EstimateSource,
    bound: f64,
    streaks: FairStreaks,
}

impl BandwidthPolicy for MiseFair {
    fn name(&self) -> &'static str {
        "mise-fair"
    }

    fn initial_shares(&self) -> BandwidthShares {
        BandwidthShares::equal(self.n)
    }

    fn on_interval(&mut self, estimates: &[SlowdownEstimate], _: &BandwidthShares) -> Result<PolicyOutcome> {
        let mut values = vec![f64::NAN; self.n];
        for e in estimates {
            if e.app_id < self.n {
                values[e.app_id] = self.source.smoothed(e);
            }
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(SimError::config("missing slowdown estimate for an app"));
        }
        let (outcome, streaks) = fair_adjust(&values, &self.cfg, self.n, self.bound, self.streaks)?;
        self.streaks = streaks;
        self.bound = outcome.current_bound.unwrap_or(self.bound);
        Ok(outcome)
    }
}

pub type PolicyFactory = fn(&PolicyParams, usize) -> Result<Box<dyn BandwidthPolicy>>;

fn build_equal(_: &PolicyParams, n: usize) -> Result<Box<dyn BandwidthPolicy>> {
    Ok(Box::new(EqualShare { n }))
}

fn build_always(p: &PolicyParams, n: usize) -> Result<Box<dyn BandwidthPolicy>> {
    Ok(Box::new(AlwaysPrioritize { shares: always_prioritize_shares(p.qos.aoi, n)? }))
}

fn build_qos(p: &PolicyParams, n: usize) -> Result<Box<dyn BandwidthPolicy>> {
    p.qos.validate(n)?;
    Ok(Box::new(MiseQos { cfg: p.qos, n, source: p.source, state: QosState::default() }))
}

fn build_fair(p: &PolicyParams, n: usize) -> Result<Box<dyn BandwidthPolicy>> {
    p.fair.validate(n)?;
    Ok(Box::new(MiseFair {
        cfg: p.fair,
        n,
        source: p.source,
        bound: p.fair.initial_bound,
        streaks: FairStreaks::default(),
    }))
}

/// Name-indexed policy constructors.
pub struct PolicyRegistry {
    entries: Vec<(&'static str, PolicyFactory)>,
}

impl PolicyRegistry {
    pub fn empty() -> Self {
        PolicyRegistry { entries: Vec::new() }
    }

    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register("frfcfs", build_equal);
        r.register("always-prioritize", build_always);
        r.register("mise-qos", build_qos);
        r.register("mise-fair", build_fair);
        r
    }

    /// Adds or replaces the factory for `name`.
    pub fn register(&mut self, name: &'static str, factory: PolicyFactory) {
        match self.entries.iter_mut().find(|(n, _)| *n == name) {
            Some(slot) => slot.1 = factory,
            None => self.entries.push((name, factory)),
        }
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|(n, _)| *n).collect()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.iter().any(|(n, _)| *n == name)
    }

    pub fn build(&self, name: &str, params: &PolicyParams, num_apps: usize) -> Result<Box<dyn BandwidthPolicy>> {
        let (_, factory) =
            self.entries.iter().find(|(n, _)| *n == name).ok_or_else(|| {
                SimError::config(format!("unknown policy '{name}' (known: {})", self.names().join(", ")))
            })?;
        factory(params, num_apps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const EPS: f64 = 1e-9;

    fn qos(bound: f64) -> QosConfig {
        QosConfig { bound, ..QosConfig::default() }
    }

    #[test]
    fn qos_increase_and_decrease() {
        let shares = BandwidthShares::equal(4);
        let (o, _) = qos_adjust(3.0, &qos(2.0), &shares, QosState::default()).unwrap();
        assert!((o.shares.weight(0) - 0.3125).abs() < EPS);
        assert!((o.shares.weights()[1..].iter().sum::<f64>() - 0.6875).abs() < EPS);
        assert_eq!(o.bound_status, Some(BoundStatus::AtRisk));

        let half = BandwidthShares::new(vec![0.5, 0.5 / 3.0, 0.5 / 3.0, 0.5 / 3.0]).unwrap();
        let (o, _) = qos_adjust(1.5, &qos(2.0), &half, QosState::default()).unwrap();
        assert!((o.shares.weight(0) - 0.4375).abs() < EPS);
        assert_eq!(o.bound_status, Some(BoundStatus::Met));

        // inside the hysteresis band: unchanged
        let (o, _) = qos_adjust(1.95, &qos(2.0), &half, QosState::default()).unwrap();
        assert!((o.shares.weight(0) - 0.5).abs() < EPS);
    }

    #[test]
    fn qos_share_floor_and_ceiling() {
        let eq = BandwidthShares::equal(4);
        let (o, _) = qos_adjust(1.0, &qos(2.0), &eq, QosState::default()).unwrap();
        assert!((o.shares.weight(0) - 0.25).abs() < EPS);
        let full = always_prioritize_shares(0, 4).unwrap();
        let (o, _) = qos_adjust(5.0, &qos(2.0), &full, QosState::default()).unwrap();
        assert_eq!(o.shares.weight(0), 1.0);
    }

    #[test]
    fn qos_unmeetable_after_patience() {
        let full = always_prioritize_shares(1, 4).unwrap();
        let cfg = QosConfig { aoi: 1, ..qos(2.0) };
        let mut state = QosState::default();
        let mut statuses = Vec::new();
        for _ in 0..3 {
            let (o, s) = qos_adjust(2.5, &cfg, &full, state).unwrap();
            state = s;
            statuses.push(o.bound_status.unwrap());
        }
        assert_eq!(statuses, vec![BoundStatus::AtRisk, BoundStatus::AtRisk, BoundStatus::Unmeetable]);
        let (o, s) = qos_adjust(1.9, &cfg, &full, state).unwrap();
        assert_eq!(o.bound_status, Some(BoundStatus::Met));
        assert_eq!(s.full_share_streak, 0);
    }

    #[test]
    fn qos_rejects_bad_aoi() {
        let cfg = QosConfig { aoi: 5, ..qos(2.0) };
        assert!(qos_adjust(1.0, &cfg, &BandwidthShares::equal(4), QosState::default()).is_err());
    }

    #[test]
    fn bound_met_prediction() {
        assert!(qos_bound_met_prediction(&[1.8, 1.9], 2.0).unwrap());
        assert!(!qos_bound_met_prediction(&[2.5, 2.6], 2.0).unwrap());
        assert!(qos_bound_met_prediction(&[], 2.0).is_err());
    }

    #[test]
    fn always_prioritize() {
        assert_eq!(always_prioritize_shares(0, 4).unwrap().weights(), &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(always_prioritize_shares(2, 3).unwrap().weights(), &[0.0, 0.0, 1.0]);
        assert!(always_prioritize_shares(3, 3).is_err());
    }

    #[test]
    fn fair_examples() {
        let cfg = FairConfig::default();
        let (o, _) = fair_adjust(&[2.0; 4], &cfg, 4, 3.0, FairStreaks::default()).unwrap();
        assert_eq!(o.shares.weights(), &[0.25; 4]);

        let cfg_small = FairConfig { min_share: 0.001, ..cfg };
        let (o, _) = fair_adjust(&[3.0, 1.0], &cfg_small, 2, 3.0, FairStreaks::default()).unwrap();
        assert!((o.shares.weight(0) - 0.75).abs() < EPS);
        assert!((o.shares.weight(1) - 0.25).abs() < EPS);

        let (o1, s1) = fair_adjust(&[3.4, 1.0], &cfg, 2, 3.0, FairStreaks::default()).unwrap();
        assert_eq!(o1.current_bound, Some(3.0));
        let (o2, _) = fair_adjust(&[3.4, 1.0], &cfg, 2, 3.0, s1).unwrap();
        assert!((o2.current_bound.unwrap() - 3.1).abs() < EPS);

        assert!(fair_adjust(&[1.0], &cfg, 2, 3.0, FairStreaks::default()).is_err());
    }

    #[test]
    fn fair_bound_decreases_and_floors() {
        let cfg = FairConfig { patience: 1, delta: 0.5, ..FairConfig::default() };
        let (o, _) = fair_adjust(&[1.0, 1.0], &cfg, 2, 1.8, FairStreaks::default()).unwrap();
        assert!((o.current_bound.unwrap() - 1.3).abs() < EPS);
        let (o, _) = fair_adjust(&[0.5, 0.5], &cfg, 2, 1.2, FairStreaks::default()).unwrap();
        assert_eq!(o.current_bound, Some(1.0));
    }

    #[test]
    fn registry_builds_by_name() {
        let reg = PolicyRegistry::builtin();
        assert_eq!(reg.names(), vec!["frfcfs", "always-prioritize", "mise-qos", "mise-fair"]);
        let params = PolicyParams::default();
        for name in reg.names() {
            let p = reg.build(name, &params, 4).unwrap();
            assert_eq!(p.name(), name);
            assert!((p.initial_shares().weights().iter().sum::<f64>() - 1.0).abs() < EPS);
        }
        assert!(reg.build("atlas", &params, 4).is_err());
    }

    fn shares_strategy() -> impl Strategy<Value = BandwidthShares> {
        proptest::collection::vec(0.01f64..1.0, 2..8).prop_map(|w| BandwidthShares::normalized(w).unwrap())
    }

    proptest! {
        #[test]
        fn qos_outcomes_valid_and_monotone(shares in shares_strategy(), a in 0.5f64..6.0, b in 0.5f64..6.0, bound in 1.1f64..5.0) {
            let cfg = qos(bound);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let (olo, _) = qos_adjust(lo, &cfg, &shares, QosState::default()).unwrap();
            let (ohi, _) = qos_adjust(hi, &cfg, &shares, QosState::default()).unwrap();
            for o in [&olo, &ohi] {
                prop_assert!((o.shares.weights().iter().sum::<f64>() - 1.0).abs() <= 1e-9);
                prop_assert!(o.shares.weights().iter().all(|w| *w >= 0.0));
            }
            prop_assert!(ohi.shares.weight(0) >= olo.shares.weight(0));
        }

        #[test]
        fn unmeetable_needs_full_share(shares in shares_strategy(), est in 0.5f64..6.0) {
            let cfg = QosConfig { unmeetable_patience: 1, ..qos(2.0) };
            let (o, _) = qos_adjust(est, &cfg, &shares, QosState::default()).unwrap();
            if o.bound_status == Some(BoundStatus::Unmeetable) {
                prop_assert!(shares.weight(0) >= 1.0 - 1e-12);
            }
        }

        #[test]
        fn fair_outcomes_valid(ests in proptest::collection::vec(0.5f64..8.0, 1..16), bound in 1.0f64..5.0) {
            let cfg = FairConfig { min_share: 0.01, ..FairConfig::default() };
            let (o, _) = fair_adjust(&ests, &cfg, ests.len(), bound, FairStreaks::default()).unwrap();
            prop_assert!((o.shares.weights().iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            let b = o.current_bound.unwrap();
            prop_assert!((b - bound).abs() <= cfg.delta + 1e-12);
            prop_assert!(b >= 1.0 || b == bound);
        }

        #[test]
        fn fair_symmetry(s in 0.5f64..8.0, n in 1usize..16) {
            let (o, _) = fair_adjust(&vec![s; n], &FairConfig::default(), n, 3.0, FairStreaks::default()).unwrap();
            let w = o.shares.weights();
            prop_assert!(w.iter().all(|x| *x == w[0]));
        }
    }
}
