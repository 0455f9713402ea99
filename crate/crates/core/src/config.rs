//! Experiment configuration files.
//!
//! Flat `key = value` lines grouped under `[section]` headers; every `[app]`
//! section adds one application. Lines starting with `#` or `;` are comments,
//! as is anything after whitespace followed by `#`.
//!
//! ```text
//! [experiment]
//! policy = mise-qos
//! seed = 7
//! horizon = 4000000
//!
//! [qos]
//! aoi = 0
//! bound = 10/3
//!
//! [app]
//! compute_gap = 10
//! row_locality = 0.9
//!
//! [app]
//! microbench = 6
//! ```

use std::path::{Path, PathBuf};

use crate::dram::DramConfig;
use crate::error::{Result, SimError};
use crate::estimators::EstimateSource;
use crate::policies::{PolicyParams, PolicyRegistry};
use crate::sim::{SimSetup, Timing};
use crate::workloads::{microbench_spec, AppKind, AppSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub setup: SimSetup,
    pub output: Option<PathBuf>,
    /// Bounds for `sweep-bounds` when none are given on the command line.
    pub sweep_bounds: Vec<f64>,
}

fn strip_trailing_comment(line: &str) -> &str {
    let cut = line.char_indices().find(|&(i, c)| c == '#' && line[..i].ends_with([' ', '\t'])).map(|(i, _)| i);
    cut.map_or(line, |i| &line[..i])
}

fn err(line: usize, msg: impl Into<String>) -> SimError {
    SimError::Parse { line, msg: msg.into() }
}

fn num<T: std::str::FromStr>(v: &str, line: usize, key: &str) -> Result<T> {
    v.parse().map_err(|_| err(line, format!("invalid value '{v}' for {key}")))
}

/// Parses `2.5` or a fraction such as `10/3`.
pub fn parse_bound(v: &str) -> Option<f64> {
    let v = v.trim();
    match v.split_once('/') {
        Some((a, b)) => {
            let (a, b): (f64, f64) = (a.trim().parse().ok()?, b.trim().parse().ok()?);
            (b != 0.0).then(|| a / b)
        }
        None => v.parse().ok(),
    }
}

pub fn parse_bound_list(v: &str) -> Option<Vec<f64>> {
    v.split(',').filter(|s| !s.trim().is_empty()).map(parse_bound).collect()
}

#[derive(PartialEq)]
enum Section {
    None,
    Experiment,
    Dram,
    Qos,
    Fair,
    App,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Parses config text; relative trace paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut dram = DramConfig::default();
        let mut timing = Timing::default();
        let mut params = PolicyParams::default();
        let mut apps: Vec<AppSpec> = Vec::new();
        let mut policy = "frfcfs".to_string();
        let mut seed = 1u64;
        let mut horizon = 2_000_000u64;
        let mut output = None;
        let mut sweep_bounds = Vec::new();
        let mut section = Section::None;

        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let t = strip_trailing_comment(raw).trim();
            if t.is_empty() || t.starts_with('#') || t.starts_with(';') {
                continue;
            }
            if let Some(name) = t.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
                section = match name.trim() {
                    "experiment" => Section::Experiment,
                    "dram" => Section::Dram,
                    "qos" => Section::Qos,
                    "fair" => Section::Fair,
                    "app" => {
                        apps.push(AppSpec::default());
                        Section::App
                    }
                    other => return Err(err(line, format!("unknown section [{other}]"))),
                };
                continue;
            }
            let (key, value) = t
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| err(line, "expected `key = value`"))?;
            match section {
                Section::None => return Err(err(line, "key outside of a section")),
                Section::Experiment => match key {
                    "policy" => policy = value.to_string(),
                    "seed" => seed = num(value, line, key)?,
                    "horizon" => horizon = num(value, line, key)?,
                    "epoch_len" => timing.epoch_len = num(value, line, key)?,
                    "interval_len" => timing.interval_len = num(value, line, key)?,
                    "estimator" => {
                        params.source = EstimateSource::from_name(value)
                            .ok_or_else(|| err(line, format!("unknown estimator '{value}'")))?
                    }
                    "output" => output = Some(PathBuf::from(value)),
                    _ => return Err(err(line, format!("unknown key '{key}' in [experiment]"))),
                },
                Section::Dram => match key {
                    "num_channels" => dram.num_channels = num(value, line, key)?,
                    "banks_per_channel" => dram.banks_per_channel = num(value, line, key)?,
                    "row_hit_latency" => dram.row_hit_latency = num(value, line, key)?,
                    "row_closed_latency" => dram.row_closed_latency = num(value, line, key)?,
                    "row_conflict_latency" => dram.row_conflict_latency = num(value, line, key)?,
                    "bus_occupancy" => dram.bus_occupancy = num(value, line, key)?,
                    _ => return Err(err(line, format!("unknown key '{key}' in [dram]"))),
                },
                Section::Qos => match key {
                    "aoi" => params.qos.aoi = num(value, line, key)?,
                    "bound" => {
                        params.qos.bound =
                            parse_bound(value).ok_or_else(|| err(line, format!("invalid bound '{value}'")))?
                    }
                    "step" => params.qos.step = parse_bound(value).ok_or_else(|| err(line, "invalid step"))?,
                    "hysteresis" => params.qos.hysteresis = num(value, line, key)?,
                    "unmeetable_patience" => params.qos.unmeetable_patience = num(value, line, key)?,
                    "bounds" => {
                        sweep_bounds =
                            parse_bound_list(value).ok_or_else(|| err(line, format!("invalid bounds '{value}'")))?
                    }
                    _ => return Err(err(line, format!("unknown key '{key}' in [qos]"))),
                },
                Section::Fair => match key {
                    "initial_bound" => params.fair.initial_bound = num(value, line, key)?,
                    "delta" => params.fair.delta = num(value, line, key)?,
                    "patience" => params.fair.patience = num(value, line, key)?,
                    "min_share" => params.fair.min_share = num(value, line, key)?,
                    "exponent" => params.fair.exponent = num(value, line, key)?,
                    _ => return Err(err(line, format!("unknown key '{key}' in [fair]"))),
                },
                Section::App => {
                    let app = apps.last_mut().expect("app section pushed");
                    match key {
                        "kind" => {
                            app.kind = match value {
                                "synthetic" => AppKind::Synthetic,
                                "trace" => AppKind::Trace,
                                _ => return Err(err(line, format!("unknown app kind '{value}'"))),
                            }
                        }
                        "microbench" => {
                            let level: u32 = num(value, line, key)?;
                            *app = microbench_spec(level).map_err(|e| err(line, e.to_string()))?;
                        }
                        "compute_gap" => app.compute_gap = num(value, line, key)?,
                        "row_locality" => app.row_locality = num(value, line, key)?,
                        "working_rows" => app.working_rows = num(value, line, key)?,
                        "mlp_limit" => app.mlp_limit = num(value, line, key)?,
                        "instruction_budget" => app.instruction_budget = num(value, line, key)?,
                        "trace_path" => {
                            let p = PathBuf::from(value);
                            app.trace_path = Some(if p.is_absolute() { p } else { base_dir.join(p) });
                            app.kind = AppKind::Trace;
                        }
                        _ => return Err(err(line, format!("unknown key '{key}' in [app]"))),
                    }
                }
            }
        }

        if !PolicyRegistry::builtin().contains(&policy) {
            return Err(SimError::config(format!("unknown policy '{policy}'")));
        }
        let setup = SimSetup { dram, apps, policy, params, seed, horizon, timing, record_service_log: false };
        setup.validate()?;
        Ok(ExperimentConfig { setup, output, sweep_bounds })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str =
        "[experiment]\nhorizon = 20000\nepoch_len = 1000\ninterval_len = 10000\n\n[app]\ncompute_gap = 5\n";

    #[test]
    fn trailing_comments_are_ignored() {
        let text = "[experiment]\nhorizon = 20000   # cycles\ninterval_len = 10000\tepoch\n";
        assert!(ExperimentConfig::parse(text, Path::new(".")).is_err());
        let text =
            "[experiment] # main\nhorizon = 20000   # cycles\ninterval_len = 10000\t# len\nepoch_len = 1000\n[app]\n";
        let c = ExperimentConfig::parse(text, Path::new(".")).unwrap();
        assert_eq!(c.setup.horizon, 20_000);
        assert_eq!(c.setup.timing.interval_len, 10_000);
    }

    #[test]
    fn parses_minimal() {
        let c = ExperimentConfig::parse(MINIMAL, Path::new(".")).unwrap();
        assert_eq!(c.setup.apps.len(), 1);
        assert_eq!(c.setup.apps[0].compute_gap, 5);
        assert_eq!(c.setup.policy, "frfcfs");
        assert_eq!(c.setup.timing, Timing { epoch_len: 1000, interval_len: 10_000 });
    }

    #[test]
    fn parses_sections_and_bounds() {
        let text = "# comment\n[experiment]\npolicy = mise-qos\nseed = 9\nhorizon = 2000000\n\
                    [dram]\nbanks_per_channel = 4\n[qos]\naoi = 1\nbound = 10/3\nbounds = 10/1, 10/2, 2.5\n\
                    [fair]\ndelta = 0.2\n[app]\nmicrobench = 8\n[app]\nrow_locality = 0.25\n";
        let c = ExperimentConfig::parse(text, Path::new(".")).unwrap();
        assert_eq!(c.setup.seed, 9);
        assert_eq!(c.setup.dram.banks_per_channel, 4);
        assert_eq!(c.setup.params.qos.aoi, 1);
        assert!((c.setup.params.qos.bound - 10.0 / 3.0).abs() < 1e-12);
        assert_eq!(c.sweep_bounds, vec![10.0, 5.0, 2.5]);
        assert_eq!(c.setup.params.fair.delta, 0.2);
        assert_eq!(c.setup.apps[0], microbench_spec(8).unwrap());
        assert_eq!(c.setup.apps[1].row_locality, 0.25);
    }

    #[test]
    fn rejects_bad_configs() {
        let base = Path::new(".");
        assert!(ExperimentConfig::parse("[experiment]\nhorizon = 100\n", base).is_err(), "no apps");
        assert!(ExperimentConfig::parse("[bogus]\n", base).is_err());
        assert!(ExperimentConfig::parse(&format!("{MINIMAL}colour = red\n"), base).is_err());
        assert!(ExperimentConfig::parse(&MINIMAL.replace("epoch_len = 1000", "epoch_len = 3000"), base).is_err());
        assert!(ExperimentConfig::parse(&format!("{MINIMAL}[experiment]\npolicy = atlas\n"), base).is_err());
        assert!(ExperimentConfig::parse("[app]\ntrace_path = missing.trace\n", base).is_err());
        assert!(ExperimentConfig::parse("seed = 1\n", base).is_err());
    }

    #[test]
    fn bound_syntax() {
        assert_eq!(parse_bound("10/4"), Some(2.5));
        assert_eq!(parse_bound("3"), Some(3.0));
        assert_eq!(parse_bound("1/0"), None);
        assert_eq!(parse_bound_list(""), Some(vec![]));
        assert_eq!(parse_bound_list("x"), None);
    }
}
