//! Run configuration file.
//!
//! The TOML schema mirrors [`RunConfig`] field for field and every key is
//! required, so a file is self-describing. `configs/default.toml` is the
//! serialized default. Loading reports every missing, unknown, mistyped or
//! out-of-range key in a single [`Error::Validation`].

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{ForecastModel, SynthParams};
use crate::env::Stress;
use crate::error::{Error, Result};
use crate::grid::MicrogridConfig;
use crate::maddpg::TrainConfig;
use crate::outage::OutageParams;
use crate::powerflow::{parse_branches, DeviceBuses, FeederTopology, FlowLimits};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSection {
    /// Root of every random stream.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    /// `synthetic` or `csv`.
    pub source: String,
    /// Used when `source = "csv"`.
    pub csv_path: String,
    /// Used when `source = "synthetic"`.
    pub synth_days: usize,
    pub synth_seed: u64,
    pub train_fraction: f64,
    pub min_test_days: usize,
    pub split_seed: u64,
    pub synth: SynthParams,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: "synthetic".into(),
            csv_path: String::new(),
            synth_days: 64,
            synth_seed: 7,
            train_fraction: 0.75,
            min_test_days: 16,
            split_seed: 7,
            synth: SynthParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeederConfig {
    /// Branch list path; empty selects the bundled 33-bus feeder.
    pub branches: String,
    pub slack_bus: usize,
    pub base_mva: f64,
    pub limits: FlowLimits,
    pub devices: DeviceBuses,
}

impl Default for FeederConfig {
    fn default() -> Self {
        Self {
            branches: String::new(),
            slack_bus: 1,
            base_mva: 10.0,
            limits: FlowLimits::default(),
            devices: DeviceBuses::default(),
        }
    }
}

impl FeederConfig {
    pub fn topology(&self) -> Result<FeederTopology> {
        if self.branches.is_empty() {
            let base = FeederTopology::ieee33();
            return FeederTopology::new(base.branches, self.slack_bus, self.base_mva, self.devices.clone());
        }
        let text = std::fs::read_to_string(&self.branches)?;
        FeederTopology::new(parse_branches(&text)?, self.slack_bus, self.base_mva, self.devices.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Root of the test-scenario streams, independent of the training seed
    /// so every trained policy faces the same days.
    pub scenario_seed: u64,
    /// The first `fail_agents` ESS are held at 0 MW.
    pub fail_agents: usize,
    pub stress: Stress,
    /// Shedding prices for the sensitivity sweep, $/MWh.
    pub lambda_sweep: Vec<f64>,
    /// Episodes per training in the sweep.
    pub sweep_episodes: usize,
    /// SoC grid points for the dynamic-programming reference.
    pub dp_grid_points: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            scenario_seed: 1,
            fail_agents: 0,
            stress: Stress::default(),
            lambda_sweep: vec![0.15, 1.5, 30.0],
            sweep_episodes: 150,
            dp_grid_points: 41,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct RunConfig {
    pub run: RunSection,
    pub microgrid: MicrogridConfig,
    pub outage: OutageParams,
    pub forecast: ForecastModel,
    pub train: TrainConfig,
    pub data: DataConfig,
    pub feeder: FeederConfig,
    pub eval: EvalConfig,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { seed: 1 }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let value: toml::Value = toml::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))?;
        let template = toml::Value::try_from(RunConfig::default()).expect("default config serializes");
        let mut errs = Vec::new();
        compare_keys("", &template, &value, &mut errs);
        if !errs.is_empty() {
            return Err(Error::Validation(errs));
        }
        let cfg: RunConfig = value.try_into().map_err(|e: toml::de::Error| Error::Validation(vec![e.message().to_string()]))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Semantic checks across sections, all reported together.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        self.microgrid.validate(&mut errs);
        self.outage.validate(&mut errs);
        self.forecast.validate(&mut errs);
        self.train.validate(self.microgrid.slots_per_day, &mut errs);
        let d = &self.data;
        match d.source.as_str() {
            "synthetic" if d.synth_days < 2 => errs.push("data.synth_days must be at least 2".into()),
            "csv" if d.csv_path.is_empty() => errs.push("data.csv_path is required when data.source = \"csv\"".into()),
            "synthetic" | "csv" => {}
            other => errs.push(format!("data.source must be \"synthetic\" or \"csv\", got \"{other}\"")),
        }
        if !(d.train_fraction > 0.0 && d.train_fraction < 1.0) {
            errs.push("data.train_fraction must lie in (0, 1)".into());
        }
        let f = &self.feeder;
        let n = |v: &Vec<usize>| v.len();
        for (what, have, need) in [
            ("ess", n(&f.devices.ess), self.microgrid.ess.len()),
            ("generators", n(&f.devices.generators), self.microgrid.generators.len()),
            ("pv", n(&f.devices.pv), self.microgrid.pv.len()),
            ("loads", n(&f.devices.loads), self.microgrid.loads.len()),
        ] {
            if have != need {
                errs.push(format!("feeder.devices.{what} lists {have} buses for {need} devices"));
            }
        }
        if !(f.limits.v_min > 0.0 && f.limits.v_min < f.limits.v_max) {
            errs.push("feeder.limits need 0 < v_min < v_max".into());
        }
        if let Err(e) = f.topology() {
            errs.push(format!("feeder: {e}"));
        }
        let e = &self.eval;
        if e.fail_agents > self.microgrid.ess.len() {
            errs.push(format!("eval.fail_agents ({}) exceeds the ESS count", e.fail_agents));
        }
        if !(e.stress.pv >= 0.0 && e.stress.load >= 0.0) {
            errs.push("eval.stress factors must be >= 0".into());
        }
        if e.lambda_sweep.iter().any(|l| !(*l >= 0.0)) {
            errs.push("eval.lambda_sweep values must be >= 0".into());
        }
        if e.dp_grid_points < 2 {
            errs.push("eval.dp_grid_points must be at least 2".into());
        }
        if errs.is_empty() { Ok(()) } else { Err(Error::Validation(errs)) }
    }
}

fn join(prefix: &str, key: &str) -> String {
    if prefix.is_empty() { key.to_string() } else { format!("{prefix}.{key}") }
}

/// Missing and unknown keys of `got` relative to `want`. Arrays of tables
/// are checked element-wise against the template's first element.
fn compare_keys(prefix: &str, want: &toml::Value, got: &toml::Value, errs: &mut Vec<String>) {
    match (want, got) {
        (toml::Value::Table(w), toml::Value::Table(g)) => {
            for (k, wv) in w {
                match g.get(k) {
                    Some(gv) => compare_keys(&join(prefix, k), wv, gv, errs),
                    None => errs.push(format!("missing key `{}`", join(prefix, k))),
                }
            }
            for k in g.keys().filter(|k| !w.contains_key(*k)) {
                errs.push(format!("unknown key `{}`", join(prefix, k)));
            }
        }
        (toml::Value::Array(w), toml::Value::Array(g)) => {
            if let Some(first @ toml::Value::Table(_)) = w.first() {
                for (i, gv) in g.iter().enumerate() {
                    compare_keys(&format!("{prefix}[{i}]"), first, gv, errs);
                }
            }
        }
        (toml::Value::Table(_), _) => errs.push(format!("`{prefix}` must be a table")),
        _ => {}
    }
}
