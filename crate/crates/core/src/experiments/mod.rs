//! Baseline comparisons, the film-voltage sweep, training and evaluation
//! drivers, and their file outputs.

pub mod plots;
pub mod scenarios;
pub mod trace;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::params::DfnParameters;
use crate::rl::TrainConfig;

pub use scenarios::*;
pub use trace::{
    check_trace, constant_power_trace, energy_accounting, read_trace_csv, trace_from_record, write_trace_csv,
    EnergyReport, TraceRecord, TRACE_HEADER,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    #[default]
    PtcOnly,
    PulseOnly,
    CombinedPolicy,
    Train,
    Sweep,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::PtcOnly => "ptc-only",
            ScenarioKind::PulseOnly => "pulse-only",
            ScenarioKind::CombinedPolicy => "combined-policy",
            ScenarioKind::Train => "train",
            ScenarioKind::Sweep => "sweep",
        }
    }
}

impl std::str::FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ptc-only" => Ok(ScenarioKind::PtcOnly),
            "pulse-only" => Ok(ScenarioKind::PulseOnly),
            "combined-policy" | "combined" => Ok(ScenarioKind::CombinedPolicy),
            "train" => Ok(ScenarioKind::Train),
            "sweep" => Ok(ScenarioKind::Sweep),
            other => Err(Error::Config(format!("unknown scenario '{other}'"))),
        }
    }
}

impl std::fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Top-level run configuration, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: ScenarioKind,
    /// Cell parameter file; the shipped set when absent.
    pub params: Option<PathBuf>,
    pub seed: u64,
    pub out: PathBuf,
    /// Trained policy for `combined-policy`, `evaluate` and `compare`.
    pub checkpoint: Option<PathBuf>,
    /// Continue training from this checkpoint.
    pub resume: Option<PathBuf>,
    /// Initial state of scenario runs, K and fraction.
    pub initial_temperature: f64,
    pub initial_soc: f64,
    /// Emit one trace row per substep instead of per hold.
    pub per_substep: bool,
    pub eval_episodes: usize,
    /// Seeds for multi-seed training.
    pub seeds: Vec<u64>,
    /// Film voltage limits for the sweep, V.
    pub v_max_list: Vec<f64>,
    pub env: EnvConfig,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioKind::PtcOnly,
            params: None,
            seed: 0,
            out: PathBuf::from("out"),
            checkpoint: None,
            resume: None,
            initial_temperature: 253.15,
            initial_soc: 0.5,
            per_substep: false,
            eval_episodes: 10,
            seeds: vec![0, 1, 2],
            v_max_list: vec![10.0, 8.0, 6.0, 4.0],
            env: EnvConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        Ok(toml::from_str(s)?)
    }

    /// Reads a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.params, &mut cfg.checkpoint, &mut cfg.resume].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.train.learner.validate()?;
        for p in [&self.params, &self.resume].into_iter().flatten() {
            if !p.exists() {
                return Err(Error::Config(format!("file not found: {}", p.display())));
            }
        }
        if !(self.initial_temperature > 0.0) || !(0.0..=1.0).contains(&self.initial_soc) {
            return Err(Error::Config("invalid initial state".into()));
        }
        match self.scenario {
            ScenarioKind::CombinedPolicy if self.checkpoint.is_none() => {
                return Err(Error::Config("combined-policy needs a checkpoint".into()))
            }
            ScenarioKind::Sweep if self.v_max_list.is_empty() => {
                return Err(Error::Config("sweep needs a nonempty v_max_list".into()))
            }
            _ => {}
        }
        if self.v_max_list.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Config("v_max_list entries must be > 0".into()));
        }
        Ok(())
    }

    pub fn load_params(&self) -> Result<Arc<DfnParameters>> {
        Ok(Arc::new(match &self.params {
            Some(p) => DfnParameters::from_file(p)?,
            None => DfnParameters::marquis2019(),
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_roundtrips_through_toml() {
        let c = RunConfig::default();
        let s = c.to_toml_string().unwrap();
        assert_eq!(RunConfig::from_toml_str(&s).unwrap(), c);
    }

    #[test]
    fn partial_config_fills_defaults_and_rejects_unknown_keys() {
        let c = RunConfig::from_toml_str("seed = 4\n[env.ptc]\nv_max = 6.0\n").unwrap();
        assert_eq!(c.seed, 4);
        assert_eq!(c.env.ptc.v_max, 6.0);
        assert_eq!(c.env.reward.w_tr, 2.0);
        assert!(RunConfig::from_toml_str("sed = 4\n").is_err());
        assert!(RunConfig::from_toml_str("[env.ptc]\nvmax = 1.0\n").is_err());
    }

    #[test]
    fn scenario_requirements() {
        let mut c = RunConfig {
            scenario: ScenarioKind::CombinedPolicy,
            ..RunConfig::default()
        };
        assert!(c.validate().is_err());
        c.scenario = ScenarioKind::Sweep;
        c.v_max_list.clear();
        assert!(c.validate().is_err());
        c.scenario = ScenarioKind::PtcOnly;
        c.validate().unwrap();
        c.params = Some(PathBuf::from("/nonexistent/params.toml"));
        assert!(c.validate().is_err());
    }

    #[test]
    fn relative_paths_resolve_against_config_dir() {
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("run.toml");
        std::fs::write(&p, "checkpoint = \"ck.json\"\n").unwrap();
        let c = RunConfig::load(&p).unwrap();
        assert_eq!(c.checkpoint.unwrap(), d.path().join("ck.json"));
    }
}
