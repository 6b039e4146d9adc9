//! TOML experiment configuration. Keys mirror [`TrainConfig`],
//! [`DetectionConfig`] and [`FixedPointCodec`]; anything left out keeps its
//! default, and command-line flags override both.
//!
//! ```toml
//! seed = 3
//!
//! [train]
//! epochs = 500
//! lr = 3e-4
//! n_bits = 4
//!
//! [train.model]
//! d_enc = 64
//!
//! [detection]
//! z_threshold = 2.0
//!
//! [zk]
//! theta = 0.25
//! frac_bits = 16
//!
//! [runner]
//! command = ["python3", "-m", "fidelity_runner"]
//! timeout = 5.0
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::extraction::DetectionConfig;
use crate::trainer::TrainConfig;
use crate::zk::FixedPointCodec;
use crate::Error;

pub const SEED_ENV: &str = "ROSEMARK_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZkConfig {
    pub theta: f64,
    pub frac_bits: u32,
    pub input_bound: f64,
    pub activation_bound: f64,
}

impl Default for ZkConfig {
    fn default() -> Self {
        let c = FixedPointCodec::default();
        ZkConfig {
            theta: 0.25,
            frac_bits: c.frac_bits,
            input_bound: c.input_bound,
            activation_bound: c.activation_bound,
        }
    }
}

impl ZkConfig {
    pub fn codec(&self) -> FixedPointCodec {
        FixedPointCodec {
            frac_bits: self.frac_bits,
            input_bound: self.input_bound,
            activation_bound: self.activation_bound,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunnerConfig {
    /// Program and arguments of the fidelity runner.
    pub command: Vec<String>,
    /// Seconds per task.
    pub timeout: f64,
}

impl Default for RunnerConfig {
    fn default() -> Self {
        RunnerConfig {
            command: Vec::new(),
            timeout: 5.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Overrides `train.seed` and the evaluation seed when set.
    pub seed: Option<u64>,
    pub train: TrainConfig,
    pub detection: DetectionConfig,
    pub zk: ZkConfig,
    pub runner: RunnerConfig,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, Error> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Defaults when `path` is `None`.
    pub fn load(path: Option<&Path>) -> Result<Self, Error> {
        Config::load_over(Config::default(), path)
    }

    /// Keys present in the file replace those of `base`; the rest of `base`
    /// is kept.
    pub fn load_over(base: Config, path: Option<&Path>) -> Result<Self, Error> {
        let Some(p) = path else { return Ok(base) };
        let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
        base.merged(&text)
    }

    pub fn merged(&self, text: &str) -> Result<Self, Error> {
        let bad = |e: &dyn std::fmt::Display| Error::Config(e.to_string());
        let mut base = toml::Value::try_from(self).map_err(|e| bad(&e))?;
        let over: toml::Value = toml::from_str(text).map_err(|e| bad(&e))?;
        merge(&mut base, over);
        base.try_into().map_err(|e| bad(&e))
    }

    /// Seed after the file and the environment: ROSEMARK_SEED wins over
    /// the file, a flag (applied by the caller) wins over both.
    pub fn resolved_seed(&self, env: Option<&str>) -> Result<u64, Error> {
        match env {
            Some(v) => v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
            None => Ok(self.seed.unwrap_or(self.train.seed)),
        }
    }
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_tables_keep_defaults() {
        let c = Config::from_toml("[train]\nepochs = 7\n[train.model]\nd_enc = 32\n[zk]\ntheta = 0.5\n").unwrap();
        assert_eq!(c.train.epochs, 7);
        assert_eq!(c.train.model.d_enc, 32);
        assert_eq!(c.train.lr, TrainConfig::default().lr);
        assert_eq!(c.train.model.hidden, 32);
        assert_eq!(c.zk.theta, 0.5);
        assert_eq!(c.zk.codec(), FixedPointCodec::default());
        assert_eq!(c.detection, DetectionConfig::default());
    }

    #[test]
    fn file_overrides_a_preset_base() {
        let base = Config {
            train: TrainConfig::desk(),
            ..Config::default()
        };
        let c = base.merged("[train]\nlr = 0.01\n").unwrap();
        assert_eq!(c.train.lr, 0.01);
        assert_eq!(c.train.epochs, TrainConfig::desk().epochs);
        assert!(base.merged("[train]\nbogus = 1\n").is_err());
    }

    #[test]
    fn unknown_keys_are_errors() {
        assert!(Config::from_toml("epochz = 3").is_err());
        assert!(Config::from_toml("[train]\nepochz = 3").is_err());
        assert!(Config::from_toml("[train.model]\nd_encc = 3").is_err());
        assert!(Config::from_toml("[zk]\ntheta = \"x\"").is_err());
    }

    #[test]
    fn seed_precedence() {
        let c = Config::from_toml("seed = 5").unwrap();
        assert_eq!(c.resolved_seed(None).unwrap(), 5);
        assert_eq!(c.resolved_seed(Some("9")).unwrap(), 9);
        assert!(c.resolved_seed(Some("nine")).is_err());
        assert_eq!(Config::default().resolved_seed(None).unwrap(), 0);
    }
}
