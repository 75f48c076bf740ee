//! Experiment configuration file.
//!
//! One JSON document groups every key that affects a run. Any key can be
//! overridden by dotted path (`channel.comm_snr_db=5`), which is how CLI
//! flags are applied on top of a file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::channel::{ChannelKind, SensingScenarioSpec};
use crate::dataset::{default_data_dir, load_cifar10, DatasetSplit};
use crate::error::{Error, Result};
use crate::models::{ChannelSetup, ModelConfig};
use crate::training::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub dir: PathBuf,
    /// Training images kept; `None` keeps all 50,000.
    pub subset_size: Option<usize>,
    /// Test images kept; `None` keeps all 10,000.
    pub test_size: Option<usize>,
    pub seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            dir: default_data_dir(),
            subset_size: Some(5000),
            test_size: Some(1000),
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub kind: ChannelKind,
    pub comm_snr_db: f64,
    pub sense_snr_db: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            kind: ChannelKind::Awgn,
            comm_snr_db: 3.0,
            sense_snr_db: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensingConfig {
    pub range_step_db: f64,
    pub absent_prior: f64,
}

impl Default for SensingConfig {
    fn default() -> Self {
        let s = SensingScenarioSpec::default();
        Self {
            range_step_db: s.range_step_db,
            absent_prior: s.absent_prior,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { seed: 1001 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    /// Coherent demodulation with the true fading gain on Rayleigh.
    pub csi: bool,
    pub calibration_trials: usize,
    pub detection_trials: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            csi: true,
            calibration_trials: 20_000,
            detection_trials: 100_000,
        }
    }
}

/// Everything a run depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub channel: ChannelConfig,
    pub sensing: SensingConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub baseline: BaselineConfig,
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Ingest {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Sets the key at a dotted path. The value is parsed as JSON when it
    /// parses, otherwise taken as a string.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<()> {
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        self.set_value(key, value)
    }

    pub fn set_value(&mut self, key: &str, value: Value) -> Result<()> {
        let mut root = serde_json::to_value(&*self)?;
        let mut node = &mut root;
        let parts: Vec<&str> = key.split('.').collect();
        for (i, part) in parts.iter().enumerate() {
            let obj = node
                .as_object_mut()
                .ok_or_else(|| Error::Config(format!("{key}: {} is not a section", parts[..i].join("."))))?;
            if !obj.contains_key(*part) {
                let known: Vec<&String> = obj.keys().collect();
                return Err(Error::Config(format!("unknown key {key} (known here: {known:?})")));
            }
            node = obj.get_mut(*part).expect("checked above");
        }
        *node = value;
        *self = serde_json::from_value(root).map_err(|e| Error::Config(format!("{key}: {e}")))?;
        Ok(())
    }

    /// Applies `key=value` overrides in order.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let o = o.as_ref();
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {o:?} is not key=value")))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn setup(&self) -> ChannelSetup {
        let mut setup = ChannelSetup::new(
            self.channel.kind,
            self.channel.comm_snr_db,
            self.channel.sense_snr_db,
            self.model.num_ranges,
        );
        setup.scenario.range_step_db = self.sensing.range_step_db;
        setup.scenario.absent_prior = self.sensing.absent_prior;
        setup
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.setup().validate()?;
        if self.model.semantic_classes != self.train.semantic_task.num_classes() {
            return Err(Error::Config(format!(
                "model.semantic_classes {} does not match train.semantic_task ({} classes)",
                self.model.semantic_classes,
                self.train.semantic_task.num_classes()
            )));
        }
        Ok(())
    }

    /// Digest of every outcome-affecting field. The data directory is left
    /// out: the files it holds are pinned by their checksum manifest.
    pub fn config_hash(&self) -> Result<String> {
        let mut v = serde_json::to_value(self)?;
        if let Some(data) = v.get_mut("data").and_then(Value::as_object_mut) {
            data.remove("dir");
        }
        // serde_json maps are ordered by key, so this text is canonical.
        let text = serde_json::to_string(&v)?;
        Ok(hex::encode(&Sha256::digest(text.as_bytes())[..12]))
    }

    /// Loads the configured training subset and test subsample.
    pub fn load_data(&self) -> Result<DatasetSplit> {
        let split = load_cifar10(&self.data.dir, self.data.subset_size, self.data.seed)?;
        Ok(match self.data.test_size {
            Some(n) => split.subsample_test(n, self.data.seed),
            None => split,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::training::TrainMode;

    #[test]
    fn defaults_match_the_studied_operating_point() {
        let c = ExperimentConfig::default();
        assert_eq!(c.train.weights.w_rec, 0.95);
        assert_eq!(c.train.weights.w_sen, 0.05);
        assert_eq!(c.train.mode, TrainMode::Jsc);
        assert_eq!(c.channel.comm_snr_db, 3.0);
        assert_eq!(c.channel.sense_snr_db, 3.0);
        assert_eq!(c.model.latent_size, 20);
        assert_eq!(c.model.num_ranges, 1);
        assert_eq!(c.channel.kind, ChannelKind::Awgn);
        c.validate().unwrap();
    }

    #[test]
    fn dotted_overrides() {
        let mut c = ExperimentConfig::default();
        c.apply_overrides(&["channel.comm_snr_db=-4.5", "channel.kind=rayleigh", "train.weights.w_sen=0.1"])
            .unwrap();
        assert_eq!(c.channel.comm_snr_db, -4.5);
        assert_eq!(c.channel.kind, ChannelKind::Rayleigh);
        assert_eq!(c.train.weights.w_sen, 0.1);
        assert!(c.set("channel.bogus", "1").is_err());
        assert!(c.set("channel.comm_snr_db", "\"loud\"").is_err());
        assert!(c.apply_overrides(&["no_equals"]).is_err());
    }

    #[test]
    fn hash_tracks_outcome_fields_only() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.data.dir = PathBuf::from("/elsewhere");
        assert_eq!(a.config_hash().unwrap(), b.config_hash().unwrap());
        b.channel.comm_snr_db = 4.0;
        assert_ne!(a.config_hash().unwrap(), b.config_hash().unwrap());
    }

    #[test]
    fn file_round_trip_and_unknown_keys() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        let mut c = ExperimentConfig::default();
        c.model.latent_size = 40;
        fs::write(&path, c.to_json_pretty().unwrap()).unwrap();
        assert_eq!(ExperimentConfig::from_file(&path).unwrap(), c);
        fs::write(&path, r#"{"channel": {"snr": 3}}"#).unwrap();
        assert!(matches!(ExperimentConfig::from_file(&path), Err(Error::Config(_))));
        fs::write(&path, r#"{"model": {"latent_size": 8}}"#).unwrap();
        let partial = ExperimentConfig::from_file(&path).unwrap();
        assert_eq!(partial.model.latent_size, 8);
        assert_eq!(partial.channel, ChannelConfig::default());
    }

    #[test]
    fn setup_carries_sensing_keys() {
        let mut c = ExperimentConfig::default();
        c.model.num_ranges = 4;
        c.sensing.range_step_db = 2.0;
        let s = c.setup();
        assert_eq!(s.scenario.num_ranges, 4);
        assert_eq!(s.scenario.range_step_db, 2.0);
    }
}
