//! One-parameter sweeps around the default operating point.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::results::{Method, ResultRecord};
use super::{blank_record, evaluate_model, failed, point_hash, train_meta, train_model};
use crate::dataset::DatasetSplit;
use crate::error::{Error, Result};
use crate::models::ModelBundle;
use crate::training::TrainMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    TaskWeightSen,
    CommSnrDb,
    SenseSnrDb,
    LatentSize,
    NumRanges,
    /// Communication and sensing SNR set to the same value.
    JointSnrDb,
}

impl SweepParam {
    pub const ALL: [SweepParam; 6] = [
        SweepParam::TaskWeightSen,
        SweepParam::CommSnrDb,
        SweepParam::SenseSnrDb,
        SweepParam::LatentSize,
        SweepParam::NumRanges,
        SweepParam::JointSnrDb,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SweepParam::TaskWeightSen => "task_weight_sen",
            SweepParam::CommSnrDb => "comm_snr_db",
            SweepParam::SenseSnrDb => "sense_snr_db",
            SweepParam::LatentSize => "latent_size",
            SweepParam::NumRanges => "num_ranges",
            SweepParam::JointSnrDb => "joint_snr_db",
        }
    }

    /// SNR parameters leave the architecture and training data unchanged.
    pub fn is_snr(self) -> bool {
        matches!(self, SweepParam::CommSnrDb | SweepParam::SenseSnrDb | SweepParam::JointSnrDb)
    }

    /// Writes `value` into `cfg`.
    ///
    /// The sensing weight takes its share from the reconstruction weight, so
    /// `w_rec = 1 - w_sen - w_sem`.
    pub fn apply(self, cfg: &mut ExperimentConfig, value: f64) -> Result<()> {
        let integer = |v: f64| -> Result<usize> {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::Config(format!("{} needs a non-negative integer, got {v}", self.as_str())))
            }
        };
        match self {
            SweepParam::TaskWeightSen => {
                let w_sem = cfg.train.weights.w_sem;
                let w_rec = 1.0 - value - w_sem;
                if !(0.0..=1.0).contains(&value) || w_rec < -1e-12 {
                    return Err(Error::Config(format!(
                        "w_sen {value} with w_sem {w_sem} leaves no valid reconstruction weight"
                    )));
                }
                cfg.train.weights.w_sen = value;
                cfg.train.weights.w_rec = w_rec.max(0.0);
                if cfg.train.mode != TrainMode::Jssc {
                    cfg.train.mode = TrainMode::Jsc;
                }
            }
            SweepParam::CommSnrDb => cfg.channel.comm_snr_db = value,
            SweepParam::SenseSnrDb => cfg.channel.sense_snr_db = value,
            SweepParam::JointSnrDb => {
                cfg.channel.comm_snr_db = value;
                cfg.channel.sense_snr_db = value;
            }
            SweepParam::LatentSize => cfg.model.latent_size = integer(value)?,
            SweepParam::NumRanges => cfg.model.num_ranges = integer(value)?,
        }
        Ok(())
    }
}

impl std::fmt::Display for SweepParam {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|p| p.as_str() == s).ok_or_else(|| {
            let names: Vec<&str> = Self::ALL.iter().map(|p| p.as_str()).collect();
            Error::Config(format!("unknown sweep parameter {s:?}; expected one of {}", names.join(", ")))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub parameter: SweepParam,
    pub values: Vec<f64>,
    pub base_config: ExperimentConfig,
    /// `None` picks the default: evaluate one model for SNR sweeps, train
    /// one model per point otherwise.
    pub retrain_per_point: Option<bool>,
}

impl SweepSpec {
    pub fn new(parameter: SweepParam, values: Vec<f64>, base_config: ExperimentConfig) -> Self {
        Self {
            parameter,
            values,
            base_config,
            retrain_per_point: None,
        }
    }

    pub fn retrain(&self) -> bool {
        self.retrain_per_point.unwrap_or(!self.parameter.is_snr())
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Config("sweep needs at least one value".into()));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("sweep values must be finite".into()));
        }
        if !self.retrain() && !self.parameter.is_snr() {
            return Err(Error::Config(format!(
                "{} changes the trained model; it cannot be swept without retraining",
                self.parameter
            )));
        }
        self.base_config.validate()
    }

    /// Configuration of each point.
    pub fn point_configs(&self) -> Vec<Result<ExperimentConfig>> {
        self.values
            .iter()
            .map(|&v| {
                let mut c = self.base_config.clone();
                self.parameter.apply(&mut c, v)?;
                c.validate()?;
                Ok(c)
            })
            .collect()
    }
}

fn results_method(cfg: &ExperimentConfig) -> Method {
    Method::from_weights(&cfg.train.weights)
}

/// Inclusive arithmetic range `from, from + step, ..., <= to`.
pub fn value_range(from: f64, to: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !from.is_finite() || !to.is_finite() || to < from {
        return Err(Error::Config(format!("bad range {from}..{to} step {step}")));
    }
    let n = ((to - from) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| from + i as f64 * step).collect())
}

/// Runs every point of `spec` on `data`; failing points become failed
/// records and the sweep goes on. `on_record` sees each record as it is
/// produced.
pub fn run_sweep(
    spec: &SweepSpec,
    data: &DatasetSplit,
    now: u64,
    mut on_record: impl FnMut(&ResultRecord),
) -> Result<Vec<ResultRecord>> {
    spec.validate()?;
    let base = &spec.base_config;
    let mut records = Vec::with_capacity(spec.values.len());
    let mut emit = |r: ResultRecord, records: &mut Vec<ResultRecord>| {
        on_record(&r);
        records.push(r);
    };

    if spec.retrain() {
        for point in spec.point_configs() {
            let rec = match point {
                Err(e) => failed(blank_record(base, results_method(base), base.config_hash()?, now), &e),
                Ok(cfg) => match train_model(&cfg, data, |_| {}) {
                    Ok(mut outcome) => {
                        let meta = train_meta(&outcome, data);
                        evaluate_model(&mut outcome.bundle, &cfg, &cfg, Some(meta), data, now)
                            .unwrap_or_else(|e| failed(blank_record(&cfg, results_method(&cfg), cfg.config_hash().unwrap_or_default(), now), &e))
                    }
                    Err(e) => failed(blank_record(&cfg, results_method(&cfg), cfg.config_hash()?, now), &e),
                },
            };
            emit(rec, &mut records);
        }
        return Ok(records);
    }

    let trained: Result<(ModelBundle<f32>, _)> = train_model(base, data, |_| {}).map(|o| {
        let meta = train_meta(&o, data);
        (o.bundle, meta)
    });
    let mut trained = trained;
    for point in spec.point_configs() {
        let rec = match (point, &mut trained) {
            (Err(e), _) => failed(blank_record(base, results_method(base), base.config_hash()?, now), &e),
            (Ok(cfg), Err(e)) => {
                let e = Error::Config(format!("base model training failed: {e}"));
                failed(blank_record(&cfg, results_method(base), point_hash(base, &cfg)?, now), &e)
            }
            (Ok(cfg), Ok((bundle, meta))) => evaluate_model(bundle, base, &cfg, Some(meta.clone()), data, now)
                .unwrap_or_else(|e| failed(blank_record(&cfg, results_method(base), point_hash(base, &cfg).unwrap_or_default(), now), &e)),
        };
        emit(rec, &mut records);
    }
    Ok(records)
}
