//! Result records and their append-only JSONL store.

use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::ChannelKind;
use crate::error::{Error, Result};
use crate::training::TaskWeights;

pub const SCHEMA_VERSION: u32 = 1;

/// How PSNR and SSIM are aggregated over a test set.
pub const AGGREGATION: &str = "per_image_mean";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Mtl,
    CommOnly,
    SenseOnly,
    Conventional,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Mtl => "mtl",
            Method::CommOnly => "comm_only",
            Method::SenseOnly => "sense_only",
            Method::Conventional => "conventional",
        }
    }

    /// Method implied by a learned run's task weights.
    pub fn from_weights(w: &TaskWeights) -> Self {
        if w.w_sen == 0.0 && w.w_sem == 0.0 {
            Method::CommOnly
        } else if w.w_rec == 0.0 && w.w_sem == 0.0 {
            Method::SenseOnly
        } else {
            Method::Mtl
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordMode {
    Jsc,
    Jssc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainMeta {
    pub epochs: usize,
    pub samples: usize,
    pub best_epoch: usize,
    pub subset_digest: String,
}

/// One evaluated point.
///
/// Metrics a method does not produce are `null` (no sensing accuracy for
/// the conventional communication link, no PSNR for the energy detector).
/// Failed points carry the reason in `failure` and no metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultRecord {
    pub schema_version: u32,
    pub run_id: String,
    pub method: Method,
    pub mode: RecordMode,
    pub seed: u64,
    /// Loss weights of a learned run; `null` for conventional methods.
    pub weights: Option<TaskWeights>,
    pub comm_snr_db: f64,
    pub sense_snr_db: f64,
    pub latent_size: usize,
    pub num_ranges: usize,
    pub channel_kind: ChannelKind,
    pub psnr_db: Option<f64>,
    pub ssim: Option<f64>,
    pub sensing_accuracy: Option<f64>,
    pub semantic_accuracy: Option<f64>,
    pub train_meta: Option<TrainMeta>,
    pub eval_samples: usize,
    pub aggregation: String,
    /// Share of images scored against the decode-failure fallback.
    pub fallback_rate: Option<f64>,
    /// Unix seconds.
    pub timestamp: u64,
    pub config_hash: String,
    pub failure: Option<String>,
}

/// Numeric fields usable as plot axes.
pub const NUMERIC_FIELDS: [&str; 13] = [
    "seed",
    "w_rec",
    "w_sen",
    "w_sem",
    "comm_snr_db",
    "sense_snr_db",
    "latent_size",
    "num_ranges",
    "psnr_db",
    "ssim",
    "sensing_accuracy",
    "semantic_accuracy",
    "fallback_rate",
];

/// Categorical fields usable for grouping.
pub const CATEGORICAL_FIELDS: [&str; 5] = ["method", "mode", "channel_kind", "run_id", "config_hash"];

impl ResultRecord {
    pub fn is_failed(&self) -> bool {
        self.failure.is_some()
    }

    pub fn numeric(&self, field: &str) -> Result<Option<f64>> {
        Ok(match field {
            "seed" => Some(self.seed as f64),
            "w_rec" => self.weights.map(|w| w.w_rec),
            "w_sen" => self.weights.map(|w| w.w_sen),
            "w_sem" => self.weights.map(|w| w.w_sem),
            "comm_snr_db" => Some(self.comm_snr_db),
            "sense_snr_db" => Some(self.sense_snr_db),
            "latent_size" => Some(self.latent_size as f64),
            "num_ranges" => Some(self.num_ranges as f64),
            "psnr_db" => self.psnr_db,
            "ssim" => self.ssim,
            "sensing_accuracy" => self.sensing_accuracy,
            "semantic_accuracy" => self.semantic_accuracy,
            "fallback_rate" => self.fallback_rate,
            other => {
                return Err(Error::Plot(format!(
                    "{other:?} is not a numeric record field; available: {}",
                    NUMERIC_FIELDS.join(", ")
                )))
            }
        })
    }

    pub fn category(&self, field: &str) -> Result<String> {
        Ok(match field {
            "method" => self.method.as_str().to_string(),
            "mode" => match self.mode {
                RecordMode::Jsc => "jsc".into(),
                RecordMode::Jssc => "jssc".into(),
            },
            "channel_kind" => self.channel_kind.to_string(),
            "run_id" => self.run_id.clone(),
            "config_hash" => self.config_hash.clone(),
            other => match self.numeric(other) {
                Ok(Some(v)) => format!("{v}"),
                Ok(None) => "none".into(),
                Err(_) => {
                    return Err(Error::Plot(format!(
                        "{other:?} is not a record field; available: {}, {}",
                        CATEGORICAL_FIELDS.join(", "),
                        NUMERIC_FIELDS.join(", ")
                    )))
                }
            },
        })
    }

    /// Range checks on the metrics.
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(format!("unsupported schema version {}", self.schema_version));
        }
        let unit = |name: &str, v: Option<f64>, lo: f64| match v {
            Some(x) if !(lo..=1.0).contains(&x) => Err(format!("{name} {x} out of range")),
            _ => Ok(()),
        };
        unit("ssim", self.ssim, -1.0)?;
        unit("sensing_accuracy", self.sensing_accuracy, 0.0)?;
        unit("semantic_accuracy", self.semantic_accuracy, 0.0)?;
        unit("fallback_rate", self.fallback_rate, 0.0)?;
        if let Some(p) = self.psnr_db {
            if !p.is_finite() {
                return Err(format!("psnr_db {p} is not finite"));
            }
        }
        Ok(())
    }
}

/// Appends records, one JSON object per line.
pub fn persist(records: &[ResultRecord], path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let mut file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r)?;
        buf.push(b'\n');
    }
    file.write_all(&buf)?;
    Ok(())
}

/// Reads and validates every record; blank lines are skipped.
pub fn load_results(path: &Path) -> Result<Vec<ResultRecord>> {
    let file = fs::File::open(path).map_err(|e| Error::Ingest {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fail = |reason: String| Error::Results {
            path: path.to_path_buf(),
            line: i + 1,
            reason,
        };
        let value: serde_json::Value = serde_json::from_str(&line).map_err(|e| fail(e.to_string()))?;
        match value.get("schema_version").and_then(serde_json::Value::as_u64) {
            Some(v) if v == SCHEMA_VERSION as u64 => {}
            Some(v) => return Err(fail(format!("unsupported schema version {v}"))),
            None => return Err(fail("missing schema_version".into())),
        }
        let record: ResultRecord = serde_json::from_value(value).map_err(|e| fail(e.to_string()))?;
        record.validate().map_err(fail)?;
        out.push(record);
    }
    Ok(out)
}

/// Concatenates result files into `out`, dropping exact duplicates.
pub fn merge(inputs: &[&Path], out: &Path) -> Result<usize> {
    let mut merged: Vec<ResultRecord> = Vec::new();
    for p in inputs {
        for r in load_results(p)? {
            if !merged.contains(&r) {
                merged.push(r);
            }
        }
    }
    persist(&merged, out)?;
    Ok(merged.len())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn sample(i: usize) -> ResultRecord {
        ResultRecord {
            schema_version: SCHEMA_VERSION,
            run_id: format!("run-{i}"),
            method: Method::Mtl,
            mode: RecordMode::Jsc,
            seed: 1,
            weights: Some(TaskWeights::JSC),
            comm_snr_db: i as f64 - 3.0,
            sense_snr_db: 3.0,
            latent_size: 20,
            num_ranges: 1,
            channel_kind: if i % 2 == 0 { ChannelKind::Awgn } else { ChannelKind::Rayleigh },
            psnr_db: Some(10.0 + i as f64),
            ssim: Some(0.1),
            sensing_accuracy: Some(0.9),
            semantic_accuracy: None,
            train_meta: None,
            eval_samples: 100,
            aggregation: AGGREGATION.into(),
            fallback_rate: None,
            timestamp: 0,
            config_hash: "abc".into(),
            failure: None,
        }
    }

    #[test]
    fn persist_then_load_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.jsonl");
        let recs: Vec<_> = (0..4).map(sample).collect();
        persist(&recs, &path).unwrap();
        assert_eq!(load_results(&path).unwrap(), recs);
    }

    #[test]
    fn append_preserves_earlier_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.jsonl");
        persist(&[sample(0)], &path).unwrap();
        let before = fs::read(&path).unwrap();
        persist(&[sample(1)], &path).unwrap();
        let after = fs::read(&path).unwrap();
        assert_eq!(&after[..before.len()], &before[..]);
        assert_eq!(load_results(&path).unwrap().len(), 2);
    }

    #[test]
    fn malformed_line_names_its_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.jsonl");
        persist(&[sample(0)], &path).unwrap();
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        writeln!(f, "{{not json").unwrap();
        match load_results(&path) {
            Err(Error::Results { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_schema_version_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.jsonl");
        let mut r = sample(0);
        r.schema_version = 99;
        persist(&[r], &path).unwrap();
        assert!(matches!(load_results(&path), Err(Error::Results { line: 1, .. })));
    }

    #[test]
    fn out_of_range_metric_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.jsonl");
        let mut r = sample(0);
        r.sensing_accuracy = Some(1.5);
        persist(&[r], &path).unwrap();
        assert!(load_results(&path).is_err());
    }

    #[test]
    fn merge_deduplicates() {
        let dir = tempfile::tempdir().unwrap();
        let (a, b, out) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("m"));
        persist(&[sample(0), sample(1)], &a).unwrap();
        persist(&[sample(1), sample(2)], &b).unwrap();
        assert_eq!(merge(&[&a, &b], &out).unwrap(), 3);
        assert_eq!(load_results(&out).unwrap().len(), 3);
    }

    #[test]
    fn method_from_weight_extremes() {
        let w = |r, s, m| TaskWeights { w_rec: r, w_sen: s, w_sem: m };
        assert_eq!(Method::from_weights(&w(1.0, 0.0, 0.0)), Method::CommOnly);
        assert_eq!(Method::from_weights(&w(0.0, 1.0, 0.0)), Method::SenseOnly);
        assert_eq!(Method::from_weights(&TaskWeights::JSC), Method::Mtl);
    }

    #[test]
    fn field_lookup_errors_list_fields() {
        let r = sample(0);
        assert_eq!(r.numeric("comm_snr_db").unwrap(), Some(-3.0));
        let e = r.numeric("loudness").unwrap_err().to_string();
        assert!(e.contains("psnr_db"));
        assert_eq!(r.category("channel_kind").unwrap(), "awgn");
        assert!(r.category("nope").is_err());
    }
}
