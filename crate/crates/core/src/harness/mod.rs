//! Experiment orchestration: configuration, training and evaluation runs,
//! parameter sweeps, conventional baselines, result files and figures.

pub mod config;
pub mod plot;
pub mod results;
pub mod sweep;

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::baseline::{self, LinkOptions};
use crate::channel::ChannelSpec;
use crate::dataset::DatasetSplit;
use crate::error::{Error, Result};
use crate::models::ModelBundle;
use crate::rng::{stream, stream_rng};
use crate::training::{evaluate, train, EpochLog, TrainMode, TrainOutcome};

pub use config::ExperimentConfig;
pub use results::{load_results, merge, persist, Method, RecordMode, ResultRecord, TrainMeta};
pub use sweep::{run_sweep, SweepParam, SweepSpec};

/// Unix seconds, or `SOURCE_DATE_EPOCH` when set (for reproducible files).
pub fn now_unix() -> u64 {
    if let Some(v) = std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|s| s.parse().ok()) {
        return v;
    }
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Digest for a point evaluated under `eval` with a model trained under `trained`.
pub fn point_hash(trained: &ExperimentConfig, eval: &ExperimentConfig) -> Result<String> {
    let (a, b) = (trained.config_hash()?, eval.config_hash()?);
    if a == b {
        return Ok(b);
    }
    Ok(hex::encode(&Sha256::digest(format!("{a}:{b}").as_bytes())[..12]))
}

fn record_mode(cfg: &ExperimentConfig) -> RecordMode {
    match cfg.train.mode {
        TrainMode::Jssc => RecordMode::Jssc,
        _ => RecordMode::Jsc,
    }
}

/// A record with the configuration fields filled and no metrics.
pub fn blank_record(cfg: &ExperimentConfig, method: Method, hash: String, now: u64) -> ResultRecord {
    ResultRecord {
        schema_version: results::SCHEMA_VERSION,
        run_id: format!("{}-{}-s{}", method.as_str(), hash, cfg.train.seed),
        method,
        mode: record_mode(cfg),
        seed: cfg.train.seed,
        weights: (method != Method::Conventional).then_some(cfg.train.weights),
        comm_snr_db: cfg.channel.comm_snr_db,
        sense_snr_db: cfg.channel.sense_snr_db,
        latent_size: cfg.model.latent_size,
        num_ranges: cfg.model.num_ranges,
        channel_kind: cfg.channel.kind,
        psnr_db: None,
        ssim: None,
        sensing_accuracy: None,
        semantic_accuracy: None,
        train_meta: None,
        eval_samples: 0,
        aggregation: results::AGGREGATION.into(),
        fallback_rate: None,
        timestamp: now,
        config_hash: hash,
        failure: None,
    }
}

/// Marks `record` failed with `err`.
pub fn failed(mut record: ResultRecord, err: &Error) -> ResultRecord {
    record.failure = Some(err.to_string());
    record
}

/// Trains the configured system on `data`.
pub fn train_model(
    cfg: &ExperimentConfig,
    data: &DatasetSplit,
    on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    train(&cfg.train, &cfg.model, data, &cfg.setup(), on_epoch)
}

pub fn train_meta(outcome: &TrainOutcome, data: &DatasetSplit) -> TrainMeta {
    TrainMeta {
        epochs: outcome.log.len(),
        samples: outcome.bundle.fingerprint.as_ref().map_or(data.train.len(), |f| f.train_samples),
        best_epoch: outcome.best_epoch,
        subset_digest: data.subset_digest(),
    }
}

/// Scores a learned model under `eval_cfg`'s channel conditions.
pub fn evaluate_model(
    model: &mut ModelBundle<f32>,
    trained_cfg: &ExperimentConfig,
    eval_cfg: &ExperimentConfig,
    meta: Option<TrainMeta>,
    data: &DatasetSplit,
    now: u64,
) -> Result<ResultRecord> {
    let hash = point_hash(trained_cfg, eval_cfg)?;
    let mut rec = blank_record(eval_cfg, Method::from_weights(&trained_cfg.train.weights), hash, now);
    rec.weights = Some(trained_cfg.train.weights);
    rec.train_meta = meta;
    let ev = evaluate(
        model,
        &data.test,
        &eval_cfg.setup(),
        eval_cfg.eval.seed,
        trained_cfg.train.semantic_task,
    )?;
    rec.psnr_db = Some(ev.report.psnr_db);
    rec.ssim = Some(ev.report.ssim);
    rec.sensing_accuracy = Some(ev.report.sensing_accuracy);
    if trained_cfg.train.mode.has_semantic() {
        rec.semantic_accuracy = ev.report.semantic_accuracy;
    }
    rec.eval_samples = ev.samples;
    Ok(rec)
}

/// Experiment configuration stored next to a checkpoint.
pub const RUN_CONFIG: &str = "experiment.json";
/// Per-epoch training log stored next to a checkpoint.
pub const TRAIN_LOG: &str = "train_log.jsonl";

/// Writes a trained model, its experiment configuration and its epoch log
/// to `dir`.
pub fn save_run(dir: &Path, cfg: &ExperimentConfig, outcome: &TrainOutcome) -> Result<()> {
    outcome.bundle.save(dir)?;
    fs::write(dir.join(RUN_CONFIG), cfg.to_json_pretty()?)?;
    let mut log = String::new();
    for e in &outcome.log {
        log.push_str(&serde_json::to_string(e)?);
        log.push('\n');
    }
    fs::write(dir.join(TRAIN_LOG), log)?;
    Ok(())
}

/// Loads a directory written by [`save_run`].
pub fn load_run(dir: &Path) -> Result<(ModelBundle<f32>, ExperimentConfig, Option<TrainMeta>)> {
    let bundle = ModelBundle::load(dir)?;
    let cfg = ExperimentConfig::from_file(&dir.join(RUN_CONFIG))?;
    if bundle.config != cfg.model {
        return Err(Error::Contract(format!(
            "{}: checkpoint architecture does not match {RUN_CONFIG}",
            dir.display()
        )));
    }
    let meta = bundle.fingerprint.as_ref().map(|f| TrainMeta {
        epochs: f.epochs,
        samples: f.train_samples,
        best_epoch: 0,
        subset_digest: f.subset_digest.clone(),
    });
    let meta = match (meta, fs::read_to_string(dir.join(TRAIN_LOG))) {
        (Some(mut m), Ok(text)) => {
            let logs: Vec<EpochLog> = text.lines().filter(|l| !l.trim().is_empty()).map(serde_json::from_str).collect::<std::result::Result<_, _>>()?;
            m.epochs = logs.len();
            m.best_epoch = best_epoch(&logs);
            Some(m)
        }
        (m, _) => m,
    };
    Ok((bundle, cfg, meta))
}

fn best_epoch(logs: &[EpochLog]) -> usize {
    let key = |e: &EpochLog| e.val_loss.unwrap_or(e.loss_total);
    logs.iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bv), (i, e)| if key(e) < bv { (i + 1, key(e)) } else { (bi, bv) })
        .0
}

/// Conventional JPEG 2000 + RS + 16-QAM link at each communication SNR.
///
/// Images are compressed once; every SNR reuses the payloads and the same
/// per-image channel streams.
pub fn conventional_comm(cfg: &ExperimentConfig, snrs: &[f64], data: &DatasetSplit, now: u64) -> Result<Vec<ResultRecord>> {
    let payloads = baseline::compress_all(&data.test)?;
    let options = LinkOptions { csi: cfg.baseline.csi };
    let mut out = Vec::with_capacity(snrs.len());
    for &snr in snrs {
        let mut point = cfg.clone();
        point.channel.comm_snr_db = snr;
        let mut rec = blank_record(&point, Method::Conventional, point.config_hash()?, now);
        // Two reals per 16-QAM symbol.
        rec.latent_size = 2 * baseline::SYMBOLS_PER_FRAME;
        let spec = ChannelSpec::communication(point.channel.kind, snr);
        match baseline::evaluate_link(&data.test, &payloads, &spec, options, point.eval.seed) {
            Ok(ev) => {
                rec.psnr_db = Some(ev.psnr_db);
                rec.ssim = Some(ev.ssim);
                rec.fallback_rate = Some(ev.fallback_rate);
                rec.eval_samples = ev.images;
                out.push(rec);
            }
            Err(e) => out.push(failed(rec, &e)),
        }
    }
    Ok(out)
}

/// Energy detector at the configured sensing SNR with `n_c` echo symbols
/// (the learned system's channel uses unless overridden).
pub fn conventional_sense(cfg: &ExperimentConfig, n_c: Option<usize>, now: u64) -> Result<ResultRecord> {
    let n_c = n_c.unwrap_or(cfg.model.channel_uses());
    let mut point = cfg.clone();
    point.model.latent_size = 2 * n_c;
    let mut rec = blank_record(&point, Method::Conventional, point.config_hash()?, now);
    let setup = point.setup();
    let cal = baseline::calibrate_threshold(
        &setup.scenario,
        point.channel.kind,
        n_c,
        point.baseline.calibration_trials,
        &mut stream_rng(point.eval.seed, &[stream::CALIBRATE]),
    )?;
    let acc = baseline::detector_accuracy(
        &setup.scenario,
        point.channel.kind,
        &cal,
        point.baseline.detection_trials,
        &mut stream_rng(point.eval.seed, &[stream::EVAL, stream::SENSE]),
    )?;
    rec.sensing_accuracy = Some(acc);
    rec.eval_samples = point.baseline.detection_trials;
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_hash_is_plain_hash_when_configs_match() {
        let c = ExperimentConfig::default();
        assert_eq!(point_hash(&c, &c).unwrap(), c.config_hash().unwrap());
        let mut e = c.clone();
        e.channel.comm_snr_db = -2.0;
        let h = point_hash(&c, &e).unwrap();
        assert_ne!(h, c.config_hash().unwrap());
        assert_ne!(h, e.config_hash().unwrap());
    }

    #[test]
    fn conventional_records_have_no_weights() {
        let c = ExperimentConfig::default();
        let r = blank_record(&c, Method::Conventional, "h".into(), 5);
        assert!(r.weights.is_none());
        assert_eq!(r.run_id, "conventional-h-s1");
    }

    #[test]
    fn energy_detector_record() {
        let mut c = ExperimentConfig::default();
        c.baseline.calibration_trials = 2000;
        c.baseline.detection_trials = 4000;
        let a = conventional_sense(&c, None, 0).unwrap();
        let b = conventional_sense(&c, None, 0).unwrap();
        assert_eq!(a, b);
        let acc = a.sensing_accuracy.unwrap();
        assert!(acc > 0.5 && acc <= 1.0);
        assert!(a.psnr_db.is_none());
        assert_eq!(a.latent_size, 20);
    }
}
