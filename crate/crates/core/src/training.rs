//! Multi-task training and evaluation of a [`ModelBundle`].
//!
//! The loss is `w_rec * MSE + w_sen * CE(scenario) + w_sem * CE(semantic)`.
//! Every sample gets a fresh scenario label, communication channel and echo
//! channel at every step; all randomness derives from the run seed.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{ScenarioLabel, SensingScenarioSpec};
use crate::dataset::{batches, DatasetSplit, ImageBatch, ImageSample, SemanticTask, IMAGE_LEN, IMAGE_SIDE};
use crate::error::{Error, Result};
use crate::metrics::{accuracy, clip_unit, psnr, ssim, ImageRef, MetricReport};
use crate::models::{ChannelDraws, ChannelSetup, HeadGrads, JointOutput, ModelBundle, ModelConfig, TrainFingerprint};
use crate::nn::{Adam, AdamConfig, Mode, Scalar, Tensor};
use crate::rng::{stream, stream_rng};

/// Per-task loss weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskWeights {
    pub w_rec: f64,
    pub w_sen: f64,
    pub w_sem: f64,
}

impl TaskWeights {
    pub const JSC: TaskWeights = TaskWeights {
        w_rec: 0.95,
        w_sen: 0.05,
        w_sem: 0.0,
    };
    pub const JSSC: TaskWeights = TaskWeights {
        w_rec: 0.95,
        w_sen: 0.025,
        w_sem: 0.025,
    };

    pub fn validate(&self) -> Result<()> {
        let w = [self.w_rec, self.w_sen, self.w_sem];
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Config(format!("task weights must be finite and non-negative: {w:?}")));
        }
        if w.iter().all(|&v| v == 0.0) {
            return Err(Error::Config("at least one task weight must be positive".into()));
        }
        Ok(())
    }

    /// Weighted sum of per-task losses; zero-weight tasks are left out
    /// entirely so their value cannot leak into the total.
    pub fn combine(&self, rec: f64, sen: f64, sem: f64) -> f64 {
        [(self.w_rec, rec), (self.w_sen, sen), (self.w_sem, sem)]
            .iter()
            .filter(|(w, _)| *w != 0.0)
            .map(|(w, l)| w * l)
            .sum()
    }
}

/// Which tasks a run trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// Reconstruction plus sensing.
    #[default]
    Jsc,
    /// Reconstruction, sensing and semantic classification.
    Jssc,
    /// Reconstruction only.
    CommOnly,
    /// Sensing only.
    SenseOnly,
}

impl TrainMode {
    pub fn default_weights(self) -> TaskWeights {
        match self {
            TrainMode::Jsc => TaskWeights::JSC,
            TrainMode::Jssc => TaskWeights::JSSC,
            TrainMode::CommOnly => TaskWeights {
                w_rec: 1.0,
                w_sen: 0.0,
                w_sem: 0.0,
            },
            TrainMode::SenseOnly => TaskWeights {
                w_rec: 0.0,
                w_sen: 1.0,
                w_sem: 0.0,
            },
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TrainMode::Jsc => "jsc",
            TrainMode::Jssc => "jssc",
            TrainMode::CommOnly => "comm_only",
            TrainMode::SenseOnly => "sense_only",
        }
    }

    /// Whether the semantic head is part of this mode.
    pub fn has_semantic(self) -> bool {
        self == TrainMode::Jssc
    }
}

impl std::fmt::Display for TrainMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsc" => Ok(TrainMode::Jsc),
            "jssc" => Ok(TrainMode::Jssc),
            "comm_only" => Ok(TrainMode::CommOnly),
            "sense_only" => Ok(TrainMode::SenseOnly),
            other => Err(Error::Config(format!(
                "unknown mode {other:?} (expected jsc, jssc, comm_only or sense_only)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub weights: TaskWeights,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub validation_fraction: f64,
    pub semantic_task: SemanticTask,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: TrainMode::Jsc,
            weights: TaskWeights::JSC,
            epochs: 10,
            batch_size: 64,
            learning_rate: 1e-3,
            seed: 1,
            validation_fraction: 0.1,
            semantic_task: SemanticTask::Animal,
        }
    }
}

impl TrainConfig {
    /// Defaults for `mode`, including its task weights.
    pub fn for_mode(mode: TrainMode) -> Self {
        Self {
            mode,
            weights: mode.default_weights(),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        let w = self.weights;
        let bad = match self.mode {
            TrainMode::Jsc => w.w_sem != 0.0,
            TrainMode::Jssc => false,
            TrainMode::CommOnly => w.w_sen != 0.0 || w.w_sem != 0.0,
            TrainMode::SenseOnly => w.w_rec != 0.0 || w.w_sem != 0.0,
        };
        if bad {
            return Err(Error::Config(format!("weights {w:?} are not allowed in mode {}", self.mode)));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Config(format!(
                "validation_fraction {} outside [0, 1)",
                self.validation_fraction
            )));
        }
        Ok(())
    }
}

/// Draws one scenario per sample: absent with probability `absent_prior`,
/// otherwise a uniformly chosen range bin.
pub fn sample_scenario<R: Rng + ?Sized>(
    spec: &SensingScenarioSpec,
    batch_size: usize,
    rng: &mut R,
) -> Vec<ScenarioLabel> {
    (0..batch_size)
        .map(|_| {
            if rng.gen::<f64>() < spec.absent_prior {
                ScenarioLabel::ABSENT
            } else {
                ScenarioLabel::range(rng.gen_range(0..spec.num_ranges))
            }
        })
        .collect()
}

/// Ground truth for one batch.
#[derive(Debug, Clone, Copy)]
pub struct LossTargets<'a> {
    /// Normalized pixels, `(B, 32, 32, 3)` flattened.
    pub pixels: &'a [f32],
    pub scenario: &'a [usize],
    pub semantic: &'a [usize],
}

/// Combined loss and its unweighted components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub rec: f64,
    pub sen: f64,
    pub sem: f64,
}

fn mean_cross_entropy<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> Result<f64> {
    let k = logits.row_len();
    if logits.batch() != labels.len() {
        return Err(Error::Contract(format!(
            "{} logit rows but {} labels",
            logits.batch(),
            labels.len()
        )));
    }
    let mut total = 0.0;
    for (row, &y) in logits.data.chunks(k).zip(labels) {
        if y >= k {
            return Err(Error::Contract(format!("label {y} outside {k} classes")));
        }
        let row: Vec<f64> = row.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect();
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        total += lse - row[y];
    }
    Ok(total / labels.len().max(1) as f64)
}

fn check_targets<T: Scalar>(reconstruction: &Tensor<T>, targets: &LossTargets<'_>) -> Result<()> {
    if reconstruction.data.len() != targets.pixels.len() {
        return Err(Error::Contract(format!(
            "reconstruction has {} values, target has {}",
            reconstruction.data.len(),
            targets.pixels.len()
        )));
    }
    Ok(())
}

/// `w_rec * MSE(pixels) + w_sen * CE(scenario) + w_sem * CE(semantic)`.
///
/// MSE averages over every pixel and channel; the cross-entropies average
/// over the batch and are computed from logits.
pub fn combined_loss<T: Scalar>(
    reconstruction: &Tensor<T>,
    sensing_logits: &Tensor<T>,
    semantic_logits: &Tensor<T>,
    targets: &LossTargets<'_>,
    weights: &TaskWeights,
) -> Result<LossBreakdown> {
    weights.validate()?;
    check_targets(reconstruction, targets)?;
    let rec = reconstruction
        .data
        .iter()
        .zip(targets.pixels)
        .map(|(r, &t)| (r.to_f64().unwrap_or(f64::NAN) - t as f64).powi(2))
        .sum::<f64>()
        / targets.pixels.len().max(1) as f64;
    let sen = mean_cross_entropy(sensing_logits, targets.scenario)?;
    let sem = mean_cross_entropy(semantic_logits, targets.semantic)?;
    Ok(LossBreakdown {
        total: weights.combine(rec, sen, sem),
        rec,
        sen,
        sem,
    })
}

fn ce_gradient<T: Scalar>(probs: &Tensor<T>, labels: &[usize], weight: f64) -> Tensor<T> {
    let k = probs.row_len();
    let scale = T::of(weight / labels.len().max(1) as f64);
    let mut g = probs.clone();
    for (row, &y) in g.data.chunks_mut(k).zip(labels) {
        row[y] -= T::one();
        row.iter_mut().for_each(|v| *v *= scale);
    }
    g
}

/// Gradients of [`combined_loss`] with respect to the reconstruction and
/// the two logit tensors. Heads with zero weight get `None`.
pub fn loss_gradients<T: Scalar>(
    out: &JointOutput<T>,
    targets: &LossTargets<'_>,
    weights: &TaskWeights,
) -> Result<HeadGrads<T>> {
    check_targets(&out.reconstruction, targets)?;
    let reconstruction = (weights.w_rec != 0.0).then(|| {
        let scale = 2.0 * weights.w_rec / targets.pixels.len() as f64;
        Tensor {
            data: out
                .reconstruction
                .data
                .iter()
                .zip(targets.pixels)
                .map(|(&r, &t)| T::of(scale) * (r - T::of(t as f64)))
                .collect(),
            shape: out.reconstruction.shape.clone(),
        }
    });
    Ok(HeadGrads {
        reconstruction,
        sensing_logits: (weights.w_sen != 0.0)
            .then(|| ce_gradient(&out.sensing_probs, targets.scenario, weights.w_sen)),
        semantic_logits: (weights.w_sem != 0.0)
            .then(|| ce_gradient(&out.semantic_probs, targets.semantic, weights.w_sem)),
    })
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss_total: f64,
    pub loss_rec: f64,
    pub loss_sen: f64,
    pub loss_sem: f64,
    pub val_loss: Option<f64>,
    pub val_psnr: Option<f64>,
    pub val_ssim: Option<f64>,
    pub val_sens_acc: Option<f64>,
    pub val_sem_acc: Option<f64>,
}

pub struct TrainOutcome {
    pub bundle: ModelBundle<f32>,
    pub log: Vec<EpochLog>,
    /// Epoch (1-based) whose parameters were kept.
    pub best_epoch: usize,
}

fn semantic_labels(batch: &ImageBatch, task: SemanticTask) -> Vec<usize> {
    match task {
        SemanticTask::Animal => batch.semantic_ids.iter().map(|&v| v as usize).collect(),
        SemanticTask::Class10 => batch.class_ids.iter().map(|&v| v as usize).collect(),
    }
}

fn image_tensor(batch: &ImageBatch) -> Tensor<f32> {
    Tensor {
        data: batch.pixels.clone(),
        shape: vec![batch.len(), IMAGE_SIDE, IMAGE_SIDE, 3],
    }
}

/// Splits the training part into (fit, validation) with a seeded shuffle.
pub fn validation_split(
    train: &[ImageSample],
    fraction: f64,
    seed: u64,
) -> (Vec<ImageSample>, Vec<ImageSample>) {
    let n_val = (train.len() as f64 * fraction).round() as usize;
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut stream_rng(seed, &[stream::VALIDATION]));
    let (val, fit) = order.split_at(n_val.min(train.len()));
    let pick = |idx: &[usize]| {
        let mut idx = idx.to_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| train[i].clone()).collect()
    };
    (pick(fit), pick(val))
}

fn check_compatible(config: &TrainConfig, model: &ModelConfig, setup: &ChannelSetup) -> Result<()> {
    config.validate()?;
    model.validate()?;
    setup.validate()?;
    if setup.scenario.num_ranges != model.num_ranges {
        return Err(Error::Contract(format!(
            "model has {} range bins, channel setup has {}",
            model.num_ranges, setup.scenario.num_ranges
        )));
    }
    if model.semantic_classes != config.semantic_task.num_classes() {
        return Err(Error::Contract(format!(
            "semantic head has {} classes, task {:?} needs {}",
            model.semantic_classes,
            config.semantic_task,
            config.semantic_task.num_classes()
        )));
    }
    Ok(())
}

/// Trains all four networks jointly with Adam.
///
/// A fraction of the training part is held out for validation; the
/// parameters with the lowest validation loss are kept. `on_epoch` sees
/// each log line as it is produced.
pub fn train(
    config: &TrainConfig,
    model: &ModelConfig,
    data: &DatasetSplit,
    setup: &ChannelSetup,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    check_compatible(config, model, setup)?;
    let (fit, val) = validation_split(&data.train, config.validation_fraction, config.seed);
    if fit.is_empty() {
        return Err(Error::Config("no training samples after the validation split".into()));
    }
    let mut bundle = ModelBundle::<f32>::new(model.clone(), config.seed)?;
    let mut adam = Adam::<f32>::new(AdamConfig {
        learning_rate: config.learning_rate,
        ..Default::default()
    });
    let n_c = model.channel_uses();
    let w = config.weights;
    let mut log = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, Vec<Vec<f32>>)> = None;

    for epoch in 0..config.epochs {
        let (mut sum_total, mut sum_rec, mut sum_sen, mut sum_sem) = (0.0, 0.0, 0.0, 0.0);
        let mut seen = 0usize;
        for (k, batch) in batches(&fit, config.batch_size, true, config.seed, epoch as u64)?.enumerate() {
            let tags = [epoch as u64, k as u64];
            let labels = sample_scenario(
                &setup.scenario,
                batch.len(),
                &mut stream_rng(config.seed, &[stream::SCENARIO, tags[0], tags[1]]),
            );
            let scenario: Vec<usize> = labels.iter().map(|l| l.class_index()).collect();
            let draws = ChannelDraws::sample(
                setup,
                labels,
                n_c,
                &mut stream_rng(config.seed, &[stream::COMM, tags[0], tags[1]]),
                &mut stream_rng(config.seed, &[stream::SENSE, tags[0], tags[1]]),
            )?;
            let semantic = semantic_labels(&batch, config.semantic_task);
            let mut dropout_rng = stream_rng(config.seed, &[stream::DROPOUT, tags[0], tags[1]]);
            let out = bundle.forward(image_tensor(&batch), draws, Mode::Train, &mut dropout_rng)?;
            let targets = LossTargets {
                pixels: &batch.pixels,
                scenario: &scenario,
                semantic: &semantic,
            };
            let loss = combined_loss(
                &out.reconstruction,
                &out.sensing_logits,
                &out.semantic_logits,
                &targets,
                &w,
            )?;
            if !loss.total.is_finite() {
                return Err(Error::Divergence {
                    epoch: epoch + 1,
                    learning_rate: config.learning_rate,
                    detail: format!("loss {loss:?} at batch {k}"),
                });
            }
            let grads = loss_gradients(&out, &targets, &w)?;
            bundle.zero_grad();
            bundle.backward(grads);
            adam.step(bundle.params_mut());

            let b = batch.len() as f64;
            sum_total += loss.total * b;
            sum_rec += loss.rec * b;
            sum_sen += loss.sen * b;
            sum_sem += loss.sem * b;
            seen += batch.len();
        }
        let n = seen as f64;
        let mut entry = EpochLog {
            epoch: epoch + 1,
            loss_total: sum_total / n,
            loss_rec: sum_rec / n,
            loss_sen: sum_sen / n,
            loss_sem: sum_sem / n,
            val_loss: None,
            val_psnr: None,
            val_ssim: None,
            val_sens_acc: None,
            val_sem_acc: None,
        };
        let score = if val.is_empty() {
            entry.loss_total
        } else {
            let eval_seed = crate::rng::derive_seed(config.seed, &[stream::VALIDATION]);
            let e = evaluate(&mut bundle, &val, setup, eval_seed, config.semantic_task)?;
            let v = w.combine(e.loss_rec, e.loss_sen, e.loss_sem);
            entry.val_loss = Some(v);
            entry.val_psnr = Some(e.report.psnr_db);
            entry.val_ssim = Some(e.report.ssim);
            entry.val_sens_acc = Some(e.report.sensing_accuracy);
            entry.val_sem_acc = e.report.semantic_accuracy;
            v
        };
        if !score.is_finite() {
            return Err(Error::Divergence {
                epoch: epoch + 1,
                learning_rate: config.learning_rate,
                detail: "validation loss is not finite".into(),
            });
        }
        log::info!(
            "epoch {} loss {:.5} (rec {:.5}, sen {:.4}, sem {:.4}) val {:?}",
            entry.epoch,
            entry.loss_total,
            entry.loss_rec,
            entry.loss_sen,
            entry.loss_sem,
            entry.val_loss
        );
        on_epoch(&entry);
        log.push(entry);
        if best.as_ref().is_none_or(|(s, _, _)| score < *s) {
            best = Some((score, epoch + 1, bundle.snapshot()));
        }
    }
    let (_, best_epoch, params) = best.expect("at least one epoch");
    bundle.restore(&params)?;
    bundle.fingerprint = Some(TrainFingerprint {
        seed: config.seed,
        epochs: config.epochs,
        train_samples: fit.len(),
        subset_digest: data.subset_digest(),
    });
    Ok(TrainOutcome {
        bundle,
        log,
        best_epoch,
    })
}

/// Anything that maps images plus channel draws to the three head outputs.
pub trait JointModel {
    fn model_config(&self) -> &ModelConfig;

    fn infer(&mut self, pixels: &[f32], draws: ChannelDraws) -> Result<JointOutput<f32>>;
}

impl JointModel for ModelBundle<f32> {
    fn model_config(&self) -> &ModelConfig {
        &self.config
    }

    fn infer(&mut self, pixels: &[f32], draws: ChannelDraws) -> Result<JointOutput<f32>> {
        ModelBundle::infer(self, pixels, draws)
    }
}

/// Test-set metrics plus mean per-task losses.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: MetricReport,
    pub loss_rec: f64,
    pub loss_sen: f64,
    pub loss_sem: f64,
    pub samples: usize,
    /// Per-image PSNR in test order.
    pub psnr_per_image: Vec<f64>,
}

pub const EVAL_BATCH: usize = 100;

/// Scores `model` on `test` with fresh channel draws derived from `seed`.
///
/// Draws depend only on `seed` and the batch position, so evaluating the
/// same model at several SNRs reuses the same underlying noise and fading
/// samples. PSNR and SSIM are per-image means on clipped reconstructions.
pub fn evaluate(
    model: &mut impl JointModel,
    test: &[ImageSample],
    setup: &ChannelSetup,
    seed: u64,
    task: SemanticTask,
) -> Result<Evaluation> {
    let config = model.model_config().clone();
    setup.validate()?;
    if setup.scenario.num_ranges != config.num_ranges {
        return Err(Error::Contract(format!(
            "model has {} range bins, channel setup has {}",
            config.num_ranges, setup.scenario.num_ranges
        )));
    }
    if config.semantic_classes != task.num_classes() {
        return Err(Error::Contract(format!(
            "semantic head has {} classes, task needs {}",
            config.semantic_classes,
            task.num_classes()
        )));
    }
    if test.is_empty() {
        return Err(Error::Config("evaluation set is empty".into()));
    }
    let n_c = config.channel_uses();
    let mut psnrs = Vec::with_capacity(test.len());
    let (mut ssim_sum, mut sens_hits, mut sem_hits) = (0.0, 0.0, 0.0);
    let (mut rec_sum, mut sen_sum, mut sem_sum) = (0.0, 0.0, 0.0);
    for (k, batch) in batches(test, EVAL_BATCH, false, seed, 0)?.enumerate() {
        let k = k as u64;
        let labels = sample_scenario(
            &setup.scenario,
            batch.len(),
            &mut stream_rng(seed, &[stream::EVAL, stream::SCENARIO, k]),
        );
        let scenario: Vec<usize> = labels.iter().map(|l| l.class_index()).collect();
        let draws = ChannelDraws::sample(
            setup,
            labels,
            n_c,
            &mut stream_rng(seed, &[stream::EVAL, stream::COMM, k]),
            &mut stream_rng(seed, &[stream::EVAL, stream::SENSE, k]),
        )?;
        let semantic = semantic_labels(&batch, task);
        let out = model.infer(&batch.pixels, draws)?;
        let b = batch.len() as f64;
        let loss = combined_loss(
            &out.reconstruction,
            &out.sensing_logits,
            &out.semantic_logits,
            &LossTargets {
                pixels: &batch.pixels,
                scenario: &scenario,
                semantic: &semantic,
            },
            &TaskWeights {
                w_rec: 1.0,
                w_sen: 1.0,
                w_sem: 1.0,
            },
        )?;
        rec_sum += loss.rec * b;
        sen_sum += loss.sen * b;
        sem_sum += loss.sem * b;
        for i in 0..batch.len() {
            let reference = ImageRef::cifar(batch.image(i))?;
            let clipped = clip_unit(&out.reconstruction.data[i * IMAGE_LEN..(i + 1) * IMAGE_LEN]);
            let prediction = ImageRef::cifar(&clipped)?;
            psnrs.push(psnr(&reference, &prediction)?);
            ssim_sum += ssim(&reference, &prediction)?;
        }
        sens_hits += accuracy(&out.sensing_probs.data, config.sensing_classes(), &scenario)? * b;
        sem_hits += accuracy(&out.semantic_probs.data, config.semantic_classes, &semantic)? * b;
    }
    let n = test.len() as f64;
    let report = MetricReport {
        psnr_db: psnrs.iter().sum::<f64>() / n,
        ssim: ssim_sum / n,
        sensing_accuracy: sens_hits / n,
        semantic_accuracy: Some(sem_hits / n),
    };
    report.validate()?;
    Ok(Evaluation {
        report,
        loss_rec: rec_sum / n,
        loss_sen: sen_sum / n,
        loss_sem: sem_sum / n,
        samples: test.len(),
        psnr_per_image: psnrs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ChannelKind;
    use crate::dataset::{load_cifar10_with, testutil::write_fake_dataset, LoadOptions};
    use crate::nn::softmax;

    fn tiny_model() -> ModelConfig {
        ModelConfig {
            latent_size: 8,
            encoder_filters: vec![4, 4, 4],
            encoder_dense: 16,
            decoder1_dense: 16,
            decoder1_filters: vec![4, 4],
            decoder2_hidden: vec![8],
            decoder3_hidden: vec![8],
            ..Default::default()
        }
    }

    fn fake_split(per_file: usize, seed: u64) -> (tempfile::TempDir, DatasetSplit) {
        let dir = tempfile::tempdir().unwrap();
        write_fake_dataset(dir.path(), per_file, seed);
        let options = LoadOptions {
            records_per_file: Some(per_file),
        };
        let split = load_cifar10_with(dir.path(), None, seed, options).unwrap();
        (dir, split)
    }

    fn tensor(data: Vec<f64>, shape: Vec<usize>) -> Tensor<f64> {
        Tensor::new(data, shape).unwrap()
    }

    #[test]
    fn scenario_prior_matches() {
        let spec = SensingScenarioSpec::default();
        let labels = sample_scenario(&spec, 100_000, &mut stream_rng(3, &[]));
        let absent = labels.iter().filter(|l| !l.is_present()).count() as f64 / 1e5;
        assert!((absent - 0.5).abs() < 0.01, "{absent}");
        assert!(labels.iter().all(|l| l.class_index() <= 1));

        let four = SensingScenarioSpec {
            num_ranges: 4,
            ..Default::default()
        };
        let labels = sample_scenario(&four, 100_000, &mut stream_rng(4, &[]));
        for r in 0..4 {
            let f = labels.iter().filter(|l| l.range_bin() == Some(r)).count() as f64 / 1e5;
            assert!((f - 0.125).abs() < 0.01, "range {r}: {f}");
        }
    }

    #[test]
    fn loss_examples() {
        let rec = tensor(vec![0.5; 4], vec![1, 2, 2, 1]);
        let target = [0.5f32; 4];
        let logits = tensor(vec![0.0, 0.0], vec![1, 2]);
        let t = LossTargets {
            pixels: &target,
            scenario: &[0],
            semantic: &[1],
        };
        let only_rec = TaskWeights {
            w_rec: 1.0,
            w_sen: 0.0,
            w_sem: 0.0,
        };
        assert_eq!(combined_loss(&rec, &logits, &logits, &t, &only_rec).unwrap().total, 0.0);
        assert_eq!(TaskWeights::JSC.combine(0.02, 0.1, 7.0), 0.95 * 0.02 + 0.05 * 0.1);
        assert!((TaskWeights::JSC.combine(0.02, 0.1, 7.0) - 0.024).abs() < 1e-12);
        TaskWeights::JSSC.validate().unwrap();
        let negative = TaskWeights {
            w_rec: 1.0,
            w_sen: -0.1,
            w_sem: 0.0,
        };
        assert!(matches!(
            combined_loss(&rec, &logits, &logits, &t, &negative),
            Err(Error::Config(_))
        ));
    }

    fn random_heads(seed: u64) -> (Tensor<f64>, Tensor<f64>, Tensor<f64>, Vec<f32>) {
        let mut rng = stream_rng(seed, &[]);
        let mut r = |n: usize| (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect::<Vec<f64>>();
        let rec = tensor(r(2 * 12), vec![2, 2, 2, 3]);
        let sen = tensor(r(6), vec![2, 3]);
        let sem = tensor(r(4), vec![2, 2]);
        let target = r(24).into_iter().map(|v| (v as f32 + 2.0) / 4.0).collect();
        (rec, sen, sem, target)
    }

    #[test]
    fn loss_is_linear_in_weights() {
        let (rec, sen, sem, target) = random_heads(1);
        let t = LossTargets {
            pixels: &target,
            scenario: &[2, 0],
            semantic: &[1, 1],
        };
        // Components computed independently of the implementation.
        let mse: f64 = rec
            .data
            .iter()
            .zip(&target)
            .map(|(a, &b)| (a - b as f64).powi(2))
            .sum::<f64>()
            / 24.0;
        let ce = |l: &Tensor<f64>, y: &[usize]| {
            let p = softmax(l);
            let k = l.row_len();
            y.iter().enumerate().map(|(i, &c)| -p.data[i * k + c].ln()).sum::<f64>() / y.len() as f64
        };
        let (l_sen, l_sem) = (ce(&sen, &[2, 0]), ce(&sem, &[1, 1]));
        for w in [[0.3, 0.5, 0.2], [1.0, 0.0, 0.0], [0.0, 0.7, 2.0]] {
            let weights = TaskWeights {
                w_rec: w[0],
                w_sen: w[1],
                w_sem: w[2],
            };
            let l = combined_loss(&rec, &sen, &sem, &t, &weights).unwrap();
            let expected = w[0] * mse + w[1] * l_sen + w[2] * l_sem;
            assert!((l.total - expected).abs() < 1e-9);
            assert!((l.rec - mse).abs() < 1e-9 && (l.sen - l_sen).abs() < 1e-9 && (l.sem - l_sem).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_weight_heads_are_isolated() {
        let (rec, sen, sem, target) = random_heads(2);
        let t = LossTargets {
            pixels: &target,
            scenario: &[1, 0],
            semantic: &[0, 1],
        };
        let w = TaskWeights {
            w_rec: 0.8,
            w_sen: 0.2,
            w_sem: 0.0,
        };
        let base = combined_loss(&rec, &sen, &sem, &t, &w).unwrap().total;
        let mut sem2 = sem.clone();
        sem2.data.iter_mut().for_each(|v| *v = *v * 50.0 - 3.0);
        let moved = combined_loss(&rec, &sen, &sem2, &t, &w).unwrap().total;
        assert!((base - moved).abs() <= 1e-12);
    }

    #[test]
    fn gradients_match_loss_by_finite_differences() {
        let (rec, sen, sem, target) = random_heads(3);
        let scenario = [2usize, 1];
        let semantic = [0usize, 1];
        let t = LossTargets {
            pixels: &target,
            scenario: &scenario,
            semantic: &semantic,
        };
        let w = TaskWeights {
            w_rec: 0.7,
            w_sen: 0.2,
            w_sem: 0.1,
        };
        let out = JointOutput {
            latent: tensor(vec![0.0; 2], vec![2, 1]),
            sensing_probs: softmax(&sen),
            semantic_probs: softmax(&sem),
            reconstruction: rec.clone(),
            sensing_logits: sen.clone(),
            semantic_logits: sem.clone(),
        };
        let g = loss_gradients(&out, &t, &w).unwrap();
        let h = 1e-6;
        let f = |r: &Tensor<f64>, s: &Tensor<f64>, m: &Tensor<f64>| combined_loss(r, s, m, &t, &w).unwrap().total;
        for (j, analytic) in g.reconstruction.unwrap().data.iter().enumerate() {
            let (mut p, mut m) = (rec.clone(), rec.clone());
            p.data[j] += h;
            m.data[j] -= h;
            let fd = (f(&p, &sen, &sem) - f(&m, &sen, &sem)) / (2.0 * h);
            assert!((fd - analytic).abs() < 1e-7);
        }
        for (j, analytic) in g.sensing_logits.unwrap().data.iter().enumerate() {
            let (mut p, mut m) = (sen.clone(), sen.clone());
            p.data[j] += h;
            m.data[j] -= h;
            let fd = (f(&rec, &p, &sem) - f(&rec, &m, &sem)) / (2.0 * h);
            assert!((fd - analytic).abs() < 1e-7);
        }
        for (j, analytic) in g.semantic_logits.unwrap().data.iter().enumerate() {
            let (mut p, mut m) = (sem.clone(), sem.clone());
            p.data[j] += h;
            m.data[j] -= h;
            let fd = (f(&rec, &sen, &p) - f(&rec, &sen, &m)) / (2.0 * h);
            assert!((fd - analytic).abs() < 1e-7);
        }
    }

    #[test]
    fn mode_weight_rules() {
        let mut c = TrainConfig::for_mode(TrainMode::CommOnly);
        c.validate().unwrap();
        c.weights.w_sen = 0.1;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::for_mode(TrainMode::Jsc);
        c.weights.w_sem = 0.1;
        assert!(c.validate().is_err());
        TrainConfig::for_mode(TrainMode::Jssc).validate().unwrap();
        TrainConfig::for_mode(TrainMode::SenseOnly).validate().unwrap();
        assert_eq!("sense_only".parse::<TrainMode>().unwrap(), TrainMode::SenseOnly);
    }

    #[test]
    fn comm_only_never_touches_decoder2() {
        let (_dir, split) = fake_split(8, 1);
        let setup = ChannelSetup::new(ChannelKind::Awgn, 3.0, 3.0, 1);
        let mut config = TrainConfig::for_mode(TrainMode::CommOnly);
        config.epochs = 1;
        config.batch_size = 16;
        let initial = ModelBundle::<f32>::new(tiny_model(), config.seed).unwrap();
        let trained = train(&config, &tiny_model(), &split, &setup, |_| {}).unwrap().bundle;
        let d2 = |b: &ModelBundle<f32>| b.decoder2.params().iter().map(|p| p.value.to_vec()).collect::<Vec<_>>();
        let d1 = |b: &ModelBundle<f32>| b.decoder1.params().iter().map(|p| p.value.to_vec()).collect::<Vec<_>>();
        assert_eq!(d2(&initial), d2(&trained));
        assert_ne!(d1(&initial), d1(&trained));
    }

    #[test]
    fn training_is_deterministic_and_logged() {
        let (_dir, split) = fake_split(10, 2);
        let setup = ChannelSetup::new(ChannelKind::Rayleigh, 3.0, 3.0, 1);
        let mut config = TrainConfig::for_mode(TrainMode::Jssc);
        config.epochs = 2;
        config.batch_size = 8;
        let run = || {
            let mut lines = Vec::new();
            let outcome = train(&config, &tiny_model(), &split, &setup, |e| lines.push(e.clone())).unwrap();
            (outcome.bundle.snapshot(), outcome.log, lines)
        };
        let (p1, log1, lines1) = run();
        let (p2, log2, _) = run();
        assert_eq!(p1, p2);
        assert_eq!(log1, log2);
        assert_eq!(log1, lines1);
        assert_eq!(log1.len(), 2);
        assert!(log1.iter().all(|e| e.val_psnr.is_some() && e.val_sem_acc.is_some()));
    }

    #[test]
    fn divergence_names_epoch_and_rate() {
        let (_dir, split) = fake_split(4, 3);
        let setup = ChannelSetup::new(ChannelKind::Awgn, 3.0, 3.0, 1);
        let mut config = TrainConfig::for_mode(TrainMode::Jsc);
        config.epochs = 3;
        config.batch_size = 4;
        config.learning_rate = 1e30;
        match train(&config, &tiny_model(), &split, &setup, |_| {}) {
            Err(Error::Divergence { epoch, learning_rate, .. }) => {
                assert!(epoch >= 1);
                assert_eq!(learning_rate, 1e30);
            }
            other => panic!("expected divergence, got {:?}", other.map(|o| o.log)),
        }
    }

    #[test]
    fn constant_sensing_classifier_scores_chance() {
        let (_dir, split) = fake_split(200, 4);
        let setup = ChannelSetup::new(ChannelKind::Awgn, 3.0, 3.0, 1);
        let e = evaluate(&mut Copycat(tiny_model()), &split.train, &setup, 5, SemanticTask::Animal).unwrap();
        assert!((e.report.sensing_accuracy - 0.5).abs() < 0.03, "{:?}", e.report);
    }

    /// Returns the input image as the reconstruction and constant logits.
    struct Copycat(ModelConfig);

    impl JointModel for Copycat {
        fn model_config(&self) -> &ModelConfig {
            &self.0
        }

        fn infer(&mut self, pixels: &[f32], draws: ChannelDraws) -> Result<JointOutput<f32>> {
            let b = draws.len();
            let logits = Tensor::zeros(vec![b, 2]);
            Ok(JointOutput {
                latent: Tensor::zeros(vec![b, self.0.latent_size]),
                reconstruction: Tensor::new(pixels.to_vec(), vec![b, 32, 32, 3])?,
                sensing_probs: softmax(&logits),
                semantic_probs: softmax(&logits),
                sensing_logits: logits.clone(),
                semantic_logits: logits,
            })
        }
    }

    #[test]
    fn perfect_copy_scores_identity() {
        let (_dir, split) = fake_split(3, 5);
        let setup = ChannelSetup::new(ChannelKind::Awgn, 3.0, 3.0, 1);
        let e = evaluate(&mut Copycat(tiny_model()), &split.test, &setup, 1, SemanticTask::Animal).unwrap();
        assert_eq!(e.report.psnr_db, crate::metrics::PSNR_CAP_DB);
        assert!((e.report.ssim - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mismatched_setup_is_rejected() {
        let (_dir, split) = fake_split(3, 6);
        let setup = ChannelSetup::new(ChannelKind::Awgn, 3.0, 3.0, 2);
        let mut bundle = ModelBundle::<f32>::new(tiny_model(), 1).unwrap();
        assert!(matches!(
            evaluate(&mut bundle, &split.test, &setup, 1, SemanticTask::Animal),
            Err(Error::Contract(_))
        ));
    }
}
