//! The four networks of the joint system and the forward/backward pass that
//! ties them together through the channels.
//!
//! The encoder maps an image to `n` reals that are power-normalized and sent
//! as `n/2` complex symbols. Decoder 1 reconstructs the image and Decoder 3
//! classifies its semantics from the communication channel output; Decoder 2
//! classifies the sensing scenario from the echo. Decoders receive no
//! channel state.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use safetensors::tensor::TensorView;
use safetensors::{Dtype, SafeTensors};
use serde::{Deserialize, Serialize};

use crate::channel::{
    normalize_power_backward, normalize_power_in_place, ChannelKind, ChannelSpec, Realization,
    ScenarioLabel, SensingScenarioSpec,
};
use crate::dataset::{IMAGE_LEN, IMAGE_SIDE};
use crate::error::{Error, Result};
use crate::nn::{
    softmax, Conv2d, Dense, Dropout, MaxPool2, Mode, ParamMut, ParamRef, Relu, Reshape, Scalar,
    Sequential, Tensor, Upsample2,
};
use crate::rng::{stream, stream_rng};

pub const NETWORK_NAMES: [&str; 4] = ["encoder", "decoder1", "decoder2", "decoder3"];
const MANIFEST: &str = "manifest.json";
const MANIFEST_VERSION: u32 = 1;

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Encoder output size `n`; must be even.
    pub latent_size: usize,
    pub num_ranges: usize,
    pub semantic_classes: usize,
    pub dropout_rate: f64,
    /// Filters of the three encoder convolutions.
    pub encoder_filters: Vec<usize>,
    pub encoder_dense: usize,
    pub decoder1_dense: usize,
    /// Filters of the two convolutions after each upsampling stage.
    pub decoder1_filters: Vec<usize>,
    pub decoder2_hidden: Vec<usize>,
    pub decoder3_hidden: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            latent_size: 20,
            num_ranges: 1,
            semantic_classes: 2,
            dropout_rate: 0.1,
            encoder_filters: vec![32, 32, 64],
            encoder_dense: 256,
            decoder1_dense: 256,
            decoder1_filters: vec![32, 32],
            decoder2_hidden: vec![64, 32],
            decoder3_hidden: vec![128, 64],
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.latent_size == 0 || self.latent_size % 2 != 0 {
            return fail(format!("latent_size {} must be even and positive", self.latent_size));
        }
        if self.num_ranges == 0 {
            return fail("num_ranges must be at least 1".into());
        }
        if self.semantic_classes < 2 {
            return fail("semantic_classes must be at least 2".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return fail(format!("dropout_rate {} outside [0, 1)", self.dropout_rate));
        }
        if self.encoder_filters.len() != 3 {
            return fail("encoder_filters needs exactly 3 entries".into());
        }
        if self.decoder1_filters.len() != 2 {
            return fail("decoder1_filters needs exactly 2 entries".into());
        }
        let widths = self
            .encoder_filters
            .iter()
            .chain(&self.decoder1_filters)
            .chain(&self.decoder2_hidden)
            .chain(&self.decoder3_hidden)
            .chain([&self.encoder_dense, &self.decoder1_dense]);
        if widths.into_iter().any(|&w| w == 0) {
            return fail("layer widths must be positive".into());
        }
        Ok(())
    }

    /// Complex channel uses per image.
    pub fn channel_uses(&self) -> usize {
        self.latent_size / 2
    }

    pub fn sensing_classes(&self) -> usize {
        self.num_ranges + 1
    }
}

fn init_rng(seed: u64, network: usize) -> ChaCha8Rng {
    stream_rng(seed, &[stream::INIT, network as u64])
}

fn encoder_stack<T: Scalar>(config: &ModelConfig, seed: u64) -> Result<Sequential<T>> {
    config.validate()?;
    let rng = &mut init_rng(seed, 0);
    let f = &config.encoder_filters;
    let side = IMAGE_SIDE / 4;
    let mut net = Sequential::new(vec![IMAGE_SIDE, IMAGE_SIDE, 3]);
    net.push(Conv2d::new(3, f[0], 3, rng))?
        .push(Relu::default())?
        .push(Conv2d::new(f[0], f[1], 3, rng))?
        .push(Relu::default())?
        .push(MaxPool2::default())?
        .push(Dropout::new(config.dropout_rate))?
        .push(Conv2d::new(f[1], f[2], 3, rng))?
        .push(Relu::default())?
        .push(MaxPool2::default())?
        .push(Reshape::new(vec![side * side * f[2]]))?
        .push(Dense::new(side * side * f[2], config.encoder_dense, rng))?
        .push(Relu::default())?
        .push(Dense::new(config.encoder_dense, config.latent_size, rng))?;
    Ok(net)
}

/// Convolutional encoder with a linear output followed by per-sample power
/// normalization.
pub struct Encoder<T: Scalar> {
    net: Sequential<T>,
    pre_norm: Option<Tensor<T>>,
}

impl<T: Scalar> Encoder<T> {
    pub fn forward(&mut self, images: Tensor<T>, mode: Mode, rng: &mut ChaCha8Rng) -> Result<Tensor<T>> {
        let raw = self.net.forward(images, mode, rng)?;
        let mut out = raw.clone();
        let n = out.row_len();
        for row in out.data.chunks_mut(n) {
            normalize_power_in_place(row);
        }
        self.pre_norm = Some(raw);
        Ok(out)
    }

    /// Backpropagates a latent gradient into the encoder parameters.
    pub fn backward(&mut self, grad: &Tensor<T>) {
        let raw = self.pre_norm.as_ref().expect("forward before backward");
        let n = raw.row_len();
        let data = raw
            .data
            .chunks(n)
            .zip(grad.data.chunks(n))
            .flat_map(|(x, g)| normalize_power_backward(x, g))
            .collect();
        let g = Tensor {
            data,
            shape: grad.shape.clone(),
        };
        self.net.backward(g, false);
    }

    pub fn network(&self) -> &Sequential<T> {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Sequential<T> {
        &mut self.net
    }
}

pub fn build_encoder<T: Scalar>(config: &ModelConfig, seed: u64) -> Result<Encoder<T>> {
    Ok(Encoder {
        net: encoder_stack(config, seed)?,
        pre_norm: None,
    })
}

/// Dense expansion to an 8x8 grid, two nearest-neighbour upsampling stages
/// with convolutions, and a linear 3-channel output convolution.
pub fn build_decoder1<T: Scalar>(config: &ModelConfig, seed: u64) -> Result<Sequential<T>> {
    config.validate()?;
    let rng = &mut init_rng(seed, 1);
    let side = IMAGE_SIDE / 4;
    let base = config.encoder_filters[2];
    let f = &config.decoder1_filters;
    let mut net = Sequential::new(vec![config.latent_size]);
    net.push(Dense::new(config.latent_size, config.decoder1_dense, rng))?
        .push(Relu::default())?
        .push(Dense::new(config.decoder1_dense, side * side * base, rng))?
        .push(Relu::default())?
        .push(Reshape::new(vec![side, side, base]))?
        .push(Upsample2)?
        .push(Conv2d::new(base, f[0], 3, rng))?
        .push(Relu::default())?
        .push(Upsample2)?
        .push(Conv2d::new(f[0], f[1], 3, rng))?
        .push(Relu::default())?
        .push(Conv2d::new(f[1], 3, 3, rng))?;
    Ok(net)
}

fn classifier<T: Scalar>(
    n_in: usize,
    hidden: &[usize],
    classes: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Sequential<T>> {
    let mut net = Sequential::new(vec![n_in]);
    let mut width = n_in;
    for &h in hidden {
        net.push(Dense::new(width, h, rng))?.push(Relu::default())?;
        width = h;
    }
    net.push(Dense::new(width, classes, rng))?;
    Ok(net)
}

/// Sensing classifier over `R + 1` classes. Returns logits; the softmax is
/// applied by [`ModelBundle::forward`].
pub fn build_decoder2<T: Scalar>(config: &ModelConfig, seed: u64) -> Result<Sequential<T>> {
    config.validate()?;
    classifier(
        config.latent_size,
        &config.decoder2_hidden,
        config.sensing_classes(),
        &mut init_rng(seed, 2),
    )
}

/// Semantic classifier over `semantic_classes` classes (logits).
pub fn build_decoder3<T: Scalar>(config: &ModelConfig, seed: u64) -> Result<Sequential<T>> {
    config.validate()?;
    classifier(
        config.latent_size,
        &config.decoder3_hidden,
        config.semantic_classes,
        &mut init_rng(seed, 3),
    )
}

/// Channel conditions shared by a whole run. Both links use the same
/// channel family; `scenario.base_sense_snr_db` is the sensing SNR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelSetup {
    pub kind: ChannelKind,
    pub comm_snr_db: f64,
    pub scenario: SensingScenarioSpec,
}

impl ChannelSetup {
    pub fn new(kind: ChannelKind, comm_snr_db: f64, sense_snr_db: f64, num_ranges: usize) -> Self {
        Self {
            kind,
            comm_snr_db,
            scenario: SensingScenarioSpec {
                num_ranges,
                base_sense_snr_db: sense_snr_db,
                ..Default::default()
            },
        }
    }

    pub fn sense_snr_db(&self) -> f64 {
        self.scenario.base_sense_snr_db
    }

    pub fn comm_spec(&self) -> ChannelSpec {
        ChannelSpec::communication(self.kind, self.comm_snr_db)
    }

    pub fn validate(&self) -> Result<()> {
        self.comm_spec().validate()?;
        self.scenario.validate()
    }
}

/// Frozen channel draws for one batch: one communication realization and one
/// echo realization per sample, plus the sensing ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelDraws {
    pub comm: Vec<Realization>,
    pub sense: Vec<Realization>,
    pub scenario: Vec<ScenarioLabel>,
}

impl ChannelDraws {
    /// Draws independent communication and echo channels for each label.
    pub fn sample<R: Rng + ?Sized>(
        setup: &ChannelSetup,
        labels: Vec<ScenarioLabel>,
        n_c: usize,
        comm_rng: &mut R,
        sense_rng: &mut R,
    ) -> Result<Self> {
        let spec = setup.comm_spec();
        let comm = labels.iter().map(|_| spec.draw(n_c, comm_rng)).collect();
        let sense = labels
            .iter()
            .map(|&l| setup.scenario.draw(n_c, l, setup.kind, sense_rng))
            .collect::<Result<_>>()?;
        Ok(Self {
            comm,
            sense,
            scenario: labels,
        })
    }

    /// Copy with all noise removed (fading and range attenuation kept).
    pub fn noiseless(&self) -> Self {
        let quiet = |r: &Realization| Realization {
            noise_std: 0.0,
            ..r.clone()
        };
        Self {
            comm: self.comm.iter().map(quiet).collect(),
            sense: self.sense.iter().map(quiet).collect(),
            scenario: self.scenario.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.scenario.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenario.is_empty()
    }
}

/// Outputs of one joint forward pass.
#[derive(Debug, Clone)]
pub struct JointOutput<T> {
    /// Normalized encoder output, `(B, n)`.
    pub latent: Tensor<T>,
    /// Decoder 1 output, `(B, 32, 32, 3)`, unclipped.
    pub reconstruction: Tensor<T>,
    pub sensing_logits: Tensor<T>,
    pub semantic_logits: Tensor<T>,
    /// Row-wise softmax of the sensing logits.
    pub sensing_probs: Tensor<T>,
    pub semantic_probs: Tensor<T>,
}

/// Loss gradients with respect to the three heads. `None` means the head
/// does not contribute and is skipped in the backward pass.
pub struct HeadGrads<T> {
    pub reconstruction: Option<Tensor<T>>,
    pub sensing_logits: Option<Tensor<T>>,
    pub semantic_logits: Option<Tensor<T>>,
}

/// Provenance of trained parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainFingerprint {
    pub seed: u64,
    pub epochs: usize,
    pub train_samples: usize,
    pub subset_digest: String,
}

/// Encoder, Decoders 1-3 and the configuration that built them.
pub struct ModelBundle<T: Scalar> {
    pub config: ModelConfig,
    pub seed: u64,
    pub fingerprint: Option<TrainFingerprint>,
    pub encoder: Encoder<T>,
    pub decoder1: Sequential<T>,
    pub decoder2: Sequential<T>,
    pub decoder3: Sequential<T>,
    draws: Option<ChannelDraws>,
}

impl<T: Scalar> ModelBundle<T> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        Ok(Self {
            encoder: build_encoder(&config, seed)?,
            decoder1: build_decoder1(&config, seed)?,
            decoder2: build_decoder2(&config, seed)?,
            decoder3: build_decoder3(&config, seed)?,
            config,
            seed,
            fingerprint: None,
            draws: None,
        })
    }

    /// Checks that a channel setup is usable with this bundle.
    pub fn check_setup(&self, setup: &ChannelSetup) -> Result<()> {
        setup.validate()?;
        if setup.scenario.num_ranges != self.config.num_ranges {
            return Err(Error::Contract(format!(
                "model was built for {} range bins, channel setup has {}",
                self.config.num_ranges, setup.scenario.num_ranges
            )));
        }
        Ok(())
    }

    /// Runs the full system on a batch of images `(B, 32, 32, 3)`.
    ///
    /// The latent goes through `draws.comm` to Decoders 1 and 3 and through
    /// `draws.sense` to Decoder 2. The draws are kept for [`Self::backward`].
    pub fn forward(
        &mut self,
        images: Tensor<T>,
        draws: ChannelDraws,
        mode: Mode,
        rng: &mut ChaCha8Rng,
    ) -> Result<JointOutput<T>> {
        let b = images.batch();
        if images.shape[1..] != [IMAGE_SIDE, IMAGE_SIDE, 3] {
            return Err(Error::Contract(format!(
                "images must be (B, 32, 32, 3), got {:?}",
                images.shape
            )));
        }
        let n = self.config.latent_size;
        if draws.len() != b || draws.comm.len() != b || draws.sense.len() != b {
            return Err(Error::Contract(format!(
                "batch of {b} images but {} channel draws",
                draws.len()
            )));
        }
        if draws.comm.iter().chain(&draws.sense).any(|r| r.noise.len() * 2 != n) {
            return Err(Error::Contract(format!(
                "channel draws must span {} symbols",
                n / 2
            )));
        }
        for &l in &draws.scenario {
            if l.class_index() > self.config.num_ranges {
                return Err(Error::Contract(format!("scenario label {} out of range", l.0)));
            }
        }

        let latent = self.encoder.forward(images, mode, rng)?;
        let mut comm_rx = Tensor::zeros(vec![b, n]);
        let mut sense_rx = Tensor::zeros(vec![b, n]);
        for i in 0..b {
            draws.comm[i].apply_real(latent.row(i), comm_rx.row_mut(i));
            draws.sense[i].apply_real(latent.row(i), sense_rx.row_mut(i));
        }
        let reconstruction = self.decoder1.forward(comm_rx.clone(), mode, rng)?;
        let semantic_logits = self.decoder3.forward(comm_rx, mode, rng)?;
        let sensing_logits = self.decoder2.forward(sense_rx, mode, rng)?;
        self.draws = Some(draws);
        Ok(JointOutput {
            sensing_probs: softmax(&sensing_logits),
            semantic_probs: softmax(&semantic_logits),
            latent,
            reconstruction,
            sensing_logits,
            semantic_logits,
        })
    }

    /// Backpropagates head gradients from the last [`Self::forward`] into
    /// every parameter gradient (accumulating).
    pub fn backward(&mut self, grads: HeadGrads<T>) {
        let draws = self.draws.take().expect("forward before backward");
        let b = draws.len();
        let n = self.config.latent_size;
        let mut d_comm: Option<Tensor<T>> = None;
        let add = |acc: &mut Option<Tensor<T>>, g: Option<Tensor<T>>| {
            if let Some(g) = g {
                match acc {
                    Some(a) => a.data.iter_mut().zip(&g.data).for_each(|(x, y)| *x += *y),
                    None => *acc = Some(g),
                }
            }
        };
        if let Some(g) = grads.reconstruction {
            add(&mut d_comm, self.decoder1.backward(g, true));
        }
        if let Some(g) = grads.semantic_logits {
            add(&mut d_comm, self.decoder3.backward(g, true));
        }
        let d_sense = grads.sensing_logits.and_then(|g| self.decoder2.backward(g, true));

        let mut d_latent = Tensor::<T>::zeros(vec![b, n]);
        let mut any = false;
        if let Some(g) = &d_comm {
            for i in 0..b {
                draws.comm[i].backward_real(g.row(i), d_latent.row_mut(i));
            }
            any = true;
        }
        if let Some(g) = &d_sense {
            for i in 0..b {
                draws.sense[i].backward_real(g.row(i), d_latent.row_mut(i));
            }
            any = true;
        }
        if any {
            self.encoder.backward(&d_latent);
        }
    }

    fn networks(&self) -> [&Sequential<T>; 4] {
        [self.encoder.network(), &self.decoder1, &self.decoder2, &self.decoder3]
    }

    fn networks_mut(&mut self) -> [&mut Sequential<T>; 4] {
        [
            self.encoder.network_mut(),
            &mut self.decoder1,
            &mut self.decoder2,
            &mut self.decoder3,
        ]
    }

    /// Every parameter of the four networks, in a fixed order.
    pub fn params_mut(&mut self) -> Vec<ParamMut<'_, T>> {
        self.networks_mut()
            .into_iter()
            .zip(NETWORK_NAMES)
            .flat_map(|(net, name)| {
                net.params_mut().into_iter().map(move |mut p| {
                    p.name = format!("{name}/{}", p.name);
                    p
                })
            })
            .collect()
    }

    pub fn params(&self) -> Vec<ParamRef<'_, T>> {
        self.networks()
            .into_iter()
            .zip(NETWORK_NAMES)
            .flat_map(|(net, name)| {
                net.params().into_iter().map(move |mut p| {
                    p.name = format!("{name}/{}", p.name);
                    p
                })
            })
            .collect()
    }

    pub fn zero_grad(&mut self) {
        for net in self.networks_mut() {
            net.zero_grad();
        }
    }

    pub fn num_params(&self) -> usize {
        self.networks().iter().map(|n| n.num_params()).sum()
    }

    /// Copies all parameter values.
    pub fn snapshot(&self) -> Vec<Vec<T>> {
        self.params().iter().map(|p| p.value.to_vec()).collect()
    }

    pub fn restore(&mut self, snapshot: &[Vec<T>]) -> Result<()> {
        let params = self.params_mut();
        if params.len() != snapshot.len() {
            return Err(Error::Contract("snapshot has a different parameter count".into()));
        }
        for (p, v) in params.into_iter().zip(snapshot) {
            if p.value.len() != v.len() {
                return Err(Error::Contract(format!("snapshot size mismatch for {}", p.name)));
            }
            p.value.copy_from_slice(v);
        }
        Ok(())
    }

    /// Evaluation-mode forward pass on normalized images stored as `f32`.
    pub fn infer(
        &mut self,
        pixels: &[f32],
        draws: ChannelDraws,
    ) -> Result<JointOutput<T>> {
        let b = pixels.len() / IMAGE_LEN;
        let images = Tensor::new(
            pixels.iter().map(|&v| T::of(v as f64)).collect(),
            vec![b, IMAGE_SIDE, IMAGE_SIDE, 3],
        )?;
        let mut unused = stream_rng(0, &[]);
        self.forward(images, draws, Mode::Eval, &mut unused)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    version: u32,
    config: ModelConfig,
    seed: u64,
    fingerprint: Option<TrainFingerprint>,
    networks: BTreeMap<String, Vec<TensorEntry>>,
}

fn checkpoint_error(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

impl ModelBundle<f32> {
    /// Writes `manifest.json` plus one safetensors file per network.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut networks = BTreeMap::new();
        for (net, name) in self.networks().into_iter().zip(NETWORK_NAMES) {
            let params = net.params();
            let bytes: Vec<Vec<u8>> = params
                .iter()
                .map(|p| p.value.iter().flat_map(|v| v.to_le_bytes()).collect())
                .collect();
            let views = params
                .iter()
                .zip(&bytes)
                .map(|(p, b)| {
                    let view = TensorView::new(Dtype::F32, p.shape.clone(), b)
                        .map_err(|e| Error::Contract(format!("tensor {}: {e}", p.name)))?;
                    Ok((p.name.clone(), view))
                })
                .collect::<Result<Vec<_>>>()?;
            let path = dir.join(format!("{name}.safetensors"));
            safetensors::serialize_to_file(views, None, &path)
                .map_err(|e| checkpoint_error(&path, e.to_string()))?;
            networks.insert(
                name.to_string(),
                params
                    .iter()
                    .map(|p| TensorEntry {
                        name: p.name.clone(),
                        shape: p.shape.clone(),
                    })
                    .collect(),
            );
        }
        let manifest = Manifest {
            version: MANIFEST_VERSION,
            config: self.config.clone(),
            seed: self.seed,
            fingerprint: self.fingerprint.clone(),
            networks,
        };
        fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }

    /// Loads a checkpoint written by [`Self::save`], validating every tensor
    /// shape against the manifest and the rebuilt architecture.
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join(MANIFEST);
        let text = fs::read_to_string(&manifest_path).map_err(|e| Error::Ingest {
            path: manifest_path.clone(),
            reason: e.to_string(),
        })?;
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| checkpoint_error(&manifest_path, e.to_string()))?;
        if manifest.version != MANIFEST_VERSION {
            return Err(checkpoint_error(
                &manifest_path,
                format!("unsupported manifest version {}", manifest.version),
            ));
        }
        let mut bundle = Self::new(manifest.config, manifest.seed)?;
        bundle.fingerprint = manifest.fingerprint;
        for (net, name) in bundle.networks_mut().into_iter().zip(NETWORK_NAMES) {
            let path = dir.join(format!("{name}.safetensors"));
            let entries = manifest
                .networks
                .get(name)
                .ok_or_else(|| checkpoint_error(&manifest_path, format!("no entry for {name}")))?;
            let bytes = fs::read(&path).map_err(|e| Error::Ingest {
                path: path.clone(),
                reason: e.to_string(),
            })?;
            let file = SafeTensors::deserialize(&bytes).map_err(|e| checkpoint_error(&path, e.to_string()))?;
            let params = net.params_mut();
            if params.len() != entries.len() {
                return Err(checkpoint_error(
                    &path,
                    format!("{} tensors expected, manifest lists {}", params.len(), entries.len()),
                ));
            }
            for (p, entry) in params.into_iter().zip(entries) {
                if entry.name != p.name || entry.shape != p.shape {
                    return Err(checkpoint_error(
                        &path,
                        format!("manifest tensor {} {:?} does not match {} {:?}", entry.name, entry.shape, p.name, p.shape),
                    ));
                }
                let t = file
                    .tensor(&p.name)
                    .map_err(|e| checkpoint_error(&path, format!("{}: {e}", p.name)))?;
                if t.dtype() != Dtype::F32 || t.shape() != p.shape.as_slice() {
                    return Err(checkpoint_error(
                        &path,
                        format!("tensor {} has shape {:?}, expected {:?}", p.name, t.shape(), p.shape),
                    ));
                }
                for (v, chunk) in p.value.iter_mut().zip(t.data().chunks_exact(4)) {
                    *v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
                }
            }
        }
        Ok(bundle)
    }
}
