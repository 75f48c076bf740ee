//! CIFAR-10 ingestion in its binary-record distribution.
//!
//! Each batch file holds 10,000 records of 3,073 bytes: one label byte
//! followed by 1,024 red, 1,024 green and 1,024 blue pixel bytes, each plane
//! row-major. Samples are kept as raw bytes and normalized to `[0, 1]` on
//! access; tensors handed to the networks are laid out `(32, 32, 3)`.
//!
//! The data directory must carry a `SHA256SUMS` manifest (written by
//! [`fetch::prepare`]) and every batch file is verified against it on load.

pub mod fetch;

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::{stream, stream_rng};

pub const IMAGE_SIDE: usize = 32;
pub const IMAGE_CHANNELS: usize = 3;
pub const IMAGE_LEN: usize = IMAGE_SIDE * IMAGE_SIDE * IMAGE_CHANNELS;
pub const RECORD_LEN: usize = IMAGE_LEN + 1;
pub const RECORDS_PER_BATCH: usize = 10_000;
pub const NUM_CLASSES: usize = 10;

pub const TRAIN_FILES: [&str; 5] = [
    "data_batch_1.bin",
    "data_batch_2.bin",
    "data_batch_3.bin",
    "data_batch_4.bin",
    "data_batch_5.bin",
];
pub const TEST_FILE: &str = "test_batch.bin";
pub const CHECKSUM_FILE: &str = "SHA256SUMS";

pub const CLASS_NAMES: [&str; NUM_CLASSES] = [
    "airplane",
    "automobile",
    "bird",
    "cat",
    "deer",
    "dog",
    "frog",
    "horse",
    "ship",
    "truck",
];

const ANIMALS: [&str; 6] = ["bird", "cat", "deer", "dog", "frog", "horse"];

/// Returns 1 if the class is one of the six animal classes, 0 otherwise.
pub fn semantic_label(class_id: u8) -> Result<u8> {
    let name = CLASS_NAMES
        .get(class_id as usize)
        .ok_or_else(|| Error::Domain(format!("class id {class_id} outside 0..=9")))?;
    Ok(u8::from(ANIMALS.contains(name)))
}

/// Label set Decoder 3 is trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SemanticTask {
    /// Animal vs. non-animal.
    #[default]
    Animal,
    /// The ten CIFAR-10 classes.
    Class10,
}

impl SemanticTask {
    pub fn num_classes(self) -> usize {
        match self {
            SemanticTask::Animal => 2,
            SemanticTask::Class10 => NUM_CLASSES,
        }
    }

    pub fn label(self, sample: &ImageSample) -> u8 {
        match self {
            SemanticTask::Animal => sample.semantic_id,
            SemanticTask::Class10 => sample.class_id,
        }
    }
}

/// One CIFAR-10 image with its labels.
#[derive(Clone, PartialEq, Eq)]
pub struct ImageSample {
    raw: Box<[u8; IMAGE_LEN]>,
    pub class_id: u8,
    pub semantic_id: u8,
}

impl std::fmt::Debug for ImageSample {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ImageSample")
            .field("class_id", &self.class_id)
            .field("semantic_id", &self.semantic_id)
            .finish_non_exhaustive()
    }
}

impl ImageSample {
    /// Builds a sample from interleaved `(32, 32, 3)` bytes.
    pub fn from_hwc_bytes(bytes: &[u8], class_id: u8) -> Result<Self> {
        if bytes.len() != IMAGE_LEN {
            return Err(Error::Shape(format!(
                "expected {IMAGE_LEN} pixel bytes, got {}",
                bytes.len()
            )));
        }
        let semantic_id = semantic_label(class_id)?;
        let mut raw = Box::new([0u8; IMAGE_LEN]);
        raw.copy_from_slice(bytes);
        Ok(Self {
            raw,
            class_id,
            semantic_id,
        })
    }

    /// Parses one binary record (label byte followed by R, G, B planes).
    pub fn from_record(record: &[u8]) -> Result<Self> {
        if record.len() != RECORD_LEN {
            return Err(Error::Shape(format!(
                "record must be {RECORD_LEN} bytes, got {}",
                record.len()
            )));
        }
        let class_id = record[0];
        let planes = &record[1..];
        let plane = IMAGE_SIDE * IMAGE_SIDE;
        let mut hwc = [0u8; IMAGE_LEN];
        for p in 0..plane {
            for c in 0..IMAGE_CHANNELS {
                hwc[p * IMAGE_CHANNELS + c] = planes[c * plane + p];
            }
        }
        Self::from_hwc_bytes(&hwc, class_id)
    }

    /// Inverse of [`ImageSample::from_record`].
    pub fn to_record(&self) -> Vec<u8> {
        let plane = IMAGE_SIDE * IMAGE_SIDE;
        let mut out = vec![0u8; RECORD_LEN];
        out[0] = self.class_id;
        for p in 0..plane {
            for c in 0..IMAGE_CHANNELS {
                out[1 + c * plane + p] = self.raw[p * IMAGE_CHANNELS + c];
            }
        }
        out
    }

    /// Raw interleaved bytes.
    pub fn bytes(&self) -> &[u8] {
        &self.raw[..]
    }

    /// Normalized pixels in `(32, 32, 3)` order.
    pub fn pixels(&self) -> Vec<f32> {
        self.raw.iter().map(|&b| normalize(b)).collect()
    }

    pub fn class_name(&self) -> &'static str {
        CLASS_NAMES[self.class_id as usize]
    }
}

#[inline]
pub fn normalize(byte: u8) -> f32 {
    byte as f32 / 255.0
}

/// Train and test parts, with the source indices each sample came from.
#[derive(Debug, Clone, Default)]
pub struct DatasetSplit {
    pub train: Vec<ImageSample>,
    pub test: Vec<ImageSample>,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

impl DatasetSplit {
    /// Keeps a seeded uniform subsample of the test part.
    pub fn subsample_test(mut self, size: usize, seed: u64) -> Self {
        let (samples, indices) = subsample(
            std::mem::take(&mut self.test),
            &self.test_indices,
            size,
            seed,
            1,
        );
        self.test = samples;
        self.test_indices = indices;
        self
    }

    /// Stable digest of the selected sample indices, used in fingerprints.
    pub fn subset_digest(&self) -> String {
        let mut h = Sha256::new();
        for i in &self.train_indices {
            h.update((*i as u64).to_le_bytes());
        }
        h.update(b"|");
        for i in &self.test_indices {
            h.update((*i as u64).to_le_bytes());
        }
        hex::encode(&h.finalize()[..8])
    }
}

fn subsample(
    samples: Vec<ImageSample>,
    indices: &[usize],
    size: usize,
    seed: u64,
    part: u64,
) -> (Vec<ImageSample>, Vec<usize>) {
    if size >= samples.len() {
        return (samples, indices.to_vec());
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut stream_rng(seed, &[stream::SUBSET, part]));
    let mut keep = order[..size].to_vec();
    keep.sort_unstable();
    let mut slots: Vec<Option<ImageSample>> = samples.into_iter().map(Some).collect();
    let picked = keep.iter().map(|&i| slots[i].take().unwrap()).collect();
    (picked, keep.iter().map(|&i| indices[i]).collect())
}

fn read_checksums(dir: &Path) -> Result<Vec<(String, String)>> {
    let path = dir.join(CHECKSUM_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::Ingest {
        path: path.clone(),
        reason: format!("cannot read checksum manifest: {e}"),
    })?;
    let mut out = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let mut parts = line.split_whitespace();
        match (parts.next(), parts.next()) {
            (Some(digest), Some(name)) => out.push((name.to_string(), digest.to_lowercase())),
            _ => {
                return Err(Error::Format {
                    path,
                    reason: format!("malformed manifest line {line:?}"),
                })
            }
        }
    }
    Ok(out)
}

/// Reads one batch file after verifying its digest against the manifest.
fn read_batch(path: &Path, expected_digest: &str) -> Result<Vec<ImageSample>> {
    let bytes = fs::read(path).map_err(|e| Error::Ingest {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let digest = hex::encode(Sha256::digest(&bytes));
    if digest != expected_digest {
        return Err(Error::Ingest {
            path: path.to_path_buf(),
            reason: format!("checksum mismatch (expected {expected_digest}, got {digest})"),
        });
    }
    if bytes.len() % RECORD_LEN != 0 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!("length {} is not a multiple of {RECORD_LEN}", bytes.len()),
        });
    }
    bytes
        .chunks_exact(RECORD_LEN)
        .map(|rec| {
            ImageSample::from_record(rec).map_err(|e| Error::Format {
                path: path.to_path_buf(),
                reason: e.to_string(),
            })
        })
        .collect()
}

/// Expected record count per file; `None` accepts any whole number of records.
#[derive(Debug, Clone, Copy)]
pub struct LoadOptions {
    pub records_per_file: Option<usize>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            records_per_file: Some(RECORDS_PER_BATCH),
        }
    }
}

/// Loads the six batch files from `dir`, optionally keeping a seeded
/// uniform subsample of `subset_size` training images.
pub fn load_cifar10(dir: &Path, subset_size: Option<usize>, seed: u64) -> Result<DatasetSplit> {
    load_cifar10_with(dir, subset_size, seed, LoadOptions::default())
}

pub fn load_cifar10_with(
    dir: &Path,
    subset_size: Option<usize>,
    seed: u64,
    options: LoadOptions,
) -> Result<DatasetSplit> {
    let manifest = read_checksums(dir)?;
    let load = |name: &str| -> Result<Vec<ImageSample>> {
        let path = dir.join(name);
        if !path.exists() {
            return Err(Error::Ingest {
                path,
                reason: "file not found".into(),
            });
        }
        let digest = manifest
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, d)| d.as_str())
            .ok_or_else(|| Error::Ingest {
                path: path.clone(),
                reason: format!("no entry in {CHECKSUM_FILE}"),
            })?;
        let samples = read_batch(&path, digest)?;
        if let Some(expected) = options.records_per_file {
            if samples.len() != expected {
                return Err(Error::Format {
                    path,
                    reason: format!("expected {expected} records, found {}", samples.len()),
                });
            }
        }
        Ok(samples)
    };

    let mut train = Vec::new();
    for name in TRAIN_FILES {
        train.extend(load(name)?);
    }
    let test = load(TEST_FILE)?;
    let train_indices: Vec<usize> = (0..train.len()).collect();
    let test_indices: Vec<usize> = (0..test.len()).collect();
    let (train, train_indices) = match subset_size {
        Some(n) => subsample(train, &train_indices, n, seed, 0),
        None => (train, train_indices),
    };
    Ok(DatasetSplit {
        train,
        test,
        train_indices,
        test_indices,
    })
}

/// Default location of the prepared binary batches, overridable through
/// `JSSC_DATA_DIR`.
pub fn default_data_dir() -> PathBuf {
    std::env::var_os("JSSC_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("data/cifar-10-batches-bin"))
}

/// A mini-batch of normalized images, `(B, 32, 32, 3)` row-major.
#[derive(Debug, Clone)]
pub struct ImageBatch {
    pub pixels: Vec<f32>,
    pub class_ids: Vec<u8>,
    pub semantic_ids: Vec<u8>,
    /// Positions of the samples within the split part they came from.
    pub indices: Vec<usize>,
}

impl ImageBatch {
    pub fn len(&self) -> usize {
        self.class_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class_ids.is_empty()
    }

    pub fn from_samples<'a>(
        samples: impl IntoIterator<Item = (usize, &'a ImageSample)>,
    ) -> ImageBatch {
        let mut batch = ImageBatch {
            pixels: Vec::new(),
            class_ids: Vec::new(),
            semantic_ids: Vec::new(),
            indices: Vec::new(),
        };
        for (i, s) in samples {
            batch.pixels.extend(s.bytes().iter().map(|&b| normalize(b)));
            batch.class_ids.push(s.class_id);
            batch.semantic_ids.push(s.semantic_id);
            batch.indices.push(i);
        }
        batch
    }

    /// Image `i` as a normalized `(32, 32, 3)` slice.
    pub fn image(&self, i: usize) -> &[f32] {
        &self.pixels[i * IMAGE_LEN..(i + 1) * IMAGE_LEN]
    }
}

/// Iterator over the mini-batches of one epoch.
pub struct Batches<'a> {
    part: &'a [ImageSample],
    order: Vec<usize>,
    batch_size: usize,
    cursor: usize,
}

/// Splits `part` into batches of `batch_size` (the last one may be short).
///
/// With `shuffle`, the order is a permutation drawn from `(seed, epoch)`;
/// otherwise samples come in file order.
pub fn batches(
    part: &[ImageSample],
    batch_size: usize,
    shuffle: bool,
    seed: u64,
    epoch: u64,
) -> Result<Batches<'_>> {
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..part.len()).collect();
    if shuffle {
        order.shuffle(&mut stream_rng(seed, &[stream::SHUFFLE, epoch]));
    }
    Ok(Batches {
        part,
        order,
        batch_size,
        cursor: 0,
    })
}

impl Iterator for Batches<'_> {
    type Item = ImageBatch;

    fn next(&mut self) -> Option<ImageBatch> {
        if self.cursor >= self.order.len() {
            return None;
        }
        let end = (self.cursor + self.batch_size).min(self.order.len());
        let idx = &self.order[self.cursor..end];
        self.cursor = end;
        Some(ImageBatch::from_samples(idx.iter().map(|&i| (i, &self.part[i]))))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.order.len() - self.cursor;
        let n = left.div_ceil(self.batch_size);
        (n, Some(n))
    }
}

impl ExactSizeIterator for Batches<'_> {}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;
    use rand::Rng;

    /// Writes a synthetic dataset with `per_file` records per batch file.
    pub fn write_fake_dataset(dir: &Path, per_file: usize, seed: u64) {
        let mut rng = stream_rng(seed, &[42]);
        let mut names: Vec<&str> = TRAIN_FILES.to_vec();
        names.push(TEST_FILE);
        for name in names {
            let mut bytes = Vec::with_capacity(per_file * RECORD_LEN);
            for _ in 0..per_file {
                bytes.push(rng.gen_range(0..10u8));
                bytes.extend((0..IMAGE_LEN).map(|_| rng.gen::<u8>()));
            }
            fs::write(dir.join(name), bytes).unwrap();
        }
        fetch::write_checksums(dir).unwrap();
    }
}
