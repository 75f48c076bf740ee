//! Reconstruction and classification metrics.
//!
//! PSNR uses a peak value of 1 and is capped at [`PSNR_CAP_DB`] for identical
//! images. SSIM is the windowed form with an 11x11 Gaussian window
//! (σ = 1.5), `C1 = 0.01²`, `C2 = 0.03²`, evaluated on every fully covered
//! window of every channel and averaged.

use serde::{Deserialize, Serialize};

use crate::dataset::{IMAGE_CHANNELS, IMAGE_SIDE};
use crate::error::{Error, Result};

pub const PSNR_CAP_DB: f64 = 100.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

/// Borrowed `(H, W, C)` image with values nominally in `[0, 1]`.
#[derive(Debug, Clone, Copy)]
pub struct ImageRef<'a> {
    pub data: &'a [f32],
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl<'a> ImageRef<'a> {
    pub fn new(data: &'a [f32], height: usize, width: usize, channels: usize) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::Contract(format!(
                "{height}x{width}x{channels} image needs {} values, got {}",
                height * width * channels,
                data.len()
            )));
        }
        Ok(Self {
            data,
            height,
            width,
            channels,
        })
    }

    /// A 32x32x3 CIFAR-sized image.
    pub fn cifar(data: &'a [f32]) -> Result<Self> {
        Self::new(data, IMAGE_SIDE, IMAGE_SIDE, IMAGE_CHANNELS)
    }

    fn same_shape(&self, other: &ImageRef<'_>) -> Result<()> {
        if (self.height, self.width, self.channels) != (other.height, other.width, other.channels) {
            return Err(Error::Contract(format!(
                "image shapes differ: {}x{}x{} vs {}x{}x{}",
                self.height, self.width, self.channels, other.height, other.width, other.channels
            )));
        }
        Ok(())
    }
}

/// Clamps values into `[0, 1]`; applied to network reconstructions before scoring.
pub fn clip_unit(values: &[f32]) -> Vec<f32> {
    values.iter().map(|v| v.clamp(0.0, 1.0)).collect()
}

pub fn mse(reference: &ImageRef<'_>, prediction: &ImageRef<'_>) -> Result<f64> {
    reference.same_shape(prediction)?;
    let sum: f64 = reference
        .data
        .iter()
        .zip(prediction.data)
        .map(|(&a, &b)| {
            let d = a as f64 - b as f64;
            d * d
        })
        .sum();
    Ok(sum / reference.data.len() as f64)
}

/// `10 log10(1 / MSE)`, capped at 100 dB.
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        return PSNR_CAP_DB;
    }
    (10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB)
}

pub fn psnr(reference: &ImageRef<'_>, prediction: &ImageRef<'_>) -> Result<f64> {
    Ok(psnr_from_mse(mse(reference, prediction)?))
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-(d * d) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable "valid" Gaussian filtering of one plane.
fn filter_valid(plane: &[f64], h: usize, w: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (oh, ow) = (h + 1 - SSIM_WINDOW, w + 1 - SSIM_WINDOW);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..SSIM_WINDOW).map(|i| k[i] * plane[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..SSIM_WINDOW).map(|i| k[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

pub fn ssim(reference: &ImageRef<'_>, prediction: &ImageRef<'_>) -> Result<f64> {
    reference.same_shape(prediction)?;
    let (h, w, c) = (reference.height, reference.width, reference.channels);
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::Contract(format!(
            "image {h}x{w} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"
        )));
    }
    let k = gaussian_kernel();
    let mut total = 0.0;
    for ch in 0..c {
        let plane = |img: &ImageRef<'_>| -> Vec<f64> {
            (0..h * w).map(|p| img.data[p * c + ch] as f64).collect()
        };
        let x = plane(reference);
        let y = plane(prediction);
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a * b).collect();
        let mx = filter_valid(&x, h, w, &k);
        let my = filter_valid(&y, h, w, &k);
        let sxx = filter_valid(&xx, h, w, &k);
        let syy = filter_valid(&yy, h, w, &k);
        let sxy = filter_valid(&xy, h, w, &k);
        let n = mx.len();
        let mut acc = 0.0;
        for i in 0..n {
            let (ux, uy) = (mx[i], my[i]);
            let vx = sxx[i] - ux * ux;
            let vy = syy[i] - uy * uy;
            let cov = sxy[i] - ux * uy;
            acc += ((2.0 * ux * uy + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((ux * ux + uy * uy + SSIM_C1) * (vx + vy + SSIM_C2));
        }
        total += acc / n as f64;
    }
    Ok(total / c as f64)
}

/// Index of the largest score; ties go to the lowest index.
pub fn argmax<T: PartialOrd + Copy>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate().skip(1) {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// Fraction of rows whose argmax equals the true class.
pub fn accuracy<T: PartialOrd + Copy>(scores: &[T], num_classes: usize, labels: &[usize]) -> Result<f64> {
    if num_classes == 0 || scores.len() != num_classes * labels.len() {
        return Err(Error::Contract(format!(
            "{} scores do not align with {} labels of {num_classes} classes",
            scores.len(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Ok(0.0);
    }
    let hits = scores
        .chunks(num_classes)
        .zip(labels)
        .filter(|(row, &l)| argmax(row) == l)
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties. Returns 0 when
/// either series is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    cov / (vx * vy).sqrt()
}

/// The four task metrics of one evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub psnr_db: f64,
    pub ssim: f64,
    pub sensing_accuracy: f64,
    pub semantic_accuracy: Option<f64>,
}

impl MetricReport {
    pub fn validate(&self) -> Result<()> {
        let ok = self.psnr_db.is_finite()
            && self.psnr_db <= PSNR_CAP_DB
            && (-1.0..=1.0).contains(&self.ssim)
            && (0.0..=1.0).contains(&self.sensing_accuracy)
            && self.semantic_accuracy.is_none_or(|a| (0.0..=1.0).contains(&a));
        if ok {
            Ok(())
        } else {
            Err(Error::Contract(format!("metric out of range: {self:?}")))
        }
    }
}
