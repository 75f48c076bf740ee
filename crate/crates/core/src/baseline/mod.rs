//! Conventional separate source/channel coding link and energy detector.
//!
//! One image is one frame: a 152-byte JPEG 2000 payload, one RS(255, 152)
//! codeword, 510 Gray 16-QAM symbols through one block of the communication
//! channel. Frames the receiver cannot decode are scored against a mid-gray
//! fallback image.

pub mod detector;
pub mod jpeg2000;
pub mod qam;
pub mod rs;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelKind, ChannelSpec, ComplexSignal};
use crate::dataset::{ImageSample, IMAGE_LEN};
use crate::error::{Error, Result};
use crate::metrics::{psnr, ssim, ImageRef};
use crate::rng::{stream, stream_rng};

pub use detector::{calibrate_threshold, detector_accuracy, energy_detect, energy_statistic, DetectorCalibration};
pub use jpeg2000::{jpeg2000_compress, jpeg2000_decompress, Decoded};
pub use qam::{qam16_demodulate, qam16_modulate};
pub use rs::{rs_decode, rs_encode, RsDecoded, RsFailure};

pub const FRAME_BYTES: usize = rs::K;
pub const CODEWORD_BYTES: usize = rs::N;
pub const SYMBOLS_PER_FRAME: usize = CODEWORD_BYTES * 8 / qam::BITS_PER_SYMBOL;
/// Pixel value of the image scored when decoding fails.
pub const FALLBACK_LEVEL: f32 = 0.5;

/// One transmitted frame at every stage of the transmit chain.
#[derive(Debug, Clone, PartialEq)]
pub struct CodedFrame {
    pub payload: Vec<u8>,
    pub codeword: [u8; CODEWORD_BYTES],
    pub symbols: ComplexSignal,
}

impl CodedFrame {
    pub fn new(payload: &[u8]) -> Result<Self> {
        let codeword = rs_encode(payload)?;
        let symbols = qam::modulate_bytes(&codeword);
        debug_assert_eq!(symbols.len(), SYMBOLS_PER_FRAME);
        Ok(Self {
            payload: payload.to_vec(),
            codeword,
            symbols,
        })
    }

    pub fn rate(&self) -> f64 {
        FRAME_BYTES as f64 / CODEWORD_BYTES as f64
    }
}

/// Receiver options of the conventional link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkOptions {
    /// Divide by the true fading gain before the hard decision.
    pub csi: bool,
}

impl Default for LinkOptions {
    fn default() -> Self {
        Self { csi: true }
    }
}

/// What the receiver did with one frame.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameStatus {
    /// Payload recovered; `corrected` byte errors fixed.
    Decoded { corrected: usize },
    /// RS decoding failed.
    RsFailure,
    /// RS output reached the codec but the codestream was rejected.
    CodecFailure,
}

/// Per-image outcome of the conventional link.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkOutcome {
    pub reconstruction: Vec<f32>,
    pub status: FrameStatus,
    /// Received payload equals the transmitted payload.
    pub payload_exact: bool,
    pub fallback: bool,
    pub psnr_db: f64,
    pub ssim: f64,
}

/// Mid-gray image scored on decode failure.
pub fn fallback_image() -> Vec<f32> {
    vec![FALLBACK_LEVEL; IMAGE_LEN]
}

/// Sends one frame's symbols through one channel block and hard-decides bytes.
pub fn transmit<R: Rng + ?Sized>(
    frame: &CodedFrame,
    spec: &ChannelSpec,
    options: LinkOptions,
    rng: &mut R,
) -> Result<Vec<u8>> {
    spec.validate()?;
    let realization = spec.draw(frame.symbols.len(), rng);
    let mut rx = realization.apply(&frame.symbols);
    if spec.kind == ChannelKind::Rayleigh && options.csi {
        let h = realization.gain;
        if h != Complex64::new(0.0, 0.0) {
            rx.symbols.iter_mut().for_each(|y| *y /= h);
        }
    }
    qam::demodulate_bytes(&rx)
}

fn score(reference: &[f32], recon: &[f32]) -> Result<(f64, f64)> {
    let (r, p) = (ImageRef::cifar(reference)?, ImageRef::cifar(recon)?);
    Ok((psnr(&r, &p)?, ssim(&r, &p)?))
}

/// Receives an already-compressed payload for `image` through the link.
pub fn transmit_payload<R: Rng + ?Sized>(
    image: &ImageSample,
    payload: &[u8],
    spec: &ChannelSpec,
    options: LinkOptions,
    rng: &mut R,
) -> Result<LinkOutcome> {
    let frame = CodedFrame::new(payload)?;
    let received = transmit(&frame, spec, options, rng)?;
    let (status, decoded, payload_exact) = match rs_decode(&received)? {
        Err(RsFailure) => (FrameStatus::RsFailure, None, false),
        Ok(d) => {
            let exact = d.payload == frame.payload;
            match jpeg2000_decompress(&d.payload) {
                Decoded::Image(px) => (FrameStatus::Decoded { corrected: d.corrected }, Some(px), exact),
                Decoded::Failure(_) => (FrameStatus::CodecFailure, None, exact),
            }
        }
    };
    let fallback = decoded.is_none();
    let reconstruction = decoded.unwrap_or_else(fallback_image);
    let (psnr_db, ssim) = score(&image.pixels(), &reconstruction)?;
    Ok(LinkOutcome {
        reconstruction,
        status,
        payload_exact,
        fallback,
        psnr_db,
        ssim,
    })
}

/// Full chain for one image: compress, code, modulate, channel, and back.
pub fn conventional_link<R: Rng + ?Sized>(
    image: &ImageSample,
    spec: &ChannelSpec,
    options: LinkOptions,
    rng: &mut R,
) -> Result<LinkOutcome> {
    let payload = jpeg2000_compress(image, FRAME_BYTES)?;
    transmit_payload(image, &payload, spec, options, rng)
}

/// PSNR and SSIM of the clean codec round trip (no channel).
pub fn codec_only(image: &ImageSample, payload: &[u8]) -> Result<(f64, f64)> {
    match jpeg2000_decompress(payload) {
        Decoded::Image(px) => score(&image.pixels(), &px),
        Decoded::Failure(reason) => Err(Error::Compression(format!("clean frame failed to decode: {reason}"))),
    }
}

/// Compresses every image once so sweeps can reuse the payloads.
pub fn compress_all(images: &[ImageSample]) -> Result<Vec<Vec<u8>>> {
    images.iter().map(|im| jpeg2000_compress(im, FRAME_BYTES)).collect()
}

/// Aggregate link metrics over a test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkEvaluation {
    pub psnr_db: f64,
    pub ssim: f64,
    pub fallback_rate: f64,
    pub images: usize,
    pub psnr_per_image: Vec<f64>,
    pub fallback_per_image: Vec<bool>,
}

/// Runs the link over `images` with precomputed payloads.
///
/// Image `i` uses the channel stream `[EVAL, COMM, i]` under `seed`, so
/// different SNRs see the same underlying noise and fading draws.
pub fn evaluate_link(
    images: &[ImageSample],
    payloads: &[Vec<u8>],
    spec: &ChannelSpec,
    options: LinkOptions,
    seed: u64,
) -> Result<LinkEvaluation> {
    if images.len() != payloads.len() || images.is_empty() {
        return Err(Error::Contract(format!(
            "{} images but {} payloads",
            images.len(),
            payloads.len()
        )));
    }
    let mut psnr_per_image = Vec::with_capacity(images.len());
    let mut fallback_per_image = Vec::with_capacity(images.len());
    let mut ssim_sum = 0.0;
    for (i, (im, p)) in images.iter().zip(payloads).enumerate() {
        let mut rng = stream_rng(seed, &[stream::EVAL, stream::COMM, i as u64]);
        let out = transmit_payload(im, p, spec, options, &mut rng)?;
        psnr_per_image.push(out.psnr_db);
        fallback_per_image.push(out.fallback);
        ssim_sum += out.ssim;
    }
    let n = images.len() as f64;
    Ok(LinkEvaluation {
        psnr_db: psnr_per_image.iter().sum::<f64>() / n,
        ssim: ssim_sum / n,
        fallback_rate: fallback_per_image.iter().filter(|&&f| f).count() as f64 / n,
        images: images.len(),
        psnr_per_image,
        fallback_per_image,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn textured(seed: u64) -> ImageSample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base: [f64; 3] = [rng.gen_range(40.0..200.0), rng.gen_range(40.0..200.0), rng.gen_range(40.0..200.0)];
        let bytes: Vec<u8> = (0..IMAGE_LEN)
            .map(|i| {
                let p = i / 3;
                let ramp = ((p % 32) + (p / 32)) as f64;
                (base[i % 3] + ramp + rng.gen_range(-10.0..10.0)).clamp(0.0, 255.0) as u8
            })
            .collect();
        ImageSample::from_hwc_bytes(&bytes, 1).unwrap()
    }

    #[test]
    fn frame_geometry() {
        let f = CodedFrame::new(&[7u8; FRAME_BYTES]).unwrap();
        assert_eq!(f.codeword.len(), 255);
        assert_eq!(f.symbols.len(), 510);
        assert_eq!(SYMBOLS_PER_FRAME, 510);
        assert!((f.rate() - 152.0 / 255.0).abs() < 1e-15);
        assert!(CodedFrame::new(&[0u8; 100]).is_err());
    }

    #[test]
    fn noiseless_link_is_byte_exact() {
        let img = textured(1);
        let spec = ChannelSpec::communication(ChannelKind::Awgn, f64::INFINITY);
        let out = conventional_link(&img, &spec, LinkOptions::default(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(out.payload_exact);
        assert_eq!(out.status, FrameStatus::Decoded { corrected: 0 });
        let payload = jpeg2000_compress(&img, FRAME_BYTES).unwrap();
        let (p, s) = codec_only(&img, &payload).unwrap();
        assert_eq!(out.psnr_db, p);
        assert_eq!(out.ssim, s);
    }

    #[test]
    fn deep_noise_falls_back() {
        let img = textured(2);
        let spec = ChannelSpec::communication(ChannelKind::Awgn, -10.0);
        let out = conventional_link(&img, &spec, LinkOptions::default(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(out.fallback);
        assert_eq!(out.reconstruction, fallback_image());
        let (p, _) = score(&img.pixels(), &fallback_image()).unwrap();
        assert_eq!(out.psnr_db, p);
    }

    #[test]
    fn rayleigh_with_csi_survives_high_snr() {
        let img = textured(3);
        let payload = jpeg2000_compress(&img, FRAME_BYTES).unwrap();
        let spec = ChannelSpec::communication(ChannelKind::Rayleigh, 40.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut ok = 0;
        for _ in 0..20 {
            ok += transmit_payload(&img, &payload, &spec, LinkOptions { csi: true }, &mut rng)
                .unwrap()
                .payload_exact as usize;
        }
        assert!(ok >= 15, "{ok}/20");
    }

    #[test]
    fn evaluation_rejects_mismatched_inputs() {
        let spec = ChannelSpec::communication(ChannelKind::Awgn, 3.0);
        assert!(evaluate_link(&[textured(1)], &[], &spec, LinkOptions::default(), 1).is_err());
    }
}
