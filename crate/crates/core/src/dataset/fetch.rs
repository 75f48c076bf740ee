//! Preparing the binary batch directory from a local source.
//!
//! Accepted sources:
//! - the canonical `cifar-10-binary.tar.gz` archive;
//! - a directory that already holds the six `.bin` batch files;
//! - a directory of PNG sprites (one image per 1024-pixel RGB row, as
//!   distributed by the `tfjs-cifar10` package) with `train_lables.json` and
//!   `test_lables.json` label arrays.
//!
//! In every case the output directory ends up with the six batch files in
//! the binary-record layout plus a `SHA256SUMS` manifest.

use std::fs::{self, File};
use std::io::{BufReader, Read};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{CHECKSUM_FILE, IMAGE_LEN, IMAGE_SIDE, RECORD_LEN, TEST_FILE, TRAIN_FILES};
use crate::dataset::ImageSample;
use crate::error::{Error, Result};

fn ingest(path: &Path, reason: impl ToString) -> Error {
    Error::Ingest {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    }
}

fn all_files() -> impl Iterator<Item = &'static str> {
    TRAIN_FILES.into_iter().chain(std::iter::once(TEST_FILE))
}

/// Writes `SHA256SUMS` for the six batch files found in `dir`.
pub fn write_checksums(dir: &Path) -> Result<()> {
    let mut manifest = String::new();
    for name in all_files() {
        let path = dir.join(name);
        let bytes = fs::read(&path).map_err(|e| ingest(&path, e))?;
        manifest.push_str(&format!("{}  {name}\n", hex::encode(Sha256::digest(&bytes))));
    }
    fs::write(dir.join(CHECKSUM_FILE), manifest)?;
    Ok(())
}

/// Populates `out_dir` from `source` (see module docs).
pub fn prepare(source: &Path, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    if source.is_file() {
        extract_tarball(source, out_dir)?;
    } else if source.join(TRAIN_FILES[0]).is_file() {
        for name in all_files() {
            let from = source.join(name);
            fs::copy(&from, out_dir.join(name)).map_err(|e| ingest(&from, e))?;
        }
    } else if source.join("data_batch_1.png").is_file() {
        convert_png_sprites(source, out_dir)?;
    } else {
        return Err(ingest(
            source,
            "not a CIFAR-10 archive, binary batch directory or PNG sprite directory",
        ));
    }
    write_checksums(out_dir)
}

fn extract_tarball(archive: &Path, out_dir: &Path) -> Result<()> {
    let file = File::open(archive).map_err(|e| ingest(archive, e))?;
    let mut tar = tar::Archive::new(flate2::read::GzDecoder::new(BufReader::new(file)));
    let mut found = 0;
    for entry in tar.entries().map_err(|e| ingest(archive, e))? {
        let mut entry = entry.map_err(|e| ingest(archive, e))?;
        let path = entry.path().map_err(|e| ingest(archive, e))?.into_owned();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        if all_files().any(|f| f == name) {
            let mut bytes = Vec::new();
            entry.read_to_end(&mut bytes).map_err(|e| ingest(archive, e))?;
            fs::write(out_dir.join(name), bytes)?;
            found += 1;
        }
    }
    if found != 6 {
        return Err(ingest(archive, format!("expected 6 batch files, found {found}")));
    }
    Ok(())
}

fn read_labels(path: &Path) -> Result<Vec<u8>> {
    let text = fs::read_to_string(path).map_err(|e| ingest(path, e))?;
    let labels: Vec<u8> = serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    Ok(labels)
}

/// Decodes a sprite sheet into interleaved RGB rows of `IMAGE_LEN` bytes.
fn read_sprite(path: &Path) -> Result<Vec<u8>> {
    let file = File::open(path).map_err(|e| ingest(path, e))?;
    let decoder = png::Decoder::new(BufReader::new(file));
    let mut reader = decoder.read_info().map_err(|e| ingest(path, e))?;
    let info = reader.info();
    let width = info.width as usize;
    if width != IMAGE_SIDE * IMAGE_SIDE {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!("sprite width {width}, expected {}", IMAGE_SIDE * IMAGE_SIDE),
        });
    }
    let channels = match info.color_type {
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        other => {
            return Err(Error::Format {
                path: path.to_path_buf(),
                reason: format!("unsupported colour type {other:?}"),
            })
        }
    };
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: "expected 8-bit samples".into(),
        });
    }
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| ingest(path, "image too large"))?;
    let mut buf = vec![0u8; size];
    let frame = reader.next_frame(&mut buf).map_err(|e| ingest(path, e))?;
    buf.truncate(frame.buffer_size());
    if channels == 3 {
        return Ok(buf);
    }
    Ok(buf
        .chunks_exact(4)
        .flat_map(|px| px[..3].iter().copied())
        .collect())
}

fn convert_png_sprites(dir: &Path, out_dir: &Path) -> Result<()> {
    let train_labels = read_labels(&dir.join("train_lables.json"))?;
    let test_labels = read_labels(&dir.join("test_lables.json"))?;
    let mut jobs: Vec<(String, &str, &[u8])> = Vec::new();
    let per_file = train_labels.len() / TRAIN_FILES.len();
    for (i, name) in TRAIN_FILES.iter().enumerate() {
        let labels = &train_labels[i * per_file..(i + 1) * per_file];
        jobs.push((format!("data_batch_{}.png", i + 1), name, labels));
    }
    jobs.push(("test_batch.png".into(), TEST_FILE, &test_labels[..]));

    for (sprite, out_name, labels) in jobs {
        let sprite_path = dir.join(&sprite);
        let rgb = read_sprite(&sprite_path)?;
        let rows = rgb.len() / IMAGE_LEN;
        if rows != labels.len() {
            return Err(Error::Format {
                path: sprite_path,
                reason: format!("{rows} images but {} labels", labels.len()),
            });
        }
        let mut out = Vec::with_capacity(rows * RECORD_LEN);
        for (row, &label) in rgb.chunks_exact(IMAGE_LEN).zip(labels) {
            let sample = ImageSample::from_hwc_bytes(row, label).map_err(|e| Error::Format {
                path: sprite_path.clone(),
                reason: e.to_string(),
            })?;
            out.extend(sample.to_record());
        }
        fs::write(out_dir.join(out_name), out)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{load_cifar10_with, LoadOptions};

    fn write_sprite(path: &Path, rows: usize, seed: u8) {
        let file = File::create(path).unwrap();
        let mut enc = png::Encoder::new(std::io::BufWriter::new(file), 1024, rows as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc.write_header().unwrap();
        let data: Vec<u8> = (0..rows * IMAGE_LEN)
            .map(|i| (i as u8).wrapping_mul(31).wrapping_add(seed))
            .collect();
        w.write_image_data(&data).unwrap();
    }

    #[test]
    fn converts_sprites_to_records() {
        let src = tempfile::tempdir().unwrap();
        let out = tempfile::tempdir().unwrap();
        let per = 3;
        for i in 1..=5 {
            write_sprite(&src.path().join(format!("data_batch_{i}.png")), per, i as u8);
        }
        write_sprite(&src.path().join("test_batch.png"), per, 9);
        let train: Vec<u8> = (0..5 * per).map(|i| (i % 10) as u8).collect();
        fs::write(src.path().join("train_lables.json"), serde_json::to_string(&train).unwrap())
            .unwrap();
        fs::write(src.path().join("test_lables.json"), "[1,2,3]").unwrap();

        prepare(src.path(), out.path()).unwrap();
        let split = load_cifar10_with(
            out.path(),
            None,
            0,
            LoadOptions {
                records_per_file: Some(per),
            },
        )
        .unwrap();
        assert_eq!(split.train.len(), 15);
        assert_eq!(split.test[2].class_id, 3);
        let expected: Vec<u8> = (0..IMAGE_LEN)
            .map(|i| (i as u8).wrapping_mul(31).wrapping_add(9))
            .collect();
        assert_eq!(split.test[0].bytes(), &expected[..]);
    }

    #[test]
    fn unknown_source_is_rejected() {
        let src = tempfile::tempdir().unwrap();
        let out = tempfile::tempdir().unwrap();
        assert!(matches!(prepare(src.path(), out.path()), Err(Error::Ingest { .. })));
    }
}
