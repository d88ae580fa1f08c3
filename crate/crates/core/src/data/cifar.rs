//! CIFAR-10 / CIFAR-100 binary record format.
//!
//! CIFAR-10 records are 3073 bytes: one label byte, then 1024 red, 1024 green
//! and 1024 blue bytes in row-major order. CIFAR-100 records carry a coarse
//! and a fine label byte before the same 3072 pixel bytes.

use std::path::Path;

use super::dataset::{Dataset, Split};
use crate::error::{Error, Result};

pub const IMAGE_BYTES: usize = 3 * 32 * 32;
pub const RECORDS_PER_BATCH: usize = 10_000;

/// Per-channel statistics of the CIFAR-10 training split on the `[0, 1]` scale.
pub const CIFAR_MEAN: [f32; 3] = [0.4914, 0.4822, 0.4465];
pub const CIFAR_STD: [f32; 3] = [0.2470, 0.2435, 0.2616];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CifarFormat {
    Cifar10,
    Cifar100,
}

impl CifarFormat {
    pub fn label_bytes(self) -> usize {
        match self {
            CifarFormat::Cifar10 => 1,
            CifarFormat::Cifar100 => 2,
        }
    }

    pub fn record_bytes(self) -> usize {
        self.label_bytes() + IMAGE_BYTES
    }

    pub fn num_classes(self) -> usize {
        match self {
            CifarFormat::Cifar10 => 10,
            CifarFormat::Cifar100 => 100,
        }
    }
}

/// One undecoded record. `label` is the fine label for CIFAR-100.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawRecord {
    pub coarse_label: Option<u8>,
    pub label: u8,
    pub pixels: Vec<u8>,
}

/// Parses a whole file that must hold exactly `records` records.
pub fn decode_records(bytes: &[u8], format: CifarFormat, records: usize, path: impl AsRef<Path>) -> Result<Vec<RawRecord>> {
    let path = path.as_ref();
    let size = format.record_bytes();
    let expected = size * records;
    if bytes.len() != expected {
        return Err(Error::FileSize {
            path: path.to_path_buf(),
            expected: expected as u64,
            actual: bytes.len() as u64,
        });
    }
    bytes
        .chunks_exact(size)
        .enumerate()
        .map(|(i, rec)| {
            let offset = i * size;
            let (coarse_label, label) = match format {
                CifarFormat::Cifar10 => (None, rec[0]),
                CifarFormat::Cifar100 => (Some(rec[0]), rec[1]),
            };
            if usize::from(label) >= format.num_classes() {
                return Err(Error::CorruptRecord {
                    path: path.to_path_buf(),
                    offset: offset as u64,
                    detail: format!("label {label} outside 0..{}", format.num_classes()),
                });
            }
            if coarse_label.is_some_and(|c| c >= 20) {
                return Err(Error::CorruptRecord {
                    path: path.to_path_buf(),
                    offset: offset as u64,
                    detail: format!("coarse label {} outside 0..20", rec[0]),
                });
            }
            Ok(RawRecord {
                coarse_label,
                label,
                pixels: rec[format.label_bytes()..].to_vec(),
            })
        })
        .collect()
}

/// Inverse of [`decode_records`].
pub fn encode_records(records: &[RawRecord], format: CifarFormat) -> Vec<u8> {
    let mut out = Vec::with_capacity(records.len() * format.record_bytes());
    for r in records {
        if format == CifarFormat::Cifar100 {
            out.push(r.coarse_label.unwrap_or(0));
        }
        out.push(r.label);
        out.extend_from_slice(&r.pixels);
    }
    out
}

/// `(pixel / 255 − mean) / std` per channel.
pub fn normalize_pixels(pixels: &[u8], out: &mut Vec<f32>) {
    let plane = pixels.len() / 3;
    for (c, chunk) in pixels.chunks(plane).enumerate() {
        out.extend(chunk.iter().map(|&p| (f32::from(p) / 255.0 - CIFAR_MEAN[c]) / CIFAR_STD[c]));
    }
}

/// Builds a normalized dataset from raw records.
pub fn dataset_from_records(records: &[RawRecord], format: CifarFormat, split: Split) -> Dataset {
    let mut images = Vec::with_capacity(records.len() * IMAGE_BYTES);
    for r in records {
        normalize_pixels(&r.pixels, &mut images);
    }
    let labels = records.iter().map(|r| usize::from(r.label)).collect();
    Dataset::new(images, labels, format.num_classes(), [3, 32, 32], split).expect("decoded records are consistent")
}

fn read_file(path: &Path, format: CifarFormat, records: usize) -> Result<Vec<RawRecord>> {
    let bytes = std::fs::read(path)?;
    decode_records(&bytes, format, records, path)
}

/// Reads `data_batch_{1..5}.bin` and `test_batch.bin`.
pub fn load_cifar10(dir: &Path) -> Result<(Dataset, Dataset)> {
    let format = CifarFormat::Cifar10;
    let mut train = Vec::with_capacity(5 * RECORDS_PER_BATCH);
    for i in 1..=5 {
        train.extend(read_file(&dir.join(format!("data_batch_{i}.bin")), format, RECORDS_PER_BATCH)?);
    }
    let test = read_file(&dir.join("test_batch.bin"), format, RECORDS_PER_BATCH)?;
    Ok((
        dataset_from_records(&train, format, Split::Train),
        dataset_from_records(&test, format, Split::Test),
    ))
}

/// Reads `train.bin` (50000 records) and `test.bin` (10000), using fine labels.
pub fn load_cifar100(dir: &Path) -> Result<(Dataset, Dataset)> {
    let format = CifarFormat::Cifar100;
    let train = read_file(&dir.join("train.bin"), format, 5 * RECORDS_PER_BATCH)?;
    let test = read_file(&dir.join("test.bin"), format, RECORDS_PER_BATCH)?;
    Ok((
        dataset_from_records(&train, format, Split::Train),
        dataset_from_records(&test, format, Split::Test),
    ))
}
