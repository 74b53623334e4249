//! CIFAR-100 binary format: each record is one coarse-label byte, one
//! fine-label byte, then 3×32×32 pixel bytes in R,G,B plane order.

use std::path::Path;

use super::LabeledSample;
use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

pub const CIFAR_RECORD: usize = 2 + 3 * 32 * 32;
pub const CIFAR_FINE_CLASSES: usize = 100;
pub const CIFAR_COARSE_CLASSES: usize = 20;

/// One split held in memory, decoded lazily per record.
pub struct CifarSplit {
    bytes: Vec<u8>,
    len: usize,
}

impl CifarSplit {
    fn parse(path: &Path, expected_records: Option<usize>) -> Result<CifarSplit> {
        let bytes = std::fs::read(path)?;
        let fail = |reason: String| Error::Format {
            path: path.display().to_string(),
            reason,
        };
        if bytes.is_empty() || bytes.len() % CIFAR_RECORD != 0 {
            return Err(fail(format!(
                "file size {} is not a multiple of the record size {CIFAR_RECORD}",
                bytes.len()
            )));
        }
        let len = bytes.len() / CIFAR_RECORD;
        if let Some(expected) = expected_records {
            if len != expected {
                return Err(fail(format!("{len} records, expected {expected}")));
            }
        }
        for r in 0..len {
            let base = r * CIFAR_RECORD;
            if bytes[base] as usize >= CIFAR_COARSE_CLASSES
                || bytes[base + 1] as usize >= CIFAR_FINE_CLASSES
            {
                return Err(fail(format!(
                    "record {r} has labels ({}, {}) out of range",
                    bytes[base], bytes[base + 1]
                )));
            }
        }
        Ok(CifarSplit { bytes, len })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, index: usize) -> LabeledSample {
        let base = index * CIFAR_RECORD;
        let rec = &self.bytes[base..base + CIFAR_RECORD];
        let shape = Shape::new(1, 3, 32, 32).unwrap();
        let data = rec[2..].iter().map(|&b| b as f32 / 255.0).collect();
        LabeledSample {
            image: Tensor::from_vec(shape, data).expect("record length fixed"),
            fine: rec[1] as usize,
            coarse: Some(rec[0] as usize),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = LabeledSample> + '_ {
        (0..self.len).map(|i| self.get(i))
    }
}

/// Loads `train.bin` (50,000 records) and `test.bin` (10,000 records)
/// from a directory.
pub fn load_cifar100(dir: &Path) -> Result<(CifarSplit, CifarSplit)> {
    let train = CifarSplit::parse(&dir.join("train.bin"), Some(50_000))?;
    let test = CifarSplit::parse(&dir.join("test.bin"), Some(10_000))?;
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fake_record(coarse: u8, fine: u8, fill: u8) -> Vec<u8> {
        let mut rec = vec![coarse, fine];
        rec.extend(std::iter::repeat(fill).take(3 * 32 * 32));
        rec
    }

    #[test]
    fn parses_wellformed_records() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mini.bin");
        let mut bytes = fake_record(3, 42, 128);
        bytes.extend(fake_record(19, 99, 255));
        std::fs::write(&path, &bytes).unwrap();
        let split = CifarSplit::parse(&path, Some(2)).unwrap();
        assert_eq!(split.len(), 2);
        let s0 = split.get(0);
        assert_eq!(s0.fine, 42);
        assert_eq!(s0.coarse, Some(3));
        assert_eq!(s0.image.count(), 3 * 32 * 32);
        assert!((s0.image.data()[0] - 128.0 / 255.0).abs() < 1e-7);
        let s1 = split.get(1);
        assert_eq!(s1.fine, 99);
        assert_eq!(s1.image.data()[10], 1.0);
    }

    #[test]
    fn record_size_arithmetic() {
        // the full train split is exactly 50,000 · 3,074 bytes
        assert_eq!(CIFAR_RECORD, 3_074);
        assert_eq!(50_000 * CIFAR_RECORD, 153_700_000);
    }

    #[test]
    fn rejects_truncation_wrong_count_and_bad_labels() {
        let dir = tempfile::tempdir().unwrap();

        let truncated = dir.path().join("t.bin");
        std::fs::write(&truncated, fake_record(0, 0, 0)[..100].to_vec()).unwrap();
        assert!(CifarSplit::parse(&truncated, None).is_err());

        let short = dir.path().join("s.bin");
        std::fs::write(&short, fake_record(0, 0, 0)).unwrap();
        assert!(CifarSplit::parse(&short, Some(2)).is_err());

        let badlabel = dir.path().join("b.bin");
        std::fs::write(&badlabel, fake_record(0, 200, 0)).unwrap();
        assert!(CifarSplit::parse(&badlabel, None).is_err());
    }
}
