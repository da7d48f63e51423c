//! CIFAR-10 binary batches.
//!
//! Each record is one label byte followed by 3072 pixel bytes: the 32x32 red
//! plane, then green, then blue, each row-major.

use std::fs;
use std::path::Path;

use crate::dataset::{image_tensor, Dataset, Split};
use crate::error::{Error, Result};

pub const SIDE: usize = 32;
pub const CHANNELS: usize = 3;
pub const PIXELS: usize = CHANNELS * SIDE * SIDE;
pub const RECORD_LEN: usize = 1 + PIXELS;
pub const CLASSES: usize = 10;

pub const TRAIN_FILES: [&str; 5] = [
    "data_batch_1.bin",
    "data_batch_2.bin",
    "data_batch_3.bin",
    "data_batch_4.bin",
    "data_batch_5.bin",
];
pub const TEST_FILE: &str = "test_batch.bin";

/// Parses the records of one batch file.
pub fn parse_batch(path: &Path, bytes: &[u8], images: &mut Vec<crate::Tensor>, labels: &mut Vec<usize>) -> Result<()> {
    if !bytes.len().is_multiple_of(RECORD_LEN) {
        let whole = bytes.len() - bytes.len() % RECORD_LEN;
        return Err(Error::Format {
            path: path.to_path_buf(),
            offset: whole as u64,
            msg: format!(
                "truncated record: {} trailing bytes, records are {RECORD_LEN} bytes",
                bytes.len() - whole
            ),
        });
    }
    for (r, rec) in bytes.chunks_exact(RECORD_LEN).enumerate() {
        let label = usize::from(rec[0]);
        if label >= CLASSES {
            return Err(Error::Format {
                path: path.to_path_buf(),
                offset: (r * RECORD_LEN) as u64,
                msg: format!("label byte {label} outside 0..=9"),
            });
        }
        let data = rec[1..].iter().map(|&b| f64::from(b) / 255.0).collect();
        images.push(image_tensor(CHANNELS, SIDE, SIDE, data)?);
        labels.push(label);
    }
    Ok(())
}

fn load_files(dir: &Path, files: &[&str], split: Split) -> Result<Dataset> {
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for f in files {
        let path = dir.join(f);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        parse_batch(&path, &bytes, &mut images, &mut labels)?;
    }
    Ok(Dataset::from_parts_unchecked(images, labels, split, CLASSES))
}

/// Loads the five training batches and the test batch from `dir`.
pub fn load_cifar10(dir: &Path) -> Result<(Dataset, Dataset)> {
    let train = load_files(dir, &TRAIN_FILES, Split::Train)?;
    let test = load_files(dir, &[TEST_FILE], Split::Test)?;
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(label: u8, fill: u8) -> Vec<u8> {
        let mut r = vec![label];
        r.extend(std::iter::repeat_n(fill, PIXELS));
        r
    }

    #[test]
    fn record_length() {
        assert_eq!(RECORD_LEN, 3073);
    }

    #[test]
    fn parses_planar_records() {
        let mut bytes = record(3, 255);
        let mut second = record(9, 0);
        second[1 + 1024] = 51; // first green pixel
        bytes.extend(second);
        let (mut imgs, mut labels) = (Vec::new(), Vec::new());
        parse_batch(Path::new("x"), &bytes, &mut imgs, &mut labels).unwrap();
        assert_eq!(labels, vec![3, 9]);
        assert!(imgs[0].data().iter().all(|&v| v == 1.0));
        assert_eq!(imgs[1].data()[1024], 0.2);
        assert_eq!(imgs[1].data()[0], 0.0);
    }

    #[test]
    fn truncation_reports_offset() {
        let mut bytes = record(1, 7);
        bytes.extend_from_slice(&[0; 100]);
        let err = parse_batch(Path::new("b.bin"), &bytes, &mut Vec::new(), &mut Vec::new()).unwrap_err();
        match err {
            Error::Format { offset, .. } => assert_eq!(offset, 3073),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn bad_label_reports_record_offset() {
        let mut bytes = record(1, 7);
        bytes.extend(record(10, 7));
        let err = parse_batch(Path::new("b.bin"), &bytes, &mut Vec::new(), &mut Vec::new()).unwrap_err();
        assert!(matches!(err, Error::Format { offset: 3073, .. }));
    }

    #[test]
    fn loads_directory() {
        let dir = tempfile::tempdir().unwrap();
        for (i, f) in TRAIN_FILES.iter().enumerate() {
            let mut b = record(i as u8, 10);
            b.extend(record(9, 20));
            std::fs::write(dir.path().join(f), b).unwrap();
        }
        std::fs::write(dir.path().join(TEST_FILE), record(0, 255)).unwrap();
        let (train, test) = load_cifar10(dir.path()).unwrap();
        assert_eq!(train.len(), 10);
        assert_eq!(test.len(), 1);
        assert!(train.labels().iter().all(|&l| l < 10));
        std::fs::remove_file(dir.path().join(TEST_FILE)).unwrap();
        assert!(matches!(load_cifar10(dir.path()), Err(Error::Io { .. })));
    }
}
