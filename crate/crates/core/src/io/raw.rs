//! Raw tensor dumps, the ingestion route for datasets without a native loader.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! offset  size      field
//! 0       8         magic "STNRAWv1"
//! 8       4 x u32   n, c, h, w
//! 24      u32       n_classes
//! 28      u8        dtype: 1 = f32, 2 = f64
//! 29      3         reserved, zero
//! 32      n x u32   labels
//! ...     n*c*h*w   pixel values in [0, 1], planar (c, h, w) per image
//! ```

use std::fs;
use std::path::Path;

use crate::dataset::{image_tensor, Dataset, Split};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"STNRAWv1";
const HEADER_LEN: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RawDtype {
    F32 = 1,
    F64 = 2,
}

impl RawDtype {
    fn width(self) -> usize {
        match self {
            RawDtype::F32 => 4,
            RawDtype::F64 => 8,
        }
    }
}

fn u32_at(b: &[u8], off: usize) -> u32 {
    u32::from_le_bytes(b[off..off + 4].try_into().expect("4 bytes"))
}

pub fn load_raw_dataset(path: &Path, split: Split) -> Result<Dataset> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_raw(path, &bytes, split)
}

pub fn parse_raw(path: &Path, b: &[u8], split: Split) -> Result<Dataset> {
    let fail = |offset: usize, msg: String| Error::Format {
        path: path.to_path_buf(),
        offset: offset as u64,
        msg,
    };
    if b.len() < HEADER_LEN {
        return Err(fail(b.len(), format!("header needs {HEADER_LEN} bytes")));
    }
    if &b[..8] != MAGIC {
        return Err(fail(0, "bad magic".into()));
    }
    let dims: Vec<usize> = (0..5).map(|i| u32_at(b, 8 + 4 * i) as usize).collect();
    let (n, c, h, w, n_classes) = (dims[0], dims[1], dims[2], dims[3], dims[4]);
    let dtype = match b[28] {
        1 => RawDtype::F32,
        2 => RawDtype::F64,
        other => return Err(fail(28, format!("unknown dtype code {other}"))),
    };
    let item = c * h * w;
    let expected = HEADER_LEN + 4 * n + n * item * dtype.width();
    if b.len() != expected {
        return Err(fail(b.len().min(expected), format!("expected {expected} bytes, file has {}", b.len())));
    }
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let off = HEADER_LEN + 4 * i;
        let l = u32_at(b, off) as usize;
        if l >= n_classes {
            return Err(fail(off, format!("label {l} not below n_classes {n_classes}")));
        }
        labels.push(l);
    }
    let payload = HEADER_LEN + 4 * n;
    let mut images = Vec::with_capacity(n);
    for i in 0..n {
        let start = payload + i * item * dtype.width();
        let mut data = Vec::with_capacity(item);
        for j in 0..item {
            let off = start + j * dtype.width();
            let v = match dtype {
                RawDtype::F32 => f64::from(f32::from_le_bytes(b[off..off + 4].try_into().expect("4 bytes"))),
                RawDtype::F64 => f64::from_le_bytes(b[off..off + 8].try_into().expect("8 bytes")),
            };
            if !(0.0..=1.0).contains(&v) {
                return Err(fail(off, format!("pixel value {v} outside [0, 1]")));
            }
            data.push(v);
        }
        images.push(image_tensor(c, h, w, data)?);
    }
    Dataset::new(images, labels, split, n_classes)
}

pub fn encode_raw(data: &Dataset, dtype: RawDtype) -> Result<Vec<u8>> {
    let (c, h, w) = data.image_shape().ok_or(Error::EmptyDataset)?;
    let mut out = Vec::with_capacity(HEADER_LEN + data.len() * (4 + c * h * w * dtype.width()));
    out.extend_from_slice(MAGIC);
    for v in [data.len(), c, h, w, data.n_classes] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&[dtype as u8, 0, 0, 0]);
    for &l in data.labels() {
        out.extend_from_slice(&(l as u32).to_le_bytes());
    }
    for img in data.images() {
        for &v in img.data() {
            match dtype {
                RawDtype::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
                RawDtype::F64 => out.extend_from_slice(&v.to_le_bytes()),
            }
        }
    }
    Ok(out)
}

pub fn write_raw_dataset(path: &Path, data: &Dataset, dtype: RawDtype) -> Result<()> {
    super::write_atomic(path, &encode_raw(data, dtype)?)
}
