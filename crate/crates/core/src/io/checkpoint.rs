//! Binary checkpoints: network spec, parameters, optional optimizer state
//! and training progress, sealed with a SHA-256 trailer.
//!
//! ```text
//! magic "STNCKPT\0", u32 version
//! u32 len + UTF-8 spec text (`key = value` lines)
//! u32 count, then per parameter: u32 id, 4 x u32 shape, f64 values
//! u8 flag [+ adam: 4 x f64 config, u64 t, per parameter m then v]
//! u32 count + u64 seeds
//! u8 flag [+ progress: u64 epochs, u32 logs, per log: tag, u32 rows, rows]
//! 32-byte SHA-256 of everything above
//! ```
//!
//! Integers and floats are little-endian. The checksum is checked before any
//! field is parsed, so a truncated file never yields a partial load.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::arch::{build, Network, NetworkSpec};
use crate::error::{Error, Result};
use crate::optim::{AdamConfig, AdamState};
use crate::slicing::SliceSpec;
use crate::tensor::{ParamId, Shape};
use crate::train::{LogRow, TrainingLog};

pub const MAGIC: &[u8; 8] = b"STNCKPT\0";
pub const VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

/// Epoch counter and logs of an unfinished (or finished) training run.
#[derive(Clone, Debug, PartialEq)]
pub struct Progress {
    pub epochs_done: usize,
    pub logs: Vec<TrainingLog>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub network: Network,
    pub adam: Option<AdamState>,
    pub seeds: Vec<u64>,
    pub progress: Option<Progress>,
}

impl Checkpoint {
    pub fn new(network: Network) -> Self {
        let seeds = vec![network.spec().seed];
        Checkpoint {
            network,
            adam: None,
            seeds,
            progress: None,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        super::write_atomic(path, &self.encode())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.bytes(MAGIC);
        w.u32(VERSION);
        let spec = spec_to_text(self.network.spec());
        w.u32(spec.len() as u32);
        w.bytes(spec.as_bytes());

        let params = self.network.params();
        w.u32(params.len() as u32);
        for p in &params {
            w.u32(p.id.0);
            let s = p.value.shape();
            for d in [s.n, s.c, s.h, s.w] {
                w.u32(d as u32);
            }
            p.value.data().iter().for_each(|&x| w.f64(x));
        }

        match &self.adam {
            None => w.u8(0),
            Some(a) => {
                w.u8(1);
                for x in [a.config.lr, a.config.beta1, a.config.beta2, a.config.epsilon] {
                    w.f64(x);
                }
                w.u64(a.t);
                w.u32(a.m.len() as u32);
                for (id, m) in &a.m {
                    w.u32(id.0);
                    w.u32(m.len() as u32);
                    m.iter().for_each(|&x| w.f64(x));
                    a.v[id].iter().for_each(|&x| w.f64(x));
                }
            }
        }

        w.u32(self.seeds.len() as u32);
        self.seeds.iter().for_each(|&s| w.u64(s));

        match &self.progress {
            None => w.u8(0),
            Some(p) => {
                w.u8(1);
                w.u64(p.epochs_done as u64);
                w.u32(p.logs.len() as u32);
                for log in &p.logs {
                    w.u32(log.tag.len() as u32);
                    w.bytes(log.tag.as_bytes());
                    w.u32(log.rows.len() as u32);
                    for r in &log.rows {
                        w.u64(r.epoch as u64);
                        w.f64(r.train_loss);
                        w.f64(r.clean_acc);
                        w.f64(r.noisy_acc);
                        w.u64(r.wall_ms);
                    }
                }
            }
        }

        let digest = Sha256::digest(&w.buf);
        w.bytes(&digest);
        w.buf
    }

    pub fn decode(path: &Path, bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 4 + DIGEST_LEN {
            return Err(Error::Checksum { path: path.into() });
        }
        let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::Checksum { path: path.into() });
        }
        let mut r = Reader { path, buf: body, pos: 0 };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(r.fail_at(0, "bad magic"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Version {
                path: path.into(),
                found: version,
                expected: VERSION,
            });
        }
        let spec_len = r.u32()? as usize;
        let spec_at = r.pos;
        let text = std::str::from_utf8(r.take(spec_len)?).map_err(|_| r.fail_at(spec_at, "spec text is not UTF-8"))?;
        let spec = spec_from_text(text).map_err(|m| r.fail_at(spec_at, &m))?;
        let mut network = build(&spec).map_err(|e| r.fail_at(spec_at, &e.to_string()))?;

        let count = r.u32()? as usize;
        let mut values = BTreeMap::new();
        for _ in 0..count {
            let at = r.pos;
            let id = ParamId(r.u32()?);
            let dims: Vec<usize> = (0..4).map(|_| r.u32().map(|d| d as usize)).collect::<Result<_>>()?;
            let shape = Shape::new(dims[0], dims[1], dims[2], dims[3]);
            let data = r.f64s(shape.len())?;
            values.insert(id, (at, shape, data));
        }
        let mut params = network.params_mut();
        if params.len() != values.len() {
            return Err(r.fail_at(
                r.pos,
                &format!("{} parameter blobs for a network with {}", values.len(), params.len()),
            ));
        }
        for p in params.iter_mut() {
            let (at, shape, data) = values
                .remove(&p.id)
                .ok_or_else(|| r.fail_at(r.pos, &format!("no blob for parameter {}", p.id)))?;
            if shape != p.value.shape() {
                return Err(r.fail_at(at, &format!("parameter {} has shape {shape}, network expects {}", p.id, p.value.shape())));
            }
            p.value.data_mut().copy_from_slice(&data);
        }

        let adam = if r.flag()? {
            let c: Vec<f64> = r.f64s(4)?;
            let config = AdamConfig {
                lr: c[0],
                beta1: c[1],
                beta2: c[2],
                epsilon: c[3],
            };
            let t = r.u64()?;
            let n = r.u32()? as usize;
            let mut m = BTreeMap::new();
            let mut v = BTreeMap::new();
            for _ in 0..n {
                let id = ParamId(r.u32()?);
                let len = r.u32()? as usize;
                m.insert(id, r.f64s(len)?);
                v.insert(id, r.f64s(len)?);
            }
            Some(AdamState { config, t, m, v })
        } else {
            None
        };

        let n_seeds = r.u32()? as usize;
        let seeds = (0..n_seeds).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;

        let progress = if r.flag()? {
            let epochs_done = r.u64()? as usize;
            let n_logs = r.u32()? as usize;
            let mut logs = Vec::with_capacity(n_logs);
            for _ in 0..n_logs {
                let len = r.u32()? as usize;
                let at = r.pos;
                let tag = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| r.fail_at(at, "log tag is not UTF-8"))?;
                let n_rows = r.u32()? as usize;
                let mut rows = Vec::with_capacity(n_rows.min(1 << 16));
                for _ in 0..n_rows {
                    rows.push(LogRow {
                        epoch: r.u64()? as usize,
                        train_loss: r.f64()?,
                        clean_acc: r.f64()?,
                        noisy_acc: r.f64()?,
                        wall_ms: r.u64()?,
                    });
                }
                logs.push(TrainingLog { tag, rows });
            }
            Some(Progress { epochs_done, logs })
        } else {
            None
        };

        if r.pos != body.len() {
            return Err(r.fail_at(r.pos, "trailing bytes after the last section"));
        }
        Ok(Checkpoint {
            network,
            adam,
            seeds,
            progress,
        })
    }
}

pub fn save_checkpoint(net: &Network, state: Option<&AdamState>, path: &Path) -> Result<()> {
    let mut ckpt = Checkpoint::new(net.clone());
    ckpt.adam = state.cloned();
    ckpt.save(path)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::decode(path, &bytes)
}

/// `key = value` lines describing a network spec; floats print in shortest round-trip form.
pub fn spec_to_text(s: &NetworkSpec) -> String {
    let slices = match &s.slice_spec {
        None => "none".to_string(),
        Some(spec) => spec.boundaries().iter().map(f64::to_string).collect::<Vec<_>>().join(","),
    };
    let (c, h, w) = s.input_shape;
    format!(
        "vertex = {}\nn_streams = {}\nwidth_multiplier = {}\nslice_boundaries = {}\nslice_membership = {}\n\
         n_classes = {}\nbase_filters = {}\nconv5_filters = {}\nfc_hidden = {}\nfc_layers = {}\nfilter_divisor = {}\n\
         padding = {}\ninput_shape = {},{},{}\nseed = {}\n",
        s.vertex,
        s.n_streams,
        s.width_multiplier,
        slices,
        s.slice_membership,
        s.n_classes,
        s.base_filters.map(|f| f.to_string()).join(","),
        s.conv5_filters,
        s.fc_hidden,
        s.fc_layers,
        s.filter_divisor,
        s.padding,
        c,
        h,
        w,
        s.seed
    )
}

pub fn spec_from_text(text: &str) -> std::result::Result<NetworkSpec, String> {
    let mut kv = BTreeMap::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let (k, v) = line.split_once('=').ok_or_else(|| format!("spec line `{line}` has no `=`"))?;
        kv.insert(k.trim(), v.trim());
    }
    let get = |k: &str| kv.get(k).copied().ok_or_else(|| format!("spec is missing `{k}`"));
    fn num<T: std::str::FromStr>(k: &str, v: &str) -> std::result::Result<T, String> {
        v.parse().map_err(|_| format!("spec key `{k}`: cannot parse `{v}`"))
    }
    let dims: Vec<usize> = get("input_shape")?
        .split(',')
        .map(|d| num("input_shape", d.trim()))
        .collect::<std::result::Result<_, _>>()?;
    if dims.len() != 3 {
        return Err("input_shape needs three dimensions".into());
    }
    let base: Vec<usize> = get("base_filters")?
        .split(',')
        .map(|d| num("base_filters", d.trim()))
        .collect::<std::result::Result<_, _>>()?;
    let base_filters: [usize; 4] = base
        .try_into()
        .map_err(|_| "base_filters needs four counts".to_string())?;
    let slice_spec = match get("slice_boundaries")? {
        "none" => None,
        list => {
            let b = list
                .split(',')
                .map(|x| num("slice_boundaries", x.trim()))
                .collect::<std::result::Result<Vec<f64>, _>>()?;
            Some(SliceSpec::new(b).map_err(|e| e.to_string())?)
        }
    };
    let spec = NetworkSpec {
        vertex: get("vertex")?.parse()?,
        n_streams: num("n_streams", get("n_streams")?)?,
        width_multiplier: num("width_multiplier", get("width_multiplier")?)?,
        slice_spec,
        slice_membership: get("slice_membership")?.parse()?,
        n_classes: num("n_classes", get("n_classes")?)?,
        base_filters,
        conv5_filters: num("conv5_filters", get("conv5_filters")?)?,
        fc_hidden: num("fc_hidden", get("fc_hidden")?)?,
        fc_layers: num("fc_layers", get("fc_layers")?)?,
        filter_divisor: num("filter_divisor", get("filter_divisor")?)?,
        padding: get("padding")?.parse()?,
        input_shape: (dims[0], dims[1], dims[2]),
        seed: num("seed", get("seed")?)?,
    };
    Ok(spec)
}

#[derive(Default)]
struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }
    fn u8(&mut self, x: u8) {
        self.buf.push(x);
    }
    fn u32(&mut self, x: u32) {
        self.bytes(&x.to_le_bytes());
    }
    fn u64(&mut self, x: u64) {
        self.bytes(&x.to_le_bytes());
    }
    fn f64(&mut self, x: f64) {
        self.bytes(&x.to_le_bytes());
    }
}

struct Reader<'a> {
    path: &'a Path,
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn fail_at(&self, offset: usize, msg: &str) -> Error {
        Error::Format {
            path: self.path.into(),
            offset: offset as u64,
            msg: msg.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(self.fail_at(self.pos, &format!("need {n} more bytes")));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn flag(&mut self) -> Result<bool> {
        match self.take(1)?[0] {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(self.fail_at(self.pos - 1, &format!("bad section flag {other}"))),
        }
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| self.fail_at(self.pos, "length overflow"))?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::Vertex;
    use crate::optim::adam_init;

    fn net(vertex: Vertex) -> Network {
        build(&NetworkSpec::new(vertex, 4, (3, 8, 8)).with_filter_divisor(16).with_seed(11)).unwrap()
    }

    #[test]
    fn spec_text_round_trips_every_vertex() {
        for v in [Vertex::V1, Vertex::V5, Vertex::V6, Vertex::V7, Vertex::V8] {
            let s = net(v).spec().clone();
            assert_eq!(spec_from_text(&spec_to_text(&s)).unwrap(), s);
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("n.ckpt");
        let n = net(Vertex::V8);
        let mut adam = adam_init(&n, AdamConfig::default());
        adam.t = 7;
        adam.m.values_mut().for_each(|m| m.iter_mut().for_each(|x| *x = 0.1f64.sqrt()));
        save_checkpoint(&n, Some(&adam), &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back.network, n);
        assert_eq!(back.adam.as_ref(), Some(&adam));
        for (a, b) in n.params().iter().zip(back.network.params()) {
            let bits = |t: &[f64]| t.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a.value.data()), bits(b.value.data()));
        }
    }

    #[test]
    fn progress_round_trips() {
        let mut c = Checkpoint::new(net(Vertex::V1));
        c.progress = Some(Progress {
            epochs_done: 3,
            logs: vec![TrainingLog {
                tag: "noise_05_1".into(),
                rows: vec![LogRow {
                    epoch: 3,
                    train_loss: 1.25,
                    clean_acc: 0.5,
                    noisy_acc: 0.25,
                    wall_ms: 17,
                }],
            }],
        });
        let p = Path::new("mem");
        assert_eq!(Checkpoint::decode(p, &c.encode()).unwrap(), c);
    }

    #[test]
    fn truncation_and_bit_flips_fail_checksum() {
        let bytes = Checkpoint::new(net(Vertex::V6)).encode();
        let p = Path::new("mem");
        for cut in [0, 10, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(Checkpoint::decode(p, &bytes[..cut]), Err(Error::Checksum { .. })));
        }
        let mut flipped = bytes.clone();
        flipped[40] ^= 1;
        assert!(matches!(Checkpoint::decode(p, &flipped), Err(Error::Checksum { .. })));
    }

    #[test]
    fn unknown_version_is_reported() {
        let mut bytes = Checkpoint::new(net(Vertex::V1)).encode();
        bytes.truncate(bytes.len() - DIGEST_LEN);
        bytes[8..12].copy_from_slice(&9u32.to_le_bytes());
        let digest = Sha256::digest(&bytes);
        bytes.extend_from_slice(&digest);
        assert!(matches!(
            Checkpoint::decode(Path::new("mem"), &bytes),
            Err(Error::Version { found: 9, .. })
        ));
    }
}
