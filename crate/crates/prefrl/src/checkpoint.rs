//! PRFL binary checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "PRFL" | version: u32 | records: u32
//! record := name_len: u32 | name (UTF-8) | trainable: u8 | ndim: u32 | dims: u64 * ndim | data: f64 * prod(dims)
//! ```
//!
//! Run metadata rides in a reserved `__meta__` record whose values are the
//! bit patterns of `[format version, seed, config hash]`.

use std::path::Path;

use prefrl_core::autodiff::{ModelParams, Tensor};

use crate::error::{io_err, CliError, Result};

pub const MAGIC: &[u8; 4] = b"PRFL";
pub const VERSION: u32 = 1;
pub const META: &str = "__meta__";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub config_hash: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub meta: Option<CheckpointMeta>,
}

fn put_record(out: &mut Vec<u8>, name: &str, t: &Tensor, trainable: bool) {
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.push(trainable as u8);
    out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
    for &d in t.shape() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for &v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode(ck: &Checkpoint) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let n = ck.params.len() + ck.meta.is_some() as usize;
    out.extend_from_slice(&(n as u32).to_le_bytes());
    if let Some(m) = ck.meta {
        let words = [VERSION as u64, m.seed, m.config_hash].map(f64::from_bits);
        let t = Tensor::vector(words.to_vec()).expect("non-empty");
        put_record(&mut out, META, &t, false);
    }
    for (name, p) in ck.params.iter() {
        put_record(&mut out, name, &p.tensor, p.trainable);
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], String> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or("truncated")?;
        let s = &self.buf[self.at..end];
        self.at = end;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint, String> {
    let mut r = Reader { buf: bytes, at: 0 };
    if r.take(4)? != MAGIC {
        return Err("bad magic".into());
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(format!("unsupported version {version}"));
    }
    let n = r.u32()?;
    let mut params = ModelParams::new();
    let mut meta = None;
    for _ in 0..n {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?).map_err(|_| "record name is not UTF-8")?.to_string();
        let trainable = match r.take(1)?[0] {
            0 => false,
            1 => true,
            b => return Err(format!("bad trainable flag {b}")),
        };
        let ndim = r.u32()? as usize;
        let mut shape = Vec::with_capacity(ndim.min(8));
        for _ in 0..ndim {
            shape.push(usize::try_from(r.u64()?).map_err(|_| "extent overflow")?);
        }
        let count = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or("size overflow")?;
        if count.checked_mul(8).is_none_or(|b| b > bytes.len()) {
            return Err("truncated".into());
        }
        let data: Vec<f64> = (0..count).map(|_| r.u64().map(f64::from_bits)).collect::<Result<_, _>>()?;
        let tensor = Tensor::new(shape, data).map_err(|e| e.to_string())?;
        if name == META {
            let w: Vec<u64> = tensor.data().iter().map(|v| v.to_bits()).collect();
            if w.len() != 3 || w[0] != VERSION as u64 {
                return Err("bad metadata record".into());
            }
            meta = Some(CheckpointMeta {
                seed: w[1],
                config_hash: w[2],
            });
        } else {
            if params.contains(&name) {
                return Err(format!("duplicate record {name}"));
            }
            params.insert(&name, tensor, trainable);
        }
    }
    if r.at != bytes.len() {
        return Err("trailing bytes".into());
    }
    Ok(Checkpoint { params, meta })
}

pub fn save(path: &Path, ck: &Checkpoint) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    std::fs::write(path, encode(ck)).map_err(io_err(path))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    if !path.exists() {
        return Err(CliError::MissingCheckpoint(path.to_path_buf()));
    }
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    decode(&bytes).map_err(|msg| CliError::BadCheckpoint {
        path: path.to_path_buf(),
        msg,
    })
}
