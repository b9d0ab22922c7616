//! Binary checkpoint format (all integers little-endian):
//!
//! ```text
//! "SSML" | version u32 | fingerprint: u32 len + UTF-8 | count u32 |
//! count × ( name: u32 len + UTF-8 | dtype u8 | rank u32 | extents u64 × rank | payload )
//! ```
//!
//! dtype tags are 0 = f32 and 1 = f64.

use std::fs;
use std::path::{Path, PathBuf};

use crate::tensor::{DType, ParamSet, Scalar, Tensor};

const MAGIC: &[u8; 4] = b"SSML";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("checkpoint has no architecture fingerprint")]
    MissingFingerprint,
    #[error("checkpoint truncated while reading {what}")]
    Truncated { what: String },
    #[error("invalid UTF-8 in {0}")]
    Utf8(String),
    #[error("tensor `{tensor}` has dtype tag {tag}, expected {expected}")]
    DType { tensor: String, tag: u8, expected: DType },
    #[error("tensor `{tensor}`: {msg}")]
    Tensor { tensor: String, msg: String },
    #[error("{0} unexpected trailing bytes")]
    Trailing(usize),
}

type Result<T, E = CheckpointError> = std::result::Result<T, E>;

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

/// Serializes `params` in the canonical layout.
pub fn write_checkpoint<T: Scalar>(params: &ParamSet<T>) -> Result<Vec<u8>> {
    if params.fingerprint().is_empty() {
        return Err(CheckpointError::MissingFingerprint);
    }
    let mut out = Vec::with_capacity(64 + params.numel() * T::DTYPE.size_of());
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    put_str(&mut out, params.fingerprint());
    put_u32(&mut out, params.len() as u32);
    for (name, t) in params.iter() {
        put_str(&mut out, name);
        out.push(T::DTYPE.tag());
        put_u32(&mut out, t.rank() as u32);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in t.data() {
            v.write_le(&mut out);
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(CheckpointError::Truncated { what: what.to_string() });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let n = self.u32(what)? as usize;
        let raw = self.take(n, what)?;
        String::from_utf8(raw.to_vec()).map_err(|_| CheckpointError::Utf8(what.to_string()))
    }
}

/// Parses a checkpoint whose tensors are of element type `T`.
pub fn read_checkpoint<T: Scalar>(bytes: &[u8]) -> Result<ParamSet<T>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic").map_err(|_| CheckpointError::BadMagic)? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(CheckpointError::Version(version));
    }
    let fingerprint = r.string("fingerprint")?;
    if fingerprint.is_empty() {
        return Err(CheckpointError::MissingFingerprint);
    }
    let count = r.u32("tensor count")?;
    let mut params = ParamSet::new(fingerprint);
    for i in 0..count {
        let name = r.string(&format!("name of tensor #{i}"))?;
        let what = format!("tensor `{name}`");
        let tag = r.take(1, &what)?[0];
        if DType::from_tag(tag) != Some(T::DTYPE) {
            return Err(CheckpointError::DType {
                tensor: name,
                tag,
                expected: T::DTYPE,
            });
        }
        let rank = r.u32(&what)? as usize;
        let mut shape = Vec::with_capacity(rank.min(16));
        for _ in 0..rank {
            shape.push(r.u64(&what)? as usize);
        }
        let numel = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| CheckpointError::Tensor {
                tensor: name.clone(),
                msg: format!("shape {shape:?} overflows"),
            })?;
        let size = T::DTYPE.size_of();
        let payload = r.take(numel.saturating_mul(size), &what)?;
        let data = payload.chunks_exact(size).map(T::read_le).collect();
        let t = Tensor::from_vec(data, &shape).map_err(|e| CheckpointError::Tensor {
            tensor: name.clone(),
            msg: e.to_string(),
        })?;
        params.insert(name.clone(), t).map_err(|e| CheckpointError::Tensor {
            tensor: name,
            msg: e.to_string(),
        })?;
    }
    if r.pos != bytes.len() {
        return Err(CheckpointError::Trailing(bytes.len() - r.pos));
    }
    Ok(params)
}

pub fn save_checkpoint<T: Scalar>(params: &ParamSet<T>, path: &Path) -> Result<()> {
    let bytes = write_checkpoint(params)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| CheckpointError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, bytes).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<ParamSet<T>> {
    let bytes = fs::read(path).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_checkpoint(&bytes)
}
