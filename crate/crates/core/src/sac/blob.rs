//! Versioned binary container for learner parameters.
//!
//! Layout (little endian): magic `KCACPRM\0`, `u32` version, `u32` obs_dim,
//! `u32` act_dim, `f64` log-temperature, `u32` tensor count, then per tensor
//! `u32` name length, UTF-8 name, `u32` rank, `u64` dims, `f64` values.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::SacError;

const MAGIC: &[u8; 8] = b"KCACPRM\0";
pub const BLOB_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamBlob {
    pub version: u32,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub tensors: Vec<NamedTensor>,
    pub log_temperature: f64,
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_tensors(out: &mut Vec<u8>, tensors: &[NamedTensor]) {
    put_u32(out, tensors.len());
    for t in tensors {
        put_u32(out, t.name.len());
        out.extend_from_slice(t.name.as_bytes());
        put_u32(out, t.shape.len());
        for &d in &t.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], SacError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| SacError::Blob("truncated parameter blob".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize, SacError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn u64(&mut self) -> Result<usize, SacError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()) as usize)
    }

    fn f64(&mut self) -> Result<f64, SacError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

impl ParamBlob {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.version.to_le_bytes());
        put_u32(&mut out, self.obs_dim);
        put_u32(&mut out, self.act_dim);
        out.extend_from_slice(&self.log_temperature.to_le_bytes());
        put_tensors(&mut out, &self.tensors);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, SacError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(SacError::Blob("not a parameter blob".into()));
        }
        let version = r.u32()? as u32;
        if version != BLOB_VERSION {
            return Err(SacError::Mismatch(format!("blob version {version}, expected {BLOB_VERSION}")));
        }
        let obs_dim = r.u32()?;
        let act_dim = r.u32()?;
        let log_temperature = r.f64()?;
        let count = r.u32()?;
        let mut tensors = Vec::with_capacity(count.min(64));
        for _ in 0..count {
            let len = r.u32()?;
            let name = String::from_utf8(r.take(len)?.to_vec())
                .map_err(|e| SacError::Blob(e.to_string()))?;
            let rank = r.u32()?;
            let shape = (0..rank).map(|_| r.u64()).collect::<Result<Vec<_>, _>>()?;
            let n: usize = shape.iter().product();
            if n.checked_mul(8).is_none_or(|b| b > bytes.len()) {
                return Err(SacError::Blob(format!("tensor '{name}' larger than blob")));
            }
            let data = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
            tensors.push(NamedTensor { name, shape, data });
        }
        if r.pos != bytes.len() {
            return Err(SacError::Blob("trailing bytes after parameter blob".into()));
        }
        Ok(Self { version, obs_dim, act_dim, tensors, log_temperature })
    }

    pub fn save(&self, path: &Path) -> Result<(), SacError> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| SacError::Io(e.to_string()))?;
        }
        fs::write(path, self.to_bytes()).map_err(|e| SacError::Io(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, SacError> {
        let bytes = fs::read(path).map_err(|e| SacError::Io(e.to_string()))?;
        Self::from_bytes(&bytes)
    }

    /// SHA-256 (hex) over the network tensors only; the temperature is excluded
    /// because it is re-initialised on every transfer.
    pub fn network_hash(&self) -> String {
        let mut buf = Vec::new();
        put_tensors(&mut buf, &self.tensors);
        hex(&Sha256::digest(&buf))
    }

    /// SHA-256 (hex) over the full serialized blob.
    pub fn file_hash(&self) -> String {
        hex(&Sha256::digest(self.to_bytes()))
    }

    pub fn tensor(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
