//! Named-tensor checkpoint files.
//!
//! Layout (multi-byte integers little-endian):
//! `"LGAC"`, version `u32`, config echo (`u32` length + UTF-8), tensor count
//! `u32`, then per tensor: name (`u16` length + UTF-8), dtype `u8`
//! (0 = f32, 1 = f64), rank `u8`, `rank × u32` dims, raw values.

use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::ParamStore;
use crate::scalar::{DType, Scalar};
use crate::tensor::{Dims, Tensor4};

pub const MAGIC: &[u8; 4] = b"LGAC";
pub const VERSION: u32 = 1;
/// Prefix of optimizer-state tensor names.
pub const OPTIM_PREFIX: &str = "optim.";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T: Scalar = f32> {
    pub config: String,
    pub tensors: Vec<(String, Tensor4<T>)>,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn from_params(config: impl Into<String>, params: &ParamStore<T>) -> Self {
        Checkpoint {
            config: config.into(),
            tensors: params.iter().map(|(n, t)| (n.to_string(), t.clone())).collect(),
        }
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let cfg = self.config.as_bytes();
        let cfg_len = u32::try_from(cfg.len()).map_err(|_| Error::Size("config echo too long".into()))?;
        out.extend_from_slice(&cfg_len.to_le_bytes());
        out.extend_from_slice(cfg);
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            let n = u16::try_from(name.len()).map_err(|_| Error::Size(format!("tensor name `{name}` too long")))?;
            out.extend_from_slice(&n.to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(T::DTYPE.tag());
            out.push(4);
            for d in t.dims().to_array() {
                let d = u32::try_from(d).map_err(|_| Error::Size(format!("`{name}` extent {d}")))?;
                out.extend_from_slice(&d.to_le_bytes());
            }
            for &v in t.data() {
                v.write_le(&mut out);
            }
        }
        Ok(out)
    }

    /// Parses a checkpoint, converting stored values to `T` if the file holds
    /// the other precision.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("not a checkpoint (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("checkpoint version {version}, expected {VERSION}")));
        }
        let n = r.u32()? as usize;
        let config = String::from_utf8(r.take(n)?.to_vec())
            .map_err(|_| Error::Format("config echo is not UTF-8".into()))?;
        let count = r.u32()? as usize;
        let mut tensors = Vec::new();
        for _ in 0..count {
            let n = r.u16()? as usize;
            let name = String::from_utf8(r.take(n)?.to_vec())
                .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
            let dtype = DType::from_tag(r.u8()?)
                .ok_or_else(|| Error::Format(format!("`{name}`: unknown dtype tag")))?;
            let rank = r.u8()? as usize;
            if rank > 4 {
                return Err(Error::Format(format!("`{name}`: rank {rank} > 4")));
            }
            let mut dims = [1usize; 4];
            for i in 0..rank {
                dims[4 - rank + i] = r.u32()? as usize;
            }
            let dims = Dims::from_array(dims);
            let len = dims.checked_len::<T>()?;
            let raw = r.take(len.checked_mul(dtype.size()).ok_or_else(|| Error::Size(format!("`{name}`")))?)?;
            let data: Vec<T> = match dtype {
                DType::F32 => raw.chunks_exact(4).map(|c| T::from_f64(f32::read_le(c) as f64)).collect(),
                DType::F64 => raw.chunks_exact(8).map(|c| T::from_f64(f64::read_le(c))).collect(),
            };
            tensors.push((name, Tensor4::from_vec(dims, data)?));
        }
        if r.pos != bytes.len() {
            return Err(Error::Length(format!("{} trailing bytes after last tensor", bytes.len() - r.pos)));
        }
        Ok(Checkpoint { config, tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.encode()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes).map_err(|e| e.context(path))
    }

    /// Overwrites every tensor of `params` from this checkpoint. Every
    /// parameter must be present with matching dims, and every non-optimizer
    /// tensor in the file must name a parameter.
    pub fn restore_params(&self, params: &mut ParamStore<T>) -> Result<()> {
        for (name, t) in &self.tensors {
            if name.starts_with(OPTIM_PREFIX) {
                continue;
            }
            let id = params
                .find(name)
                .ok_or_else(|| Error::Format(format!("unknown tensor `{name}` in checkpoint")))?;
            if params.get(id).dims() != t.dims() {
                return Err(Error::Format(format!(
                    "`{name}` has dims {:?}, model expects {:?}",
                    t.dims(),
                    params.get(id).dims()
                )));
            }
        }
        for id in params.ids().collect::<Vec<_>>() {
            let name = params.name(id).to_string();
            let t = self
                .tensors
                .iter()
                .find(|(n, _)| *n == name)
                .ok_or_else(|| Error::Format(format!("checkpoint lacks parameter `{name}`")))?;
            *params.get_mut(id) = t.1.clone();
        }
        Ok(())
    }

    pub fn optimizer_tensors(&self) -> Vec<(String, Tensor4<T>)> {
        self.tensors
            .iter()
            .filter(|(n, _)| n.starts_with(OPTIM_PREFIX))
            .cloned()
            .collect()
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Length(format!(
                "truncated checkpoint: need {n} bytes at offset {}, file has {}",
                self.pos,
                self.bytes.len()
            ))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}
