//! Binary Q-network checkpoints.
//!
//! Layout: `ELLMQNET`, u32 version, u8 scalar tag, u32 header length, JSON
//! header, u64 parameter count, little-endian parameters.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::nn::{DuelingQNetwork, QNetShape};
use super::{AgentConfig, InputLayout};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 8] = b"ELLMQNET";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub shape: QNetShape,
    pub layout: InputLayout,
    pub agent: AgentConfig,
    /// Hash of the run configuration that produced the weights.
    pub config_hash: String,
    pub env_steps: u64,
    pub updates: u64,
}

pub fn encode<T: Scalar>(header: &CheckpointHeader, net: &DuelingQNetwork<T>) -> Result<Vec<u8>> {
    if header.shape != net.shape() || header.layout.input_dim() != net.shape().input_dim {
        return Err(Error::Checkpoint("header shape differs from network".into()));
    }
    let json = serde_json::to_vec(header)?;
    let mut out = Vec::with_capacity(32 + json.len() + net.params.len() * size_of::<T>());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(T::TAG);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&(net.params.len() as u64).to_le_bytes());
    for p in &net.params {
        p.write_le(&mut out);
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Checkpoint("truncated checkpoint".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode<T: Scalar>(bytes: &[u8]) -> Result<(CheckpointHeader, DuelingQNetwork<T>)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let tag = r.take(1)?[0];
    if tag != T::TAG {
        return Err(Error::Checkpoint(format!(
            "scalar width {tag} bytes, expected {}",
            T::TAG
        )));
    }
    let hlen = r.u32()? as usize;
    let header: CheckpointHeader = serde_json::from_slice(r.take(hlen)?)
        .map_err(|e| Error::Checkpoint(format!("header: {e}")))?;
    let count = r.u64()? as usize;
    let mut net = DuelingQNetwork::<T>::zeros(header.shape);
    if count != net.param_count() {
        return Err(Error::Checkpoint(format!(
            "{count} parameters for a network of {}",
            net.param_count()
        )));
    }
    let width = size_of::<T>();
    let raw = r.take(count * width)?;
    for (p, chunk) in net.params.iter_mut().zip(raw.chunks_exact(width)) {
        *p = T::read_le(chunk);
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    if !net.all_finite() {
        return Err(Error::Checkpoint("non-finite parameters".into()));
    }
    Ok((header, net))
}

pub fn save<T: Scalar>(path: &Path, header: &CheckpointHeader, net: &DuelingQNetwork<T>) -> Result<()> {
    let bytes = encode(header, net)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load<T: Scalar>(path: &Path) -> Result<(CheckpointHeader, DuelingQNetwork<T>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
