//! Versioned binary checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "NSLICE01"
//! layers     u32
//! per layer: in_dim u32, out_dim u32, activation u8 (0 identity, 1 relu),
//!            weights f32 × out_dim·in_dim (row-major), biases f32 × out_dim
//! ```

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use super::{Activation, DenseLayer, Network};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"NSLICE01";

pub fn to_bytes(net: &Network) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + net.param_count() * 4 + net.num_layers() * 9);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(net.num_layers() as u32).to_le_bytes());
    for layer in net.layers() {
        out.extend_from_slice(&(layer.in_dim() as u32).to_le_bytes());
        out.extend_from_slice(&(layer.out_dim() as u32).to_le_bytes());
        out.push(layer.activation().code());
        for v in layer.weights().iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in layer.biases().iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                Error::Checkpoint(format!(
                    "truncated: needed {n} bytes at offset {}, file has {}",
                    self.pos,
                    self.bytes.len()
                ))
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(n.checked_mul(4).ok_or_else(|| {
            Error::Checkpoint("layer size overflows".into())
        })?)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<Network> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(8)?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint(format!(
            "unknown magic/version {:?}",
            String::from_utf8_lossy(magic)
        )));
    }
    let count = r.u32()? as usize;
    if count == 0 {
        return Err(Error::Checkpoint("checkpoint holds no layers".into()));
    }
    let mut layers = Vec::with_capacity(count.min(64));
    for _ in 0..count {
        let in_dim = r.u32()? as usize;
        let out_dim = r.u32()? as usize;
        let code = r.take(1)?[0];
        let activation = Activation::from_code(code)
            .ok_or_else(|| Error::Checkpoint(format!("unknown activation code {code}")))?;
        let weights = r.f32s(in_dim * out_dim)?;
        let biases = r.f32s(out_dim)?;
        let weights = Array2::from_shape_vec((out_dim, in_dim), weights)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        layers.push(
            DenseLayer::new(weights, Array1::from(biases), activation)
                .map_err(|e| Error::Checkpoint(e.to_string()))?,
        );
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes after the last layer",
            bytes.len() - r.pos
        )));
    }
    Network::from_layers(layers, 0).map_err(|e| Error::Checkpoint(e.to_string()))
}

pub fn save_checkpoint(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_bytes(net))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Network> {
    from_bytes(&fs::read(path)?)
}
