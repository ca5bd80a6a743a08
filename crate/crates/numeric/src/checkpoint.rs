//! Binary checkpoint: an 8-byte magic, a little-endian u64 manifest length,
//! a JSON manifest, then every tensor's f32 data little-endian in manifest
//! order.

use crate::tensor::Tensor;
use crate::{NumericError, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

pub const MAGIC: &[u8; 8] = b"STYLOX1\0";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    /// Free-form metadata (configuration, vocabulary hash, style names).
    pub meta: serde_json::Value,
    pub tensors: BTreeMap<String, Tensor>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    meta: serde_json::Value,
    tensors: Vec<Entry>,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

fn bad(msg: impl Into<String>) -> NumericError {
    NumericError::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut entries = Vec::new();
        let mut offset = 0;
        for (name, t) in &self.tensors {
            entries.push(Entry { name: name.clone(), shape: t.shape().to_vec(), offset });
            offset += t.len();
        }
        let manifest = serde_json::to_vec(&Manifest { meta: self.meta.clone(), tensors: entries })
            .expect("manifest serializes");
        let mut out = Vec::with_capacity(16 + manifest.len() + offset * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
        out.extend_from_slice(&manifest);
        for t in self.tensors.values() {
            for x in t.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("missing STYLOX1 header"));
        }
        let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body = bytes.get(16..16usize.saturating_add(len)).ok_or_else(|| bad("truncated manifest"))?;
        let manifest: Manifest = serde_json::from_slice(body).map_err(|e| bad(format!("manifest: {e}")))?;
        let data = &bytes[16 + len..];
        if !data.len().is_multiple_of(4) {
            return Err(bad("tensor data is not a whole number of f32 values"));
        }
        let floats: Vec<f32> = data.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        let mut tensors = BTreeMap::new();
        for e in manifest.tensors {
            let n: usize = e.shape.iter().product();
            let slice = floats
                .get(e.offset..e.offset.saturating_add(n))
                .ok_or_else(|| bad(format!("tensor '{}' runs past the end of the file", e.name)))?;
            tensors.insert(e.name, Tensor::new(&e.shape, slice.to_vec())?);
        }
        Ok(Checkpoint { meta: manifest.meta, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        Checkpoint::from_bytes(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut tensors = BTreeMap::new();
        tensors.insert("b".to_string(), Tensor::new(&[2], vec![1.5, -0.0]).unwrap());
        tensors.insert("a".to_string(), Tensor::new(&[1, 3], vec![f32::MIN_POSITIVE, 3.0, 1e30]).unwrap());
        Checkpoint { meta: serde_json::json!({"step": 7, "styles": ["x"]}), tensors }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let c = sample();
        let back = Checkpoint::from_bytes(&c.to_bytes()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = sample().to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 4]).is_err());
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(Checkpoint::from_bytes(&wrong).is_err());
        assert!(Checkpoint::from_bytes(&bytes[..20]).is_err());
    }
}
