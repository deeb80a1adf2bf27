//! Binary checkpoint container.
//!
//! Layout: magic bytes `UAHMP1`, a little-endian `u32` tensor count, then
//! per tensor: `u32` name length, UTF-8 name, `u32` rank, `rank` x `u32`
//! dims, and a payload of `prod(dims)` little-endian `f64` values. The
//! last tensor is always named `config.json`; its payload is `dims[0]` raw
//! bytes holding the run configuration as JSON.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

const MAGIC: &[u8; 6] = b"UAHMP1";
/// Name of the trailing byte tensor carrying the embedded config.
pub const CONFIG_TENSOR: &str = "config.json";

/// Insertion-ordered collection of named `f64` tensors plus a config blob.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorStore {
    tensors: Vec<(String, Vec<usize>, Vec<f64>)>,
    config_json: String,
}

impl TensorStore {
    pub fn new(config_json: String) -> Self {
        TensorStore {
            tensors: Vec::new(),
            config_json,
        }
    }

    pub fn config_json(&self) -> &str {
        &self.config_json
    }

    pub fn push(&mut self, name: &str, dims: Vec<usize>, data: Vec<f64>) {
        let expect: usize = dims.iter().product();
        assert_eq!(
            data.len(),
            expect,
            "tensor {name}: payload length {} does not match dims {dims:?}",
            data.len()
        );
        assert_ne!(name, CONFIG_TENSOR, "reserved tensor name");
        self.tensors.push((name.to_string(), dims, data));
    }

    pub fn get(&self, name: &str) -> Option<(&[usize], &[f64])> {
        self.tensors
            .iter()
            .find(|(n, _, _)| n == name)
            .map(|(_, d, v)| (d.as_slice(), v.as_slice()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.iter().map(|(n, _, _)| n.as_str())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        let count = self.tensors.len() as u32 + 1; // + config tensor
        out.extend_from_slice(&count.to_le_bytes());
        for (name, dims, data) in &self.tensors {
            write_header(&mut out, name, dims);
            for v in data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let cfg = self.config_json.as_bytes();
        write_header(&mut out, CONFIG_TENSOR, &[cfg.len()]);
        out.extend_from_slice(cfg);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        let magic = cur.take(MAGIC.len())?;
        if magic != MAGIC {
            return Err(Error::Format(format!(
                "bad magic bytes {magic:?}, expected {MAGIC:?}"
            )));
        }
        let count = cur.read_u32()? as usize;
        if count == 0 {
            return Err(Error::Format("tensor count must include config".into()));
        }
        let mut tensors = Vec::with_capacity(count - 1);
        let mut config_json = None;
        for i in 0..count {
            let name_len = cur.read_u32()? as usize;
            let name = String::from_utf8(cur.take(name_len)?.to_vec())
                .map_err(|e| Error::Format(format!("tensor name is not UTF-8: {e}")))?;
            let rank = cur.read_u32()? as usize;
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(cur.read_u32()? as usize);
            }
            let len: usize = dims.iter().product();
            if name == CONFIG_TENSOR {
                if i + 1 != count {
                    return Err(Error::Format(
                        "config tensor must be the trailing tensor".into(),
                    ));
                }
                let raw = cur.take(len)?;
                config_json = Some(String::from_utf8(raw.to_vec()).map_err(|e| {
                    Error::Format(format!("embedded config is not UTF-8: {e}"))
                })?);
            } else {
                let mut data = Vec::with_capacity(len);
                for _ in 0..len {
                    data.push(f64::from_le_bytes(cur.take(8)?.try_into().unwrap()));
                }
                tensors.push((name, dims, data));
            }
        }
        if cur.pos != bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes after last tensor",
                bytes.len() - cur.pos
            )));
        }
        let config_json =
            config_json.ok_or_else(|| Error::Format("missing trailing config tensor".into()))?;
        Ok(TensorStore {
            tensors,
            config_json,
        })
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read_from(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

fn write_header(out: &mut Vec<u8>, name: &str, dims: &[usize]) {
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format(format!(
                "truncated file: need {n} bytes at offset {}, have {}",
                self.pos,
                self.bytes.len() - self.pos
            )));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn read_u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Hex SHA-256 of a config blob, recorded alongside artifacts.
pub fn config_hash(config_json: &str) -> String {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    hasher.update(config_json.as_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_store() -> TensorStore {
        let mut s = TensorStore::new(r#"{"answer":42}"#.to_string());
        s.push("a.weight", vec![2, 3], vec![1.0, -2.5, 3.0, 0.0, 1e-9, 7.25]);
        s.push("a.bias", vec![3], vec![0.5, 0.25, -0.125]);
        s.push("scalar", vec![], vec![9.0]);
        s
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let s = sample_store();
        let bytes = s.to_bytes();
        let back = TensorStore::from_bytes(&bytes).unwrap();
        assert_eq!(s, back);
        assert_eq!(bytes, back.to_bytes());
    }

    #[test]
    fn rank_zero_tensor_holds_one_value() {
        let s = sample_store();
        let (dims, data) = s.get("scalar").unwrap();
        assert!(dims.is_empty());
        assert_eq!(data, &[9.0]);
    }

    #[test]
    fn wrong_magic_is_format_error() {
        let mut bytes = sample_store().to_bytes();
        bytes[0] = b'X';
        assert!(matches!(
            TensorStore::from_bytes(&bytes),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn truncation_is_format_error() {
        let bytes = sample_store().to_bytes();
        for cut in [3, 7, 20, bytes.len() - 1] {
            assert!(
                matches!(
                    TensorStore::from_bytes(&bytes[..cut]),
                    Err(Error::Format(_))
                ),
                "cut at {cut}"
            );
        }
    }

    #[test]
    fn trailing_garbage_is_format_error() {
        let mut bytes = sample_store().to_bytes();
        bytes.push(0);
        assert!(matches!(
            TensorStore::from_bytes(&bytes),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn config_hash_is_stable() {
        let h = config_hash("{}");
        assert_eq!(h.len(), 64);
        assert_eq!(h, config_hash("{}"));
        assert_ne!(h, config_hash("{ }"));
    }
}
