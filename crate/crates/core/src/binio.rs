//! Versioned container of named little-endian f64 arrays.
//!
//! Layout:
//!
//! ```text
//! magic      8 bytes  "PHNALGN\0"
//! version    u32 LE
//! header_len u64 LE
//! header     header_len bytes of JSON {"meta": .., "arrays": [{"name", "shape"}, ..]}
//! payload    for each array in header order: product(shape) f64 LE values
//! ```
//!
//! Checkpoints, corpus feature files and cached teacher logits all use it.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const MAGIC: &[u8; 8] = b"PHNALGN\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct ArrayEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    meta: Value,
    arrays: Vec<ArrayEntry>,
}

pub fn encode(meta: &Value, arrays: &[(&str, &Tensor)]) -> Result<Vec<u8>> {
    let header = Header {
        meta: meta.clone(),
        arrays: arrays
            .iter()
            .map(|(n, t)| ArrayEntry { name: n.to_string(), shape: t.shape().to_vec() })
            .collect(),
    };
    let header = serde_json::to_vec(&header)?;
    let payload: usize = arrays.iter().map(|(_, t)| t.len() * 8).sum();
    let mut out = Vec::with_capacity(20 + header.len() + payload);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for (_, t) in arrays {
        for v in t.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<(Value, Vec<(String, Tensor)>)> {
    let corrupt = |reason: &str| Error::Corrupt { path: path.to_path_buf(), reason: reason.to_string() };
    let mut r = bytes;
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| corrupt("truncated magic"))?;
    if &magic != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word).map_err(|_| corrupt("truncated version"))?;
    let version = u32::from_le_bytes(word);
    if version != FORMAT_VERSION {
        return Err(Error::FormatVersion(version));
    }
    let mut dword = [0u8; 8];
    r.read_exact(&mut dword).map_err(|_| corrupt("truncated header length"))?;
    let hlen = u64::from_le_bytes(dword) as usize;
    if r.len() < hlen {
        return Err(corrupt("truncated header"));
    }
    let header: Header = serde_json::from_slice(&r[..hlen])?;
    r = &r[hlen..];
    let mut arrays = Vec::with_capacity(header.arrays.len());
    for entry in header.arrays {
        let n: usize = entry.shape.iter().product();
        if r.len() < n * 8 {
            return Err(corrupt(&format!("truncated array {}", entry.name)));
        }
        let values = r[..n * 8]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        r = &r[n * 8..];
        arrays.push((entry.name, Tensor::new(entry.shape, values)?));
    }
    if !r.is_empty() {
        return Err(corrupt("trailing bytes"));
    }
    Ok((header.meta, arrays))
}

pub fn write(path: &Path, meta: &Value, arrays: &[(&str, &Tensor)]) -> Result<()> {
    let bytes = encode(meta, arrays)?;
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn read(path: &Path) -> Result<(Value, Vec<(String, Tensor)>)> {
    let bytes = fs::read(path)?;
    decode(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn rejects_unknown_version() {
        let t = Tensor::new(vec![2], vec![1.0, 2.0]).unwrap();
        let mut bytes = encode(&json!({}), &[("a", &t)]).unwrap();
        bytes[8..12].copy_from_slice(&7u32.to_le_bytes());
        assert!(matches!(decode(&bytes, Path::new("x")), Err(Error::FormatVersion(7))));
    }

    #[test]
    fn rejects_truncation_and_bad_magic() {
        let t = Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap();
        let bytes = encode(&json!({"k": 1}), &[("a", &t)]).unwrap();
        assert!(decode(&bytes[..bytes.len() - 1], Path::new("x")).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(&bad, Path::new("x")).is_err());
    }

    #[test]
    fn preserves_special_values() {
        let t = Tensor::new(vec![4], vec![-0.0, f64::MIN_POSITIVE, 1e308, -1.5]).unwrap();
        let bytes = encode(&json!(null), &[("w", &t)]).unwrap();
        let (_, arrays) = decode(&bytes, Path::new("x")).unwrap();
        let back = &arrays[0].1;
        for (a, b) in back.values().iter().zip(t.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
