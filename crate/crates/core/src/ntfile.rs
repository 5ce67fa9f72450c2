//! `.nt` tensor files.
//!
//! Layout (little-endian):
//!
//! ```text
//! b"NT01" | u8 dtype (1 = f32, 2 = f64) | u8 ndim | ndim x u32 dims | payload
//! ```
//!
//! The payload is row-major. `f32` payloads are widened to `f64` on load;
//! this module always writes `f64`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"NT01";
const DTYPE_F32: u8 = 1;
const DTYPE_F64: u8 = 2;

pub fn encode(tensor: &Tensor) -> Vec<u8> {
    let shape = tensor.shape();
    let mut out = Vec::with_capacity(6 + 4 * shape.len() + 8 * tensor.len());
    out.extend_from_slice(MAGIC);
    out.push(DTYPE_F64);
    out.push(shape.len() as u8);
    for &d in shape {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in tensor.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Encodes with an `f32` payload. Only used to produce fixtures for the
/// up-casting path; lossy for values not representable in `f32`.
pub fn encode_f32(tensor: &Tensor) -> Vec<u8> {
    let mut out = encode(tensor);
    out[4] = DTYPE_F32;
    let header = 6 + 4 * tensor.ndim();
    out.truncate(header);
    for &v in tensor.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<Tensor> {
    let bad = |reason: String| Error::TensorFormat {
        path: path.to_path_buf(),
        reason,
    };
    if bytes.len() < 6 || &bytes[..4] != MAGIC {
        return Err(bad("missing NT01 magic".into()));
    }
    let dtype = bytes[4];
    let ndim = bytes[5] as usize;
    if ndim == 0 {
        return Err(bad("ndim must be at least 1".into()));
    }
    let header = 6 + 4 * ndim;
    if bytes.len() < header {
        return Err(bad("truncated header".into()));
    }
    let shape: Vec<usize> = bytes[6..header]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize)
        .collect();
    if shape.contains(&0) {
        return Err(bad(format!("zero dimension in shape {shape:?}")));
    }
    let count: usize = shape.iter().product();
    let payload = &bytes[header..];
    let data: Vec<f64> = match dtype {
        DTYPE_F32 => {
            if payload.len() != count * 4 {
                return Err(bad(format!(
                    "payload is {} bytes, shape {shape:?} needs {}",
                    payload.len(),
                    count * 4
                )));
            }
            payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect()
        }
        DTYPE_F64 => {
            if payload.len() != count * 8 {
                return Err(bad(format!(
                    "payload is {} bytes, shape {shape:?} needs {}",
                    payload.len(),
                    count * 8
                )));
            }
            payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect()
        }
        other => return Err(bad(format!("unknown dtype tag {other}"))),
    };
    Tensor::new(shape, data)
}

pub fn read(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingTensorFile(path.to_path_buf())
        } else {
            Error::io(path, e)
        }
    })?;
    decode(&bytes, path)
}

pub fn write(path: &Path, tensor: &Tensor) -> Result<()> {
    fs::write(path, encode(tensor)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn f32_payload_is_upcast() {
        let t = Tensor::new(vec![2, 2], vec![0.5, -1.25, 3.0, 8.0]).unwrap();
        let back = decode(&encode_f32(&t), Path::new("mem")).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn header_layout() {
        let t = Tensor::new(vec![1, 3], vec![1.0, 2.0, 3.0]).unwrap();
        let bytes = encode(&t);
        assert_eq!(&bytes[..4], b"NT01");
        assert_eq!(bytes[4], 2);
        assert_eq!(bytes[5], 2);
        assert_eq!(&bytes[6..10], &1u32.to_le_bytes());
        assert_eq!(&bytes[10..14], &3u32.to_le_bytes());
        assert_eq!(bytes.len(), 14 + 24);
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = Path::new("mem");
        assert!(decode(b"NT02\x02\x01", p).is_err());
        let mut bytes = encode(&Tensor::from_vec(vec![1.0, 2.0]));
        bytes.pop();
        assert!(decode(&bytes, p).is_err());
        let mut bytes = encode(&Tensor::from_vec(vec![1.0]));
        bytes[4] = 9;
        assert!(decode(&bytes, p).is_err());
    }

    proptest! {
        #[test]
        fn f64_roundtrip(dims in proptest::collection::vec(1usize..4, 1..4), seed in any::<u64>()) {
            let n: usize = dims.iter().product();
            let data: Vec<f64> = (0..n).map(|i| (seed as f64).sin() * i as f64 - 0.5).collect();
            let t = Tensor::new(dims, data).unwrap();
            let back = decode(&encode(&t), Path::new("mem")).unwrap();
            prop_assert_eq!(back, t);
        }
    }
}
