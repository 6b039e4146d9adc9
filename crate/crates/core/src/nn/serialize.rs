//! Versioned tensor container. See `docs/model-format.md` for the byte
//! layout.

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use super::NnError;

pub const MAGIC: &[u8; 4] = b"RMKM";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerKind {
    Linear,
    BatchNorm,
    ReLU,
    Dropout,
    Sigmoid,
    Softmax,
}

/// One stored tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub name: String,
    pub kind: LayerKind,
    pub tensor: Tensor<f32>,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    name: String,
    kind: LayerKind,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    meta: serde_json::Value,
    layers: Vec<Entry>,
}

pub fn encode(meta: serde_json::Value, layers: &[LayerParams]) -> Vec<u8> {
    let header = Header {
        format_version: FORMAT_VERSION,
        meta,
        layers: layers
            .iter()
            .map(|l| Entry {
                name: l.name.clone(),
                kind: l.kind,
                shape: l.tensor.shape.clone(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(12 + json.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for l in layers {
        for v in &l.tensor.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn bad(msg: impl Into<String>) -> NnError {
    NnError::Format(msg.into())
}

fn read_u32(bytes: &[u8], at: usize) -> Result<u32, NnError> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| bad("truncated header"))
}

pub fn decode(bytes: &[u8]) -> Result<(serde_json::Value, Vec<LayerParams>), NnError> {
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(bad("bad magic"));
    }
    let version = read_u32(bytes, 4)?;
    if version != FORMAT_VERSION {
        return Err(bad(format!("unsupported format version {version}")));
    }
    let hlen = read_u32(bytes, 8)? as usize;
    let json = bytes
        .get(12..12 + hlen)
        .ok_or_else(|| bad("truncated header"))?;
    let header: Header =
        serde_json::from_slice(json).map_err(|e| bad(format!("header: {e}")))?;
    if header.format_version != version {
        return Err(bad("header version disagrees with preamble"));
    }
    let mut at = 12 + hlen;
    let mut layers = Vec::with_capacity(header.layers.len());
    for e in header.layers {
        let n: usize = e.shape.iter().product();
        let raw = bytes
            .get(at..at + 4 * n)
            .ok_or_else(|| bad(format!("payload for {} truncated", e.name)))?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        at += 4 * n;
        layers.push(LayerParams {
            name: e.name,
            kind: e.kind,
            tensor: Tensor::new(e.shape, data)?,
        });
    }
    if at != bytes.len() {
        return Err(bad("trailing bytes after payload"));
    }
    Ok((header.meta, layers))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<LayerParams> {
        vec![
            LayerParams {
                name: "a.w".into(),
                kind: LayerKind::Linear,
                tensor: Tensor::matrix(2, 2, vec![1.0, -2.5, 3.0, 0.125]),
            },
            LayerParams {
                name: "bn.gamma".into(),
                kind: LayerKind::BatchNorm,
                tensor: Tensor::from_vec(vec![f32::MIN_POSITIVE]),
            },
        ]
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let bytes = encode(serde_json::json!({"n_bits": 4}), &sample());
        let (meta, layers) = decode(&bytes).unwrap();
        assert_eq!(meta["n_bits"], 4);
        assert_eq!(layers, sample());
        assert_eq!(encode(meta, &layers), bytes);
    }

    #[test]
    fn little_endian_payload() {
        let bytes = encode(serde_json::Value::Null, &sample());
        let tail = &bytes[bytes.len() - 4..];
        assert_eq!(tail, f32::MIN_POSITIVE.to_le_bytes());
    }

    #[test]
    fn rejects_corruption() {
        let bytes = encode(serde_json::Value::Null, &sample());
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        let mut wrong = bytes.clone();
        wrong[4] = 9;
        assert!(matches!(decode(&wrong), Err(NnError::Format(_))));
        assert!(decode(b"nope").is_err());
    }
}
