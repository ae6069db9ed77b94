//! Checkpoint file: `b"ADVCKPT1"`, u32 LE header length, JSON header, then every tensor
//! as little-endian f32 in header order.

use super::network::{Architecture, ClassifierModel};
use super::ModelError;
use crate::dsp::FrontendConfig;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"ADVCKPT1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    architecture: Architecture,
    frontend: FrontendConfig,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: ClassifierModel,
    pub frontend: FrontendConfig,
}

pub fn save_checkpoint(path: impl AsRef<Path>, model: &ClassifierModel, frontend: &FrontendConfig) -> Result<(), ModelError> {
    let named = model.named_tensors();
    let header = Header {
        architecture: model.architecture().clone(),
        frontend: frontend.clone(),
        tensors: named.iter().map(|(n, t)| TensorEntry { name: n.clone(), len: t.len() }).collect(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    let mut buf = Vec::with_capacity(16 + json.len() + 4 * named.iter().map(|t| t.1.len()).sum::<usize>());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&json);
    for (_, t) in &named {
        for &v in *t {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    std::fs::File::create(path)?.write_all(&buf)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint, ModelError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let err = |m: &str| ModelError::Checkpoint(m.to_string());
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(err("bad magic"));
    }
    let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = bytes.get(12..12 + hlen).ok_or_else(|| err("truncated header"))?;
    let header: Header = serde_json::from_slice(body).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    let mut model = ClassifierModel::new(header.architecture.clone(), 0);
    let mut payload = &bytes[12 + hlen..];
    {
        let slots = model.named_tensors_mut();
        if slots.len() != header.tensors.len() {
            return Err(err("tensor count does not match architecture"));
        }
        for (slot, entry) in slots.into_iter().zip(&header.tensors) {
            if slot.len() != entry.len {
                return Err(ModelError::Checkpoint(format!("tensor {} has wrong length", entry.name)));
            }
            if payload.len() < 4 * entry.len {
                return Err(err("truncated payload"));
            }
            for (v, chunk) in slot.iter_mut().zip(payload[..4 * entry.len].chunks_exact(4)) {
                *v = f32::from_le_bytes(chunk.try_into().unwrap()) as f64;
            }
            payload = &payload[4 * entry.len..];
        }
    }
    if !payload.is_empty() {
        return Err(err("trailing bytes after payload"));
    }
    model.validate()?;
    header.frontend.validate()?;
    Ok(Checkpoint { model, frontend: header.frontend })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_f32_rounded_parameters() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        let arch = Architecture { widths: [3, 4, 5, 6], ..Architecture::default() };
        let model = ClassifierModel::new(arch, 11);
        let mut fe = FrontendConfig::default();
        fe.norm_mean[0] = -42.5;
        save_checkpoint(&p, &model, &fe).unwrap();
        let ck = load_checkpoint(&p).unwrap();
        assert_eq!(ck.frontend, fe);
        assert_eq!(ck.model.architecture(), model.architecture());
        for ((_, a), (_, b)) in model.named_tensors().iter().zip(ck.model.named_tensors().iter()) {
            for (x, y) in a.iter().zip(b.iter()) {
                assert_eq!(*x as f32 as f64, *y);
            }
        }
        // header is readable JSON
        let bytes = std::fs::read(&p).unwrap();
        let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let v: serde_json::Value = serde_json::from_slice(&bytes[12..12 + hlen]).unwrap();
        assert_eq!(v["architecture"]["n_classes"], 12);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.ckpt");
        std::fs::write(&p, b"nonsense").unwrap();
        assert!(load_checkpoint(&p).is_err());
        let model = ClassifierModel::new(Architecture { widths: [2, 2, 2, 2], ..Architecture::default() }, 0);
        save_checkpoint(&p, &model, &FrontendConfig::default()).unwrap();
        let mut bytes = std::fs::read(&p).unwrap();
        bytes.truncate(bytes.len() - 3);
        std::fs::write(&p, &bytes).unwrap();
        assert!(load_checkpoint(&p).is_err());
    }
}
