//! Checkpoint serialization: a JSON header (architecture, feature config,
//! training config, seed) followed by named f32 tensor records. The payload
//! is raw little-endian f32, so save -> load reproduces outputs bit-exactly.
//!
//! Layout: magic "GMSEG001" | u32 header_len | header JSON | records, each
//! u32 name_len | name | u32 rank | u32 dims... | f32 payload.

use std::fs::File;
use std::io::{self, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{ArchitectureConfig, Model};
use super::tensor::Tensor;
use super::{NetError, NetResult};
use crate::features::FeatureConfig;

const MAGIC: &[u8; 8] = b"GMSEG001";

/// Everything needed to rebuild the model and its feature frontend.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub architecture: ArchitectureConfig,
    pub feature_config: FeatureConfig,
    /// Training settings serialized for provenance (free-form JSON).
    #[serde(default)]
    pub training_config: Option<serde_json::Value>,
    pub seed: u64,
}

/// In-memory checkpoint: header plus named parameter tensors.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub tensors: Vec<(String, Tensor<f32>)>,
}

impl Checkpoint {
    pub fn from_model(model: &mut Model<f32>, header: CheckpointHeader) -> Self {
        let tensors = model
            .named_parameters_mut()
            .iter()
            .map(|(name, p)| (name.clone(), Tensor::from_vec(p.shape(), p.data().to_vec())))
            .collect();
        Checkpoint { header, tensors }
    }

    /// Rebuild a model; every tensor must match the architecture's shapes.
    pub fn into_model(self) -> NetResult<Model<f32>> {
        let mut model = Model::<f32>::init(&self.header.architecture, self.header.seed);
        let mut loaded = 0usize;
        {
            let mut params = model.named_parameters_mut();
            for (name, tensor) in &self.tensors {
                let slot = params.iter_mut().find(|(n, _)| n == name).ok_or_else(|| {
                    NetError::ArchitectureMismatch(format!("unexpected tensor `{name}`"))
                })?;
                if slot.1.shape() != tensor.shape() {
                    return Err(NetError::ArchitectureMismatch(format!(
                        "tensor `{name}` has shape {:?}, architecture wants {:?}",
                        tensor.shape(),
                        slot.1.shape()
                    )));
                }
                slot.1.data_mut().copy_from_slice(tensor.data());
                loaded += 1;
            }
            if loaded != params.len() {
                return Err(NetError::ArchitectureMismatch(format!(
                    "checkpoint provides {loaded} tensors, architecture needs {}",
                    params.len()
                )));
            }
        }
        Ok(model)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header).expect("header serialization");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for (name, tensor) in &self.tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(tensor.shape().len() as u32).to_le_bytes());
            for &d in tensor.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in tensor.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> NetResult<Self> {
        let eof = || NetError::Io(io::Error::new(io::ErrorKind::UnexpectedEof, "truncated checkpoint"));
        if bytes.len() < 12 {
            return Err(eof());
        }
        if &bytes[0..8] != MAGIC {
            return Err(NetError::BadMagic);
        }
        let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let mut pos = 12;
        let header_bytes = bytes.get(pos..pos + header_len).ok_or_else(eof)?;
        let header: CheckpointHeader = serde_json::from_slice(header_bytes)
            .map_err(|e| NetError::Corrupt(format!("bad header JSON: {e}")))?;
        pos += header_len;

        let mut tensors = Vec::new();
        while pos < bytes.len() {
            let name_len =
                u32::from_le_bytes(bytes.get(pos..pos + 4).ok_or_else(eof)?.try_into().unwrap())
                    as usize;
            pos += 4;
            let name = String::from_utf8(bytes.get(pos..pos + name_len).ok_or_else(eof)?.to_vec())
                .map_err(|_| NetError::Corrupt("tensor name not UTF-8".into()))?;
            pos += name_len;
            let rank =
                u32::from_le_bytes(bytes.get(pos..pos + 4).ok_or_else(eof)?.try_into().unwrap())
                    as usize;
            pos += 4;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                let d = u32::from_le_bytes(
                    bytes.get(pos..pos + 4).ok_or_else(eof)?.try_into().unwrap(),
                ) as usize;
                pos += 4;
                shape.push(d);
            }
            let numel: usize = shape.iter().product();
            let payload = bytes.get(pos..pos + numel * 4).ok_or_else(eof)?;
            pos += numel * 4;
            let data: Vec<f32> = payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            tensors.push((name, Tensor::from_vec(&shape, data)));
        }
        Ok(Checkpoint { header, tensors })
    }
}

pub fn save_checkpoint(checkpoint: &Checkpoint, path: &Path) -> NetResult<()> {
    let mut file = File::create(path).map_err(NetError::Io)?;
    file.write_all(&checkpoint.to_bytes()).map_err(NetError::Io)
}

pub fn load_checkpoint(path: &Path) -> NetResult<Checkpoint> {
    let mut bytes = Vec::new();
    File::open(path).map_err(NetError::Io)?.read_to_end(&mut bytes).map_err(NetError::Io)?;
    Checkpoint::from_bytes(&bytes)
}
