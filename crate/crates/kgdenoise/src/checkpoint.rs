//! Tensor container files.
//!
//! Layout: the line `DLPCKPT1\n`, a little-endian `u64` manifest length, the
//! manifest as UTF-8 JSON, then the raw little-endian tensor data. The
//! manifest is `{"meta": …, "tensors": [{"name", "shape", "precision",
//! "offset", "frozen"}]}` with offsets counted from the start of the data
//! section.

use std::io::{Read, Write};
use std::path::Path;

use kgdenoise_core::pretrain::{EmbeddingTable, PretrainError};
use kgdenoise_core::tensor::{ParamStore, Precision, Tensor, TensorError};
use serde::{Deserialize, Serialize};

pub const MAGIC: &[u8] = b"DLPCKPT1\n";

/// Manifests beyond this size are rejected before allocation.
const MAX_MANIFEST: u64 = 1 << 30;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint: bad header")]
    BadMagic,
    #[error("bad manifest: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error("manifest length {0} is implausible")]
    ManifestLength(u64),
    #[error("tensor {name}: data range {start}..{end} outside the {len}-byte data section")]
    Truncated { name: String, start: u64, end: u64, len: u64 },
    #[error("tensor {0}: {1}")]
    Tensor(String, TensorError),
    #[error("missing tensor {0}")]
    Missing(String),
    #[error(transparent)]
    Table(#[from] PretrainError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub precision: Precision,
    pub offset: u64,
    #[serde(default)]
    pub frozen: bool,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    meta: serde_json::Value,
    tensors: Vec<ManifestEntry>,
}

/// A tensor as stored. Values are held in 64-bit; a 32-bit entry round-trips
/// exactly because it was narrowed on write.
#[derive(Clone, Debug, PartialEq)]
pub struct StoredTensor {
    pub name: String,
    pub precision: Precision,
    pub frozen: bool,
    pub value: Tensor<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: serde_json::Value,
    pub tensors: Vec<StoredTensor>,
}

impl Checkpoint {
    pub fn new(meta: serde_json::Value) -> Self {
        Checkpoint { meta, tensors: Vec::new() }
    }

    pub fn push(&mut self, name: &str, value: Tensor<f64>, precision: Precision, frozen: bool) {
        let value = match precision {
            Precision::F32 => value.cast::<f32>().cast::<f64>(),
            Precision::F64 => value,
        };
        self.tensors.push(StoredTensor { name: name.to_string(), precision, frozen, value });
    }

    pub fn get(&self, name: &str) -> Result<&StoredTensor, CheckpointError> {
        self.tensors.iter().find(|t| t.name == name).ok_or_else(|| CheckpointError::Missing(name.to_string()))
    }

    pub fn from_params(params: &ParamStore<f64>, precision: Precision, meta: serde_json::Value) -> Self {
        let mut ck = Checkpoint::new(meta);
        for (_, p) in params.iter() {
            ck.push(&p.name, p.value.clone(), precision, p.frozen);
        }
        ck
    }

    pub fn to_params(&self) -> Result<ParamStore<f64>, CheckpointError> {
        let mut store = ParamStore::new();
        for t in &self.tensors {
            let r = if t.frozen { store.add_frozen(&t.name, t.value.clone()) } else { store.add(&t.name, t.value.clone()) };
            r.map_err(|e| CheckpointError::Tensor(t.name.clone(), e))?;
        }
        Ok(store)
    }

    /// Rotation embeddings as `entity` and `phase` tensors.
    pub fn from_table(table: &EmbeddingTable, meta: serde_json::Value) -> Self {
        let mut ck = Checkpoint::new(meta);
        ck.push("entity", table.entity_tensor(), Precision::F64, false);
        ck.push("phase", table.phase_tensor(), Precision::F64, false);
        ck
    }

    pub fn to_table(&self) -> Result<EmbeddingTable, CheckpointError> {
        Ok(EmbeddingTable::from_tensors(&self.get("entity")?.value, &self.get("phase")?.value)?)
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<(), CheckpointError> {
        let mut entries = Vec::with_capacity(self.tensors.len());
        let mut data = Vec::new();
        for t in &self.tensors {
            entries.push(ManifestEntry {
                name: t.name.clone(),
                shape: t.value.shape().to_vec(),
                precision: t.precision,
                offset: data.len() as u64,
                frozen: t.frozen,
            });
            for &v in t.value.data() {
                match t.precision {
                    Precision::F32 => data.extend_from_slice(&(v as f32).to_le_bytes()),
                    Precision::F64 => data.extend_from_slice(&v.to_le_bytes()),
                }
            }
        }
        let manifest = serde_json::to_vec(&Manifest { meta: self.meta.clone(), tensors: entries })?;
        w.write_all(MAGIC)?;
        w.write_all(&(manifest.len() as u64).to_le_bytes())?;
        w.write_all(&manifest)?;
        w.write_all(&data)?;
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self, CheckpointError> {
        let mut magic = [0u8; MAGIC.len()];
        r.read_exact(&mut magic).map_err(|_| CheckpointError::BadMagic)?;
        if magic != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let len = u64::from_le_bytes(len);
        if len > MAX_MANIFEST {
            return Err(CheckpointError::ManifestLength(len));
        }
        let mut manifest = vec![0u8; len as usize];
        r.read_exact(&mut manifest)?;
        let manifest: Manifest = serde_json::from_slice(&manifest)?;
        let mut data = Vec::new();
        r.read_to_end(&mut data)?;
        let mut tensors = Vec::with_capacity(manifest.tensors.len());
        for e in manifest.tensors {
            let numel: usize = e.shape.iter().product();
            let width = e.precision.byte_width();
            let start = e.offset;
            let end = numel
                .checked_mul(width)
                .and_then(|b| start.checked_add(b as u64))
                .unwrap_or(u64::MAX);
            if end > data.len() as u64 {
                return Err(CheckpointError::Truncated { name: e.name, start, end, len: data.len() as u64 });
            }
            let bytes = &data[start as usize..end as usize];
            let values: Vec<f64> = match e.precision {
                Precision::F32 => bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect(),
                Precision::F64 => bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect(),
            };
            let value = Tensor::new(e.shape, values).map_err(|err| CheckpointError::Tensor(e.name.clone(), err))?;
            tensors.push(StoredTensor { name: e.name, precision: e.precision, frozen: e.frozen, value });
        }
        Ok(Checkpoint { meta: manifest.meta, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let bytes = std::fs::read(path)?;
        Self::read_from(&mut bytes.as_slice())
    }
}
