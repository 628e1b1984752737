//! Binary container for named f64 tensors with a JSON manifest.
//!
//! Layout: magic `HSTF`, u32 format version, u64 manifest length, manifest
//! JSON (kind, caller metadata, tensor names and shapes), then per tensor
//! a u64 element count followed by little-endian f64 values. Values round
//! trip bit-exactly; the version field gates incompatible readers.

use super::ModelFileError;
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const FILE_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"HSTF";

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl NamedTensor {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) -> NamedTensor {
        let t = NamedTensor {
            name: name.into(),
            shape,
            data,
        };
        debug_assert_eq!(t.shape.iter().product::<usize>(), t.data.len());
        t
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorFile {
    /// What the file holds, e.g. "network-model".
    pub kind: String,
    /// Caller-defined metadata (configuration, counters).
    pub meta: serde_json::Value,
    pub tensors: Vec<NamedTensor>,
}

#[derive(Serialize, Deserialize)]
struct ManifestJson {
    kind: String,
    meta: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

pub fn save_tensor_file(path: &Path, file: &TensorFile) -> Result<(), ModelFileError> {
    let manifest = ManifestJson {
        kind: file.kind.clone(),
        meta: file.meta.clone(),
        tensors: file
            .tensors
            .iter()
            .map(|t| TensorEntry {
                name: t.name.clone(),
                shape: t.shape.clone(),
            })
            .collect(),
    };
    let manifest_bytes = serde_json::to_vec(&manifest)?;
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(FILE_VERSION)?;
    w.write_u64::<LittleEndian>(manifest_bytes.len() as u64)?;
    w.write_all(&manifest_bytes)?;
    for t in &file.tensors {
        w.write_u64::<LittleEndian>(t.data.len() as u64)?;
        for &v in &t.data {
            w.write_f64::<LittleEndian>(v)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_tensor_file(path: &Path) -> Result<TensorFile, ModelFileError> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| ModelFileError::Truncated("magic"))?;
    if &magic != MAGIC {
        return Err(ModelFileError::BadMagic);
    }
    let version = r
        .read_u32::<LittleEndian>()
        .map_err(|_| ModelFileError::Truncated("version"))?;
    if version != FILE_VERSION {
        return Err(ModelFileError::VersionMismatch {
            found: version,
            expected: FILE_VERSION,
        });
    }
    let manifest_len = r
        .read_u64::<LittleEndian>()
        .map_err(|_| ModelFileError::Truncated("manifest length"))? as usize;
    let mut manifest_bytes = vec![0u8; manifest_len];
    r.read_exact(&mut manifest_bytes)
        .map_err(|_| ModelFileError::Truncated("manifest"))?;
    let manifest: ManifestJson = serde_json::from_slice(&manifest_bytes)?;
    let mut tensors = Vec::with_capacity(manifest.tensors.len());
    for entry in manifest.tensors {
        let expected: usize = entry.shape.iter().product();
        let count = r
            .read_u64::<LittleEndian>()
            .map_err(|_| ModelFileError::Truncated("tensor length"))? as usize;
        if count != expected {
            return Err(ModelFileError::TensorLength {
                name: entry.name,
                expected,
                got: count,
            });
        }
        let mut data = vec![0.0f64; count];
        r.read_f64_into::<LittleEndian>(&mut data)
            .map_err(|_| ModelFileError::Truncated("tensor data"))?;
        tensors.push(NamedTensor {
            name: entry.name,
            shape: entry.shape,
            data,
        });
    }
    Ok(TensorFile {
        kind: manifest.kind,
        meta: manifest.meta,
        tensors,
    })
}
