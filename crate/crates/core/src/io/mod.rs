//! File formats: the NIfTI-1 subset for volumes, the dataset manifest,
//! the binary tensor container for trained models, and CSV emission for
//! cohort statistics.

pub mod manifest;
pub mod model_file;
pub mod nifti;
pub mod stats;

pub use manifest::{DatasetManifest, SubjectEntry};
pub use model_file::{load_tensor_file, save_tensor_file, NamedTensor, TensorFile, FILE_VERSION};
pub use nifti::{
    read_intensity, read_labels, read_raw, write_intensity, write_labels, write_raw, DataType,
    RawNifti,
};

use crate::vol::VolumeError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad header size {0}, expected 348")]
    BadHeaderSize(i32),
    #[error("bad magic {0:?}, expected \"n+1\\0\"")]
    BadMagic([u8; 4]),
    #[error("unsupported datatype code {0} (supported: 2, 4, 16)")]
    UnsupportedDatatype(i16),
    #[error("dim[0] = {0} outside supported range 1..=3")]
    BadDimCount(i16),
    #[error("dim[{axis}] = {value} is not positive")]
    BadDim { axis: usize, value: i16 },
    #[error("pixdim for axis {axis} = {value} is not positive and finite")]
    BadSpacing { axis: usize, value: f32 },
    #[error("vox_offset {0} is invalid")]
    BadVoxOffset(f32),
    #[error("{field} truncated: need {expected} bytes, file has {got}")]
    Truncated {
        field: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("payload length {got} does not match header ({expected} bytes)")]
    PayloadLength { expected: usize, got: usize },
    #[error("non-finite value at voxel {0}")]
    NonFiniteVoxel(usize),
    #[error("label file must be uint8, found datatype {0}")]
    LabelsNotUint8(i16),
    #[error("label file carries intensity scaling")]
    LabelsScaled,
    #[error("label code {0} outside tissue table")]
    BadLabel(u8),
    #[error("sform is not an axis permutation with flips")]
    UnsupportedOrientation,
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("manifest line {line}: {problem}")]
    Parse { line: usize, problem: String },
    #[error("duplicate subject id {0}")]
    DuplicateId(String),
    #[error("subject {id}: referenced file {path} does not exist")]
    MissingFile { id: String, path: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("bad model file magic")]
    BadMagic,
    #[error("model file version {found} incompatible with expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("tensor {name}: payload holds {got} values, manifest says {expected}")]
    TensorLength {
        name: String,
        expected: usize,
        got: usize,
    },
    #[error("model file truncated while reading {0}")]
    Truncated(&'static str),
    #[error("model manifest: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
