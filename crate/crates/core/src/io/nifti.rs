//! Minimal NIfTI-1 reader/writer.
//!
//! Supported subset: 348-byte little-endian header, magic "n+1\0", no
//! extensions, datatypes uint8 (2), int16 (4) and float32 (16), optional
//! gzip container selected by a `.gz` suffix. The sform may encode an axis
//! permutation and/or flips; reading normalizes voxel data to the
//! canonical +x/+y/+z layout. Anything fancier is out of scope.

use super::FormatError;
use crate::vol::{Grid, IntensityVolume, LabelVolume, Modality, Tissue};
use byteorder::{ByteOrder, LittleEndian, ReadBytesExt};
use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use std::io::{Read, Write};
use std::path::Path;

pub const HEADER_SIZE: usize = 348;
pub const VOX_OFFSET: usize = 352;
pub const MAGIC: &[u8; 4] = b"n+1\0";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataType {
    Uint8,
    Int16,
    Float32,
}

impl DataType {
    pub fn code(self) -> i16 {
        match self {
            DataType::Uint8 => 2,
            DataType::Int16 => 4,
            DataType::Float32 => 16,
        }
    }

    pub fn from_code(code: i16) -> Result<DataType, FormatError> {
        match code {
            2 => Ok(DataType::Uint8),
            4 => Ok(DataType::Int16),
            16 => Ok(DataType::Float32),
            other => Err(FormatError::UnsupportedDatatype(other)),
        }
    }

    pub fn byte_size(self) -> usize {
        match self {
            DataType::Uint8 => 1,
            DataType::Int16 => 2,
            DataType::Float32 => 4,
        }
    }
}

/// Parsed header fields of the supported subset, plus the raw payload.
#[derive(Debug, Clone)]
pub struct RawNifti {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub datatype: DataType,
    pub scl_slope: f32,
    pub scl_inter: f32,
    /// First three rows of the voxel-to-world affine (sform); identity
    /// scaling when sform_code is 0.
    pub srow: [[f32; 4]; 3],
    pub sform_code: i16,
    pub payload: Vec<u8>,
}

impl RawNifti {
    pub fn with_canonical_orientation(
        dims: [usize; 3],
        spacing: [f64; 3],
        datatype: DataType,
        payload: Vec<u8>,
    ) -> RawNifti {
        let srow = [
            [spacing[0] as f32, 0.0, 0.0, 0.0],
            [0.0, spacing[1] as f32, 0.0, 0.0],
            [0.0, 0.0, spacing[2] as f32, 0.0],
        ];
        RawNifti {
            dims,
            spacing,
            datatype,
            scl_slope: 1.0,
            scl_inter: 0.0,
            srow,
            sform_code: 1,
            payload,
        }
    }
}

fn read_all(path: &Path) -> Result<Vec<u8>, FormatError> {
    let bytes = std::fs::read(path)?;
    if path.extension().is_some_and(|e| e == "gz") {
        let mut out = Vec::new();
        GzDecoder::new(&bytes[..]).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(bytes)
    }
}

fn write_all(path: &Path, bytes: &[u8]) -> Result<(), FormatError> {
    if path.extension().is_some_and(|e| e == "gz") {
        let file = std::fs::File::create(path)?;
        let mut enc = GzEncoder::new(file, flate2::Compression::fast());
        enc.write_all(bytes)?;
        enc.finish()?;
    } else {
        std::fs::write(path, bytes)?;
    }
    Ok(())
}

/// Read a file's header and payload without scaling or orientation
/// handling.
pub fn read_raw(path: &Path) -> Result<RawNifti, FormatError> {
    let bytes = read_all(path)?;
    if bytes.len() < HEADER_SIZE {
        return Err(FormatError::Truncated {
            field: "header",
            expected: HEADER_SIZE,
            got: bytes.len(),
        });
    }
    let sizeof_hdr = LittleEndian::read_i32(&bytes[0..4]);
    if sizeof_hdr != HEADER_SIZE as i32 {
        return Err(FormatError::BadHeaderSize(sizeof_hdr));
    }
    let magic = &bytes[344..348];
    if magic != MAGIC {
        return Err(FormatError::BadMagic([
            magic[0], magic[1], magic[2], magic[3],
        ]));
    }
    let ndim = LittleEndian::read_i16(&bytes[40..42]);
    if !(1..=3).contains(&ndim) {
        return Err(FormatError::BadDimCount(ndim));
    }
    let mut dims = [1usize; 3];
    for (i, d) in dims.iter_mut().enumerate().take(ndim as usize) {
        let raw = LittleEndian::read_i16(&bytes[42 + 2 * i..44 + 2 * i]);
        if raw < 1 {
            return Err(FormatError::BadDim { axis: i, value: raw });
        }
        *d = raw as usize;
    }
    let datatype = DataType::from_code(LittleEndian::read_i16(&bytes[70..72]))?;
    let mut spacing = [1.0f64; 3];
    for (i, s) in spacing.iter_mut().enumerate() {
        let raw = LittleEndian::read_f32(&bytes[80 + 4 * i..84 + 4 * i]);
        if !(raw.is_finite() && raw > 0.0) {
            return Err(FormatError::BadSpacing { axis: i, value: raw });
        }
        *s = raw as f64;
    }
    let vox_offset = LittleEndian::read_f32(&bytes[108..112]);
    if !(vox_offset.is_finite() && vox_offset >= HEADER_SIZE as f32) {
        return Err(FormatError::BadVoxOffset(vox_offset));
    }
    let offset = vox_offset as usize;
    let scl_slope = LittleEndian::read_f32(&bytes[112..116]);
    let scl_inter = LittleEndian::read_f32(&bytes[116..120]);
    let sform_code = LittleEndian::read_i16(&bytes[254..256]);
    let mut srow = [[0.0f32; 4]; 3];
    for (r, row) in srow.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            let at = 280 + 16 * r + 4 * c;
            *v = LittleEndian::read_f32(&bytes[at..at + 4]);
        }
    }
    let voxels = dims[0] * dims[1] * dims[2];
    let expected = voxels * datatype.byte_size();
    if bytes.len() < offset + expected {
        return Err(FormatError::Truncated {
            field: "payload",
            expected: offset + expected,
            got: bytes.len(),
        });
    }
    Ok(RawNifti {
        dims,
        spacing,
        datatype,
        scl_slope,
        scl_inter,
        srow,
        sform_code,
        payload: bytes[offset..offset + expected].to_vec(),
    })
}

/// Write header and payload exactly as given (canonical orientation).
pub fn write_raw(path: &Path, raw: &RawNifti) -> Result<(), FormatError> {
    let voxels = raw.dims[0] * raw.dims[1] * raw.dims[2];
    let expected = voxels * raw.datatype.byte_size();
    if raw.payload.len() != expected {
        return Err(FormatError::PayloadLength {
            expected,
            got: raw.payload.len(),
        });
    }
    let mut bytes = vec![0u8; VOX_OFFSET + raw.payload.len()];
    LittleEndian::write_i32(&mut bytes[0..4], HEADER_SIZE as i32);
    bytes[39] = 'r' as u8; // dim_info unused; regular flag per convention
    LittleEndian::write_i16(&mut bytes[40..42], 3);
    for i in 0..3 {
        LittleEndian::write_i16(&mut bytes[42 + 2 * i..44 + 2 * i], raw.dims[i] as i16);
    }
    for i in 3..7 {
        LittleEndian::write_i16(&mut bytes[42 + 2 * i..44 + 2 * i], 1);
    }
    LittleEndian::write_i16(&mut bytes[70..72], raw.datatype.code());
    LittleEndian::write_i16(&mut bytes[72..74], (raw.datatype.byte_size() * 8) as i16);
    LittleEndian::write_f32(&mut bytes[76..80], 1.0); // pixdim[0] = qfac
    for i in 0..3 {
        LittleEndian::write_f32(&mut bytes[80 + 4 * i..84 + 4 * i], raw.spacing[i] as f32);
    }
    LittleEndian::write_f32(&mut bytes[108..112], VOX_OFFSET as f32);
    LittleEndian::write_f32(&mut bytes[112..116], raw.scl_slope);
    LittleEndian::write_f32(&mut bytes[116..120], raw.scl_inter);
    bytes[123] = 2; // xyzt_units: millimetres
    LittleEndian::write_i16(&mut bytes[254..256], raw.sform_code);
    for (r, row) in raw.srow.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            let at = 280 + 16 * r + 4 * c;
            LittleEndian::write_f32(&mut bytes[at..at + 4], *v);
        }
    }
    bytes[344..348].copy_from_slice(MAGIC);
    bytes[VOX_OFFSET..].copy_from_slice(&raw.payload);
    write_all(path, &bytes)
}

/// Axis permutation with flips decoded from an sform matrix.
struct Orientation {
    /// world axis receiving each input axis
    world_axis: [usize; 3],
    flip: [bool; 3],
}

fn decode_orientation(raw: &RawNifti) -> Result<Orientation, FormatError> {
    if raw.sform_code <= 0 {
        return Ok(Orientation {
            world_axis: [0, 1, 2],
            flip: [false; 3],
        });
    }
    let mut world_axis = [usize::MAX; 3];
    let mut flip = [false; 3];
    let mut claimed = [false; 3];
    for j in 0..3 {
        let col: Vec<f32> = (0..3).map(|i| raw.srow[i][j]).collect();
        let (imax, &vmax) = col
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
            .unwrap();
        // Off-axis components beyond float fuzz mean a rotation we do not
        // support.
        for (i, &v) in col.iter().enumerate() {
            if i != imax && v.abs() > 1e-4 * vmax.abs().max(1.0) {
                return Err(FormatError::UnsupportedOrientation);
            }
        }
        if vmax == 0.0 || claimed[imax] {
            return Err(FormatError::UnsupportedOrientation);
        }
        claimed[imax] = true;
        world_axis[j] = imax;
        flip[j] = vmax < 0.0;
    }
    Ok(Orientation { world_axis, flip })
}

/// Reorder scaled voxel values into the canonical layout.
fn canonicalize<T: Copy>(raw: &RawNifti, values: &[T]) -> Result<(Grid, Vec<T>), FormatError> {
    let orient = decode_orientation(raw)?;
    let mut out_dims = [0usize; 3];
    let mut out_spacing = [0.0f64; 3];
    for j in 0..3 {
        out_dims[orient.world_axis[j]] = raw.dims[j];
        out_spacing[orient.world_axis[j]] = raw.spacing[j];
    }
    let out_grid = Grid::new(out_dims, out_spacing).map_err(|_| FormatError::UnsupportedOrientation)?;
    let in_strides = [1usize, raw.dims[0], raw.dims[0] * raw.dims[1]];
    let mut out = Vec::with_capacity(values.len());
    for z in 0..out_dims[2] {
        for y in 0..out_dims[1] {
            for x in 0..out_dims[0] {
                let c = [x, y, z];
                let mut idx = 0usize;
                for j in 0..3 {
                    let mut v = c[orient.world_axis[j]];
                    if orient.flip[j] {
                        v = raw.dims[j] - 1 - v;
                    }
                    idx += v * in_strides[j];
                }
                out.push(values[idx]);
            }
        }
    }
    Ok((out_grid, out))
}

fn decode_values(raw: &RawNifti) -> Result<Vec<f32>, FormatError> {
    let slope = if raw.scl_slope == 0.0 { 1.0 } else { raw.scl_slope };
    let inter = raw.scl_inter;
    let n = raw.dims[0] * raw.dims[1] * raw.dims[2];
    let mut values = Vec::with_capacity(n);
    let mut cursor = &raw.payload[..];
    for i in 0..n {
        let v = match raw.datatype {
            DataType::Uint8 => cursor.read_u8()? as f32,
            DataType::Int16 => cursor.read_i16::<LittleEndian>()? as f32,
            DataType::Float32 => cursor.read_f32::<LittleEndian>()?,
        };
        let scaled = v * slope + inter;
        if !scaled.is_finite() {
            return Err(FormatError::NonFiniteVoxel(i));
        }
        values.push(scaled);
    }
    Ok(values)
}

/// Read an intensity volume, applying slope/intercept scaling and
/// normalizing axis order.
pub fn read_intensity(path: &Path, modality: Modality) -> Result<IntensityVolume, FormatError> {
    let raw = read_raw(path)?;
    let values = decode_values(&raw)?;
    let (grid, data) = canonicalize(&raw, &values)?;
    IntensityVolume::new(grid, data, modality).map_err(FormatError::Volume)
}

/// Read a label volume. Requires uint8 data without intensity scaling.
pub fn read_labels(path: &Path) -> Result<LabelVolume, FormatError> {
    let raw = read_raw(path)?;
    if raw.datatype != DataType::Uint8 {
        return Err(FormatError::LabelsNotUint8(raw.datatype.code()));
    }
    if !(raw.scl_slope == 0.0 || raw.scl_slope == 1.0) || raw.scl_inter != 0.0 {
        return Err(FormatError::LabelsScaled);
    }
    if let Some(&bad) = raw
        .payload
        .iter()
        .find(|&&b| b as usize >= Tissue::COUNT)
    {
        return Err(FormatError::BadLabel(bad));
    }
    let (grid, data) = canonicalize(&raw, &raw.payload)?;
    LabelVolume::new(grid, data).map_err(FormatError::Volume)
}

/// Write an intensity volume as float32 with identity scaling.
pub fn write_intensity(path: &Path, vol: &IntensityVolume) -> Result<(), FormatError> {
    let mut payload = vec![0u8; vol.data().len() * 4];
    for (chunk, &v) in payload.chunks_exact_mut(4).zip(vol.data()) {
        LittleEndian::write_f32(chunk, v);
    }
    let grid = vol.grid();
    write_raw(
        path,
        &RawNifti::with_canonical_orientation(grid.dims, grid.spacing, DataType::Float32, payload),
    )
}

/// Write a label volume as uint8.
pub fn write_labels(path: &Path, labels: &LabelVolume) -> Result<(), FormatError> {
    let grid = labels.grid();
    write_raw(
        path,
        &RawNifti::with_canonical_orientation(
            grid.dims,
            grid.spacing,
            DataType::Uint8,
            labels.labels().to_vec(),
        ),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use tempfile::tempdir;

    #[test]
    fn bad_header_size_is_reported() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.nii");
        let mut bytes = vec![0u8; VOX_OFFSET];
        LittleEndian::write_i32(&mut bytes[0..4], 340);
        bytes[344..348].copy_from_slice(MAGIC);
        std::fs::write(&path, &bytes).unwrap();
        match read_raw(&path) {
            Err(FormatError::BadHeaderSize(340)) => {}
            other => panic!("expected bad header size, got {other:?}"),
        }
        assert!(FormatError::BadHeaderSize(340)
            .to_string()
            .contains("bad header size"));
    }

    #[test]
    fn bad_magic_is_reported() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.nii");
        let mut bytes = vec![0u8; VOX_OFFSET];
        LittleEndian::write_i32(&mut bytes[0..4], 348);
        bytes[344..348].copy_from_slice(b"nix\0");
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_raw(&path), Err(FormatError::BadMagic(_))));
    }

    #[test]
    fn float_volume_roundtrips_bit_exactly() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("vol.nii");
        let grid = Grid::new([4, 4, 4], [1.0, 1.5, 2.0]).unwrap();
        let data: Vec<f32> = (0..64).map(|i| i as f32 * 0.25 - 3.0).collect();
        let vol = IntensityVolume::new(grid, data, Modality::T1).unwrap();
        write_intensity(&path, &vol).unwrap();
        let back = read_intensity(&path, Modality::T1).unwrap();
        assert_eq!(back, vol);
    }

    #[test]
    fn gzip_roundtrip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("vol.nii.gz");
        let grid = Grid::cube(5, 0.5).unwrap();
        let labels: Vec<u8> = (0..125).map(|i| (i % 16) as u8).collect();
        let vol = LabelVolume::new(grid, labels).unwrap();
        write_labels(&path, &vol).unwrap();
        assert_eq!(read_labels(&path).unwrap(), vol);
    }

    #[test]
    fn int16_scaling_applies() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("scaled.nii");
        let mut payload = vec![0u8; 2];
        LittleEndian::write_i16(&mut payload, 3);
        let mut raw =
            RawNifti::with_canonical_orientation([1, 1, 1], [1.0; 3], DataType::Int16, payload);
        raw.scl_slope = 2.0;
        raw.scl_inter = 1.0;
        write_raw(&path, &raw).unwrap();
        let vol = read_intensity(&path, Modality::T2).unwrap();
        assert_eq!(vol.data()[0], 7.0);
    }

    #[test]
    fn nan_payload_names_voxel() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("nan.nii");
        let mut payload = vec![0u8; 8 * 4];
        for (i, chunk) in payload.chunks_exact_mut(4).enumerate() {
            LittleEndian::write_f32(chunk, if i == 5 { f32::NAN } else { 1.0 });
        }
        let raw =
            RawNifti::with_canonical_orientation([2, 2, 2], [1.0; 3], DataType::Float32, payload);
        write_raw(&path, &raw).unwrap();
        match read_intensity(&path, Modality::T1) {
            Err(FormatError::NonFiniteVoxel(5)) => {}
            other => panic!("expected NonFiniteVoxel(5), got {other:?}"),
        }
    }

    #[test]
    fn truncated_payload_is_reported() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("short.nii");
        let raw = RawNifti::with_canonical_orientation(
            [4, 4, 4],
            [1.0; 3],
            DataType::Uint8,
            vec![0u8; 64],
        );
        write_raw(&path, &raw).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 10]).unwrap();
        assert!(matches!(
            read_raw(&path),
            Err(FormatError::Truncated { field: "payload", .. })
        ));
    }

    #[test]
    fn unsupported_datatype_is_reported() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("f64.nii");
        let raw =
            RawNifti::with_canonical_orientation([1, 1, 1], [1.0; 3], DataType::Uint8, vec![0]);
        write_raw(&path, &raw).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        LittleEndian::write_i16(&mut bytes[70..72], 64); // float64
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            read_raw(&path),
            Err(FormatError::UnsupportedDatatype(64))
        ));
    }

    /// Oracle for orientation: map every voxel through the affine and
    /// compare values at matching world positions.
    #[test]
    fn permuted_and_flipped_axes_normalize() {
        let dir = tempdir().unwrap();
        let dims = [3usize, 4, 5];
        let spacing = [1.0f64, 2.0, 0.5];
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let values: Vec<f32> = (0..60).map(|_| rng.gen_range(0.0..1.0)).collect();

        // Storage axis 0 -> world y (flipped), 1 -> world z, 2 -> world x.
        let mut srow = [[0.0f32; 4]; 3];
        srow[1][0] = -(spacing[0] as f32);
        srow[2][1] = spacing[1] as f32;
        srow[0][2] = spacing[2] as f32;

        let mut payload = vec![0u8; 60 * 4];
        for (chunk, &v) in payload.chunks_exact_mut(4).zip(&values) {
            LittleEndian::write_f32(chunk, v);
        }
        let raw = RawNifti {
            dims,
            spacing,
            datatype: DataType::Float32,
            scl_slope: 1.0,
            scl_inter: 0.0,
            srow,
            sform_code: 1,
            payload,
        };
        let path = dir.path().join("oriented.nii");
        write_raw(&path, &raw).unwrap();
        let vol = read_intensity(&path, Modality::T1).unwrap();
        // world dims: x gets storage axis 2 (5), y axis 0 (3), z axis 1 (4)
        assert_eq!(vol.grid().dims, [5, 3, 4]);
        assert_eq!(vol.grid().spacing, [0.5, 1.0, 2.0]);
        for i0 in 0..dims[0] {
            for i1 in 0..dims[1] {
                for i2 in 0..dims[2] {
                    let stored = values[i0 + dims[0] * (i1 + dims[1] * i2)];
                    // world voxel: x = i2, y = flipped i0, z = i1
                    let got = vol.at(i2, dims[0] - 1 - i0, i1);
                    assert_eq!(got, stored);
                }
            }
        }
    }

    #[test]
    fn random_label_roundtrips() {
        let dir = tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for case in 0..5 {
            let grid = Grid::new(
                [
                    rng.gen_range(1..9),
                    rng.gen_range(1..9),
                    rng.gen_range(1..9),
                ],
                [
                    rng.gen_range(0.25..2.0),
                    rng.gen_range(0.25..2.0),
                    rng.gen_range(0.25..2.0),
                ],
            )
            .unwrap();
            let labels: Vec<u8> = (0..grid.len()).map(|_| rng.gen_range(0..16)).collect();
            let vol = LabelVolume::new(grid, labels).unwrap();
            let path = dir.path().join(format!("case{case}.nii"));
            write_labels(&path, &vol).unwrap();
            let back = read_labels(&path).unwrap();
            assert_eq!(back.labels(), vol.labels());
            assert_eq!(back.grid().dims, vol.grid().dims);
            // Spacing goes through f32 in the header.
            for a in 0..3 {
                assert_eq!(back.grid().spacing[a], vol.grid().spacing[a] as f32 as f64);
            }
        }
    }
}
