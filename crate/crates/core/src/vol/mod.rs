//! Core 3D volume types and morphology primitives.
//!
//! All grids use a fixed canonical axis order with x fastest:
//! `index = x + y*nx + z*nx*ny`. Spacing is carried per volume (mm/voxel)
//! and may be anisotropic. Volumes are immutable after construction, so
//! every operation here is a pure function over shared inputs.

mod components;
mod distance;
mod morph;
mod resample;

pub use components::{connected_components, largest_component};
pub use distance::{distance_transform, distance_transform_sq, EMPTY_DISTANCE};
pub use morph::{fill_holes, morph, MorphOp};
pub use resample::resample_nearest;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VolumeError {
    #[error("dims must be positive, got {0:?}")]
    BadDims([usize; 3]),
    #[error("spacing must be strictly positive and finite, got {0:?}")]
    BadSpacing([f64; 3]),
    #[error("data length {got} does not match dims {dims:?} ({expected} voxels)")]
    DataLength {
        dims: [usize; 3],
        expected: usize,
        got: usize,
    },
    #[error("non-finite voxel value at index {0}")]
    NonFiniteVoxel(usize),
    #[error("invalid tissue code {0}")]
    BadTissueCode(u8),
    #[error("morphology radius must be non-negative, got {0}")]
    NegativeRadius(f64),
    #[error("grids do not match: {0:?} vs {1:?}")]
    GridMismatch(Grid, Grid),
}

/// The 15 head tissues plus air. Code 0 is reserved for air/background.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Tissue {
    Air = 0,
    Skin = 1,
    Fat = 2,
    Muscle = 3,
    SkullCancellous = 4,
    SkullCortical = 5,
    BrainWm = 6,
    BrainGm = 7,
    CerebellumWm = 8,
    CerebellumGm = 9,
    Csf = 10,
    Dura = 11,
    VitreousHumor = 12,
    Lens = 13,
    Mucous = 14,
    Blood = 15,
}

impl Tissue {
    /// All 16 codes in ascending order, air first.
    pub const ALL: [Tissue; 16] = [
        Tissue::Air,
        Tissue::Skin,
        Tissue::Fat,
        Tissue::Muscle,
        Tissue::SkullCancellous,
        Tissue::SkullCortical,
        Tissue::BrainWm,
        Tissue::BrainGm,
        Tissue::CerebellumWm,
        Tissue::CerebellumGm,
        Tissue::Csf,
        Tissue::Dura,
        Tissue::VitreousHumor,
        Tissue::Lens,
        Tissue::Mucous,
        Tissue::Blood,
    ];

    /// The 15 non-air tissues in code order.
    pub const TISSUES: [Tissue; 15] = [
        Tissue::Skin,
        Tissue::Fat,
        Tissue::Muscle,
        Tissue::SkullCancellous,
        Tissue::SkullCortical,
        Tissue::BrainWm,
        Tissue::BrainGm,
        Tissue::CerebellumWm,
        Tissue::CerebellumGm,
        Tissue::Csf,
        Tissue::Dura,
        Tissue::VitreousHumor,
        Tissue::Lens,
        Tissue::Mucous,
        Tissue::Blood,
    ];

    pub const COUNT: usize = 16;

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Result<Tissue, VolumeError> {
        Tissue::ALL
            .get(code as usize)
            .copied()
            .ok_or(VolumeError::BadTissueCode(code))
    }

    pub fn name(self) -> &'static str {
        match self {
            Tissue::Air => "air",
            Tissue::Skin => "skin",
            Tissue::Fat => "fat",
            Tissue::Muscle => "muscle",
            Tissue::SkullCancellous => "skull_cancellous",
            Tissue::SkullCortical => "skull_cortical",
            Tissue::BrainWm => "brain_wm",
            Tissue::BrainGm => "brain_gm",
            Tissue::CerebellumWm => "cerebellum_wm",
            Tissue::CerebellumGm => "cerebellum_gm",
            Tissue::Csf => "csf",
            Tissue::Dura => "dura",
            Tissue::VitreousHumor => "vitreous_humor",
            Tissue::Lens => "lens",
            Tissue::Mucous => "mucous",
            Tissue::Blood => "blood",
        }
    }

    pub fn from_name(name: &str) -> Option<Tissue> {
        Tissue::ALL.iter().copied().find(|t| t.name() == name)
    }
}

impl std::fmt::Display for Tissue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// MR contrast of an intensity volume.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Modality {
    T1,
    T2,
}

/// Voxel neighbourhood used by morphology and voting operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Connectivity {
    /// Face neighbours only.
    Six,
    /// Face, edge and corner neighbours.
    TwentySix,
}

impl Connectivity {
    pub fn offsets(self) -> &'static [[i64; 3]] {
        const SIX: [[i64; 3]; 6] = [
            [-1, 0, 0],
            [1, 0, 0],
            [0, -1, 0],
            [0, 1, 0],
            [0, 0, -1],
            [0, 0, 1],
        ];
        const TWENTYSIX: [[i64; 3]; 26] = {
            let mut out = [[0i64; 3]; 26];
            let mut n = 0;
            let mut dz = -1i64;
            while dz <= 1 {
                let mut dy = -1i64;
                while dy <= 1 {
                    let mut dx = -1i64;
                    while dx <= 1 {
                        if dx != 0 || dy != 0 || dz != 0 {
                            out[n] = [dx, dy, dz];
                            n += 1;
                        }
                        dx += 1;
                    }
                    dy += 1;
                }
                dz += 1;
            }
            out
        };
        match self {
            Connectivity::Six => &SIX,
            Connectivity::TwentySix => &TWENTYSIX,
        }
    }
}

/// Geometry shared by every grid type: voxel counts per axis and
/// voxel size in mm. Voxel centers sit at `(i + 0.5) * spacing`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
}

impl Grid {
    pub fn new(dims: [usize; 3], spacing: [f64; 3]) -> Result<Grid, VolumeError> {
        if dims.iter().any(|&d| d == 0) {
            return Err(VolumeError::BadDims(dims));
        }
        if spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(VolumeError::BadSpacing(spacing));
        }
        Ok(Grid { dims, spacing })
    }

    /// Isotropic cube grid, the shape every network stage assumes.
    pub fn cube(edge: usize, spacing_mm: f64) -> Result<Grid, VolumeError> {
        Grid::new([edge; 3], [spacing_mm; 3])
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        debug_assert!(x < self.dims[0] && y < self.dims[1] && z < self.dims[2]);
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let x = index % self.dims[0];
        let rest = index / self.dims[0];
        [x, rest % self.dims[1], rest / self.dims[1]]
    }

    /// Physical position (mm) of a voxel center.
    #[inline]
    pub fn center_mm(&self, v: [usize; 3]) -> [f64; 3] {
        [
            (v[0] as f64 + 0.5) * self.spacing[0],
            (v[1] as f64 + 0.5) * self.spacing[1],
            (v[2] as f64 + 0.5) * self.spacing[2],
        ]
    }

    /// Physical extent (mm) along each axis.
    pub fn extent_mm(&self) -> [f64; 3] {
        [
            self.dims[0] as f64 * self.spacing[0],
            self.dims[1] as f64 * self.spacing[1],
            self.dims[2] as f64 * self.spacing[2],
        ]
    }

    /// Volume of one voxel in mm^3.
    pub fn voxel_mm3(&self) -> f64 {
        self.spacing[0] * self.spacing[1] * self.spacing[2]
    }

    pub fn contains(&self, p: [i64; 3]) -> bool {
        p.iter()
            .zip(self.dims.iter())
            .all(|(&c, &d)| c >= 0 && (c as usize) < d)
    }
}

/// 3D scalar grid holding one MR contrast.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityVolume {
    grid: Grid,
    data: Vec<f32>,
    modality: Modality,
}

impl IntensityVolume {
    pub fn new(
        grid: Grid,
        data: Vec<f32>,
        modality: Modality,
    ) -> Result<IntensityVolume, VolumeError> {
        if data.len() != grid.len() {
            return Err(VolumeError::DataLength {
                dims: grid.dims,
                expected: grid.len(),
                got: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(VolumeError::NonFiniteVoxel(i));
        }
        Ok(IntensityVolume {
            grid,
            data,
            modality,
        })
    }

    pub fn filled(grid: Grid, value: f32, modality: Modality) -> IntensityVolume {
        IntensityVolume {
            data: vec![value; grid.len()],
            grid,
            modality,
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize, z: usize) -> f32 {
        self.data[self.grid.index(x, y, z)]
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }
}

/// 3D grid of tissue codes.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVolume {
    grid: Grid,
    labels: Vec<u8>,
}

impl LabelVolume {
    pub fn new(grid: Grid, labels: Vec<u8>) -> Result<LabelVolume, VolumeError> {
        if labels.len() != grid.len() {
            return Err(VolumeError::DataLength {
                dims: grid.dims,
                expected: grid.len(),
                got: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&c| c as usize >= Tissue::COUNT) {
            return Err(VolumeError::BadTissueCode(bad));
        }
        Ok(LabelVolume { grid, labels })
    }

    pub fn filled(grid: Grid, tissue: Tissue) -> LabelVolume {
        LabelVolume {
            labels: vec![tissue.code(); grid.len()],
            grid,
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize, z: usize) -> Tissue {
        Tissue::ALL[self.labels[self.grid.index(x, y, z)] as usize]
    }

    pub fn set(&mut self, index: usize, tissue: Tissue) {
        self.labels[index] = tissue.code();
    }

    /// Voxel count per tissue code.
    pub fn counts(&self) -> [usize; Tissue::COUNT] {
        let mut counts = [0usize; Tissue::COUNT];
        for &c in &self.labels {
            counts[c as usize] += 1;
        }
        counts
    }

    /// Binary mask of one tissue.
    pub fn mask_of(&self, tissue: Tissue) -> Mask {
        Mask {
            grid: self.grid,
            data: self.labels.iter().map(|&c| c == tissue.code()).collect(),
        }
    }

    /// Binary mask of all non-air voxels.
    pub fn head_mask(&self) -> Mask {
        Mask {
            grid: self.grid,
            data: self.labels.iter().map(|&c| c != 0).collect(),
        }
    }
}

/// Mask of voxel centers inside an axis-aligned ellipsoid given in mm.
pub fn ellipsoid_mask(grid: Grid, center_mm: [f64; 3], semi_mm: [f64; 3]) -> Mask {
    Mask::from_fn(grid, |x, y, z| {
        let p = grid.center_mm([x, y, z]);
        (0..3)
            .map(|a| {
                let d = (p[a] - center_mm[a]) / semi_mm[a];
                d * d
            })
            .sum::<f64>()
            <= 1.0
    })
}

/// Binary voxel grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    grid: Grid,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(grid: Grid, data: Vec<bool>) -> Result<Mask, VolumeError> {
        if data.len() != grid.len() {
            return Err(VolumeError::DataLength {
                dims: grid.dims,
                expected: grid.len(),
                got: data.len(),
            });
        }
        Ok(Mask { grid, data })
    }

    pub fn filled(grid: Grid, value: bool) -> Mask {
        Mask {
            data: vec![value; grid.len()],
            grid,
        }
    }

    /// Build a mask from a per-voxel predicate over (x, y, z).
    pub fn from_fn(grid: Grid, mut f: impl FnMut(usize, usize, usize) -> bool) -> Mask {
        let mut data = Vec::with_capacity(grid.len());
        for z in 0..grid.dims[2] {
            for y in 0..grid.dims[1] {
                for x in 0..grid.dims[0] {
                    data.push(f(x, y, z));
                }
            }
        }
        Mask { grid, data }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.data[self.grid.index(x, y, z)]
    }

    pub fn set(&mut self, index: usize, value: bool) {
        self.data[index] = value;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn any(&self) -> bool {
        self.data.iter().any(|&b| b)
    }

    pub fn complement(&self) -> Mask {
        Mask {
            grid: self.grid,
            data: self.data.iter().map(|&b| !b).collect(),
        }
    }

    pub fn union(&self, other: &Mask) -> Result<Mask, VolumeError> {
        self.check_grid(other)?;
        Ok(Mask {
            grid: self.grid,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a || b)
                .collect(),
        })
    }

    pub fn intersect(&self, other: &Mask) -> Result<Mask, VolumeError> {
        self.check_grid(other)?;
        Ok(Mask {
            grid: self.grid,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a && b)
                .collect(),
        })
    }

    pub fn minus(&self, other: &Mask) -> Result<Mask, VolumeError> {
        self.check_grid(other)?;
        Ok(Mask {
            grid: self.grid,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a && !b)
                .collect(),
        })
    }

    fn check_grid(&self, other: &Mask) -> Result<(), VolumeError> {
        if self.grid != other.grid {
            return Err(VolumeError::GridMismatch(self.grid, other.grid));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tissue_codes_are_dense_and_named() {
        assert_eq!(Tissue::COUNT, 16);
        for (i, t) in Tissue::ALL.iter().enumerate() {
            assert_eq!(t.code() as usize, i);
            assert_eq!(Tissue::from_code(i as u8).unwrap(), *t);
            assert_eq!(Tissue::from_name(t.name()), Some(*t));
        }
        assert!(Tissue::from_code(16).is_err());
        assert_eq!(Tissue::Air.code(), 0);
    }

    #[test]
    fn grid_rejects_degenerate_inputs() {
        assert!(Grid::new([0, 4, 4], [1.0; 3]).is_err());
        assert!(Grid::new([4; 3], [0.0, 1.0, 1.0]).is_err());
        assert!(Grid::new([4; 3], [f64::NAN, 1.0, 1.0]).is_err());
        assert!(Grid::new([4; 3], [-1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn grid_index_roundtrip() {
        let g = Grid::new([3, 4, 5], [1.0, 2.0, 0.5]).unwrap();
        for i in 0..g.len() {
            let [x, y, z] = g.coords(i);
            assert_eq!(g.index(x, y, z), i);
        }
        assert_eq!(g.extent_mm(), [3.0, 8.0, 2.5]);
        assert_eq!(g.voxel_mm3(), 1.0);
    }

    #[test]
    fn intensity_volume_rejects_nan() {
        let g = Grid::cube(2, 1.0).unwrap();
        let mut data = vec![0.0f32; 8];
        data[3] = f32::NAN;
        match IntensityVolume::new(g, data, Modality::T1) {
            Err(VolumeError::NonFiniteVoxel(3)) => {}
            other => panic!("expected NonFiniteVoxel(3), got {other:?}"),
        }
    }

    #[test]
    fn label_volume_rejects_bad_code() {
        let g = Grid::cube(2, 1.0).unwrap();
        let mut labels = vec![0u8; 8];
        labels[5] = 16;
        assert!(LabelVolume::new(g, labels).is_err());
    }

    #[test]
    fn connectivity_offset_counts() {
        assert_eq!(Connectivity::Six.offsets().len(), 6);
        assert_eq!(Connectivity::TwentySix.offsets().len(), 26);
        for off in Connectivity::TwentySix.offsets() {
            assert_ne!(*off, [0, 0, 0]);
        }
    }
}
