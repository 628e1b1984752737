//! Input conditioning: head contour extraction with air relabelling,
//! multiplicative bias-field removal, intensity normalization, and
//! standardization onto the network grid.

use crate::vol::{
    fill_holes, largest_component, morph, Connectivity, Grid, IntensityVolume, Mask, Modality,
    MorphOp, VolumeError,
};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("no head found: threshold {threshold} selects no foreground")]
    NoHeadFound { threshold: f32 },
    #[error("bias order {0} outside supported range 1..=4")]
    BadBiasOrder(usize),
    #[error("bias mask is empty")]
    EmptyMask,
    #[error("non-positive intensity {value} inside mask at voxel {index}; log bias model undefined")]
    NonPositiveIntensity { index: usize, value: f32 },
    #[error("bias fit is rank deficient (axis {0} has no spread inside the mask)")]
    DegenerateAxis(usize),
    #[error("bias fit normal equations are singular")]
    SingularFit,
    #[error("zero intensity variance over mask")]
    ZeroVariance,
    #[error("head extent {extent_mm:?} mm exceeds target grid {target_mm:?} mm")]
    HeadTooLarge {
        extent_mm: [f64; 3],
        target_mm: [f64; 3],
    },
    #[error(transparent)]
    Volume(#[from] VolumeError),
}

/// Per-modality record of what preprocessing did.
#[derive(Debug, Clone)]
pub struct ChannelReport {
    pub modality: Modality,
    pub mean_before: f64,
    pub variance_before: f64,
    pub bias_coefficients: Vec<f64>,
    pub output_lo: f32,
    pub output_hi: f32,
}

#[derive(Debug, Clone)]
pub struct PreprocessReport {
    pub head_mask_voxels: usize,
    pub threshold: f32,
    pub channels: Vec<ChannelReport>,
}

impl PreprocessReport {
    /// Key/value text form written next to the outputs.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("head_mask_voxels: {}\n", self.head_mask_voxels));
        s.push_str(&format!("threshold: {}\n", self.threshold));
        for ch in &self.channels {
            let tag = match ch.modality {
                Modality::T1 => "t1",
                Modality::T2 => "t2",
            };
            s.push_str(&format!("{tag}.mean_before: {}\n", ch.mean_before));
            s.push_str(&format!("{tag}.variance_before: {}\n", ch.variance_before));
            s.push_str(&format!(
                "{tag}.bias_coefficients: {}\n",
                ch.bias_coefficients
                    .iter()
                    .map(|c| format!("{c:.6e}"))
                    .collect::<Vec<_>>()
                    .join(" ")
            ));
            s.push_str(&format!("{tag}.output_lo: {}\n", ch.output_lo));
            s.push_str(&format!("{tag}.output_hi: {}\n", ch.output_hi));
        }
        s
    }
}

/// Foreground threshold selection for head-mask extraction.
///
/// The default offsets the background mode by a tenth of the data range;
/// with an air-dominated histogram this stays below every tissue, where
/// Otsu tends to cut into dark tissue. Otsu remains available.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdMethod {
    BackgroundOffset,
    Otsu,
    Fixed(f32),
}

/// Options for head-mask extraction; closing is off by default (the
/// radius is exposed for noisy inputs).
#[derive(Debug, Clone, Copy)]
pub struct HeadMaskOptions {
    pub method: ThresholdMethod,
    pub closing_radius_mm: f64,
}

impl Default for HeadMaskOptions {
    fn default() -> Self {
        HeadMaskOptions {
            method: ThresholdMethod::BackgroundOffset,
            closing_radius_mm: 0.0,
        }
    }
}

/// Background-offset threshold: the histogram mode (background level)
/// plus 10% of the distance to the 99th percentile.
pub fn background_offset_threshold(values: &[f32]) -> f32 {
    let (mut lo, mut hi) = (f32::INFINITY, f32::NEG_INFINITY);
    for &v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !(hi > lo) {
        return lo;
    }
    const BINS: usize = 256;
    let scale = BINS as f32 / (hi - lo);
    let mut hist = [0u64; BINS];
    for &v in values {
        let b = (((v - lo) * scale) as usize).min(BINS - 1);
        hist[b] += 1;
    }
    let mode_bin = hist
        .iter()
        .enumerate()
        .max_by_key(|(_, &c)| c)
        .map(|(i, _)| i)
        .unwrap_or(0);
    let mode = lo + (mode_bin as f32 + 0.5) / scale;
    let target = (values.len() as u64).saturating_mul(99) / 100;
    let mut acc = 0u64;
    let mut p99_bin = BINS - 1;
    for (i, &c) in hist.iter().enumerate() {
        acc += c;
        if acc >= target {
            p99_bin = i;
            break;
        }
    }
    let p99 = lo + (p99_bin as f32 + 0.5) / scale;
    mode + 0.1 * (p99 - mode).max(0.0)
}

/// Otsu's threshold over a 256-bin histogram of the data range.
pub fn otsu_threshold(values: &[f32]) -> f32 {
    let (mut lo, mut hi) = (f32::INFINITY, f32::NEG_INFINITY);
    for &v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !(hi > lo) {
        return lo;
    }
    const BINS: usize = 256;
    let scale = BINS as f32 / (hi - lo);
    let mut hist = [0u64; BINS];
    for &v in values {
        let b = (((v - lo) * scale) as usize).min(BINS - 1);
        hist[b] += 1;
    }
    let total: u64 = values.len() as u64;
    let sum_all: f64 = hist
        .iter()
        .enumerate()
        .map(|(i, &c)| i as f64 * c as f64)
        .sum();
    let mut w0 = 0u64;
    let mut sum0 = 0.0f64;
    let mut best = (0usize, -1.0f64);
    for t in 0..BINS - 1 {
        w0 += hist[t];
        sum0 += t as f64 * hist[t] as f64;
        let w1 = total - w0;
        if w0 == 0 || w1 == 0 {
            continue;
        }
        let m0 = sum0 / w0 as f64;
        let m1 = (sum_all - sum0) / w1 as f64;
        let between = w0 as f64 * w1 as f64 * (m0 - m1) * (m0 - m1);
        if between > best.1 {
            best = (t, between);
        }
    }
    // Threshold at the upper edge of the chosen bin.
    lo + (best.0 as f32 + 1.0) / scale
}

/// Extract the head mask: threshold, optional closing, keep the largest
/// 6-connected component, and fill internal cavities so the head surface
/// encloses everything inside it.
pub fn extract_head_mask(
    vol: &IntensityVolume,
    opts: HeadMaskOptions,
) -> Result<(Mask, f32), PreprocessError> {
    let threshold = opts.threshold.unwrap_or_else(|| otsu_threshold(vol.data()));
    let grid = vol.grid();
    let fg = Mask::new(grid, vol.data().iter().map(|&v| v > threshold).collect())
        .expect("grid matches");
    if !fg.any() {
        return Err(PreprocessError::NoHeadFound { threshold });
    }
    let fg = if opts.closing_radius_mm > 0.0 {
        let d = morph(&fg, MorphOp::Dilate, opts.closing_radius_mm)?;
        morph(&d, MorphOp::Erode, opts.closing_radius_mm)?
    } else {
        fg
    };
    let largest = largest_component(&fg, Connectivity::Six)
        .ok_or(PreprocessError::NoHeadFound { threshold })?;
    Ok((fill_holes(&largest), threshold))
}

fn monomial_exponents(order: usize) -> Vec<[u32; 3]> {
    let mut exps = Vec::new();
    for total in 0..=order as u32 {
        for i in 0..=total {
            for j in 0..=(total - i) {
                exps.push([i, j, total - i - j]);
            }
        }
    }
    exps
}

/// Remove a smooth multiplicative field: least-squares polynomial fit of
/// log intensity over the mask, divided out, with the mask mean preserved.
/// Returns the corrected volume and the fitted coefficients (monomials in
/// graded order over coordinates scaled to [-1, 1]).
pub fn correct_bias(
    vol: &IntensityVolume,
    mask: &Mask,
    order: usize,
) -> Result<(IntensityVolume, Vec<f64>), PreprocessError> {
    if !(1..=4).contains(&order) {
        return Err(PreprocessError::BadBiasOrder(order));
    }
    let grid = vol.grid();
    let indices: Vec<usize> = (0..grid.len()).filter(|&i| mask.data()[i]).collect();
    if indices.is_empty() {
        return Err(PreprocessError::EmptyMask);
    }
    for &i in &indices {
        let v = vol.data()[i];
        if v <= 0.0 {
            return Err(PreprocessError::NonPositiveIntensity { index: i, value: v });
        }
    }
    // Degenerate-axis check: a flat mask cannot pin that axis's terms.
    let coords: Vec<[f64; 3]> = indices.iter().map(|&i| normalized_coords(grid, i)).collect();
    for axis in 0..3 {
        if grid.dims[axis] > 1 {
            let first = coords[0][axis];
            if coords.iter().all(|c| c[axis] == first) {
                return Err(PreprocessError::DegenerateAxis(axis));
            }
        }
    }

    let exps = monomial_exponents(order);
    let k = exps.len();
    let n = indices.len();
    let mut design = DMatrix::<f64>::zeros(n, k);
    let mut rhs = DVector::<f64>::zeros(n);
    for (row, (&i, c)) in indices.iter().zip(&coords).enumerate() {
        for (col, e) in exps.iter().enumerate() {
            design[(row, col)] =
                c[0].powi(e[0] as i32) * c[1].powi(e[1] as i32) * c[2].powi(e[2] as i32);
        }
        rhs[row] = (vol.data()[i] as f64).ln();
    }
    let normal = design.transpose() * &design;
    let atb = design.transpose() * rhs;
    let coeffs = normal
        .lu()
        .solve(&atb)
        .ok_or(PreprocessError::SingularFit)?;

    // Evaluate the fitted log-field everywhere and divide it out.
    let mut corrected: Vec<f64> = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let c = normalized_coords(grid, i);
        let mut logf = 0.0;
        for (col, e) in exps.iter().enumerate() {
            logf += coeffs[col]
                * c[0].powi(e[0] as i32)
                * c[1].powi(e[1] as i32)
                * c[2].powi(e[2] as i32);
        }
        corrected.push(vol.data()[i] as f64 / logf.exp());
    }
    // Preserve the mean over the mask exactly.
    let mean_before: f64 = indices.iter().map(|&i| vol.data()[i] as f64).sum::<f64>() / n as f64;
    let mean_after: f64 = indices.iter().map(|&i| corrected[i]).sum::<f64>() / n as f64;
    let scale = mean_before / mean_after;
    let data: Vec<f32> = corrected.iter().map(|&v| (v * scale) as f32).collect();
    let out = IntensityVolume::new(grid, data, vol.modality())?;
    Ok((out, coeffs.iter().copied().collect()))
}

fn normalized_coords(grid: Grid, index: usize) -> [f64; 3] {
    let v = grid.coords(index);
    let mut c = [0.0f64; 3];
    for a in 0..3 {
        let n = grid.dims[a];
        c[a] = if n > 1 {
            2.0 * v[a] as f64 / (n - 1) as f64 - 1.0
        } else {
            0.0
        };
    }
    c
}

pub const NORMALIZED_LO: f32 = 0.01;
pub const NORMALIZED_HI: f32 = 0.99;
pub const AIR_VALUE: f32 = 0.0;

#[derive(Debug, Clone, Copy)]
pub struct NormalizeStats {
    pub mean: f64,
    pub variance: f64,
    pub min: f32,
    pub max: f32,
}

/// Two-stage normalization: z-score over the mask, then an affine map
/// sending the mask minimum to 0.01 and maximum to 0.99. Voxels outside
/// the mask become exactly 0 so the background stays distinguishable.
pub fn normalize(
    vol: &IntensityVolume,
    mask: &Mask,
) -> Result<(IntensityVolume, NormalizeStats), PreprocessError> {
    let grid = vol.grid();
    let values: Vec<f64> = vol
        .data()
        .iter()
        .zip(mask.data())
        .filter(|(_, &m)| m)
        .map(|(&v, _)| v as f64)
        .collect();
    if values.is_empty() {
        return Err(PreprocessError::EmptyMask);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let variance = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if variance == 0.0 {
        return Err(PreprocessError::ZeroVariance);
    }
    let sd = variance.sqrt();
    // The affine range map composes with the z-score into one affine map
    // pinned at the extrema, so min and max are attained exactly.
    let vmin = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let vmax = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let zmin = (vmin - mean) / sd;
    let zmax = (vmax - mean) / sd;
    let span = zmax - zmin;
    let lo = NORMALIZED_LO as f64;
    let hi = NORMALIZED_HI as f64;
    let mut data = Vec::with_capacity(grid.len());
    for (i, &v) in vol.data().iter().enumerate() {
        if !mask.data()[i] {
            data.push(AIR_VALUE);
            continue;
        }
        let v = v as f64;
        let out = if v == vmin {
            NORMALIZED_LO
        } else if v == vmax {
            NORMALIZED_HI
        } else {
            let z = (v - mean) / sd;
            (lo + (hi - lo) * (z - zmin) / span) as f32
        };
        data.push(out);
    }
    let out = IntensityVolume::new(grid, data, vol.modality())?;
    Ok((
        out,
        NormalizeStats {
            mean,
            variance,
            min: vmin as f32,
            max: vmax as f32,
        },
    ))
}

/// Resample onto a cube grid of `edge` voxels at `spacing_mm`, centered on
/// the head-mask centroid (snapped to the source voxel lattice so equal
/// spacings copy values exactly). Intensities are interpolated trilinearly
/// and padding is air (0.0).
pub fn standardize_grid(
    vol: &IntensityVolume,
    head: &Mask,
    edge: usize,
    spacing_mm: f64,
) -> Result<IntensityVolume, PreprocessError> {
    let src = vol.grid();
    let target = Grid::cube(edge, spacing_mm)?;

    let mut lo = [usize::MAX; 3];
    let mut hi = [0usize; 3];
    let mut count = 0usize;
    let mut centroid = [0.0f64; 3];
    for i in 0..src.len() {
        if !head.data()[i] {
            continue;
        }
        let v = src.coords(i);
        let c = src.center_mm(v);
        for a in 0..3 {
            lo[a] = lo[a].min(v[a]);
            hi[a] = hi[a].max(v[a]);
            centroid[a] += c[a];
        }
        count += 1;
    }
    if count == 0 {
        return Err(PreprocessError::EmptyMask);
    }
    let extent_mm = [
        (hi[0] - lo[0] + 1) as f64 * src.spacing[0],
        (hi[1] - lo[1] + 1) as f64 * src.spacing[1],
        (hi[2] - lo[2] + 1) as f64 * src.spacing[2],
    ];
    let target_mm = target.extent_mm();
    if (0..3).any(|a| extent_mm[a] > target_mm[a]) {
        return Err(PreprocessError::HeadTooLarge {
            extent_mm,
            target_mm,
        });
    }
    // Shift output space so its center sits on the centroid, snapped to a
    // whole number of source voxels so equal spacings copy values exactly.
    let half = [target_mm[0] / 2.0, target_mm[1] / 2.0, target_mm[2] / 2.0];
    let mut shift = [0.0f64; 3];
    for a in 0..3 {
        let raw = centroid[a] / count as f64 - half[a];
        shift[a] = (raw / src.spacing[a]).round() * src.spacing[a];
    }
    let mut data = Vec::with_capacity(target.len());
    for z in 0..edge {
        for y in 0..edge {
            for x in 0..edge {
                let p = target.center_mm([x, y, z]);
                let q = [p[0] + shift[0], p[1] + shift[1], p[2] + shift[2]];
                data.push(sample_trilinear(vol, q));
            }
        }
    }
    Ok(IntensityVolume::new(target, data, vol.modality())?)
}

/// Trilinear sample at a physical position (mm); outside the volume the
/// value fades to the air value.
fn sample_trilinear(vol: &IntensityVolume, p: [f64; 3]) -> f32 {
    let grid = vol.grid();
    let mut base = [0i64; 3];
    let mut frac = [0.0f64; 3];
    for a in 0..3 {
        let f = p[a] / grid.spacing[a] - 0.5;
        let fl = f.floor();
        base[a] = fl as i64;
        frac[a] = f - fl;
    }
    let mut acc = 0.0f64;
    for corner in 0..8 {
        let mut w = 1.0f64;
        let mut v = [0i64; 3];
        for a in 0..3 {
            if corner >> a & 1 == 1 {
                v[a] = base[a] + 1;
                w *= frac[a];
            } else {
                v[a] = base[a];
                w *= 1.0 - frac[a];
            }
        }
        if w == 0.0 {
            continue;
        }
        let value = if grid.contains(v) {
            vol.data()[grid.index(v[0] as usize, v[1] as usize, v[2] as usize)] as f64
        } else {
            AIR_VALUE as f64
        };
        acc += w * value;
    }
    acc as f32
}
