//! Nearest-neighbour label resampling between voxel grids.

use super::{Grid, LabelVolume, VolumeError};

/// Resample a label volume onto a new spacing with nearest-neighbour
/// lookup. Output dims are the rounded physical extent divided by the
/// target spacing (at least 1 per axis). Each output voxel copies the
/// label of the source voxel whose center is closest to its own center;
/// exact ties go to the lower index.
pub fn resample_nearest(
    src: &LabelVolume,
    target_spacing: [f64; 3],
) -> Result<LabelVolume, VolumeError> {
    if target_spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
        return Err(VolumeError::BadSpacing(target_spacing));
    }
    let sgrid = src.grid();
    let extent = sgrid.extent_mm();
    let dims = [
        ((extent[0] / target_spacing[0]).round() as usize).max(1),
        ((extent[1] / target_spacing[1]).round() as usize).max(1),
        ((extent[2] / target_spacing[2]).round() as usize).max(1),
    ];
    let grid = Grid::new(dims, target_spacing)?;

    // Precompute the nearest source index per output index, per axis.
    let lut: Vec<Vec<usize>> = (0..3)
        .map(|a| {
            (0..dims[a])
                .map(|i| {
                    let pos = (i as f64 + 0.5) * target_spacing[a];
                    nearest_center(pos, sgrid.spacing[a], sgrid.dims[a])
                })
                .collect()
        })
        .collect();

    let mut labels = Vec::with_capacity(grid.len());
    for z in 0..dims[2] {
        let sz = lut[2][z];
        for y in 0..dims[1] {
            let sy = lut[1][y];
            let row = sgrid.index(0, sy, sz);
            for x in 0..dims[0] {
                labels.push(src.labels()[row + lut[0][x]]);
            }
        }
    }
    LabelVolume::new(grid, labels)
}

/// Index of the source voxel center nearest to `pos`, ties to the lower
/// index.
fn nearest_center(pos: f64, spacing: f64, n: usize) -> usize {
    let f = pos / spacing - 0.5;
    let lo = f.floor().clamp(0.0, (n - 1) as f64) as usize;
    let hi = (lo + 1).min(n - 1);
    let d_lo = (pos - (lo as f64 + 0.5) * spacing).abs();
    let d_hi = (pos - (hi as f64 + 0.5) * spacing).abs();
    if d_hi < d_lo {
        hi
    } else {
        lo
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vol::{Mask, Tissue};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Exhaustive oracle: scan all source voxels for each output voxel.
    fn brute_force(src: &LabelVolume, spacing: [f64; 3]) -> LabelVolume {
        let sgrid = src.grid();
        let extent = sgrid.extent_mm();
        let dims = [
            ((extent[0] / spacing[0]).round() as usize).max(1),
            ((extent[1] / spacing[1]).round() as usize).max(1),
            ((extent[2] / spacing[2]).round() as usize).max(1),
        ];
        let grid = Grid::new(dims, spacing).unwrap();
        let mut labels = vec![0u8; grid.len()];
        for i in 0..grid.len() {
            let p = grid.center_mm(grid.coords(i));
            let mut best = (f64::INFINITY, 0u8);
            for j in 0..sgrid.len() {
                let q = sgrid.center_mm(sgrid.coords(j));
                let d2 = (0..3).map(|a| (p[a] - q[a]) * (p[a] - q[a])).sum::<f64>();
                if d2 < best.0 {
                    best = (d2, src.labels()[j]);
                }
            }
            labels[i] = best.1;
        }
        LabelVolume::new(grid, labels).unwrap()
    }

    #[test]
    fn identity_when_spacing_matches() {
        let grid = Grid::cube(2, 0.5).unwrap();
        let src = LabelVolume::new(grid, vec![1, 2, 3, 4, 5, 6, 7, 8]).unwrap();
        let out = resample_nearest(&src, [0.5; 3]).unwrap();
        assert_eq!(out, src);
    }

    #[test]
    fn uniform_volume_preserves_physical_volume() {
        let grid = Grid::cube(64, 0.5).unwrap();
        let src = LabelVolume::filled(grid, Tissue::Skin);
        let out = resample_nearest(&src, [1.0; 3]).unwrap();
        assert_eq!(out.grid().dims, [32; 3]);
        assert!(out.labels().iter().all(|&c| c == Tissue::Skin.code()));
        let vol_src = src.grid().len() as f64 * src.grid().voxel_mm3();
        let vol_out = out.grid().len() as f64 * out.grid().voxel_mm3();
        assert_eq!(vol_src, vol_out);
    }

    #[test]
    fn random_volume_matches_brute_force_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let grid = Grid::cube(16, 0.5).unwrap();
        let labels: Vec<u8> = (0..grid.len()).map(|_| rng.gen_range(0..16)).collect();
        let src = LabelVolume::new(grid, labels).unwrap();
        for spacing in [[1.0; 3], [0.7, 1.1, 0.9]] {
            let got = resample_nearest(&src, spacing).unwrap();
            let want = brute_force(&src, spacing);
            assert_eq!(got, want, "spacing {spacing:?}");
        }
    }

    #[test]
    fn no_new_labels_appear() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let grid = Grid::cube(10, 0.5).unwrap();
        let labels: Vec<u8> = (0..grid.len())
            .map(|_| *[0u8, 3, 7].iter().nth(rng.gen_range(0..3)).unwrap())
            .collect();
        let src = LabelVolume::new(grid, labels).unwrap();
        let out = resample_nearest(&src, [0.8, 1.3, 0.6]).unwrap();
        let allowed: std::collections::HashSet<u8> = src.labels().iter().copied().collect();
        assert!(out.labels().iter().all(|c| allowed.contains(c)));
    }

    #[test]
    fn degenerate_spacing_is_rejected() {
        let grid = Grid::cube(2, 1.0).unwrap();
        let src = LabelVolume::new(grid, vec![0; 8]).unwrap();
        assert!(resample_nearest(&src, [0.0, 1.0, 1.0]).is_err());
        assert!(resample_nearest(&src, [1.0, -2.0, 1.0]).is_err());
        let _ = Mask::filled(grid, true);
    }
}
