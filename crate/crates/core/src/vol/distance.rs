//! Exact Euclidean distance transform.
//!
//! Separable lower-envelope method over squared distances, one pass per
//! axis, with anisotropic spacing folded into each pass. Exact up to float
//! rounding, which the thickness rules downstream rely on.

use super::Mask;

/// Distance reported when the mask has no true voxel. Kept finite so
/// distance grids stay ordinary floats.
pub const EMPTY_DISTANCE: f64 = 1.0e30;

const INF: f64 = f64::INFINITY;

/// Euclidean distance (mm) from every voxel center to the nearest true
/// voxel center of `mask`. True voxels get 0. An all-false mask yields
/// [`EMPTY_DISTANCE`] everywhere.
pub fn distance_transform(mask: &Mask) -> Vec<f64> {
    let mut sq = distance_transform_sq(mask);
    for v in &mut sq {
        *v = if *v >= EMPTY_DISTANCE { EMPTY_DISTANCE } else { v.sqrt() };
    }
    sq
}

/// Squared-distance variant (mm^2); used where thresholds can be compared
/// without the square root.
pub fn distance_transform_sq(mask: &Mask) -> Vec<f64> {
    let grid = mask.grid();
    let [nx, ny, nz] = grid.dims;
    let mut dist: Vec<f64> = mask
        .data()
        .iter()
        .map(|&m| if m { 0.0 } else { INF })
        .collect();

    let max_axis = nx.max(ny).max(nz);
    let mut f = vec![0.0f64; max_axis];
    let mut d = vec![0.0f64; max_axis];
    let mut v = vec![0usize; max_axis];
    let mut z = vec![0.0f64; max_axis + 1];

    // x pass
    for zi in 0..nz {
        for yi in 0..ny {
            let base = grid.index(0, yi, zi);
            for xi in 0..nx {
                f[xi] = dist[base + xi];
            }
            envelope_1d(&f[..nx], grid.spacing[0], &mut d, &mut v, &mut z);
            for xi in 0..nx {
                dist[base + xi] = d[xi];
            }
        }
    }
    // y pass
    for zi in 0..nz {
        for xi in 0..nx {
            for yi in 0..ny {
                f[yi] = dist[grid.index(xi, yi, zi)];
            }
            envelope_1d(&f[..ny], grid.spacing[1], &mut d, &mut v, &mut z);
            for yi in 0..ny {
                dist[grid.index(xi, yi, zi)] = d[yi];
            }
        }
    }
    // z pass
    for yi in 0..ny {
        for xi in 0..nx {
            for zi in 0..nz {
                f[zi] = dist[grid.index(xi, yi, zi)];
            }
            envelope_1d(&f[..nz], grid.spacing[2], &mut d, &mut v, &mut z);
            for zi in 0..nz {
                dist[grid.index(xi, yi, zi)] = d[zi];
            }
        }
    }

    for val in &mut dist {
        if !val.is_finite() {
            *val = EMPTY_DISTANCE;
        }
    }
    dist
}

/// 1D lower envelope of parabolas: out[p] = min_q (s^2 (p-q)^2 + f[q]).
fn envelope_1d(f: &[f64], spacing: f64, d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let s2 = spacing * spacing;
    let mut k = 0usize;
    v[0] = 0;
    z[0] = -INF;
    z[1] = INF;
    for q in 1..n {
        if f[q] == INF {
            continue;
        }
        loop {
            let p = v[k];
            let denom = 2.0 * s2 * (q as f64 - p as f64);
            let s = if f[p] == INF {
                // Parabola at p is infinitely high: the new one wins everywhere.
                -INF
            } else {
                (f[q] - f[p] + s2 * ((q * q) as f64 - (p * p) as f64)) / denom
            };
            if s <= z[k] {
                if k == 0 {
                    // Replace the lone parabola.
                    v[0] = q;
                    z[0] = -INF;
                    z[1] = INF;
                    break;
                }
                k -= 1;
                continue;
            }
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = INF;
            break;
        }
    }
    let mut k = 0usize;
    for p in 0..n {
        while z[k + 1] < p as f64 {
            k += 1;
        }
        let q = v[k];
        let diff = s2 * (p as f64 - q as f64) * (p as f64 - q as f64);
        d[p] = if f[q] == INF { INF } else { diff + f[q] };
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vol::{Grid, Mask};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// O(n^2) all-pairs oracle: for each voxel, scan every true voxel.
    fn brute_force(mask: &Mask) -> Vec<f64> {
        let grid = mask.grid();
        let trues: Vec<[usize; 3]> = (0..grid.len())
            .filter(|&i| mask.data()[i])
            .map(|i| grid.coords(i))
            .collect();
        (0..grid.len())
            .map(|i| {
                if trues.is_empty() {
                    return EMPTY_DISTANCE;
                }
                let p = grid.coords(i);
                trues
                    .iter()
                    .map(|q| {
                        let dx = (p[0] as f64 - q[0] as f64) * grid.spacing[0];
                        let dy = (p[1] as f64 - q[1] as f64) * grid.spacing[1];
                        let dz = (p[2] as f64 - q[2] as f64) * grid.spacing[2];
                        (dx * dx + dy * dy + dz * dz).sqrt()
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    }

    #[test]
    fn axis_aligned_distance_at_unit_spacing() {
        let grid = Grid::cube(9, 1.0).unwrap();
        let mut mask = Mask::filled(grid, false);
        mask.set(grid.index(4, 4, 4), true);
        let dt = distance_transform(&mask);
        assert_eq!(dt[grid.index(7, 4, 4)], 3.0);
        assert_eq!(dt[grid.index(4, 4, 4)], 0.0);
    }

    #[test]
    fn spacing_scales_distances() {
        let grid = Grid::cube(9, 0.5).unwrap();
        let mut mask = Mask::filled(grid, false);
        mask.set(grid.index(4, 4, 4), true);
        let dt = distance_transform(&mask);
        assert_eq!(dt[grid.index(7, 4, 4)], 1.5);
    }

    #[test]
    fn empty_mask_yields_sentinel() {
        let grid = Grid::cube(3, 1.0).unwrap();
        let mask = Mask::filled(grid, false);
        let dt = distance_transform(&mask);
        assert!(dt.iter().all(|&d| d == EMPTY_DISTANCE));
    }

    #[test]
    fn random_masks_match_all_pairs_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for case in 0..4 {
            let grid = Grid::new([12, 12, 12], [1.0, 0.7, 1.3]).unwrap();
            let density = [0.02, 0.1, 0.5, 0.9][case];
            let mask = Mask::new(
                grid,
                (0..grid.len()).map(|_| rng.gen_bool(density)).collect(),
            )
            .unwrap();
            let got = distance_transform(&mask);
            let want = brute_force(&mask);
            for i in 0..grid.len() {
                assert!(
                    (got[i] - want[i]).abs() < 1e-6,
                    "case {case} voxel {i}: got {} want {}",
                    got[i],
                    want[i]
                );
            }
        }
    }

    #[test]
    fn zero_distance_iff_in_mask() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let grid = Grid::new([8, 6, 7], [0.5, 1.0, 2.0]).unwrap();
        let mask = Mask::new(grid, (0..grid.len()).map(|_| rng.gen_bool(0.3)).collect()).unwrap();
        let dt = distance_transform(&mask);
        for i in 0..grid.len() {
            assert_eq!(dt[i] == 0.0, mask.data()[i], "voxel {i}");
        }
    }
}
