//! Binary morphology built on the exact distance transform, plus hole
//! filling. Radii are physical (mm), so anisotropic grids behave correctly.

use super::{distance_transform_sq, Connectivity, Mask, VolumeError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MorphOp {
    Erode,
    Dilate,
}

/// Dilate or erode a mask by a metric ball of `radius_mm`.
///
/// Dilation is the set of voxels whose center lies within `radius_mm` of a
/// true voxel center; erosion is its complement dual. Radius 0 is the
/// identity.
pub fn morph(mask: &Mask, op: MorphOp, radius_mm: f64) -> Result<Mask, VolumeError> {
    if !(radius_mm >= 0.0) {
        return Err(VolumeError::NegativeRadius(radius_mm));
    }
    Ok(match op {
        MorphOp::Dilate => dilate(mask, radius_mm),
        MorphOp::Erode => dilate(&mask.complement(), radius_mm).complement(),
    })
}

fn dilate(mask: &Mask, radius_mm: f64) -> Mask {
    let r2 = radius_mm * radius_mm;
    let sq = distance_transform_sq(mask);
    Mask::new(mask.grid(), sq.iter().map(|&d| d <= r2).collect()).expect("grid unchanged")
}

/// Fill cavities: every false region not connected to the grid boundary
/// becomes true. Background connectivity is 6 so that diagonal "leaks"
/// through a 6-connected wall do not drain a cavity.
pub fn fill_holes(mask: &Mask) -> Mask {
    let grid = mask.grid();
    let background = mask.complement();
    let (ids, _) = super::connected_components(&background, Connectivity::Six);

    // Collect ids of background components touching any boundary face.
    let [nx, ny, nz] = grid.dims;
    let mut outside = std::collections::HashSet::new();
    let visit = |x: usize, y: usize, z: usize, outside: &mut std::collections::HashSet<u32>| {
        let id = ids[grid.index(x, y, z)];
        if id != 0 {
            outside.insert(id);
        }
    };
    for y in 0..ny {
        for x in 0..nx {
            visit(x, y, 0, &mut outside);
            visit(x, y, nz - 1, &mut outside);
        }
    }
    for z in 0..nz {
        for x in 0..nx {
            visit(x, 0, z, &mut outside);
            visit(x, ny - 1, z, &mut outside);
        }
    }
    for z in 0..nz {
        for y in 0..ny {
            visit(0, y, z, &mut outside);
            visit(nx - 1, y, z, &mut outside);
        }
    }

    let data = (0..grid.len())
        .map(|i| mask.data()[i] || (ids[i] != 0 && !outside.contains(&ids[i])))
        .collect();
    Mask::new(grid, data).expect("grid unchanged")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vol::Grid;

    fn single_voxel(edge: usize, spacing: f64) -> Mask {
        let grid = Grid::cube(edge, spacing).unwrap();
        let c = edge / 2;
        let mut m = Mask::filled(grid, false);
        m.set(grid.index(c, c, c), true);
        m
    }

    #[test]
    fn radius_zero_is_identity() {
        let m = single_voxel(5, 1.0);
        assert_eq!(morph(&m, MorphOp::Dilate, 0.0).unwrap(), m);
        assert_eq!(morph(&m, MorphOp::Erode, 0.0).unwrap(), m);
    }

    #[test]
    fn negative_radius_rejected() {
        let m = single_voxel(3, 1.0);
        assert!(morph(&m, MorphOp::Dilate, -1.0).is_err());
    }

    #[test]
    fn unit_ball_is_plus_shape() {
        let m = single_voxel(5, 1.0);
        let d = morph(&m, MorphOp::Dilate, 1.0).unwrap();
        assert_eq!(d.count(), 7);
        let grid = m.grid();
        assert!(d.get(2, 2, 2));
        assert!(d.get(1, 2, 2) && d.get(3, 2, 2));
        assert!(d.get(2, 1, 2) && d.get(2, 3, 2));
        assert!(d.get(2, 2, 1) && d.get(2, 2, 3));
        assert!(!d.get(1, 1, 2), "diagonal at sqrt(2) must stay out");
        let _ = grid;
    }

    #[test]
    fn closing_contains_original_for_convex_shapes() {
        // Convex test shapes: boxes and discrete ellipsoids.
        let grid = Grid::new([14, 12, 10], [1.0, 0.8, 1.2]).unwrap();
        let shapes = vec![
            Mask::from_fn(grid, |x, y, z| {
                (2..9).contains(&x) && (3..9).contains(&y) && (2..8).contains(&z)
            }),
            Mask::from_fn(grid, |x, y, z| {
                let dx = (x as f64 - 6.5) / 5.0;
                let dy = (y as f64 - 5.5) / 4.0;
                let dz = (z as f64 - 4.5) / 3.5;
                dx * dx + dy * dy + dz * dz <= 1.0
            }),
        ];
        for m in &shapes {
            for &r in &[0.5, 1.0, 1.7, 2.5] {
                let closed = morph(&morph(m, MorphOp::Dilate, r).unwrap(), MorphOp::Erode, r)
                    .unwrap();
                for i in 0..grid.len() {
                    if m.data()[i] {
                        assert!(closed.data()[i], "closing lost voxel {i} at radius {r}");
                    }
                }
            }
        }
    }

    #[test]
    fn fill_holes_recovers_cavity() {
        let grid = Grid::cube(9, 1.0).unwrap();
        // Hollow box shell with a cavity inside.
        let shell = Mask::from_fn(grid, |x, y, z| {
            let inside =
                (1..8).contains(&x) && (1..8).contains(&y) && (1..8).contains(&z);
            let cavity =
                (3..6).contains(&x) && (3..6).contains(&y) && (3..6).contains(&z);
            inside && !cavity
        });
        let filled = fill_holes(&shell);
        let solid = Mask::from_fn(grid, |x, y, z| {
            (1..8).contains(&x) && (1..8).contains(&y) && (1..8).contains(&z)
        });
        assert_eq!(filled, solid);
        // Already-solid masks are untouched.
        assert_eq!(fill_holes(&solid), solid);
    }
}
