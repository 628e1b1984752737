//! Connected component labelling for binary grids.

use super::{Connectivity, Mask};
use std::collections::VecDeque;

/// Label connected components of `mask` under the given connectivity.
///
/// Returns a per-voxel component id grid (0 = background, ids dense from 1
/// in scan order of each component's first voxel) and the size of each
/// component, indexed by `id - 1`.
pub fn connected_components(mask: &Mask, nb: Connectivity) -> (Vec<u32>, Vec<usize>) {
    let grid = mask.grid();
    let mut ids = vec![0u32; grid.len()];
    let mut sizes = Vec::new();
    let offsets = nb.offsets();
    let mut queue = VecDeque::new();

    for start in 0..grid.len() {
        if !mask.data()[start] || ids[start] != 0 {
            continue;
        }
        let id = sizes.len() as u32 + 1;
        let mut size = 0usize;
        ids[start] = id;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            size += 1;
            let [x, y, z] = grid.coords(i);
            for off in offsets {
                let p = [
                    x as i64 + off[0],
                    y as i64 + off[1],
                    z as i64 + off[2],
                ];
                if !grid.contains(p) {
                    continue;
                }
                let j = grid.index(p[0] as usize, p[1] as usize, p[2] as usize);
                if mask.data()[j] && ids[j] == 0 {
                    ids[j] = id;
                    queue.push_back(j);
                }
            }
        }
        sizes.push(size);
    }
    (ids, sizes)
}

/// Mask of the largest component, or None when the mask is empty.
pub fn largest_component(mask: &Mask, nb: Connectivity) -> Option<Mask> {
    let (ids, sizes) = connected_components(mask, nb);
    let best = sizes
        .iter()
        .enumerate()
        .max_by_key(|(_, &s)| s)
        .map(|(i, _)| i as u32 + 1)?;
    Some(
        Mask::new(mask.grid(), ids.iter().map(|&id| id == best).collect())
            .expect("ids match grid"),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vol::Grid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Union-find oracle, independent of the BFS implementation.
    fn union_find_components(mask: &Mask, nb: Connectivity) -> Vec<u32> {
        let grid = mask.grid();
        let mut parent: Vec<usize> = (0..grid.len()).collect();
        fn find(parent: &mut [usize], i: usize) -> usize {
            let mut root = i;
            while parent[root] != root {
                root = parent[root];
            }
            let mut cur = i;
            while parent[cur] != root {
                let next = parent[cur];
                parent[cur] = root;
                cur = next;
            }
            root
        }
        for i in 0..grid.len() {
            if !mask.data()[i] {
                continue;
            }
            let [x, y, z] = grid.coords(i);
            for off in nb.offsets() {
                let p = [x as i64 + off[0], y as i64 + off[1], z as i64 + off[2]];
                if !grid.contains(p) {
                    continue;
                }
                let j = grid.index(p[0] as usize, p[1] as usize, p[2] as usize);
                if mask.data()[j] {
                    let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                    if ri != rj {
                        parent[ri.max(rj)] = ri.min(rj);
                    }
                }
            }
        }
        // Canonical ids in scan order of roots.
        let mut next = 1u32;
        let mut ids = vec![0u32; grid.len()];
        let mut root_id = std::collections::HashMap::new();
        for i in 0..grid.len() {
            if mask.data()[i] {
                let r = find(&mut parent, i);
                ids[i] = *root_id.entry(r).or_insert_with(|| {
                    let id = next;
                    next += 1;
                    id
                });
            }
        }
        ids
    }

    fn block(grid: Grid, lo: [usize; 3], hi: [usize; 3]) -> Mask {
        Mask::from_fn(grid, |x, y, z| {
            x >= lo[0] && x < hi[0] && y >= lo[1] && y < hi[1] && z >= lo[2] && z < hi[2]
        })
    }

    #[test]
    fn two_disjoint_blocks() {
        let grid = Grid::cube(8, 1.0).unwrap();
        let a = block(grid, [0, 0, 0], [2, 2, 2]);
        let b = block(grid, [5, 5, 5], [7, 7, 7]);
        let mask = a.union(&b).unwrap();
        let (_, sizes) = connected_components(&mask, Connectivity::Six);
        assert_eq!(sizes, vec![8, 8]);
    }

    #[test]
    fn diagonal_pair_depends_on_connectivity() {
        let grid = Grid::cube(4, 1.0).unwrap();
        let mut mask = Mask::filled(grid, false);
        mask.set(grid.index(1, 1, 1), true);
        mask.set(grid.index(2, 2, 2), true);
        let (_, sizes6) = connected_components(&mask, Connectivity::Six);
        assert_eq!(sizes6.len(), 2);
        let (_, sizes26) = connected_components(&mask, Connectivity::TwentySix);
        assert_eq!(sizes26.len(), 1);
        assert_eq!(sizes26[0], 2);
    }

    #[test]
    fn random_masks_match_union_find_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &nb in &[Connectivity::Six, Connectivity::TwentySix] {
            for _ in 0..3 {
                let grid = Grid::cube(10, 1.0).unwrap();
                let mask =
                    Mask::new(grid, (0..grid.len()).map(|_| rng.gen_bool(0.4)).collect()).unwrap();
                let (ids, sizes) = connected_components(&mask, nb);
                let want = union_find_components(&mask, nb);
                assert_eq!(ids, want);
                // Partition property: sizes sum to the number of true voxels.
                assert_eq!(sizes.iter().sum::<usize>(), mask.count());
                for (k, &s) in sizes.iter().enumerate() {
                    let count = ids.iter().filter(|&&id| id == k as u32 + 1).count();
                    assert_eq!(count, s);
                }
            }
        }
    }
}
