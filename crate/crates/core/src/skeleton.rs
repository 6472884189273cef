//! Topology-preserving centerline extraction by iterative thinning.
//!
//! The algorithm peels deletable boundary voxels in six fixed directional
//! sub-iterations (+x, -x, +y, -y, +z, -z) until a fixed point. A voxel is
//! deletable when removing it preserves both the 26-connectivity of the
//! foreground and the 6-connectivity of the background inside its 3x3x3
//! neighborhood, and it is not a curve endpoint (at most one foreground
//! neighbor). Candidates are collected per sub-iteration and deleted in
//! raster order with the predicate re-checked at deletion time, so the
//! result is deterministic and component counts are preserved by
//! construction.

use crate::error::{Error, Result};
use crate::geometry::VolumeGeometry;
use crate::volume::{LabelVolume, VesselClass};

/// Binary volume marking centerline voxels of a mask.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonVolume {
    geometry: VolumeGeometry,
    data: Vec<u8>,
}

impl SkeletonVolume {
    pub fn geometry(&self) -> &VolumeGeometry {
        &self.geometry
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn is_set(&self, index: usize) -> bool {
        self.data[index] != 0
    }

    /// Number of centerline voxels.
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    /// Flat indices of centerline voxels, in raster order.
    pub fn voxel_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.data
            .iter()
            .enumerate()
            .filter_map(|(i, &v)| (v != 0).then_some(i))
    }

    /// View the skeleton as a binary label volume (for file output).
    pub fn to_label_volume(&self) -> LabelVolume {
        LabelVolume::new(self.geometry.clone(), self.data.clone())
            .expect("skeleton data is binary")
    }

    /// Wrap an existing binary volume (e.g. an analytic centerline) without
    /// running the thinning.
    pub fn from_binary(mask: &LabelVolume) -> Result<Self> {
        mask.ensure_binary()?;
        Ok(Self {
            geometry: mask.geometry().clone(),
            data: mask.data().to_vec(),
        })
    }
}

// Positions inside the 3x3x3 block are numbered p = (dz+1)*9 + (dy+1)*3
// + (dx+1); the center is position 13.
const CENTER: usize = 13;

const fn delta(p: usize) -> (i32, i32, i32) {
    (
        (p % 3) as i32 - 1,
        ((p / 3) % 3) as i32 - 1,
        (p / 9) as i32 - 1,
    )
}

const fn abs(v: i32) -> i32 {
    if v < 0 {
        -v
    } else {
        v
    }
}

/// adjacency[p] = bitmask of positions q adjacent to p.
const fn build_adjacency(faces_only: bool) -> [u32; 27] {
    let mut table = [0u32; 27];
    let mut p = 0;
    while p < 27 {
        let (px, py, pz) = delta(p);
        let mut q = 0;
        while q < 27 {
            if p != q {
                let (qx, qy, qz) = delta(q);
                let (dx, dy, dz) = (abs(px - qx), abs(py - qy), abs(pz - qz));
                let adjacent = if faces_only {
                    dx + dy + dz == 1
                } else {
                    dx <= 1 && dy <= 1 && dz <= 1
                };
                if adjacent {
                    table[p] |= 1 << q;
                }
            }
            q += 1;
        }
        p += 1;
    }
    table
}

const fn position_mask(max_manhattan: i32, min_manhattan: i32) -> u32 {
    let mut mask = 0u32;
    let mut p = 0;
    while p < 27 {
        let (x, y, z) = delta(p);
        let m = abs(x) + abs(y) + abs(z);
        if m >= min_manhattan && m <= max_manhattan {
            mask |= 1 << p;
        }
        p += 1;
    }
    mask
}

const ADJ26: [u32; 27] = build_adjacency(false);
const ADJ6: [u32; 27] = build_adjacency(true);
/// Face + edge neighbors of the center (the 18-neighborhood).
const N18: u32 = position_mask(2, 1);
/// Face neighbors of the center.
const FACES: u32 = position_mask(1, 1);

/// Number of connected components of `set` (a bitmask over block positions)
/// under the given adjacency table.
fn component_count(mut set: u32, adjacency: &[u32; 27], keep: impl Fn(u32) -> bool) -> u32 {
    let mut count = 0;
    while set != 0 {
        let seed = set & set.wrapping_neg();
        let mut comp = seed;
        loop {
            let mut grown = comp;
            let mut frontier = comp;
            while frontier != 0 {
                let p = frontier.trailing_zeros() as usize;
                frontier &= frontier - 1;
                grown |= adjacency[p] & set;
            }
            if grown == comp {
                break;
            }
            comp = grown;
        }
        set &= !comp;
        if keep(comp) {
            count += 1;
        }
    }
    count
}

/// Deletability test on a 27-bit neighborhood mask whose center bit is set.
fn deletable(block: u32) -> bool {
    let neighbors = block & !(1 << CENTER);
    // Endpoint preservation: keep curve tips.
    if neighbors.count_ones() < 2 {
        return false;
    }
    // Foreground stays one 26-connected piece after deletion.
    if component_count(neighbors, &ADJ26, |_| true) != 1 {
        return false;
    }
    // Background stays one 6-connected piece among the components that
    // actually touch the center through a face.
    let background = !block & N18;
    component_count(background, &ADJ6, |comp| comp & FACES != 0) == 1
}

/// Whether the center of a 3x3x3 binary block may be deleted during
/// thinning: deletion must preserve the count of 26-connected foreground
/// components and of 6-connected background components reachable through
/// the center's faces, and the center must not be a curve endpoint.
///
/// Block positions are x fastest, so `block[13]` is the center.
pub fn simple_point_test(block: &[bool; 27]) -> bool {
    debug_assert!(block[CENTER], "center voxel must be foreground");
    let mut mask = 0u32;
    for (p, &b) in block.iter().enumerate() {
        if b {
            mask |= 1 << p;
        }
    }
    if mask & (1 << CENTER) == 0 {
        return false;
    }
    deletable(mask)
}

/// Gather the 3x3x3 neighborhood of (i,j,k) as a bitmask; voxels outside
/// the volume read as background.
#[inline]
fn neighborhood(data: &[u8], g: &VolumeGeometry, i: usize, j: usize, k: usize) -> u32 {
    let dims = g.dims();
    let mut mask = 0u32;
    let interior = i >= 1
        && j >= 1
        && k >= 1
        && i + 1 < dims[0]
        && j + 1 < dims[1]
        && k + 1 < dims[2];
    if interior {
        let mut p = 0;
        for dz in -1i64..=1 {
            for dy in -1i64..=1 {
                let base = g.index(
                    i - 1,
                    (j as i64 + dy) as usize,
                    (k as i64 + dz) as usize,
                );
                for dx in 0..3 {
                    if data[base + dx] != 0 {
                        mask |= 1 << p;
                    }
                    p += 1;
                }
            }
        }
    } else {
        let mut p = 0;
        for dz in -1i64..=1 {
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (x, y, z) = (i as i64 + dx, j as i64 + dy, k as i64 + dz);
                    if g.contains(x, y, z)
                        && data[g.index(x as usize, y as usize, z as usize)] != 0
                    {
                        mask |= 1 << p;
                    }
                    p += 1;
                }
            }
        }
    }
    mask
}

const DIRECTIONS: [(i64, i64, i64); 6] = [
    (1, 0, 0),
    (-1, 0, 0),
    (0, 1, 0),
    (0, -1, 0),
    (0, 0, 1),
    (0, 0, -1),
];

/// Thin a binary mask to its centerline.
pub fn skeletonize(mask: &LabelVolume) -> Result<SkeletonVolume> {
    mask.ensure_binary()?;
    let g = mask.geometry().clone();
    let dims = g.dims();
    let mut data = mask.data().to_vec();
    let mut candidates: Vec<usize> = Vec::new();

    loop {
        let mut changed = false;
        for (dx, dy, dz) in DIRECTIONS {
            // Border voxels in this direction, frozen for the sub-iteration.
            candidates.clear();
            let mut idx = 0;
            for k in 0..dims[2] {
                for j in 0..dims[1] {
                    for i in 0..dims[0] {
                        if data[idx] != 0 {
                            let (x, y, z) = (i as i64 + dx, j as i64 + dy, k as i64 + dz);
                            let open = !g.contains(x, y, z)
                                || data[g.index(x as usize, y as usize, z as usize)] == 0;
                            if open {
                                candidates.push(idx);
                            }
                        }
                        idx += 1;
                    }
                }
            }
            // Raster-order sequential deletion with the predicate re-checked
            // against the current state.
            for &idx in &candidates {
                let [i, j, k] = g.coords(idx);
                if deletable(neighborhood(&data, &g, i, j, k)) {
                    data[idx] = 0;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }

    Ok(SkeletonVolume { geometry: g, data })
}

/// Skeleton of one vessel class of a label volume.
pub fn skeleton_of_class(labels: &LabelVolume, class: VesselClass) -> Result<SkeletonVolume> {
    skeletonize(&labels.class_mask(class))
}

/// Reject non-binary input explicitly (used by CLI paths that take a mask
/// argument directly).
pub fn ensure_binary_mask(mask: &LabelVolume) -> Result<()> {
    mask.ensure_binary().map_err(|_| {
        Error::InvalidMask("skeletonize expects a binary mask; select a class first".into())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::VolumeGeometry;

    fn block(fill: impl Fn(i32, i32, i32) -> bool) -> [bool; 27] {
        let mut b = [false; 27];
        for p in 0..27 {
            let (x, y, z) = delta(p);
            b[p] = fill(x, y, z);
        }
        b
    }

    #[test]
    fn endpoint_is_protected() {
        // Exactly one foreground neighbor: topologically removable but
        // blocked by endpoint preservation.
        let b = block(|x, y, z| (x, y, z) == (0, 0, 0) || (x, y, z) == (1, 0, 0));
        assert!(!simple_point_test(&b));
    }

    #[test]
    fn isolated_center_is_not_deletable() {
        let b = block(|x, y, z| (x, y, z) == (0, 0, 0));
        assert!(!simple_point_test(&b));
    }

    #[test]
    fn face_of_solid_block_is_deletable() {
        // Solid half-space below the center: peeling the face is safe.
        let b = block(|_, _, z| z <= 0);
        assert!(simple_point_test(&b));
    }

    #[test]
    fn bridge_is_not_deletable() {
        let b = block(|x, y, z| {
            (x, y, z) == (0, 0, 0) || (x, y, z) == (-1, 0, 0) || (x, y, z) == (1, 0, 0)
        });
        assert!(!simple_point_test(&b));
    }

    #[test]
    fn cavity_creation_is_blocked() {
        // All six face neighbors foreground, corners background: deleting
        // the center would create an enclosed background pocket.
        let b = block(|x, y, z| x.abs() + y.abs() + z.abs() <= 1);
        assert!(!simple_point_test(&b));
    }

    #[test]
    fn empty_mask_gives_empty_skeleton() {
        let g = VolumeGeometry::isotropic([8, 8, 8]).unwrap();
        let skel = skeletonize(&LabelVolume::zeros(g)).unwrap();
        assert_eq!(skel.count(), 0);
    }

    #[test]
    fn non_binary_input_rejected() {
        let g = VolumeGeometry::isotropic([2, 2, 2]).unwrap();
        let labels = LabelVolume::new(g, vec![0, 1, 2, 0, 0, 0, 0, 0]).unwrap();
        assert!(matches!(skeletonize(&labels), Err(Error::InvalidMask(_))));
    }

    #[test]
    fn thin_line_is_fixed_point() {
        let g = VolumeGeometry::isotropic([24, 5, 5]).unwrap();
        let mut data = vec![0u8; g.voxel_count()];
        for i in 2..22 {
            data[g.index(i, 2, 2)] = 1;
        }
        let mask = LabelVolume::new(g, data).unwrap();
        let skel = skeletonize(&mask).unwrap();
        assert_eq!(skel.data(), mask.data());
    }

    #[test]
    fn skeleton_of_missing_class_is_empty() {
        let g = VolumeGeometry::isotropic([4, 4, 4]).unwrap();
        let mut data = vec![0u8; 64];
        data[0] = 1;
        data[1] = 1;
        let labels = LabelVolume::new(g, data).unwrap();
        let skel = skeleton_of_class(&labels, VesselClass::Vein).unwrap();
        assert_eq!(skel.count(), 0);
    }

    #[test]
    fn skeleton_of_class_equals_skeletonize_of_mask() {
        let g = VolumeGeometry::isotropic([12, 12, 12]).unwrap();
        let mut data = vec![0u8; g.voxel_count()];
        for k in 3..9 {
            for j in 3..9 {
                for i in 3..9 {
                    data[g.index(i, j, k)] = 1;
                }
            }
        }
        let labels = LabelVolume::new(g, data).unwrap();
        let a = skeleton_of_class(&labels, VesselClass::Artery).unwrap();
        let b = skeletonize(&labels.class_mask(VesselClass::Artery)).unwrap();
        assert_eq!(a, b);
    }
}
