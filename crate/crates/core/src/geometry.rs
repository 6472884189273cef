//! Voxel grid geometry: dimensions, physical spacing and world origin.

use crate::error::{Error, Result};

/// Upper bound on total voxel count accepted at construction. Keeps index
/// arithmetic inside `usize` with room for the 3-channel probability layout.
const MAX_VOXELS: usize = 1 << 40;

/// Regular 3D voxel grid.
///
/// `dims` counts voxels along x/y/z, `spacing` is millimeters per voxel and
/// `origin` is the world position (mm) of the center of voxel (0,0,0).
/// Payloads attached to a geometry are row-major with x fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeGeometry {
    dims: [usize; 3],
    spacing: [f64; 3],
    origin: [f64; 3],
}

impl VolumeGeometry {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3]) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidVolume(format!(
                "all dims must be >= 1, got {dims:?}"
            )));
        }
        if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidVolume(format!(
                "all spacing components must be finite and > 0, got {spacing:?}"
            )));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::InvalidVolume(format!(
                "origin must be finite, got {origin:?}"
            )));
        }
        let count = dims[0]
            .checked_mul(dims[1])
            .and_then(|p| p.checked_mul(dims[2]))
            .filter(|&c| c <= MAX_VOXELS);
        if count.is_none() {
            return Err(Error::InvalidVolume(format!(
                "voxel count of {dims:?} exceeds addressable limit"
            )));
        }
        Ok(Self {
            dims,
            spacing,
            origin,
        })
    }

    /// Unit-spacing grid at the world origin; the common phantom setting.
    pub fn isotropic(dims: [usize; 3]) -> Result<Self> {
        Self::new(dims, [1.0; 3], [0.0; 3])
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }

    /// Total number of voxels.
    pub fn voxel_count(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    /// Flat index of voxel (i,j,k); x fastest.
    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        debug_assert!(i < self.dims[0] && j < self.dims[1] && k < self.dims[2]);
        (k * self.dims[1] + j) * self.dims[0] + i
    }

    /// Inverse of [`index`](Self::index).
    #[inline]
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let i = index % self.dims[0];
        let rest = index / self.dims[0];
        [i, rest % self.dims[1], rest / self.dims[1]]
    }

    #[inline]
    pub fn contains(&self, i: i64, j: i64, k: i64) -> bool {
        i >= 0
            && j >= 0
            && k >= 0
            && (i as usize) < self.dims[0]
            && (j as usize) < self.dims[1]
            && (k as usize) < self.dims[2]
    }

    /// World coordinates (mm) of the center of voxel (i,j,k).
    pub fn world_of(&self, voxel: [usize; 3]) -> [f64; 3] {
        [
            self.origin[0] + voxel[0] as f64 * self.spacing[0],
            self.origin[1] + voxel[1] as f64 * self.spacing[1],
            self.origin[2] + voxel[2] as f64 * self.spacing[2],
        ]
    }

    /// Geometry of a sub-box of this grid, with the origin shifted so the
    /// retained voxels keep their world coordinates.
    pub fn cropped(&self, lower: [usize; 3], dims: [usize; 3]) -> Result<Self> {
        for a in 0..3 {
            if lower[a] + dims[a] > self.dims[a] {
                return Err(Error::InvalidVolume(format!(
                    "crop box {lower:?}+{dims:?} exceeds volume dims {:?}",
                    self.dims
                )));
            }
        }
        Self::new(dims, self.spacing, self.world_of(lower))
    }

    /// Equality check used by every operation that requires two volumes to
    /// live on the same grid.
    pub fn same_grid(&self, other: &Self) -> bool {
        self == other
    }

    /// Error helper for mismatched grids.
    pub fn ensure_same_grid(&self, other: &Self, what: &str) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::GeometryMismatch(format!(
                "{what}: {:?}/{:?}/{:?} vs {:?}/{:?}/{:?}",
                self.dims, self.spacing, self.origin, other.dims, other.spacing, other.origin
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_zero_dim() {
        assert!(VolumeGeometry::new([0, 4, 4], [1.0; 3], [0.0; 3]).is_err());
    }

    #[test]
    fn rejects_nonpositive_spacing() {
        assert!(VolumeGeometry::new([4, 4, 4], [1.0, 0.0, 1.0], [0.0; 3]).is_err());
        assert!(VolumeGeometry::new([4, 4, 4], [1.0, -2.0, 1.0], [0.0; 3]).is_err());
    }

    #[test]
    fn rejects_oversized_volume() {
        assert!(VolumeGeometry::new([1 << 21, 1 << 21, 1 << 21], [1.0; 3], [0.0; 3]).is_err());
    }

    #[test]
    fn index_roundtrip() {
        let g = VolumeGeometry::isotropic([3, 4, 5]).unwrap();
        for k in 0..5 {
            for j in 0..4 {
                for i in 0..3 {
                    assert_eq!(g.coords(g.index(i, j, k)), [i, j, k]);
                }
            }
        }
        assert_eq!(g.index(0, 0, 0), 0);
        assert_eq!(g.index(1, 0, 0), 1); // x fastest
    }

    #[test]
    fn cropped_preserves_world_coordinates() {
        let g = VolumeGeometry::new([10, 10, 10], [0.5, 1.0, 2.0], [5.0, -3.0, 0.0]).unwrap();
        let c = g.cropped([2, 3, 4], [4, 4, 4]).unwrap();
        assert_eq!(c.world_of([0, 0, 0]), g.world_of([2, 3, 4]));
        assert_eq!(c.dims(), [4, 4, 4]);
    }
}
