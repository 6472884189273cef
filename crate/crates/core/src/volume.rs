//! Volume payload types layered on [`VolumeGeometry`].
//!
//! All payloads are row-major with x fastest and immutable after
//! construction, so concurrent readers never need synchronization.

use crate::error::{Error, Result};
use crate::geometry::VolumeGeometry;

/// Tolerance on the per-voxel probability sum accepted by [`ProbVolume::new`].
pub const PROB_SUM_TOLERANCE: f64 = 1e-6;

/// Number of classes in the label space (background, artery, vein).
pub const NUM_CLASSES: usize = 3;

/// The two vessel classes. Background (label 0) is deliberately excluded:
/// operations that act per vessel class take this enum, operations over the
/// full label space take a raw `u8`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VesselClass {
    Artery,
    Vein,
}

impl VesselClass {
    pub const BOTH: [VesselClass; 2] = [VesselClass::Artery, VesselClass::Vein];

    #[inline]
    pub fn label(self) -> u8 {
        match self {
            VesselClass::Artery => 1,
            VesselClass::Vein => 2,
        }
    }

    pub fn other(self) -> Self {
        match self {
            VesselClass::Artery => VesselClass::Vein,
            VesselClass::Vein => VesselClass::Artery,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            VesselClass::Artery => "artery",
            VesselClass::Vein => "vein",
        }
    }

    pub fn from_label(label: u8) -> Result<Self> {
        match label {
            1 => Ok(VesselClass::Artery),
            2 => Ok(VesselClass::Vein),
            other => Err(Error::Domain(format!(
                "label {other} is not a vessel class (expected 1 or 2)"
            ))),
        }
    }
}

/// Real-valued volume (CT intensities, weights, soft fields). Stored as f64
/// in memory; file payloads are float32 and widen on read.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarVolume {
    geometry: VolumeGeometry,
    data: Vec<f64>,
}

impl ScalarVolume {
    pub fn new(geometry: VolumeGeometry, data: Vec<f64>) -> Result<Self> {
        if data.len() != geometry.voxel_count() {
            return Err(Error::InvalidVolume(format!(
                "scalar payload length {} does not match {} voxels",
                data.len(),
                geometry.voxel_count()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidVolume(format!(
                "non-finite value {} at voxel {pos}",
                data[pos]
            )));
        }
        Ok(Self { geometry, data })
    }

    pub fn filled(geometry: VolumeGeometry, value: f64) -> Result<Self> {
        let n = geometry.voxel_count();
        Self::new(geometry, vec![value; n])
    }

    pub fn geometry(&self) -> &VolumeGeometry {
        &self.geometry
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.geometry.index(i, j, k)]
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }
}

/// Per-voxel class labels: 0 = background, 1 = artery, 2 = vein.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVolume {
    geometry: VolumeGeometry,
    data: Vec<u8>,
}

impl LabelVolume {
    pub fn new(geometry: VolumeGeometry, data: Vec<u8>) -> Result<Self> {
        if data.len() != geometry.voxel_count() {
            return Err(Error::InvalidVolume(format!(
                "label payload length {} does not match {} voxels",
                data.len(),
                geometry.voxel_count()
            )));
        }
        if let Some(pos) = data.iter().position(|&v| v > 2) {
            return Err(Error::InvalidVolume(format!(
                "label value {} at voxel {pos} outside {{0,1,2}}",
                data[pos]
            )));
        }
        Ok(Self { geometry, data })
    }

    pub fn zeros(geometry: VolumeGeometry) -> Self {
        let n = geometry.voxel_count();
        Self {
            geometry,
            data: vec![0; n],
        }
    }

    pub fn geometry(&self) -> &VolumeGeometry {
        &self.geometry
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> u8 {
        self.data[self.geometry.index(i, j, k)]
    }

    /// Exact count of voxels carrying `label`.
    pub fn voxel_count(&self, label: u8) -> usize {
        self.data.iter().filter(|&&v| v == label).count()
    }

    /// True if any voxel is nonzero.
    pub fn any_nonzero(&self) -> bool {
        self.data.iter().any(|&v| v != 0)
    }

    /// Binary mask (as a new LabelVolume with values {0,1}) selecting `class`.
    pub fn class_mask(&self, class: VesselClass) -> LabelVolume {
        let label = class.label();
        LabelVolume {
            geometry: self.geometry.clone(),
            data: self
                .data
                .iter()
                .map(|&v| u8::from(v == label))
                .collect(),
        }
    }

    /// Checks the payload is binary, as required by mask-consuming ops.
    pub fn ensure_binary(&self) -> Result<()> {
        if let Some(pos) = self.data.iter().position(|&v| v > 1) {
            return Err(Error::InvalidMask(format!(
                "expected a binary mask but voxel {pos} holds {}",
                self.data[pos]
            )));
        }
        Ok(())
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }
}

/// Per-voxel probability simplex over the 3 classes, the stand-in for a
/// softmax output. Layout is class-major: plane c occupies
/// `data[c*n .. (c+1)*n]` with the usual x-fastest order inside each plane,
/// matching the 4D file layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVolume {
    geometry: VolumeGeometry,
    data: Vec<f64>,
}

impl ProbVolume {
    /// Validating constructor: every voxel's probabilities must be >= 0 and
    /// sum to 1 within [`PROB_SUM_TOLERANCE`].
    pub fn new(geometry: VolumeGeometry, data: Vec<f64>) -> Result<Self> {
        let v = Self::new_raw(geometry, data)?;
        let n = v.geometry.voxel_count();
        for voxel in 0..n {
            let mut sum = 0.0;
            for c in 0..NUM_CLASSES {
                let p = v.data[c * n + voxel];
                if p < 0.0 {
                    return Err(Error::InvalidVolume(format!(
                        "negative probability {p} for class {c} at voxel {voxel}"
                    )));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
                return Err(Error::InvalidVolume(format!(
                    "probability sum {sum} at voxel {voxel} outside 1 +/- {PROB_SUM_TOLERANCE}"
                )));
            }
        }
        Ok(v)
    }

    /// Length/finiteness checks only, no simplex constraint. Exists for
    /// perturbation analysis (finite-difference gradient probes need to move
    /// a single entry off the simplex).
    pub fn new_raw(geometry: VolumeGeometry, data: Vec<f64>) -> Result<Self> {
        if data.len() != NUM_CLASSES * geometry.voxel_count() {
            return Err(Error::InvalidVolume(format!(
                "probability payload length {} does not match 3 x {} voxels",
                data.len(),
                geometry.voxel_count()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidVolume(format!(
                "non-finite probability {} at entry {pos}",
                data[pos]
            )));
        }
        Ok(Self { geometry, data })
    }

    /// One-hot encoding of a label volume.
    pub fn one_hot(labels: &LabelVolume) -> Self {
        let n = labels.geometry().voxel_count();
        let mut data = vec![0.0; NUM_CLASSES * n];
        for (voxel, &label) in labels.data().iter().enumerate() {
            data[label as usize * n + voxel] = 1.0;
        }
        Self {
            geometry: labels.geometry().clone(),
            data,
        }
    }

    pub fn geometry(&self) -> &VolumeGeometry {
        &self.geometry
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// The probability plane of one class.
    pub fn class_plane(&self, class: usize) -> &[f64] {
        let n = self.geometry.voxel_count();
        &self.data[class * n..(class + 1) * n]
    }

    #[inline]
    pub fn prob(&self, class: usize, voxel: usize) -> f64 {
        self.data[class * self.geometry.voxel_count() + voxel]
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }
}

/// Per-voxel per-class real field sharing the [`ProbVolume`] layout. Used
/// for loss gradients, which live in probability space but are not a
/// simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassField {
    geometry: VolumeGeometry,
    data: Vec<f64>,
}

impl ClassField {
    pub fn zeros(geometry: VolumeGeometry) -> Self {
        let n = NUM_CLASSES * geometry.voxel_count();
        Self {
            geometry,
            data: vec![0.0; n],
        }
    }

    pub fn from_data(geometry: VolumeGeometry, data: Vec<f64>) -> Result<Self> {
        if data.len() != NUM_CLASSES * geometry.voxel_count() {
            return Err(Error::InvalidVolume(format!(
                "class field length {} does not match 3 x {} voxels",
                data.len(),
                geometry.voxel_count()
            )));
        }
        Ok(Self { geometry, data })
    }

    pub fn geometry(&self) -> &VolumeGeometry {
        &self.geometry
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, class: usize, voxel: usize) -> f64 {
        self.data[class * self.geometry.voxel_count() + voxel]
    }

    #[inline]
    pub fn add(&mut self, class: usize, voxel: usize, value: f64) {
        self.data[class * self.geometry.voxel_count() + voxel] += value;
    }

    /// self += scale * other
    pub fn axpy(&mut self, scale: f64, other: &ClassField) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += scale * b;
        }
    }
}
