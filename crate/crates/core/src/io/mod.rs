//! Volume file I/O.
//!
//! Two formats are supported and auto-detected by magic bytes:
//!
//! * single-file NIfTI-1 (`.nii`, magic `n+1\0`) — see [`nifti`] for the
//!   deliberately minimal subset;
//! * a raw little-endian payload described by a `RAWVOL 1` text sidecar —
//!   see [`sidecar`].
//!
//! Anything else is rejected loudly; guessing at a medical volume's layout
//! is worse than refusing it. Write then read is the identity on
//! (geometry, payload) for every supported datatype.

mod nifti;
mod sidecar;

use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::VolumeGeometry;
use crate::volume::{LabelVolume, ProbVolume, ScalarVolume, NUM_CLASSES};

pub use sidecar::SIDECAR_MAGIC;

/// On-disk element type. In-memory values are always f64.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Datatype {
    Uint8,
    Int16,
    Float32,
}

impl Datatype {
    pub fn bytes_per_element(self) -> usize {
        match self {
            Datatype::Uint8 => 1,
            Datatype::Int16 => 2,
            Datatype::Float32 => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Datatype::Uint8 => "uint8",
            Datatype::Int16 => "int16",
            Datatype::Float32 => "float32",
        }
    }

    fn decode(self, payload: &[u8]) -> Vec<f64> {
        match self {
            Datatype::Uint8 => payload.iter().map(|&b| f64::from(b)).collect(),
            Datatype::Int16 => payload
                .chunks_exact(2)
                .map(|c| f64::from(i16::from_le_bytes([c[0], c[1]])))
                .collect(),
            Datatype::Float32 => payload
                .chunks_exact(4)
                .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
                .collect(),
        }
    }

    fn encode(self, values: &[f64]) -> Vec<u8> {
        match self {
            Datatype::Uint8 => values.iter().map(|&v| v as u8).collect(),
            Datatype::Int16 => values
                .iter()
                .flat_map(|&v| (v as i16).to_le_bytes())
                .collect(),
            Datatype::Float32 => values
                .iter()
                .flat_map(|&v| (v as f32).to_le_bytes())
                .collect(),
        }
    }
}

/// A decoded file before interpretation as a specific volume type.
struct RawVolume {
    geometry: VolumeGeometry,
    channels: usize,
    values: Vec<f64>,
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn load(path: &Path) -> Result<RawVolume> {
    let bytes = read_bytes(path)?;
    if bytes.len() >= nifti::HEADER_LEN && &bytes[344..348] == nifti::MAGIC {
        nifti::read(path, &bytes)
    } else if bytes.starts_with(SIDECAR_MAGIC.as_bytes()) {
        sidecar::read(path, &bytes)
    } else {
        Err(Error::Format {
            path: path.to_path_buf(),
            reason: "unrecognized magic bytes (expected NIfTI-1 `n+1` or `RAWVOL 1`)".into(),
        })
    }
}

fn ensure_channels(path: &Path, raw: &RawVolume, expected: usize) -> Result<()> {
    if raw.channels != expected {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!("expected {expected} channel(s), file has {}", raw.channels),
        });
    }
    Ok(())
}

/// Read a scalar volume (1 channel, any supported datatype, scaling applied).
pub fn read_scalar(path: impl AsRef<Path>) -> Result<ScalarVolume> {
    let path = path.as_ref();
    let raw = load(path)?;
    ensure_channels(path, &raw, 1)?;
    ScalarVolume::new(raw.geometry, raw.values)
}

/// Read a label volume. Every decoded value must be exactly 0, 1 or 2.
pub fn read_label(path: impl AsRef<Path>) -> Result<LabelVolume> {
    let path = path.as_ref();
    let raw = load(path)?;
    ensure_channels(path, &raw, 1)?;
    let mut labels = Vec::with_capacity(raw.values.len());
    for (index, &v) in raw.values.iter().enumerate() {
        if v == 0.0 || v == 1.0 || v == 2.0 {
            labels.push(v as u8);
        } else {
            return Err(Error::InvalidLabel {
                path: path.to_path_buf(),
                index,
                value: v,
            });
        }
    }
    LabelVolume::new(raw.geometry, labels)
}

/// Read a 3-channel probability volume; the per-voxel simplex is validated.
pub fn read_prob(path: impl AsRef<Path>) -> Result<ProbVolume> {
    let path = path.as_ref();
    let raw = load(path)?;
    ensure_channels(path, &raw, NUM_CLASSES)?;
    ProbVolume::new(raw.geometry, raw.values)
}

fn is_nifti_path(path: &Path) -> bool {
    path.extension().map_or(false, |e| e == "nii")
}

fn write_values(
    path: &Path,
    geometry: &VolumeGeometry,
    channels: usize,
    datatype: Datatype,
    values: &[f64],
) -> Result<()> {
    if is_nifti_path(path) {
        nifti::write(path, geometry, channels, datatype, values)
    } else {
        sidecar::write(path, geometry, channels, datatype, values)
    }
}

/// Write a scalar volume as float32 (`.nii` for NIfTI, anything else as a
/// RAWVOL sidecar plus payload).
pub fn write_scalar(volume: &ScalarVolume, path: impl AsRef<Path>) -> Result<()> {
    write_values(
        path.as_ref(),
        volume.geometry(),
        1,
        Datatype::Float32,
        volume.data(),
    )
}

/// Write a label volume as uint8.
pub fn write_label(volume: &LabelVolume, path: impl AsRef<Path>) -> Result<()> {
    let values: Vec<f64> = volume.data().iter().map(|&v| f64::from(v)).collect();
    write_values(path.as_ref(), volume.geometry(), 1, Datatype::Uint8, &values)
}

/// Write a probability volume as a 3-channel float32 payload.
pub fn write_prob(volume: &ProbVolume, path: impl AsRef<Path>) -> Result<()> {
    write_values(
        path.as_ref(),
        volume.geometry(),
        NUM_CLASSES,
        Datatype::Float32,
        volume.data(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn ramp_volume(dims: [usize; 3]) -> ScalarVolume {
        let g = VolumeGeometry::new(dims, [1.1, 0.9, 1.3], [4.0, -2.0, 0.5]).unwrap();
        let n = g.voxel_count();
        ScalarVolume::new(g, (0..n).map(|i| i as f64).collect()).unwrap()
    }

    #[test]
    fn nifti_uint8_zero_volume() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("zeros.nii");
        let g = VolumeGeometry::isotropic([4, 4, 4]).unwrap();
        let v = LabelVolume::zeros(g);
        write_label(&v, &path).unwrap();
        let back = read_scalar(&path).unwrap();
        assert_eq!(back.geometry().dims(), [4, 4, 4]);
        assert_eq!(back.data().len(), 64);
        assert!(back.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn sidecar_ramp_roundtrip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("ramp.rvol");
        let v = ramp_volume([2, 3, 4]);
        write_scalar(&v, &path).unwrap();
        let back = read_scalar(&path).unwrap();
        assert_eq!(back.geometry(), v.geometry());
        assert_eq!(back.data(), v.data());
    }

    #[test]
    fn float_values_preserved_bit_exactly() {
        let dir = tempdir().unwrap();
        for name in ["v.nii", "v.rvol"] {
            let path = dir.path().join(name);
            let g = VolumeGeometry::isotropic([3, 1, 1]).unwrap();
            let values = vec![-1000.5, 0.0, 3071.25];
            let v = ScalarVolume::new(g, values.clone()).unwrap();
            write_scalar(&v, &path).unwrap();
            let back = read_scalar(&path).unwrap();
            for (a, b) in back.data().iter().zip(values.iter()) {
                assert_eq!(a.to_bits(), b.to_bits(), "{name}");
            }
        }
    }

    #[test]
    fn unrecognized_magic_is_format_error() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("garbage.bin");
        std::fs::write(&path, vec![0xFFu8; 400]).unwrap();
        match read_scalar(&path) {
            Err(Error::Format { .. }) => {}
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn unsupported_nifti_datatype_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("complex.nii");
        let g = VolumeGeometry::isotropic([2, 2, 2]).unwrap();
        let v = ScalarVolume::filled(g.clone(), 0.0).unwrap();
        write_scalar(&v, &path).unwrap();
        // Patch the datatype field (offset 70) to 32 = complex64.
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[70..72].copy_from_slice(&32i16.to_le_bytes());
        std::fs::write(&path, &bytes).unwrap();
        match read_scalar(&path) {
            Err(Error::UnsupportedDatatype { datatype, .. }) => {
                assert!(datatype.contains("32"));
            }
            other => panic!("expected unsupported-datatype error, got {other:?}"),
        }
    }

    #[test]
    fn truncated_payload_is_corrupt() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("short.nii");
        let v = ramp_volume([4, 4, 4]);
        write_scalar(&v, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
        match read_scalar(&path) {
            Err(Error::CorruptFile { .. }) => {}
            other => panic!("expected corrupt-file error, got {other:?}"),
        }
    }

    #[test]
    fn label_request_on_out_of_range_values() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("notlabels.nii");
        let g = VolumeGeometry::isotropic([2, 2, 2]).unwrap();
        let v = ScalarVolume::new(g, vec![0.0, 1.0, 2.0, 3.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        write_scalar(&v, &path).unwrap();
        match read_label(&path) {
            Err(Error::InvalidLabel { index, value, .. }) => {
                assert_eq!(index, 3);
                assert_eq!(value, 3.0);
            }
            other => panic!("expected invalid-label error, got {other:?}"),
        }
    }

    #[test]
    fn write_to_unwritable_directory_names_path() {
        let path = Path::new("/nonexistent-dir-for-vesselseg/test.nii");
        let g = VolumeGeometry::isotropic([2, 2, 2]).unwrap();
        let v = ScalarVolume::filled(g, 1.0).unwrap();
        match write_scalar(&v, path) {
            Err(Error::Io { path: p, .. }) => {
                assert!(p.to_string_lossy().contains("nonexistent-dir-for-vesselseg"));
            }
            other => panic!("expected io error, got {other:?}"),
        }
    }

    #[test]
    fn prob_roundtrip_both_formats() {
        let dir = tempdir().unwrap();
        let g = VolumeGeometry::isotropic([2, 2, 1]).unwrap();
        let n = g.voxel_count();
        let mut data = vec![0.0; 3 * n];
        for v in 0..n {
            data[v] = 0.25;
            data[n + v] = 0.5;
            data[2 * n + v] = 0.25;
        }
        let p = ProbVolume::new(g, data).unwrap();
        for name in ["p.nii", "p.rvol"] {
            let path = dir.path().join(name);
            write_prob(&p, &path).unwrap();
            let back = read_prob(&path).unwrap();
            assert_eq!(back.data(), p.data(), "{name}");
            // and a scalar read must refuse the 3-channel file
            assert!(read_scalar(&path).is_err());
        }
    }
}
