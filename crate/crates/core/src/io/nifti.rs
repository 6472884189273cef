//! Minimal single-file NIfTI-1 reader/writer.
//!
//! Supported subset: 348-byte header, magic `n+1\0`, datatype codes 2
//! (uint8), 4 (int16) and 16 (float32), `dim[0]` of 3 or 4 (4 only for the
//! 3-channel probability layout), little-endian payloads. `pixdim[1..3]`
//! is the voxel spacing, `scl_slope`/`scl_inter` are applied when the slope
//! is nonzero, and of the qform/sform only the translation is honored —
//! any rotation or shear is ignored with a warning. Everything outside the
//! subset is rejected with a specific error.

use std::path::Path;

use byteorder::{ByteOrder, LittleEndian};

use crate::error::{Error, Result};
use crate::geometry::VolumeGeometry;

use super::{Datatype, RawVolume};

pub(super) const HEADER_LEN: usize = 348;
pub(super) const MAGIC: &[u8; 4] = b"n+1\0";
/// Payload offset used when writing: header plus the 4-byte extension flag.
const VOX_OFFSET: usize = 352;

const DT_UINT8: i16 = 2;
const DT_INT16: i16 = 4;
const DT_FLOAT32: i16 = 16;

fn datatype_from_code(code: i16) -> Option<Datatype> {
    match code {
        DT_UINT8 => Some(Datatype::Uint8),
        DT_INT16 => Some(Datatype::Int16),
        DT_FLOAT32 => Some(Datatype::Float32),
        _ => None,
    }
}

fn corrupt(path: &Path, reason: impl Into<String>) -> Error {
    Error::CorruptFile {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

pub(super) fn read(path: &Path, bytes: &[u8]) -> Result<RawVolume> {
    let header = &bytes[..HEADER_LEN];
    let sizeof_hdr = LittleEndian::read_i32(&header[0..4]);
    if sizeof_hdr != HEADER_LEN as i32 {
        return Err(corrupt(
            path,
            format!("sizeof_hdr is {sizeof_hdr}, expected 348 (big-endian files are unsupported)"),
        ));
    }

    let mut dim = [0i16; 8];
    LittleEndian::read_i16_into(&header[40..56], &mut dim);
    if dim[0] != 3 && dim[0] != 4 {
        return Err(corrupt(path, format!("dim[0] is {}, expected 3 or 4", dim[0])));
    }
    if dim[1] < 1 || dim[2] < 1 || dim[3] < 1 {
        return Err(corrupt(path, format!("spatial dims {:?} must be >= 1", &dim[1..4])));
    }
    let channels = if dim[0] == 4 {
        match dim[4] {
            1 => 1,
            3 => 3,
            other => {
                return Err(corrupt(
                    path,
                    format!("dim[4] is {other}, expected 1 or 3 channels"),
                ))
            }
        }
    } else {
        1
    };

    let datatype_code = LittleEndian::read_i16(&header[70..72]);
    let datatype = datatype_from_code(datatype_code).ok_or_else(|| Error::UnsupportedDatatype {
        path: path.to_path_buf(),
        datatype: format!("NIfTI code {datatype_code}"),
    })?;
    let bitpix = LittleEndian::read_i16(&header[72..74]);
    if bitpix as usize != datatype.bytes_per_element() * 8 {
        return Err(corrupt(
            path,
            format!("bitpix {bitpix} inconsistent with datatype code {datatype_code}"),
        ));
    }

    let mut pixdim = [0f32; 8];
    LittleEndian::read_f32_into(&header[76..108], &mut pixdim);
    let spacing = [f64::from(pixdim[1]), f64::from(pixdim[2]), f64::from(pixdim[3])];
    if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
        return Err(corrupt(path, format!("nonpositive pixdim {spacing:?}")));
    }

    let vox_offset = LittleEndian::read_f32(&header[108..112]);
    if !vox_offset.is_finite() || vox_offset < HEADER_LEN as f32 || vox_offset.fract() != 0.0 {
        return Err(corrupt(path, format!("bad vox_offset {vox_offset}")));
    }
    let vox_offset = vox_offset as usize;

    let scl_slope = f64::from(LittleEndian::read_f32(&header[112..116]));
    let scl_inter = f64::from(LittleEndian::read_f32(&header[116..120]));

    let qform_code = LittleEndian::read_i16(&header[252..254]);
    let sform_code = LittleEndian::read_i16(&header[254..256]);
    let origin = if sform_code > 0 {
        let srow: Vec<f32> = (0..12)
            .map(|i| LittleEndian::read_f32(&header[280 + 4 * i..284 + 4 * i]))
            .collect();
        // Off-diagonal terms would encode rotation/shear we do not apply.
        let off_diagonal = [srow[1], srow[2], srow[4], srow[6], srow[8], srow[9]];
        if off_diagonal.iter().any(|&v| v != 0.0) {
            log::warn!(
                "{}: sform rotation/shear ignored, only the translation is used",
                path.display()
            );
        }
        [f64::from(srow[3]), f64::from(srow[7]), f64::from(srow[11])]
    } else if qform_code > 0 {
        let b = LittleEndian::read_f32(&header[256..260]);
        let c = LittleEndian::read_f32(&header[260..264]);
        let d = LittleEndian::read_f32(&header[264..268]);
        if b != 0.0 || c != 0.0 || d != 0.0 {
            log::warn!(
                "{}: qform rotation ignored, only the offset is used",
                path.display()
            );
        }
        [
            f64::from(LittleEndian::read_f32(&header[268..272])),
            f64::from(LittleEndian::read_f32(&header[272..276])),
            f64::from(LittleEndian::read_f32(&header[276..280])),
        ]
    } else {
        [0.0; 3]
    };

    let dims = [dim[1] as usize, dim[2] as usize, dim[3] as usize];
    let geometry = VolumeGeometry::new(dims, spacing, origin)?;
    let expected = geometry.voxel_count() * channels * datatype.bytes_per_element();
    if bytes.len() < vox_offset || bytes.len() - vox_offset != expected {
        return Err(corrupt(
            path,
            format!(
                "payload is {} bytes, header implies {expected}",
                bytes.len().saturating_sub(vox_offset)
            ),
        ));
    }

    let mut values = datatype.decode(&bytes[vox_offset..]);
    if scl_slope != 0.0 && (scl_slope != 1.0 || scl_inter != 0.0) {
        for v in &mut values {
            *v = *v * scl_slope + scl_inter;
        }
    }

    Ok(RawVolume {
        geometry,
        channels,
        values,
    })
}

pub(super) fn write(
    path: &Path,
    geometry: &VolumeGeometry,
    channels: usize,
    datatype: Datatype,
    values: &[f64],
) -> Result<()> {
    debug_assert_eq!(values.len(), geometry.voxel_count() * channels);
    let mut header = vec![0u8; VOX_OFFSET];
    LittleEndian::write_i32(&mut header[0..4], HEADER_LEN as i32);

    let dims = geometry.dims();
    let mut dim = [1i16; 8];
    dim[0] = if channels == 1 { 3 } else { 4 };
    dim[1] = dims[0] as i16;
    dim[2] = dims[1] as i16;
    dim[3] = dims[2] as i16;
    dim[4] = channels as i16;
    for (i, d) in dim.iter().enumerate() {
        LittleEndian::write_i16(&mut header[40 + 2 * i..42 + 2 * i], *d);
    }

    let code = match datatype {
        Datatype::Uint8 => DT_UINT8,
        Datatype::Int16 => DT_INT16,
        Datatype::Float32 => DT_FLOAT32,
    };
    LittleEndian::write_i16(&mut header[70..72], code);
    LittleEndian::write_i16(&mut header[72..74], (datatype.bytes_per_element() * 8) as i16);

    let spacing = geometry.spacing();
    let mut pixdim = [0f32; 8];
    pixdim[0] = 1.0;
    pixdim[1] = spacing[0] as f32;
    pixdim[2] = spacing[1] as f32;
    pixdim[3] = spacing[2] as f32;
    for (i, p) in pixdim.iter().enumerate() {
        LittleEndian::write_f32(&mut header[76 + 4 * i..80 + 4 * i], *p);
    }

    LittleEndian::write_f32(&mut header[108..112], VOX_OFFSET as f32);
    LittleEndian::write_f32(&mut header[112..116], 1.0); // scl_slope: identity
    LittleEndian::write_f32(&mut header[116..120], 0.0); // scl_inter

    // qform with identity rotation carries the origin.
    let origin = geometry.origin();
    LittleEndian::write_i16(&mut header[252..254], 1); // qform_code
    LittleEndian::write_i16(&mut header[254..256], 0); // sform_code
    LittleEndian::write_f32(&mut header[268..272], origin[0] as f32);
    LittleEndian::write_f32(&mut header[272..276], origin[1] as f32);
    LittleEndian::write_f32(&mut header[276..280], origin[2] as f32);

    header[344..348].copy_from_slice(MAGIC);

    let mut bytes = header;
    bytes.extend_from_slice(&datatype.encode(values));
    super::write_bytes(path, &bytes)
}
