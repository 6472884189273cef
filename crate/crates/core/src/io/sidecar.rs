//! Raw payload plus text sidecar.
//!
//! The sidecar is a small UTF-8 key-value document and is the file named on
//! the command line; its first line is the magic `RAWVOL 1`. The payload is
//! a little-endian binary file next to the sidecar, named by the `data`
//! key. Keys:
//!
//! ```text
//! RAWVOL 1
//! dims = 2 3 4
//! spacing = 1.1 0.9 1.3
//! origin = 4 -2 0.5
//! datatype = float32
//! channels = 1
//! data = ramp.rvol.raw
//! ```
//!
//! Unlike NIfTI's float32 header fields, spacing and origin are stored as
//! shortest round-trip decimal text, so geometry survives a round trip
//! bit-exactly. On write the payload name is the sidecar file name with
//! `.raw` appended, which can never collide with the sidecar itself.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::VolumeGeometry;

use super::{Datatype, RawVolume};

pub const SIDECAR_MAGIC: &str = "RAWVOL 1";

fn corrupt(path: &Path, reason: impl Into<String>) -> Error {
    Error::CorruptFile {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn parse_triple<T: std::str::FromStr>(path: &Path, key: &str, raw: &str) -> Result<[T; 3]> {
    let parts: Vec<&str> = raw.split_whitespace().collect();
    if parts.len() != 3 {
        return Err(corrupt(path, format!("`{key}` must hold 3 values, got `{raw}`")));
    }
    let mut out: Vec<T> = Vec::with_capacity(3);
    for p in parts {
        out.push(
            p.parse()
                .map_err(|_| corrupt(path, format!("cannot parse `{p}` in `{key}`")))?,
        );
    }
    Ok([
        out.remove(0),
        out.remove(0),
        out.remove(0),
    ])
}

pub(super) fn read(path: &Path, bytes: &[u8]) -> Result<RawVolume> {
    let text = std::str::from_utf8(bytes)
        .map_err(|_| corrupt(path, "sidecar is not valid UTF-8"))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(first) if first.trim() == SIDECAR_MAGIC => {}
        other => {
            return Err(corrupt(
                path,
                format!("first line is {other:?}, expected `{SIDECAR_MAGIC}`"),
            ))
        }
    }

    let mut fields: HashMap<&str, &str> = HashMap::new();
    for line in lines {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| corrupt(path, format!("malformed line `{line}`")))?;
        fields.insert(key.trim(), value.trim());
    }

    let get = |key: &str| -> Result<&str> {
        fields
            .get(key)
            .copied()
            .ok_or_else(|| corrupt(path, format!("missing `{key}` key")))
    };

    let dims: [usize; 3] = parse_triple(path, "dims", get("dims")?)?;
    let spacing: [f64; 3] = parse_triple(path, "spacing", get("spacing")?)?;
    let origin: [f64; 3] = parse_triple(path, "origin", get("origin")?)?;
    let datatype = match get("datatype")? {
        "uint8" => Datatype::Uint8,
        "int16" => Datatype::Int16,
        "float32" => Datatype::Float32,
        other => {
            return Err(Error::UnsupportedDatatype {
                path: path.to_path_buf(),
                datatype: other.to_string(),
            })
        }
    };
    let channels: usize = get("channels")?
        .parse()
        .map_err(|_| corrupt(path, "cannot parse `channels`"))?;
    if channels != 1 && channels != 3 {
        return Err(corrupt(path, format!("channels must be 1 or 3, got {channels}")));
    }
    let data_name = get("data")?;
    if data_name.contains('/') || data_name.contains('\\') {
        return Err(corrupt(path, "`data` must be a bare file name next to the sidecar"));
    }

    let geometry = VolumeGeometry::new(dims, spacing, origin)?;
    let payload_path = path.parent().unwrap_or_else(|| Path::new(".")).join(data_name);
    let payload = std::fs::read(&payload_path).map_err(|source| Error::Io {
        path: payload_path.clone(),
        source,
    })?;
    let expected = geometry.voxel_count() * channels * datatype.bytes_per_element();
    if payload.len() != expected {
        return Err(corrupt(
            path,
            format!(
                "payload {} is {} bytes, sidecar implies {expected}",
                payload_path.display(),
                payload.len()
            ),
        ));
    }

    Ok(RawVolume {
        geometry,
        channels,
        values: datatype.decode(&payload),
    })
}

pub(super) fn write(
    path: &Path,
    geometry: &VolumeGeometry,
    channels: usize,
    datatype: Datatype,
    values: &[f64],
) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("`{}` has no file name", path.display())))?
        .to_string_lossy()
        .into_owned();
    let data_name = format!("{file_name}.raw");

    let dims = geometry.dims();
    let spacing = geometry.spacing();
    let origin = geometry.origin();
    let sidecar = format!(
        "{SIDECAR_MAGIC}\n\
         dims = {} {} {}\n\
         spacing = {} {} {}\n\
         origin = {} {} {}\n\
         datatype = {}\n\
         channels = {channels}\n\
         data = {data_name}\n",
        dims[0], dims[1], dims[2],
        spacing[0], spacing[1], spacing[2],
        origin[0], origin[1], origin[2],
        datatype.name(),
    );

    let payload_path = path.with_file_name(&data_name);
    super::write_bytes(&payload_path, &datatype.encode(values))?;
    super::write_bytes(path, sidecar.as_bytes())
}
