//! The FLDB field file format.
//!
//! ```text
//! {"dim":2,"shape":[2,2],"mask":true,"dtype":"f64le"}\n   UTF-8 JSON header line
//! <prod(shape) bytes>                                     mask, 0/1 per cell (only if "mask":true)
//! <prod(shape) * 8 bytes>                                 values, little-endian IEEE-754 f64
//! ```
//!
//! Both payloads are row-major. Writing goes through a temporary file in the
//! target directory that is renamed into place, so readers never observe a
//! partially written field.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridField;

const DTYPE: &str = "f64le";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    dim: usize,
    shape: Vec<usize>,
    mask: bool,
    dtype: String,
}

/// Encodes `field` as FLDB bytes.
pub fn to_bytes(field: &GridField) -> Vec<u8> {
    let header = Header {
        dim: field.dim(),
        shape: field.shape().to_vec(),
        mask: field.mask().is_some(),
        dtype: DTYPE.to_owned(),
    };
    let mut out = serde_json::to_vec(&header).expect("header serializes");
    out.push(b'\n');
    if let Some(mask) = field.mask() {
        out.extend(mask.iter().map(|&b| b as u8));
    }
    out.reserve(field.len() * 8);
    for v in field.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Decodes FLDB bytes, validating the field invariants.
pub fn from_bytes(bytes: &[u8]) -> Result<GridField> {
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Header("missing header terminator".into()))?;
    let header: Header = serde_json::from_slice(&bytes[..newline])
        .map_err(|e| Error::Header(e.to_string()))?;
    if header.dtype != DTYPE {
        return Err(Error::Header(format!(
            "unsupported dtype {:?}, expected {DTYPE:?}",
            header.dtype
        )));
    }
    if header.dim != header.shape.len() {
        return Err(Error::Header(format!(
            "dim {} does not match shape {:?}",
            header.dim, header.shape
        )));
    }
    crate::grid::validate_shape(&header.shape)?;
    let n: usize = header.shape.iter().product();
    let mut payload = &bytes[newline + 1..];

    let mask = if header.mask {
        if payload.len() < n {
            return Err(Error::LengthMismatch {
                expected: n,
                found: payload.len(),
            });
        }
        let (m, rest) = payload.split_at(n);
        payload = rest;
        let mask = m
            .iter()
            .enumerate()
            .map(|(i, &b)| match b {
                0 => Ok(false),
                1 => Ok(true),
                _ => Err(Error::Header(format!("mask byte {b} at index {i}"))),
            })
            .collect::<Result<Vec<bool>>>()?;
        Some(mask)
    } else {
        None
    };

    if payload.len() % 8 != 0 || payload.len() / 8 != n {
        return Err(Error::LengthMismatch {
            expected: n,
            found: payload.len() / 8,
        });
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();

    match mask {
        Some(mask) => GridField::with_mask(header.shape, values, mask),
        None => GridField::new(header.shape, values),
    }
}

pub fn load_field(path: impl AsRef<Path>) -> Result<GridField> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}

pub fn save_field(field: &GridField, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &to_bytes(field))
}

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp_name = path
        .file_name()
        .ok_or_else(|| {
            Error::io(
                path,
                std::io::Error::new(std::io::ErrorKind::InvalidInput, "not a file path"),
            )
        })?
        .to_os_string();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}
