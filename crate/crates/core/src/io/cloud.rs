//! Binary point clouds.
//!
//! Layout (little-endian):
//!
//! | offset | size | field                    |
//! |--------|------|--------------------------|
//! | 0      | 8    | magic `RSUCLOUD`         |
//! | 8      | 4    | version (`u32`, = 1)     |
//! | 12     | 8    | point count `n` (`u64`)  |
//! | 20     | 12·n | `n` records of `f32` x, y, z |
//!
//! Timestamps and sensor ids live in the sequence manifest.

use std::path::Path;

use nalgebra::Point3;

use super::FormatError;
use crate::error::{Error, Result};
use crate::scalar::Real;

pub const CLOUD_MAGIC: &[u8; 8] = b"RSUCLOUD";
pub const CLOUD_VERSION: u32 = 1;
const HEADER_LEN: usize = 20;
const RECORD_LEN: usize = 12;

pub fn encode_cloud<T: Real>(points: &[Point3<T>]) -> Vec<u8> {
    let mut buf = Vec::with_capacity(HEADER_LEN + RECORD_LEN * points.len());
    buf.extend_from_slice(CLOUD_MAGIC);
    buf.extend_from_slice(&CLOUD_VERSION.to_le_bytes());
    buf.extend_from_slice(&(points.len() as u64).to_le_bytes());
    for p in points {
        for v in [p.x, p.y, p.z] {
            buf.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    buf
}

pub fn decode_cloud<T: Real>(bytes: &[u8]) -> Result<Vec<Point3<T>>, FormatError> {
    if bytes.len() < HEADER_LEN {
        if bytes.len() >= 8 && &bytes[..8] != CLOUD_MAGIC {
            return Err(bad_magic(&bytes[..8]));
        }
        return Err(FormatError::Truncated {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    if &bytes[..8] != CLOUD_MAGIC {
        return Err(bad_magic(&bytes[..8]));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != CLOUD_VERSION {
        return Err(FormatError::VersionMismatch {
            format: "cloud",
            expected: CLOUD_VERSION,
            found: version,
        });
    }
    let declared = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
    let payload = &bytes[HEADER_LEN..];
    let whole_records = (payload.len() / RECORD_LEN) as u64;
    if !payload.len().is_multiple_of(RECORD_LEN) || whole_records < declared {
        // a payload cut mid-record or short of the header's promise
        let expected = usize::try_from(declared)
            .ok()
            .and_then(|n| n.checked_mul(RECORD_LEN))
            .and_then(|n| n.checked_add(HEADER_LEN))
            .unwrap_or(usize::MAX);
        return Err(FormatError::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    if whole_records != declared {
        return Err(FormatError::CountMismatch {
            declared,
            actual: whole_records,
        });
    }
    let f = |b: &[u8]| T::lit(f32::from_le_bytes(b.try_into().unwrap()) as f64);
    Ok(payload
        .chunks_exact(RECORD_LEN)
        .map(|r| Point3::new(f(&r[0..4]), f(&r[4..8]), f(&r[8..12])))
        .collect())
}

fn bad_magic(found: &[u8]) -> FormatError {
    FormatError::BadMagic {
        expected: String::from_utf8_lossy(CLOUD_MAGIC).into_owned(),
        found: String::from_utf8_lossy(found).into_owned(),
    }
}

pub fn write_cloud<T: Real>(path: impl AsRef<Path>, points: &[Point3<T>]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_cloud(points)).map_err(|e| Error::io(path, e))
}

pub fn read_cloud<T: Real>(path: impl AsRef<Path>) -> Result<Vec<Point3<T>>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(decode_cloud(&bytes)?)
}
