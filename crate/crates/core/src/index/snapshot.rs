//! Single-file snapshot of a patient cohort plus its schema.
//!
//! Layout (all integers little-endian):
//!
//! | offset | size | content                                   |
//! |--------|------|-------------------------------------------|
//! | 0      | 8    | magic `COHORTSN`                          |
//! | 8      | 4    | format version (`u32`, currently 1)       |
//! | 12     | 4    | reserved, zero                            |
//! | 16     | 8    | payload length in bytes (`u64`)           |
//! | 24     | 32   | SHA-256 of the payload                    |
//! | 56     | n    | payload: UTF-8 JSON `{schema, patients}`  |
//!
//! The index itself is not serialized: rebuilding it from the payload is
//! deterministic, so equal files always yield equal indexes.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::Schema;
use crate::datamodel::PatientRecord;

pub const SNAPSHOT_MAGIC: &[u8; 8] = b"COHORTSN";
pub const SNAPSHOT_VERSION: u32 = 1;
const HEADER_LEN: usize = 56;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("snapshot i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a snapshot file (bad magic)")]
    BadMagic,
    #[error("unsupported snapshot version {0}")]
    Version(u32),
    #[error("snapshot truncated or length mismatch")]
    Length,
    #[error("snapshot checksum mismatch")]
    Checksum,
    #[error("snapshot payload: {0}")]
    Payload(#[from] serde_json::Error),
}

#[derive(Serialize)]
struct PayloadRef<'a> {
    schema: &'a Schema,
    patients: &'a [PatientRecord],
}

#[derive(Deserialize)]
struct Payload {
    schema: Schema,
    patients: Vec<PatientRecord>,
}

pub fn encode_snapshot(schema: &Schema, patients: &[PatientRecord]) -> Result<Vec<u8>, SnapshotError> {
    let payload = serde_json::to_vec(&PayloadRef { schema, patients })?;
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(SNAPSHOT_MAGIC);
    out.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&Sha256::digest(&payload));
    out.extend_from_slice(&payload);
    Ok(out)
}

pub fn decode_snapshot(bytes: &[u8]) -> Result<(Schema, Vec<PatientRecord>), SnapshotError> {
    if bytes.len() < HEADER_LEN {
        return Err(SnapshotError::Length);
    }
    if &bytes[..8] != SNAPSHOT_MAGIC {
        return Err(SnapshotError::BadMagic);
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != SNAPSHOT_VERSION {
        return Err(SnapshotError::Version(version));
    }
    let len = u64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes")) as usize;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != len {
        return Err(SnapshotError::Length);
    }
    if Sha256::digest(payload).as_slice() != &bytes[24..56] {
        return Err(SnapshotError::Checksum);
    }
    let p: Payload = serde_json::from_slice(payload)?;
    Ok((p.schema, p.patients))
}

pub fn write_snapshot(path: &Path, schema: &Schema, patients: &[PatientRecord]) -> Result<(), SnapshotError> {
    let bytes = encode_snapshot(schema, patients)?;
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(tmp, path)?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<(Schema, Vec<PatientRecord>), SnapshotError> {
    decode_snapshot(&fs::read(path)?)
}
