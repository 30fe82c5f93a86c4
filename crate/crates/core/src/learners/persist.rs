//! Binary model container.
//!
//! Layout: `b"SEPM"`, format version (u16 LE), payload length (u64 LE),
//! bincode payload, SHA-256 of the payload.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::TrainedModel;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SEPM";
pub const FORMAT_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 8;
const DIGEST_LEN: usize = 32;

pub fn encode_model(model: &TrainedModel) -> Result<Vec<u8>> {
    let payload = bincode::serialize(model).map_err(|e| Error::CorruptedModel(e.to_string()))?;
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len() + DIGEST_LEN);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&payload);
    out.extend_from_slice(&Sha256::digest(&payload));
    Ok(out)
}

pub fn decode_model(bytes: &[u8]) -> Result<TrainedModel> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::UnrecognizedFormat);
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::CorruptedModel("truncated header".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    let len = u64::from_le_bytes(bytes[6..14].try_into().expect("8 bytes"));
    let expected = (HEADER_LEN as u64).checked_add(len).and_then(|v| v.checked_add(DIGEST_LEN as u64));
    if expected != Some(bytes.len() as u64) {
        return Err(Error::CorruptedModel("length does not match payload".into()));
    }
    let payload = &bytes[HEADER_LEN..HEADER_LEN + len as usize];
    if Sha256::digest(payload).as_slice() != &bytes[HEADER_LEN + len as usize..] {
        return Err(Error::CorruptedModel("checksum mismatch".into()));
    }
    bincode::deserialize(payload).map_err(|e| Error::CorruptedModel(e.to_string()))
}

pub fn save_model(model: &TrainedModel, path: &Path) -> Result<()> {
    let bytes = encode_model(model)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<TrainedModel> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes)
}
