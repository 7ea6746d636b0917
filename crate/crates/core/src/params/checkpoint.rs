//! Binary checkpoint format.
//!
//! ```text
//! "EDAL"             4 bytes magic
//! version            u32 LE
//! k_e, k_r, k_s      u64 LE each
//! entities, relations, types   u64 LE each
//! entity_emb         entities  × k_e  f64 LE, row-major
//! relation_emb       relations × k_r
//! rel_proj           relations × (k_r × k_s), relation order
//! type_proj          types     × (k_e × k_s), type order
//! null vector        k_s
//! checksum           u64 LE, wrapping byte sum of everything after the version
//! ```

use std::fs;
use std::path::Path;

use super::{Dims, Matrix, ParamError, ParamStore};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"EDAL";
pub const CHECKPOINT_VERSION: u32 = 1;

const HEADER_LEN: usize = 4 + 4 + 6 * 8;

fn payload_floats(dims: Dims, entities: usize, relations: usize, types: usize) -> usize {
    entities * dims.k_e
        + relations * dims.k_r
        + relations * dims.k_r * dims.k_s
        + types * dims.k_e * dims.k_s
        + dims.k_s
}

fn checksum(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0u64, |acc, &b| acc.wrapping_add(b as u64))
}

pub fn encode(store: &ParamStore) -> Vec<u8> {
    let d = store.dims;
    let n = payload_floats(d, store.num_entities(), store.num_relations(), store.num_types());
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * n + 8);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for v in [d.k_e, d.k_r, d.k_s, store.num_entities(), store.num_relations(), store.num_types()] {
        out.extend_from_slice(&(v as u64).to_le_bytes());
    }
    let tensors = std::iter::once(store.entity_emb.as_slice())
        .chain(std::iter::once(store.relation_emb.as_slice()))
        .chain(store.rel_proj.iter().map(Matrix::as_slice))
        .chain(store.type_proj.iter().map(Matrix::as_slice))
        .chain(std::iter::once(store.null_vec.as_slice()));
    for t in tensors {
        for v in t {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let sum = checksum(&out[8..]);
    out.extend_from_slice(&sum.to_le_bytes());
    out
}

fn u64_at(bytes: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap())
}

pub fn decode(bytes: &[u8]) -> Result<ParamStore, ParamError> {
    let found = bytes.len() as u64;
    if bytes.len() < 8 {
        if bytes.len() >= 4 && &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(ParamError::BadMagic);
        }
        return Err(ParamError::Truncated { expected: HEADER_LEN as u64, found });
    }
    if &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(ParamError::BadMagic);
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(ParamError::BadVersion(version));
    }
    if bytes.len() < HEADER_LEN {
        return Err(ParamError::Truncated { expected: HEADER_LEN as u64, found });
    }
    let h: Vec<usize> = (0..6).map(|i| u64_at(bytes, 8 + 8 * i) as usize).collect();
    let dims = Dims { k_e: h[0], k_r: h[1], k_s: h[2] };
    dims.validate().map_err(|e| ParamError::DimensionMismatch(e.to_string()))?;
    let (entities, relations, types) = (h[3], h[4], h[5]);
    let floats = payload_floats(dims, entities, relations, types);
    let expected = (HEADER_LEN + 8 * floats + 8) as u64;
    if found < expected {
        return Err(ParamError::Truncated { expected, found });
    }
    if found > expected {
        return Err(ParamError::TrailingBytes { expected, found });
    }
    let body_end = bytes.len() - 8;
    if checksum(&bytes[8..body_end]) != u64_at(bytes, body_end) {
        return Err(ParamError::Checksum);
    }

    let mut values = bytes[HEADER_LEN..body_end]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let mut take = |rows: usize, cols: usize| Matrix::from_vec(rows, cols, values.by_ref().take(rows * cols).collect());
    let entity_emb = take(entities, dims.k_e);
    let relation_emb = take(relations, dims.k_r);
    let rel_proj = (0..relations).map(|_| take(dims.k_r, dims.k_s)).collect();
    let type_proj = (0..types).map(|_| take(dims.k_e, dims.k_s)).collect();
    let null_vec = take(1, dims.k_s).as_slice().to_vec();
    Ok(ParamStore { dims, entity_emb, relation_emb, rel_proj, type_proj, null_vec })
}

pub fn save_checkpoint(store: &ParamStore, path: impl AsRef<Path>) -> Result<(), ParamError> {
    fs::write(path, encode(store))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ParamStore, ParamError> {
    decode(&fs::read(path)?)
}

/// Load and require the checkpoint's dimensions to equal `dims`.
pub fn load_checkpoint_expecting(path: impl AsRef<Path>, dims: Dims) -> Result<ParamStore, ParamError> {
    let store = load_checkpoint(path)?;
    if store.dims != dims {
        return Err(ParamError::DimensionMismatch(format!(
            "checkpoint has {:?}, run expects {:?}",
            store.dims, dims
        )));
    }
    Ok(store)
}
