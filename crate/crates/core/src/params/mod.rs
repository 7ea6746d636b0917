//! Learnable tensors and their constraints.
//!
//! Layout: one embedding row per entity and per relation (L1 rows first, see
//! [`KgCatalog::entity_slot`]), one `k_r × k_s` projection per relation, one
//! `k_e × k_s` projection per entity type, and the null vector ε in string
//! space.

mod checkpoint;

pub use checkpoint::{decode, encode, load_checkpoint, load_checkpoint_expecting, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::KgCatalog;
use crate::rng::{stream, Stream};

#[derive(Debug, Error)]
pub enum ParamError {
    #[error("all dimensions must be at least 1 (got k_e={k_e}, k_r={k_r}, k_s={k_s})")]
    InvalidDims { k_e: usize, k_r: usize, k_s: usize },
    #[error("catalog has no {0}")]
    EmptyVocabulary(&'static str),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    BadVersion(u32),
    #[error("checkpoint truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },
    #[error("checkpoint has {found} bytes, expected {expected}")]
    TrailingBytes { expected: u64, found: u64 },
    #[error("checkpoint checksum mismatch")]
    Checksum,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub k_e: usize,
    pub k_r: usize,
    pub k_s: usize,
}

impl Dims {
    pub fn new(k_e: usize, k_r: usize, k_s: usize) -> Result<Self, ParamError> {
        let d = Self { k_e, k_r, k_s };
        d.validate()?;
        Ok(d)
    }

    pub fn uniform(k: usize) -> Result<Self, ParamError> {
        Self::new(k, k, k)
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        if self.k_e == 0 || self.k_r == 0 || self.k_s == 0 {
            return Err(ParamError::InvalidDims { k_e: self.k_e, k_r: self.k_r, k_s: self.k_s });
        }
        Ok(())
    }
}

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Row vector times matrix: `v · M`.
    pub fn left_mul(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            for (o, &m) in out.iter_mut().zip(self.row(i)) {
                *o += vi * m;
            }
        }
        out
    }
}

/// Names one parameter block of a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParamKey {
    Entity(usize),
    Relation(usize),
    RelProj(usize),
    TypeProj(usize),
    Null,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore {
    pub(crate) dims: Dims,
    pub(crate) entity_emb: Matrix,
    pub(crate) relation_emb: Matrix,
    pub(crate) rel_proj: Vec<Matrix>,
    pub(crate) type_proj: Vec<Matrix>,
    pub(crate) null_vec: Vec<f64>,
}

/// Uniform noise half-width added to the identity-initialized projections.
pub const DEFAULT_INIT_NOISE: f64 = 0.01;

impl ParamStore {
    /// An all-zero store with the given shape.
    pub fn zeros(dims: Dims, entities: usize, relations: usize, types: usize) -> Self {
        Self {
            dims,
            entity_emb: Matrix::zeros(entities, dims.k_e),
            relation_emb: Matrix::zeros(relations, dims.k_r),
            rel_proj: vec![Matrix::zeros(dims.k_r, dims.k_s); relations],
            type_proj: vec![Matrix::zeros(dims.k_e, dims.k_s); types],
            null_vec: vec![0.0; dims.k_s],
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn num_entities(&self) -> usize {
        self.entity_emb.rows
    }

    pub fn num_relations(&self) -> usize {
        self.relation_emb.rows
    }

    pub fn num_types(&self) -> usize {
        self.type_proj.len()
    }

    pub fn entity_emb(&self) -> &Matrix {
        &self.entity_emb
    }

    pub fn relation_emb(&self) -> &Matrix {
        &self.relation_emb
    }

    pub fn rel_proj(&self, relation_slot: usize) -> &Matrix {
        &self.rel_proj[relation_slot]
    }

    pub fn type_proj(&self, ty: usize) -> &Matrix {
        &self.type_proj[ty]
    }

    pub fn null_vec(&self) -> &[f64] {
        &self.null_vec
    }

    pub fn block(&self, key: ParamKey) -> &[f64] {
        match key {
            ParamKey::Entity(i) => self.entity_emb.row(i),
            ParamKey::Relation(i) => self.relation_emb.row(i),
            ParamKey::RelProj(i) => self.rel_proj[i].as_slice(),
            ParamKey::TypeProj(i) => self.type_proj[i].as_slice(),
            ParamKey::Null => &self.null_vec,
        }
    }

    pub fn block_mut(&mut self, key: ParamKey) -> &mut [f64] {
        match key {
            ParamKey::Entity(i) => self.entity_emb.row_mut(i),
            ParamKey::Relation(i) => self.relation_emb.row_mut(i),
            ParamKey::RelProj(i) => self.rel_proj[i].as_mut_slice(),
            ParamKey::TypeProj(i) => self.type_proj[i].as_mut_slice(),
            ParamKey::Null => &mut self.null_vec,
        }
    }

    /// Every block key, in checkpoint order.
    pub fn keys(&self) -> impl Iterator<Item = ParamKey> + '_ {
        (0..self.num_entities())
            .map(ParamKey::Entity)
            .chain((0..self.num_relations()).map(ParamKey::Relation))
            .chain((0..self.rel_proj.len()).map(ParamKey::RelProj))
            .chain((0..self.type_proj.len()).map(ParamKey::TypeProj))
            .chain(std::iter::once(ParamKey::Null))
    }

    /// Check the store's shape against a catalog.
    pub fn check_catalog(&self, catalog: &KgCatalog) -> Result<(), ParamError> {
        let want = (catalog.num_entities(), catalog.num_relations(), catalog.types().len());
        let have = (self.num_entities(), self.num_relations(), self.num_types());
        if want != have {
            return Err(ParamError::DimensionMismatch(format!(
                "store has (entities, relations, types) = {have:?}, catalog needs {want:?}"
            )));
        }
        Ok(())
    }
}

/// Identity-initialized stores: uniform embeddings renormalized into the unit
/// ball, truncated-identity projections plus uniform noise, ε = 0.
pub fn init(catalog: &KgCatalog, dims: Dims, seed: u64) -> Result<ParamStore, ParamError> {
    init_with_noise(catalog, dims, seed, DEFAULT_INIT_NOISE)
}

pub fn init_with_noise(
    catalog: &KgCatalog,
    dims: Dims,
    seed: u64,
    noise: f64,
) -> Result<ParamStore, ParamError> {
    dims.validate()?;
    if catalog.num_entities() == 0 {
        return Err(ParamError::EmptyVocabulary("entities"));
    }
    if catalog.num_relations() == 0 {
        return Err(ParamError::EmptyVocabulary("relations"));
    }
    let mut rng = stream(seed, Stream::Init);
    let mut store =
        ParamStore::zeros(dims, catalog.num_entities(), catalog.num_relations(), catalog.types().len());

    for table in [&mut store.entity_emb, &mut store.relation_emb] {
        let bound = 6.0 / (table.cols as f64).sqrt();
        for v in table.data.iter_mut() {
            *v = rng.gen_range(-bound..=bound);
        }
        for i in 0..table.rows {
            project_row(table.row_mut(i));
        }
    }
    for m in store.rel_proj.iter_mut().chain(store.type_proj.iter_mut()) {
        for i in 0..m.rows {
            for j in 0..m.cols {
                let id = if i == j { 1.0 } else { 0.0 };
                let n = if noise > 0.0 { rng.gen_range(-noise..=noise) } else { 0.0 };
                m.set(i, j, id + n);
            }
        }
    }
    Ok(store)
}

/// Scale `row` onto the unit sphere if it lies outside the ball. Returns
/// whether it was scaled.
fn project_row(row: &mut [f64]) -> bool {
    let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 1.0 {
        row.iter_mut().for_each(|v| *v /= norm);
        true
    } else {
        false
    }
}

/// Rows scaled by [`clamp_to_unit_ball`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ClampReport {
    pub entity_rows: usize,
    pub relation_rows: usize,
}

impl ClampReport {
    pub fn total(&self) -> usize {
        self.entity_rows + self.relation_rows
    }
}

/// Rescale every entity and relation embedding with norm above 1 to norm 1.
pub fn clamp_to_unit_ball(store: &mut ParamStore) -> Result<ClampReport, ParamError> {
    let mut report = ClampReport::default();
    for (name, table, count) in [
        ("entity", &mut store.entity_emb, &mut report.entity_rows),
        ("relation", &mut store.relation_emb, &mut report.relation_rows),
    ] {
        for i in 0..table.rows {
            let row = table.row_mut(i);
            if row.iter().any(|v| !v.is_finite()) {
                return Err(ParamError::NonFinite(format!("{name} row {i}")));
            }
            if project_row(row) {
                *count += 1;
            }
        }
    }
    Ok(report)
}
