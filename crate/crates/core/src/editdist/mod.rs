//! Edit distance between triples in string space.
//!
//! A triple `r(h, t)` becomes the string `r^s h^s t^s` of projected vectors.
//! An edit sequence is a monotone path through the alignment grid; its value
//! is `Σ_i (Π_k δ_k[i])²` over the path's operation vectors `δ_k`, and the
//! distance is the mean of that value over all `delannoy(m, n)` paths.
//!
//! [`distance_bruteforce`] enumerates the paths and serves as the reference;
//! [`distance_dp`] computes the same quantity with a per-coordinate lattice.

mod lattice;
mod paths;

pub use lattice::{distance_dp, EditLattice};
pub use paths::{delannoy, enumerate_paths, EditKind};

use thiserror::Error;

use crate::kg::{KgCatalog, Triple};
use crate::params::ParamStore;

#[derive(Debug, Error, PartialEq)]
pub enum EditError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{0:?} is missing an operand")]
    MissingOperand(EditKind),
    #[error("edit sequence is empty")]
    EmptyPath,
    #[error("string is empty")]
    EmptyString,
    #[error("brute-force enumeration is capped at length {cap}, got {m}×{n}")]
    LengthCap { cap: usize, m: usize, n: usize },
    #[error("entity `{0}` has no type assignment")]
    MissingType(String),
    #[error("symbol outside the parameter store: {0}")]
    UnknownRow(String),
}

/// Longest string [`distance_bruteforce`] accepts.
pub const BRUTEFORCE_MAX_LEN: usize = 6;

#[derive(Clone, Debug, PartialEq)]
pub struct EditOpVector {
    pub kind: EditKind,
    pub vec: Vec<f64>,
}

fn check_dim(expected: usize, v: &[f64]) -> Result<(), EditError> {
    if v.len() != expected {
        return Err(EditError::DimensionMismatch { expected, got: v.len() });
    }
    Ok(())
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Substitution `a − b`, deletion `a − ε`, insertion `ε − b`.
pub fn edit_op(kind: EditKind, a: Option<&[f64]>, b: Option<&[f64]>, null: &[f64]) -> Result<EditOpVector, EditError> {
    let k = null.len();
    let missing = || EditError::MissingOperand(kind);
    let vec = match kind {
        EditKind::Substitution => {
            let (a, b) = (a.ok_or_else(missing)?, b.ok_or_else(missing)?);
            check_dim(k, a)?;
            check_dim(k, b)?;
            sub(a, b)
        }
        EditKind::Deletion => {
            let a = a.ok_or_else(missing)?;
            check_dim(k, a)?;
            sub(a, null)
        }
        EditKind::Insertion => {
            let b = b.ok_or_else(missing)?;
            check_dim(k, b)?;
            sub(null, b)
        }
    };
    Ok(EditOpVector { kind, vec })
}

/// Squared norm of the element-wise product of a path's operation vectors.
pub fn edq_of_path(ops: &[EditOpVector]) -> Result<f64, EditError> {
    let first = ops.first().ok_or(EditError::EmptyPath)?;
    let k = first.vec.len();
    let mut prod = vec![1.0; k];
    for op in ops {
        check_dim(k, &op.vec)?;
        prod.iter_mut().zip(&op.vec).for_each(|(p, v)| *p *= v);
    }
    Ok(prod.iter().map(|p| p * p).sum())
}

/// Where a projected character came from (parameter-table rows).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CharSource {
    /// Relation embedding row times that relation's projection.
    Relation { slot: usize },
    /// Entity embedding row times its type's projection.
    Entity { slot: usize, ty: usize },
    /// Supplied directly; no parameters behind it.
    Raw,
}

/// A string of string-space vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectedString {
    chars: Vec<Vec<f64>>,
    provenance: Vec<CharSource>,
}

impl ProjectedString {
    /// A string of raw vectors, all of one dimension.
    pub fn from_vectors(chars: Vec<Vec<f64>>) -> Result<Self, EditError> {
        let first = chars.first().ok_or(EditError::EmptyString)?;
        let k = first.len();
        for c in &chars {
            check_dim(k, c)?;
        }
        let provenance = vec![CharSource::Raw; chars.len()];
        Ok(Self { chars, provenance })
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.chars[0].len()
    }

    pub fn chars(&self) -> &[Vec<f64>] {
        &self.chars
    }

    pub fn provenance(&self) -> &[CharSource] {
        &self.provenance
    }
}

/// Project `[relation, arg1, …, argN]` into string space: the relation through
/// its own matrix, each entity through the matrix of its type.
pub fn project_triple(t: &Triple, store: &ParamStore, catalog: &KgCatalog) -> Result<ProjectedString, EditError> {
    let mut chars = Vec::with_capacity(t.arity() + 1);
    let mut provenance = Vec::with_capacity(t.arity() + 1);

    let slot = catalog.relation_slot(t.relation());
    if slot >= store.num_relations() {
        return Err(EditError::UnknownRow(format!("relation slot {slot}")));
    }
    chars.push(store.rel_proj(slot).left_mul(store.relation_emb().row(slot)));
    provenance.push(CharSource::Relation { slot });

    for &e in t.args() {
        let ty = catalog
            .entity_type(e)
            .ok_or_else(|| {
                let g = catalog.graph(e.kg);
                EditError::MissingType(g.entities().name(e.index).unwrap_or("?").to_owned())
            })?
            .0;
        let slot = catalog.entity_slot(e);
        if slot >= store.num_entities() || ty >= store.num_types() {
            return Err(EditError::UnknownRow(format!("entity slot {slot}, type {ty}")));
        }
        chars.push(store.type_proj(ty).left_mul(store.entity_emb().row(slot)));
        provenance.push(CharSource::Entity { slot, ty });
    }
    Ok(ProjectedString { chars, provenance })
}

#[derive(Clone, Debug)]
pub struct DistanceResult {
    /// Mean edit-sequence value.
    pub value: f64,
    /// Number of edit sequences averaged over.
    pub path_count: u64,
    pub lattice: Option<EditLattice>,
}

impl DistanceResult {
    /// Sum over edit sequences rather than mean.
    pub fn total(&self) -> f64 {
        self.value * self.path_count as f64
    }
}

fn check_pair(x: &ProjectedString, y: &ProjectedString, null: &[f64]) -> Result<(), EditError> {
    if x.is_empty() || y.is_empty() {
        return Err(EditError::EmptyString);
    }
    let k = null.len();
    for c in x.chars.iter().chain(&y.chars) {
        check_dim(k, c)?;
    }
    Ok(())
}

/// Reference distance: enumerate every edit sequence and average.
pub fn distance_bruteforce(x: &ProjectedString, y: &ProjectedString, null: &[f64]) -> Result<DistanceResult, EditError> {
    check_pair(x, y, null)?;
    let (m, n) = (x.len(), y.len());
    if m > BRUTEFORCE_MAX_LEN || n > BRUTEFORCE_MAX_LEN {
        return Err(EditError::LengthCap { cap: BRUTEFORCE_MAX_LEN, m, n });
    }
    let paths = enumerate_paths(m, n);
    let mut total = 0.0;
    for path in &paths {
        let (mut p, mut q) = (0, 0);
        let mut ops = Vec::with_capacity(path.len());
        for &kind in path {
            let (a, b) = match kind {
                EditKind::Substitution => (Some(x.chars[p].as_slice()), Some(y.chars[q].as_slice())),
                EditKind::Deletion => (Some(x.chars[p].as_slice()), None),
                EditKind::Insertion => (None, Some(y.chars[q].as_slice())),
            };
            ops.push(edit_op(kind, a, b, null)?);
            if kind != EditKind::Insertion {
                p += 1;
            }
            if kind != EditKind::Deletion {
                q += 1;
            }
        }
        total += edq_of_path(&ops)?;
    }
    Ok(DistanceResult { value: total / paths.len() as f64, path_count: paths.len() as u64, lattice: None })
}

/// Distance between two atoms of any arity (strings of length arity + 1).
pub fn distance_general_arity(
    atom1: &Triple,
    atom2: &Triple,
    store: &ParamStore,
    catalog: &KgCatalog,
) -> Result<DistanceResult, EditError> {
    let x = project_triple(atom1, store, catalog)?;
    let y = project_triple(atom2, store, catalog)?;
    distance_dp(&x, &y, store.null_vec(), false)
}
