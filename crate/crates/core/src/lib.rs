//! Alignment of triples across two knowledge graphs by a learned edit
//! distance in a shared embedding space.
//!
//! Entities and relations of both graphs are embedded in their own spaces and
//! projected into a common string space, where a triple becomes a short
//! string of vectors. The distance between two such strings averages, over
//! every monotone edit sequence, the squared norm of the element-wise product
//! of the sequence's edit-operation vectors. Training minimizes a margin
//! ranking loss over seed-aligned triple pairs and single-slot corruptions.
//!
//! Modules, bottom-up:
//! - [`kg`]: vocabularies, triples, types, seeds, corruption sets
//! - [`params`]: learnable tensors, initialization, unit-ball clamping, checkpoints
//! - [`editdist`]: projection and the distance (enumeration and lattice forms)
//! - [`trainer`]: gradients and the training loop
//! - [`eval`]: ranking metrics and threshold classification
//! - [`synth`]: synthetic aligned graph pairs

pub mod editdist;
pub mod eval;
pub mod kg;
pub mod params;
pub mod rng;
pub mod synth;
pub mod trainer;
