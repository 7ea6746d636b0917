//! Synthetic aligned graph pairs.
//!
//! L1 is a random graph over entities `e0…` and relations `r0…`; L2 is the
//! same graph with every identifier renamed (`e17` → `f17`, `r3` → `s3`), so
//! each L1 triple has exactly one true counterpart. Entity `i` gets type
//! `t{i mod types}` in both graphs.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::index;
use thiserror::Error;

use crate::kg::CatalogPaths;
use crate::rng::{stream, Stream};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("entities, relations, triples and types must all be positive")]
    ZeroCount,
    #[error("{triples} distinct triples requested but only {max} exist over {entities} entities and {relations} relations")]
    TooManyTriples { triples: usize, max: usize, entities: usize, relations: usize },
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SynthSpec {
    pub entities: usize,
    pub relations: usize,
    pub triples: usize,
    pub types: usize,
    pub seed: u64,
}

pub const L1_TRIPLES: &str = "l1_triples.tsv";
pub const L2_TRIPLES: &str = "l2_triples.tsv";
pub const TYPES: &str = "types.tsv";
pub const TRAIN_SEEDS: &str = "train_seeds.tsv";
pub const VALID_SEEDS: &str = "valid_seeds.tsv";
pub const TEST_SEEDS: &str = "test_seeds.tsv";

/// File contents of one synthetic dataset.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SynthData {
    pub l1_triples: String,
    pub l2_triples: String,
    pub types: String,
    pub train_seeds: String,
    pub valid_seeds: String,
    pub test_seeds: String,
    pub split_sizes: (usize, usize, usize),
}

fn mix(mut z: u64) -> u64 {
    // splitmix64 finalizer
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Train/valid/test sizes for `n` seeds: 80/10/10 with the remainder in test.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let train = n * 8 / 10;
    let valid = n / 10;
    (train, valid, n - train - valid)
}

pub fn generate(spec: &SynthSpec) -> Result<SynthData, SynthError> {
    let SynthSpec { entities, relations, triples, types, seed } = *spec;
    if entities == 0 || relations == 0 || triples == 0 || types == 0 {
        return Err(SynthError::ZeroCount);
    }
    let max = entities.saturating_mul(entities).saturating_mul(relations);
    if triples > max {
        return Err(SynthError::TooManyTriples { triples, max, entities, relations });
    }

    let mut rng = stream(seed, Stream::Synth);
    let picked: Vec<(usize, usize, usize)> = index::sample(&mut rng, max, triples)
        .into_iter()
        .map(|k| (k / (relations * entities), (k / entities) % relations, k % entities))
        .collect();

    let mut l1 = String::new();
    let mut l2 = String::new();
    for &(h, r, t) in &picked {
        l1.push_str(&format!("e{h}\tr{r}\te{t}\n"));
        l2.push_str(&format!("f{h}\ts{r}\tf{t}\n"));
    }
    let mut type_map = String::new();
    for prefix in ["e", "f"] {
        for i in 0..entities {
            type_map.push_str(&format!("{prefix}{i}\tt{}\n", i % types));
        }
    }

    // order triple indices by a seeded hash, then cut 80/10/10
    let mut order: Vec<usize> = (0..triples).collect();
    order.sort_by_key(|&i| (mix(seed ^ mix(i as u64)), i));
    let (n_train, n_valid, n_test) = split_sizes(triples);
    let seed_lines = |ids: &[usize]| {
        let mut ids = ids.to_vec();
        ids.sort_unstable();
        ids.iter()
            .map(|&i| {
                let (h, r, t) = picked[i];
                format!("e{h}\tr{r}\te{t}\tf{h}\ts{r}\tf{t}\n")
            })
            .collect::<String>()
    };
    Ok(SynthData {
        l1_triples: l1,
        l2_triples: l2,
        types: type_map,
        train_seeds: seed_lines(&order[..n_train]),
        valid_seeds: seed_lines(&order[n_train..n_train + n_valid]),
        test_seeds: seed_lines(&order[n_train + n_valid..]),
        split_sizes: (n_train, n_valid, n_test),
    })
}

/// Paths of the files [`write`] produces under `dir`.
pub fn catalog_paths(dir: &Path) -> CatalogPaths {
    CatalogPaths {
        triples_l1: dir.join(L1_TRIPLES),
        triples_l2: dir.join(L2_TRIPLES),
        types: dir.join(TYPES),
        train_seeds: dir.join(TRAIN_SEEDS),
        valid_seeds: Some(dir.join(VALID_SEEDS)),
        test_seeds: Some(dir.join(TEST_SEEDS)),
    }
}

pub fn write(data: &SynthData, dir: &Path) -> Result<CatalogPaths, SynthError> {
    let io = |path: &Path| {
        let path = path.to_owned();
        move |source| SynthError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    for (name, body) in [
        (L1_TRIPLES, &data.l1_triples),
        (L2_TRIPLES, &data.l2_triples),
        (TYPES, &data.types),
        (TRAIN_SEEDS, &data.train_seeds),
        (VALID_SEEDS, &data.valid_seeds),
        (TEST_SEEDS, &data.test_seeds),
    ] {
        let path = dir.join(name);
        fs::write(&path, body).map_err(io(&path))?;
    }
    Ok(catalog_paths(dir))
}
