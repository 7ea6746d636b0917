//! Ranking evaluation of triple alignment and threshold classification.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::editdist::{distance_dp, distance_general_arity, project_triple, EditError};
use crate::kg::{corruption_set, parse_atom, AlignmentSeed, KgCatalog, KgError, KgId, Triple};
use crate::params::ParamStore;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no queries to evaluate")]
    Empty,
    #[error(transparent)]
    Kg(#[from] KgError),
    #[error(transparent)]
    Edit(#[from] EditError),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("worker pool: {0}")]
    Pool(String),
}

/// Candidates the true target triple is ranked against.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CandidateSet {
    /// Single-slot corruptions of the true target.
    #[default]
    Corruptions,
    /// Every other triple of the target graph.
    AllTargetTriples,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RankingMetrics {
    pub mrr: f64,
    pub hits_at_1: f64,
    pub hits_at_10: f64,
    pub mean_rank: f64,
    pub n_queries: usize,
}

impl RankingMetrics {
    pub fn from_ranks(ranks: &[usize]) -> Result<Self, EvalError> {
        if ranks.is_empty() {
            return Err(EvalError::Empty);
        }
        let n = ranks.len() as f64;
        let frac = |k: usize| ranks.iter().filter(|&&r| r <= k).count() as f64 / n;
        Ok(Self {
            mrr: ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n,
            hits_at_1: frac(1),
            hits_at_10: frac(10),
            mean_rank: ranks.iter().sum::<usize>() as f64 / n,
            n_queries: ranks.len(),
        })
    }

    pub const TSV_HEADER: &'static str = "mrr\thits_at_1\thits_at_10\tmean_rank\tn_queries";

    pub fn to_tsv_row(&self) -> String {
        format!("{}\t{}\t{}\t{}\t{}", self.mrr, self.hits_at_1, self.hits_at_10, self.mean_rank, self.n_queries)
    }
}

/// Pessimistic rank: one plus the number of candidates at least as close as
/// the true one.
pub fn rank_from_distances(true_dist: f64, candidates: impl IntoIterator<Item = f64>) -> usize {
    if true_dist.is_nan() {
        return 1 + candidates.into_iter().count();
    }
    1 + candidates.into_iter().filter(|d| d.partial_cmp(&true_dist) != Some(std::cmp::Ordering::Greater)).count()
}

fn candidates(seed: &AlignmentSeed, catalog: &KgCatalog, set: CandidateSet) -> Result<Vec<Triple>, EvalError> {
    Ok(match set {
        CandidateSet::Corruptions => corruption_set(&seed.right, catalog)?,
        CandidateSet::AllTargetTriples => catalog
            .graph(KgId::L2)
            .triples()
            .iter()
            .filter(|t| **t != seed.right)
            .cloned()
            .collect(),
    })
}

/// Rank of the true target triple among `set` by distance from the source.
pub fn rank_true_triple(
    seed: &AlignmentSeed,
    store: &ParamStore,
    catalog: &KgCatalog,
    set: CandidateSet,
) -> Result<usize, EvalError> {
    let eps = store.null_vec();
    let x = project_triple(&seed.left, store, catalog)?;
    let dist = |t: &Triple| -> Result<f64, EvalError> {
        let y = project_triple(t, store, catalog)?;
        Ok(distance_dp(&x, &y, eps, false)?.value)
    };
    let truth = dist(&seed.right)?;
    let others = candidates(seed, catalog, set)?
        .iter()
        .map(dist)
        .collect::<Result<Vec<_>, _>>()?;
    Ok(rank_from_distances(truth, others))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EvalOptions {
    pub candidates: CandidateSet,
    /// Threads for the per-query distance computations; 1 runs inline.
    pub workers: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { candidates: CandidateSet::Corruptions, workers: 1 }
    }
}

pub fn evaluate(
    seeds: &[AlignmentSeed],
    store: &ParamStore,
    catalog: &KgCatalog,
    opts: EvalOptions,
) -> Result<RankingMetrics, EvalError> {
    if seeds.is_empty() {
        return Err(EvalError::Empty);
    }
    let rank = |s: &AlignmentSeed| rank_true_triple(s, store, catalog, opts.candidates);
    let ranks: Vec<usize> = if opts.workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.workers)
            .build()
            .map_err(|e| EvalError::Pool(e.to_string()))?;
        pool.install(|| seeds.par_iter().map(rank).collect::<Result<_, _>>())?
    } else {
        seeds.iter().map(rank).collect::<Result<_, _>>()?
    };
    RankingMetrics::from_ranks(&ranks)
}

/// An L1 atom, an L2 atom, and whether they state the same fact.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledPair {
    pub left: Triple,
    pub right: Triple,
    pub label: bool,
}

/// Parse `atomL<TAB>atomR<TAB>label` lines with atoms written `rel(a,…)`.
pub fn parse_labeled_pairs(text: &str, catalog: &KgCatalog) -> Result<Vec<LabeledPair>, EvalError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| EvalError::Parse { line: line_no, message };
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(err(format!("expected 3 columns, got {}", cols.len())));
        }
        let resolve = |kg: KgId, s: &str| -> Result<Triple, EvalError> {
            let (rel, args) = parse_atom(s).map_err(|e| err(e.to_string()))?;
            let args: Vec<&str> = args.iter().map(String::as_str).collect();
            catalog.graph(kg).resolve(&rel, &args).map_err(|e| err(e.to_string()))
        };
        let label = match cols[2].trim() {
            "1" => true,
            "0" => false,
            other => return Err(err(format!("label must be 0 or 1, got `{other}`"))),
        };
        out.push(LabeledPair { left: resolve(KgId::L1, cols[0])?, right: resolve(KgId::L2, cols[1])?, label });
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ThresholdReport {
    pub theta: f64,
    pub accuracy: f64,
    /// Zero when nothing is predicted positive.
    pub precision: f64,
    /// Zero when there are no positive labels.
    pub recall: f64,
    pub n_pairs: usize,
}

/// Predict positive iff `distance < theta`.
pub fn classify_distances(scored: &[(f64, bool)], theta: f64) -> Result<ThresholdReport, EvalError> {
    if scored.is_empty() {
        return Err(EvalError::Empty);
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for &(d, label) in scored {
        match (d < theta, label) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Ok(ThresholdReport {
        theta,
        accuracy: ratio(tp + tn, scored.len()),
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fn_),
        n_pairs: scored.len(),
    })
}

pub fn classify_at_threshold(
    pairs: &[LabeledPair],
    theta: f64,
    store: &ParamStore,
    catalog: &KgCatalog,
) -> Result<ThresholdReport, EvalError> {
    let scored = pairs
        .iter()
        .map(|p| Ok((distance_general_arity(&p.left, &p.right, store, catalog)?.value, p.label)))
        .collect::<Result<Vec<_>, EvalError>>()?;
    classify_distances(&scored, theta)
}
