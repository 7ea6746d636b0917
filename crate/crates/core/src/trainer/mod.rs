//! Margin ranking training over seed alignments.

mod grad;

pub use grad::{
    backward_through_lattice, composite_penalty, finite_diff_grad, pair_loss, GradientBuffer, LatticeGrad,
    PairLoss, Penalty,
};

use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::editdist::{CharSource, EditError};
use crate::eval::{evaluate, EvalError, EvalOptions, RankingMetrics};
use crate::kg::{sample_negative, KgCatalog, KgError, SamplingMode, SeedSplit};
use crate::params::{clamp_to_unit_ball, init_with_noise, Dims, ParamError, ParamKey, ParamStore, DEFAULT_INIT_NOISE};
use crate::rng::{stream, Stream};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("no training seeds")]
    NoSeeds,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training diverged at epoch {epoch}: {reason}")]
    Diverged { epoch: usize, reason: String },
    #[error("distance was computed without its lattice")]
    MissingLattice,
    #[error(transparent)]
    Kg(#[from] KgError),
    #[error(transparent)]
    Edit(#[from] EditError),
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Which update rule [`train`] uses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    Sgd,
    #[default]
    Adam,
}

/// Training hyperparameters. The defaults are working values chosen on
/// synthetic mirrored graphs, not constants from any reference run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub gamma_a: f64,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub negatives_per_positive: usize,
    pub lambda_c: f64,
    pub dims: Dims,
    pub seed: u64,
    /// Epochs between validation evaluations; 0 disables them.
    pub eval_every: usize,
    pub init_noise: f64,
    /// Keep ε at its initial value.
    pub fixed_null: bool,
    pub sampling: SamplingMode,
    pub optimizer: OptimizerKind,
    /// Adam first-moment decay.
    pub beta1: f64,
    /// Adam second-moment decay.
    pub beta2: f64,
    /// Rescale each minibatch gradient to at most this global L2 norm; 0 disables.
    pub max_grad_norm: f64,
    /// Threads for validation; parameter updates are always single-writer.
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma_a: 1.0,
            lr: 0.01,
            epochs: 200,
            batch_size: 64,
            negatives_per_positive: 20,
            lambda_c: 0.25,
            dims: Dims { k_e: 16, k_r: 16, k_s: 16 },
            seed: 0,
            eval_every: 10,
            init_noise: DEFAULT_INIT_NOISE,
            fixed_null: false,
            sampling: SamplingMode::ModeUniform,
            optimizer: OptimizerKind::Adam,
            beta1: 0.9,
            beta2: 0.999,
            max_grad_norm: 0.0,
            workers: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_owned()));
        if !(self.gamma_a > 0.0 && self.gamma_a.is_finite()) {
            return bad("gamma_a must be positive");
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad("lr must be non-negative");
        }
        if self.batch_size == 0 || self.negatives_per_positive == 0 || self.workers == 0 {
            return bad("batch_size, negatives_per_positive and workers must be positive");
        }
        if !(self.lambda_c >= 0.0 && self.lambda_c.is_finite()) {
            return bad("lambda_c must be non-negative");
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return bad("beta1 and beta2 must lie in [0, 1)");
        }
        if !(self.max_grad_norm >= 0.0 && self.max_grad_norm.is_finite()) {
            return bad("max_grad_norm must be non-negative");
        }
        if !(self.init_noise >= 0.0 && self.init_noise.is_finite()) {
            return bad("init_noise must be non-negative");
        }
        self.dims.validate()?;
        Ok(())
    }
}

/// Applies a gradient to the store.
pub trait Optimizer {
    fn step(&mut self, store: &mut ParamStore, grad: &GradientBuffer);
}

/// `θ ← θ − lr · g`, optionally leaving ε untouched.
#[derive(Clone, Copy, Debug)]
pub struct Sgd {
    pub lr: f64,
    pub fixed_null: bool,
}

impl Optimizer for Sgd {
    fn step(&mut self, store: &mut ParamStore, grad: &GradientBuffer) {
        for (key, g) in grad.iter() {
            if self.fixed_null && key == ParamKey::Null {
                continue;
            }
            store.block_mut(key).iter_mut().zip(g).for_each(|(p, d)| *p -= self.lr * d);
        }
    }
}

/// Adam with bias correction. Moments are kept for every parameter block and
/// decay on every step, including steps where a block received no gradient.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub fixed_null: bool,
    step: i32,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    keys: Vec<ParamKey>,
}

impl Adam {
    pub fn new(store: &ParamStore, lr: f64, beta1: f64, beta2: f64, fixed_null: bool) -> Self {
        let keys: Vec<ParamKey> = store.keys().collect();
        let zeros: Vec<Vec<f64>> = keys.iter().map(|k| vec![0.0; store.block(*k).len()]).collect();
        Self { lr, beta1, beta2, eps: 1e-8, fixed_null, step: 0, first: zeros.clone(), second: zeros, keys }
    }
}

impl Optimizer for Adam {
    fn step(&mut self, store: &mut ParamStore, grad: &GradientBuffer) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for (i, &key) in self.keys.iter().enumerate() {
            if self.fixed_null && key == ParamKey::Null {
                continue;
            }
            let g = grad.get(key);
            let (m, v) = (&mut self.first[i], &mut self.second[i]);
            let params = store.block_mut(key);
            for j in 0..params.len() {
                let gj = g.map_or(0.0, |g| g[j]);
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * gj;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * gj * gj;
                params[j] -= self.lr * (m[j] / c1) / ((v[j] / c2).sqrt() + self.eps);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean hinge loss over the epoch's (positive, negative) pairs.
    pub mean_loss: f64,
    /// Composite-constraint penalty per pair, averaged over minibatches.
    pub penalty: f64,
    pub active_fraction: f64,
    /// Embedding rows rescaled onto the unit sphere during the epoch.
    pub clamped_rows: usize,
    /// Projected-vector uses found outside the unit ball during the epoch.
    pub composite_violations: usize,
    /// Pairs skipped because the target triple has no corruptions.
    pub skipped_pairs: usize,
    pub validation: Option<RankingMetrics>,
}

impl EpochStats {
    pub fn violations(&self) -> usize {
        self.clamped_rows + self.composite_violations
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub wall_clock_secs: f64,
    pub workers: usize,
}

impl TrainReport {
    pub fn losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.mean_loss).collect()
    }

    /// One line per epoch: epoch, mean_loss, active_fraction, violations,
    /// val_mrr, val_hits1, val_hits10 (validation columns empty when not
    /// computed).
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        if self.workers > 1 {
            out.push_str(&format!(
                "# workers={}: loss sequence is not guaranteed bit-reproducible\n",
                self.workers
            ));
        }
        out.push_str("epoch\tmean_loss\tactive_fraction\tviolations\tval_mrr\tval_hits1\tval_hits10\n");
        for e in &self.epochs {
            let (mrr, h1, h10) = match &e.validation {
                Some(m) => (m.mrr.to_string(), m.hits_at_1.to_string(), m.hits_at_10.to_string()),
                None => Default::default(),
            };
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{mrr}\t{h1}\t{h10}\n",
                e.epoch,
                e.mean_loss,
                e.active_fraction,
                e.violations()
            ));
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        let last = self.epochs.last();
        serde_json::json!({
            "epochs_run": self.epochs.len(),
            "final_mean_loss": last.map(|e| e.mean_loss),
            "final_validation": self.epochs.iter().rev().find_map(|e| e.validation),
            "wall_clock_secs": self.wall_clock_secs,
            "workers": self.workers,
            "bit_reproducible": self.workers <= 1,
            "per_epoch": self.epochs,
        })
    }
}

/// Initialize from `config` and train.
pub fn train(catalog: &KgCatalog, config: &TrainConfig) -> Result<(ParamStore, TrainReport), TrainError> {
    config.validate()?;
    let store = init_with_noise(catalog, config.dims, config.seed, config.init_noise)?;
    train_from(catalog, config, store)
}

/// Train an existing store.
pub fn train_from(
    catalog: &KgCatalog,
    config: &TrainConfig,
    store: ParamStore,
) -> Result<(ParamStore, TrainReport), TrainError> {
    train_observed(catalog, config, store, |_| {})
}

/// [`train_from`], calling `on_step` with the store after every optimizer
/// step and unit-ball clamp.
pub fn train_observed<F: FnMut(&ParamStore)>(
    catalog: &KgCatalog,
    config: &TrainConfig,
    mut store: ParamStore,
    mut on_step: F,
) -> Result<(ParamStore, TrainReport), TrainError> {
    config.validate()?;
    store.check_catalog(catalog)?;
    let seeds = catalog.seeds(SeedSplit::Train);
    if seeds.is_empty() {
        return Err(TrainError::NoSeeds);
    }
    let valid = catalog.seeds(SeedSplit::Valid);
    let started = Instant::now();
    let mut shuffle = stream(config.seed, Stream::Shuffle);
    let mut negatives = stream(config.seed, Stream::Negatives);
    let mut opt: Box<dyn Optimizer> = match config.optimizer {
        OptimizerKind::Sgd => Box::new(Sgd { lr: config.lr, fixed_null: config.fixed_null }),
        OptimizerKind::Adam => {
            Box::new(Adam::new(&store, config.lr, config.beta1, config.beta2, config.fixed_null))
        }
    };
    let mut order: Vec<usize> = (0..seeds.len()).collect();
    let mut epochs = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle);
        let mut stats = EpochStats {
            epoch,
            mean_loss: 0.0,
            penalty: 0.0,
            active_fraction: 0.0,
            clamped_rows: 0,
            composite_violations: 0,
            skipped_pairs: 0,
            validation: None,
        };
        let (mut pairs, mut active, mut loss_sum, mut batches) = (0usize, 0usize, 0.0, 0usize);

        for batch in order.chunks(config.batch_size) {
            let mut grad = GradientBuffer::new();
            let mut touched: Vec<CharSource> = Vec::new();
            let mut batch_pairs = 0usize;
            for &i in batch {
                let seed = &seeds[i];
                for _ in 0..config.negatives_per_positive {
                    let neg = match sample_negative(&seed.right, catalog, &mut negatives, config.sampling) {
                        Ok(t) => t,
                        Err(KgError::EmptyCorruptionSet) => {
                            stats.skipped_pairs += 1;
                            continue;
                        }
                        Err(e) => return Err(e.into()),
                    };
                    let pl = pair_loss(seed, &neg, &store, catalog, config.gamma_a)?;
                    loss_sum += pl.loss;
                    active += (pl.loss > 0.0) as usize;
                    batch_pairs += 1;
                    grad.merge(&pl.grad);
                    touched.extend(pl.sources);
                }
            }
            if batch_pairs == 0 {
                continue;
            }
            pairs += batch_pairs;
            batches += 1;
            // minibatch objective: mean over pairs of (hinge + penalty on the pair's projected vectors)
            let pen = composite_penalty(&touched, &store, config.lambda_c);
            stats.penalty += pen.value / batch_pairs as f64;
            stats.composite_violations += pen.violations;
            grad.merge(&pen.grad);
            grad.scale(1.0 / batch_pairs as f64);
            if !grad.is_finite() {
                return Err(TrainError::Diverged { epoch, reason: "non-finite gradient".into() });
            }
            if config.max_grad_norm > 0.0 {
                let norm = grad.norm();
                if norm > config.max_grad_norm {
                    grad.scale(config.max_grad_norm / norm);
                }
            }
            opt.step(&mut store, &grad);
            let clamped = clamp_to_unit_ball(&mut store)
                .map_err(|e| TrainError::Diverged { epoch, reason: e.to_string() })?;
            stats.clamped_rows += clamped.total();
            on_step(&store);
        }

        stats.mean_loss = if pairs > 0 { loss_sum / pairs as f64 } else { 0.0 };
        stats.active_fraction = if pairs > 0 { active as f64 / pairs as f64 } else { 0.0 };
        stats.penalty = if batches > 0 { stats.penalty / batches as f64 } else { 0.0 };
        if !stats.mean_loss.is_finite() || !stats.penalty.is_finite() {
            return Err(TrainError::Diverged { epoch, reason: "non-finite epoch loss".into() });
        }
        if config.eval_every > 0 && epoch % config.eval_every == 0 && !valid.is_empty() {
            let opts = EvalOptions { workers: config.workers, ..Default::default() };
            stats.validation = Some(evaluate(valid, &store, catalog, opts)?);
        }
        epochs.push(stats);
    }

    let report = TrainReport { epochs, wall_clock_secs: started.elapsed().as_secs_f64(), workers: config.workers };
    Ok((store, report))
}
