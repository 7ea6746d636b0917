//! `key = value` run configuration with command-line overrides.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use edal::eval::CandidateSet;
use edal::kg::{CatalogPaths, SamplingMode};
use edal::params::Dims;
use edal::trainer::{OptimizerKind, TrainConfig};

/// Every key a config file may set, in the order they are echoed.
pub const KEYS: &[&str] = &[
    "triples_l1",
    "triples_l2",
    "types",
    "train_seeds",
    "valid_seeds",
    "test_seeds",
    "checkpoint",
    "out",
    "labeled_pairs",
    "theta",
    "candidates",
    "gamma_a",
    "lr",
    "epochs",
    "batch_size",
    "negatives_per_positive",
    "lambda_c",
    "k_e",
    "k_r",
    "k_s",
    "seed",
    "eval_every",
    "init_noise",
    "fixed_null",
    "sampling",
    "optimizer",
    "beta1",
    "beta2",
    "max_grad_norm",
    "workers",
];

const PATH_KEYS: &[&str] =
    &["triples_l1", "triples_l2", "types", "train_seeds", "valid_seeds", "test_seeds", "checkpoint", "out", "labeled_pairs"];

/// Raw key/value pairs; relative paths are resolved against `base`.
#[derive(Clone, Debug, Default)]
pub struct RawConfig {
    values: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("config line {}: expected `key = value`", i + 1))?;
            cfg.set(k.trim(), v.trim(), base).with_context(|| format!("config line {}", i + 1))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Set one key, rejecting unknown ones. Later calls win.
    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<()> {
        if !KEYS.contains(&key) {
            bail!("unknown config key `{key}`");
        }
        let value = if PATH_KEYS.contains(&key) && !value.is_empty() {
            base.join(value).display().to_string()
        } else {
            value.to_owned()
        };
        self.values.insert(key.to_owned(), value);
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str).filter(|v| !v.is_empty())
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|v| v.parse::<T>().map_err(|e| anyhow!("config key `{key}`: cannot parse `{v}`: {e}")))
            .transpose()
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.get(key).map(PathBuf::from)
    }

    pub fn require_path(&self, key: &str) -> Result<PathBuf> {
        self.path(key).ok_or_else(|| anyhow!("config key `{key}` is required"))
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let mut c = TrainConfig::default();
        macro_rules! take {
            ($field:expr, $key:literal) => {
                if let Some(v) = self.parsed($key)? {
                    $field = v;
                }
            };
        }
        take!(c.gamma_a, "gamma_a");
        take!(c.lr, "lr");
        take!(c.epochs, "epochs");
        take!(c.batch_size, "batch_size");
        take!(c.negatives_per_positive, "negatives_per_positive");
        take!(c.lambda_c, "lambda_c");
        take!(c.seed, "seed");
        take!(c.eval_every, "eval_every");
        take!(c.init_noise, "init_noise");
        take!(c.fixed_null, "fixed_null");
        take!(c.beta1, "beta1");
        take!(c.beta2, "beta2");
        take!(c.max_grad_norm, "max_grad_norm");
        take!(c.workers, "workers");
        let mut d = c.dims;
        take!(d.k_e, "k_e");
        take!(d.k_r, "k_r");
        take!(d.k_s, "k_s");
        c.dims = Dims::new(d.k_e, d.k_r, d.k_s)?;
        if let Some(v) = self.get("sampling") {
            c.sampling = match v {
                "mode-uniform" => SamplingMode::ModeUniform,
                "global-uniform" => SamplingMode::GlobalUniform,
                _ => bail!("config key `sampling`: expected mode-uniform or global-uniform, got `{v}`"),
            };
        }
        if let Some(v) = self.get("optimizer") {
            c.optimizer = match v {
                "sgd" => OptimizerKind::Sgd,
                "adam" => OptimizerKind::Adam,
                _ => bail!("config key `optimizer`: expected sgd or adam, got `{v}`"),
            };
        }
        c.validate()?;
        Ok(c)
    }

    pub fn candidates(&self) -> Result<CandidateSet> {
        Ok(match self.get("candidates") {
            None | Some("corruptions") => CandidateSet::Corruptions,
            Some("all-target-triples") => CandidateSet::AllTargetTriples,
            Some(v) => bail!("config key `candidates`: expected corruptions or all-target-triples, got `{v}`"),
        })
    }

    pub fn theta(&self) -> Result<Option<f64>> {
        self.parsed("theta")
    }

    /// Catalog file paths, each checked for existence.
    pub fn catalog_paths(&self) -> Result<CatalogPaths> {
        let paths = CatalogPaths {
            triples_l1: self.require_path("triples_l1")?,
            triples_l2: self.require_path("triples_l2")?,
            types: self.require_path("types")?,
            train_seeds: self.require_path("train_seeds")?,
            valid_seeds: self.path("valid_seeds"),
            test_seeds: self.path("test_seeds"),
        };
        let all = [&paths.triples_l1, &paths.triples_l2, &paths.types, &paths.train_seeds]
            .into_iter()
            .chain(paths.valid_seeds.as_ref())
            .chain(paths.test_seeds.as_ref());
        for p in all {
            if !p.is_file() {
                bail!("input file not found: {}", p.display());
            }
        }
        Ok(paths)
    }

    /// The fully resolved configuration: every training key with its
    /// effective value plus every path that was set.
    pub fn resolved(&self) -> Result<String> {
        let t = self.train_config()?;
        let mut eff = self.values.clone();
        let mut put = |k: &str, v: String| {
            eff.insert(k.to_owned(), v);
        };
        put("gamma_a", t.gamma_a.to_string());
        put("lr", t.lr.to_string());
        put("epochs", t.epochs.to_string());
        put("batch_size", t.batch_size.to_string());
        put("negatives_per_positive", t.negatives_per_positive.to_string());
        put("lambda_c", t.lambda_c.to_string());
        put("k_e", t.dims.k_e.to_string());
        put("k_r", t.dims.k_r.to_string());
        put("k_s", t.dims.k_s.to_string());
        put("seed", t.seed.to_string());
        put("eval_every", t.eval_every.to_string());
        put("init_noise", t.init_noise.to_string());
        put("fixed_null", t.fixed_null.to_string());
        put(
            "sampling",
            match t.sampling {
                SamplingMode::ModeUniform => "mode-uniform",
                SamplingMode::GlobalUniform => "global-uniform",
            }
            .into(),
        );
        put(
            "optimizer",
            match t.optimizer {
                OptimizerKind::Sgd => "sgd",
                OptimizerKind::Adam => "adam",
            }
            .into(),
        );
        put("beta1", t.beta1.to_string());
        put("beta2", t.beta2.to_string());
        put("max_grad_norm", t.max_grad_norm.to_string());
        put("workers", t.workers.to_string());
        let mut out = String::new();
        for k in KEYS {
            if let Some(v) = eff.get(*k) {
                writeln!(out, "{k} = {v}").unwrap();
            }
        }
        Ok(out)
    }
}
