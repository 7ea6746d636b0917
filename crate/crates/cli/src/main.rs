//! `edal`: train, evaluate and query triple-alignment models.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use edal::editdist::distance_general_arity;
use edal::eval::{classify_at_threshold, evaluate, parse_labeled_pairs, EvalOptions};
use edal::kg::{load_catalog, parse_atom, KgCatalog, KgId, SeedSplit};
use edal::params::{load_checkpoint, load_checkpoint_expecting, save_checkpoint, Dims, ParamStore};
use edal::synth::{self, SynthSpec};
use edal::trainer::{train, TrainError};

use config::RawConfig;

const CHECKPOINT_FILE: &str = "checkpoint.edal";

#[derive(Parser, Debug)]
#[command(name = "edal", version, about = "Triple alignment by learned edit distance")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// `key = value` configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,
    /// Override one config key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train on the configured catalog and write a checkpoint and reports.
    Train,
    /// Rank test seeds against their corruptions; print metrics as JSON.
    Eval,
    /// Distance between an L1 atom and an L2 atom, e.g. `r(a,b)`.
    Dist { atom_l: String, atom_r: String },
    /// Write a synthetic mirrored pair of graphs with seed splits.
    GenSynth {
        #[arg(long, default_value_t = 50)]
        entities: usize,
        #[arg(long, default_value_t = 5)]
        relations: usize,
        #[arg(long, default_value_t = 300)]
        triples: usize,
        #[arg(long, default_value_t = 3)]
        types: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let diverged = e.chain().any(|c| matches!(c.downcast_ref::<TrainError>(), Some(TrainError::Diverged { .. })));
            ExitCode::from(if diverged { 2 } else { 1 })
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = resolve_config(&cli.global)?;
    match cli.command {
        Command::Train => cmd_train(&cfg),
        Command::Eval => cmd_eval(&cfg),
        Command::Dist { atom_l, atom_r } => cmd_dist(&cfg, &atom_l, &atom_r),
        Command::GenSynth { entities, relations, triples, types } => {
            let seed = cfg.train_config()?.seed;
            let out = cfg.require_path("out")?;
            cmd_gen_synth(SynthSpec { entities, relations, triples, types, seed }, &out)
        }
    }
}

/// Config file, then `--set` overrides, then the dedicated flags.
fn resolve_config(g: &Global) -> Result<RawConfig> {
    let mut cfg = match &g.config {
        Some(p) => RawConfig::load(p)?,
        None => RawConfig::default(),
    };
    let here = Path::new("");
    for kv in &g.overrides {
        let Some((k, v)) = kv.split_once('=') else {
            bail!("--set expects KEY=VALUE, got `{kv}`");
        };
        cfg.set(k.trim(), v.trim(), here)?;
    }
    if let Some(s) = g.seed {
        cfg.set("seed", &s.to_string(), here)?;
    }
    if let Some(w) = g.workers {
        cfg.set("workers", &w.to_string(), here)?;
    }
    if let Some(o) = &g.out {
        cfg.set("out", &o.display().to_string(), here)?;
    }
    Ok(cfg)
}

fn checkpoint_path(cfg: &RawConfig) -> Result<PathBuf> {
    match cfg.path("checkpoint") {
        Some(p) => Ok(p),
        None => Ok(cfg
            .path("out")
            .context("config key `checkpoint` (or `out`) is required")?
            .join(CHECKPOINT_FILE)),
    }
}

fn cmd_train(cfg: &RawConfig) -> Result<()> {
    let tc = cfg.train_config()?;
    let paths = cfg.catalog_paths()?;
    let out = cfg.require_path("out")?;
    let ckpt = checkpoint_path(cfg)?;
    let resolved = cfg.resolved()?;
    let catalog = load_catalog(&paths)?;
    fs::create_dir_all(&out).with_context(|| format!("cannot create {}", out.display()))?;

    let (store, report) = train(&catalog, &tc)?;

    save_checkpoint(&store, &ckpt).with_context(|| format!("cannot write {}", ckpt.display()))?;
    let write = |name: &str, text: String| {
        let p = out.join(name);
        fs::write(&p, text).with_context(|| format!("cannot write {}", p.display()))
    };
    write("train_report.tsv", report.to_tsv())?;
    write("train_report.json", serde_json::to_string_pretty(&report.to_json())? + "\n")?;
    write("config.resolved", resolved)?;

    let skipped: usize = report.epochs.iter().map(|e| e.skipped_pairs).sum();
    if skipped > 0 {
        eprintln!("warning: {skipped} pairs skipped for empty corruption sets");
    }
    if let Some(last) = report.epochs.last() {
        eprintln!(
            "trained {} epochs in {:.1}s, final mean loss {:.6}",
            report.epochs.len(),
            report.wall_clock_secs,
            last.mean_loss
        );
    }
    Ok(())
}

fn load_model(cfg: &RawConfig) -> Result<(KgCatalog, ParamStore)> {
    let paths = cfg.catalog_paths()?;
    let ckpt = checkpoint_path(cfg)?;
    if !ckpt.is_file() {
        bail!("input file not found: {}", ckpt.display());
    }
    let catalog = load_catalog(&paths)?;
    let explicit_dims = ["k_e", "k_r", "k_s"].iter().any(|k| cfg.get(k).is_some());
    let store = if explicit_dims {
        let d = cfg.train_config()?.dims;
        load_checkpoint_expecting(&ckpt, Dims::new(d.k_e, d.k_r, d.k_s)?)
    } else {
        load_checkpoint(&ckpt)
    }
    .with_context(|| format!("cannot load {}", ckpt.display()))?;
    store.check_catalog(&catalog).with_context(|| format!("checkpoint {} does not fit the catalog", ckpt.display()))?;
    Ok((catalog, store))
}

fn cmd_eval(cfg: &RawConfig) -> Result<()> {
    let tc = cfg.train_config()?;
    let candidates = cfg.candidates()?;
    let theta = cfg.theta()?;
    let labeled = cfg.path("labeled_pairs");
    if labeled.is_some() != theta.is_some() {
        bail!("`labeled_pairs` and `theta` must be given together");
    }
    if let Some(p) = &labeled {
        if !p.is_file() {
            bail!("input file not found: {}", p.display());
        }
    }
    let (catalog, store) = load_model(cfg)?;

    let test = catalog.seeds(SeedSplit::Test);
    if test.is_empty() && labeled.is_none() {
        bail!("no test seeds to evaluate (set `test_seeds`)");
    }
    if !test.is_empty() {
        let metrics = evaluate(test, &store, &catalog, EvalOptions { candidates, workers: tc.workers })?;
        println!("{}", serde_json::to_string(&metrics)?);
    }
    if let (Some(p), Some(theta)) = (labeled, theta) {
        let text = fs::read_to_string(&p).with_context(|| format!("cannot read {}", p.display()))?;
        let pairs = parse_labeled_pairs(&text, &catalog).with_context(|| p.display().to_string())?;
        let report = classify_at_threshold(&pairs, theta, &store, &catalog)?;
        println!("{}", serde_json::to_string(&report)?);
    }
    Ok(())
}

fn cmd_dist(cfg: &RawConfig, atom_l: &str, atom_r: &str) -> Result<()> {
    let (rel_l, args_l) = parse_atom(atom_l)?;
    let (rel_r, args_r) = parse_atom(atom_r)?;
    let (catalog, store) = load_model(cfg)?;
    let resolve = |kg: KgId, rel: &str, args: &[String]| {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        catalog.graph(kg).resolve(rel, &args)
    };
    let left = resolve(KgId::L1, &rel_l, &args_l)?;
    let right = resolve(KgId::L2, &rel_r, &args_r)?;
    let d = distance_general_arity(&left, &right, &store, &catalog)?;
    println!("distance\t{}", d.value);
    println!("N\t{}", d.path_count);
    Ok(())
}

fn cmd_gen_synth(spec: SynthSpec, out: &Path) -> Result<()> {
    let data = synth::generate(&spec)?;
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    synth::write(&data, out)?;
    let (tr, va, te) = data.split_sizes;
    eprintln!("wrote {} triples per graph to {} (seeds {tr}/{va}/{te})", spec.triples, out.display());
    Ok(())
}
