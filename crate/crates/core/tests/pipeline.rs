use std::fs;

use edal::editdist::{distance_dp, project_triple};
use edal::eval::{evaluate, rank_true_triple, CandidateSet, EvalOptions};
use edal::kg::{load_catalog, CatalogPaths, KgError, KgId, SeedSplit};
use edal::params::{init, load_checkpoint, save_checkpoint, Dims, ParamKey};
use edal::synth::{generate, write, SynthSpec};
use edal::trainer::{train, TrainConfig};

fn synth_dir(seed: u64) -> (tempfile::TempDir, CatalogPaths) {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(&SynthSpec { entities: 15, relations: 3, triples: 60, types: 2, seed }).unwrap();
    let paths = write(&data, dir.path()).unwrap();
    (dir, paths)
}

#[test]
fn files_to_metrics() {
    let (dir, paths) = synth_dir(5);
    let c = load_catalog(&paths).unwrap();
    assert_eq!(c.seeds(SeedSplit::Train).len() + c.seeds(SeedSplit::Valid).len() + c.seeds(SeedSplit::Test).len(), 60);

    let cfg = TrainConfig { epochs: 4, dims: Dims::uniform(6).unwrap(), eval_every: 2, ..Default::default() };
    let (store, report) = train(&c, &cfg).unwrap();
    assert_eq!(report.epochs.len(), 4);
    assert!(report.epochs[1].validation.is_some() && report.epochs[0].validation.is_none());

    let p = dir.path().join("model.edal");
    save_checkpoint(&store, &p).unwrap();
    let back = load_checkpoint(&p).unwrap();
    assert_eq!(back, store);

    let test = c.seeds(SeedSplit::Test);
    let a = evaluate(test, &store, &c, EvalOptions::default()).unwrap();
    let b = evaluate(test, &back, &c, EvalOptions { workers: 3, ..Default::default() }).unwrap();
    assert_eq!(a, b);
    assert!(a.hits_at_1 <= a.hits_at_10 && a.mean_rank >= 1.0);

    let all = evaluate(test, &store, &c, EvalOptions { candidates: CandidateSet::AllTargetTriples, workers: 1 }).unwrap();
    assert_eq!(all.n_queries, test.len());
}

#[test]
fn identity_projection_reproduces_embeddings() {
    let (_dir, paths) = synth_dir(6);
    let c = load_catalog(&paths).unwrap();
    let mut store = init(&c, Dims::uniform(4).unwrap(), 1).unwrap();
    let keys: Vec<ParamKey> = store.keys().collect();
    for k in keys {
        if let ParamKey::RelProj(_) | ParamKey::TypeProj(_) = k {
            let m = store.block_mut(k);
            m.fill(0.0);
            for i in 0..4 {
                m[i * 4 + i] = 1.0;
            }
        }
    }
    let seed = &c.seeds(SeedSplit::Train)[0];
    let s = project_triple(&seed.left, &store, &c).unwrap();
    let rel = c.relation_slot(seed.left.relation());
    assert_eq!(s.chars()[0], store.relation_emb().row(rel));
    for (i, e) in seed.left.args().iter().enumerate() {
        assert_eq!(s.chars()[i + 1], store.entity_emb().row(c.entity_slot(*e)));
    }
    // identical strings still have a positive distance through the off-diagonal paths
    let d = distance_dp(&s, &s, store.null_vec(), false).unwrap();
    assert_eq!(d.path_count, 63);
    assert!(d.value > 0.0);
}

#[test]
fn strictly_closest_target_ranks_first() {
    let (_dir, paths) = synth_dir(7);
    let c = load_catalog(&paths).unwrap();
    let cfg = TrainConfig { epochs: 40, dims: Dims::uniform(8).unwrap(), eval_every: 0, ..Default::default() };
    let (store, _) = train(&c, &cfg).unwrap();
    for seed in c.seeds(SeedSplit::Train) {
        let x = project_triple(&seed.left, &store, &c).unwrap();
        let truth = distance_dp(&x, &project_triple(&seed.right, &store, &c).unwrap(), store.null_vec(), false).unwrap();
        let others = edal::kg::corruption_set(&seed.right, &c).unwrap();
        let strictly_best = others.iter().all(|t| {
            let y = project_triple(t, &store, &c).unwrap();
            distance_dp(&x, &y, store.null_vec(), false).unwrap().value > truth.value
        });
        let rank = rank_true_triple(seed, &store, &c, CandidateSet::Corruptions).unwrap();
        assert_eq!(strictly_best, rank == 1);
    }
}

#[test]
fn loader_reports_line_numbers_and_missing_types() {
    let (dir, paths) = synth_dir(8);
    let bad = dir.path().join("bad.tsv");
    fs::write(&bad, "e1\tr0\te2\ne3\tr1\n").unwrap();
    let err = load_catalog(&CatalogPaths { triples_l1: bad.clone(), ..paths.clone() }).unwrap_err();
    assert!(matches!(err, KgError::Parse { line: 2, .. }), "{err}");

    fs::write(&bad, "e1\tr0\tnewcomer\n").unwrap();
    let empty = dir.path().join("empty.tsv");
    fs::write(&empty, "").unwrap();
    let only_train = CatalogPaths { valid_seeds: None, test_seeds: None, ..paths.clone() };
    let err = load_catalog(&CatalogPaths { triples_l1: bad, train_seeds: empty, ..only_train }).unwrap_err();
    assert!(err.to_string().contains("newcomer"), "{err}");

    let c = load_catalog(&paths).unwrap();
    assert_eq!(c.graph(KgId::L1).triples().len(), 60);
}
