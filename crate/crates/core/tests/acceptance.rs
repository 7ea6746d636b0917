//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Run with `cargo test -p edal-core --test acceptance`.

use std::process::ExitCode;
use std::time::Instant;

use edal::editdist::{delannoy, distance_bruteforce, distance_dp, enumerate_paths, ProjectedString};
use edal::eval::{evaluate, EvalOptions};
use edal::kg::{corruption_set, load_catalog, sample_negative, CatalogBuilder, KgCatalog, KgId, SamplingMode, SeedSplit};
use edal::params::{encode, init_with_noise, Dims, ParamKey, ParamStore};
use edal::synth::{generate, write, SynthSpec};
use edal::trainer::{finite_diff_grad, pair_loss, train, train_observed, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn random_string(rng: &mut ChaCha8Rng, len: usize, k: usize) -> ProjectedString {
    let chars = (0..len).map(|_| (0..k).map(|_| rng.gen_range(-1.0..=1.0)).collect()).collect();
    ProjectedString::from_vectors(chars).unwrap()
}

fn oracle_equivalence() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    let n = 240;
    for _ in 0..n {
        let k = [1, 2, 8][rng.gen_range(0..3)];
        let (m, l) = (rng.gen_range(1..=4), rng.gen_range(1..=4));
        let x = random_string(&mut rng, m, k);
        let y = random_string(&mut rng, l, k);
        let eps: Vec<f64> = (0..k).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let a = distance_dp(&x, &y, &eps, false).unwrap().value;
        let b = distance_bruteforce(&x, &y, &eps).unwrap().value;
        worst = worst.max((a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE));
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-9 && secs < 5.0,
        format!("{n} instances, max rel err {worst:.2e} (tol 1e-9), {secs:.2}s (limit 5s)"),
    )
}

fn path_counts() -> Outcome {
    let mut bad = Vec::new();
    for m in 0..=5 {
        for n in 0..=5 {
            if delannoy(m, n) != enumerate_paths(m, n).len() as u64 {
                bad.push((m, n));
            }
        }
    }
    let fixed = [(1, 1, 3), (3, 3, 63), (3, 4, 129)];
    let fixed_ok = fixed.iter().all(|&(m, n, v)| delannoy(m, n) == v && enumerate_paths(m, n).len() as u64 == v);
    outcome(
        bad.is_empty() && fixed_ok,
        format!("all m,n <= 5 agree: {}; (1,1)=3 (3,3)=63 (3,4)=129: {fixed_ok}", bad.is_empty()),
    )
}

/// Three L1 entities over two types, mirrored into L2 with an extra relation.
fn toy_catalog() -> KgCatalog {
    let mut b = CatalogBuilder::new();
    for (r, h, t) in [("r", "a", "b"), ("q", "b", "c"), ("r", "c", "a")] {
        b.add_triple(KgId::L1, r, &[h, t]).unwrap();
        b.add_triple(KgId::L2, &format!("{r}2"), &[&format!("{h}2"), &format!("{t}2")]).unwrap();
        b.add_seed(SeedSplit::Train, (r, &[h, t]), (&format!("{r}2"), &[&format!("{h}2"), &format!("{t}2")]))
            .unwrap();
    }
    b.add_triple(KgId::L2, "p2", &["a2", "c2"]).unwrap();
    for (e, ty) in [("a", "A"), ("b", "B"), ("c", "A"), ("a2", "A"), ("b2", "B"), ("c2", "A")] {
        b.set_type(e, ty).unwrap();
    }
    b.build().unwrap()
}

fn kind(k: ParamKey) -> usize {
    match k {
        ParamKey::Entity(_) => 0,
        ParamKey::Relation(_) => 1,
        ParamKey::RelProj(_) => 2,
        ParamKey::TypeProj(_) => 3,
        ParamKey::Null => 4,
    }
}

fn gradient_check() -> Outcome {
    const FLOOR: f64 = 1e-4;
    let t = Instant::now();
    let c = toy_catalog();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let configs = 60;
    let (mut worst, mut coords, mut all_kinds) = (0.0f64, 0usize, true);
    for i in 0..configs {
        // k_e = 1 would clamp every entity to ±1 and make same-type entities coincide
        let dims = Dims::new(rng.gen_range(2..=4), rng.gen_range(1..=4), rng.gen_range(1..=4)).unwrap();
        let mut store = init_with_noise(&c, dims, i, 0.3).unwrap();
        for v in store.block_mut(ParamKey::Null) {
            *v = rng.gen_range(-0.5..0.5);
        }
        let seeds = c.seeds(SeedSplit::Train);
        let seed = &seeds[rng.gen_range(0..seeds.len())];
        let neg = sample_negative(&seed.right, &c, &mut rng, SamplingMode::ModeUniform).unwrap();
        // margin placing the hinge at about 1, so it is active and round-off stays small
        let probe = pair_loss(seed, &neg, &store, &c, 1.0).unwrap();
        let gamma = 1.0 + probe.dist_neg - probe.dist_pos;
        let pl = pair_loss(seed, &neg, &store, &c, gamma).unwrap();
        let keys: Vec<ParamKey> = store.keys().collect();
        let fd = finite_diff_grad(|s| pair_loss(seed, &neg, s, &c, gamma).unwrap().loss, &store, &keys, 1e-6);
        let mut touched = [false; 5];
        for key in keys {
            let num = fd.get(key).unwrap();
            let zeros = vec![0.0; num.len()];
            let an = pl.grad.get(key).unwrap_or(&zeros);
            if an.iter().any(|v| *v != 0.0) {
                touched[kind(key)] = true;
            }
            for (a, b) in an.iter().zip(num) {
                worst = worst.max((a - b).abs() / a.abs().max(b.abs()).max(FLOOR));
                coords += 1;
            }
        }
        all_kinds &= touched.iter().all(|t| *t);
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-5 && all_kinds && secs < 30.0,
        format!(
            "{configs} configs, {coords} coordinates, max rel err {worst:.2e} (tol 1e-5, h=1e-6, \
             denominator floor {FLOOR:e}), every kind touched: {all_kinds}, {secs:.2}s (limit 30s)"
        ),
    )
}

fn symmetry() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let k = rng.gen_range(1..=8);
        let (m, l) = (rng.gen_range(1..=5), rng.gen_range(1..=5));
        let x = random_string(&mut rng, m, k);
        let y = random_string(&mut rng, l, k);
        let eps: Vec<f64> = (0..k).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let a = distance_dp(&x, &y, &eps, false).unwrap().value;
        let b = distance_dp(&y, &x, &eps, false).unwrap().value;
        worst = worst.max((a - b).abs());
    }
    outcome(worst <= 1e-12, format!("100 instances, max |d(x,y) - d(y,x)| = {worst:.2e} (tol 1e-12)"))
}

fn synth_catalog(spec: SynthSpec) -> (tempfile::TempDir, KgCatalog) {
    let dir = tempfile::tempdir().unwrap();
    let paths = write(&generate(&spec).unwrap(), dir.path()).unwrap();
    let c = load_catalog(&paths).unwrap();
    (dir, c)
}

fn standard(seed: u64) -> SynthSpec {
    SynthSpec { entities: 50, relations: 5, triples: 300, types: 3, seed }
}

fn constraints() -> Outcome {
    let (_dir, c) = synth_catalog(standard(0));
    let cfg = TrainConfig { epochs: 50, eval_every: 0, ..Default::default() };
    let store = init_with_noise(&c, cfg.dims, cfg.seed, cfg.init_noise).unwrap();
    let (mut steps, mut worst) = (0usize, 0.0f64);
    let (_, report) = train_observed(&c, &cfg, store, |s: &ParamStore| {
        steps += 1;
        for t in [s.entity_emb(), s.relation_emb()] {
            for i in 0..t.rows() {
                worst = worst.max(t.row(i).iter().map(|v| v * v).sum::<f64>().sqrt());
            }
        }
    })
    .unwrap();
    let penalties_ok = report.epochs.iter().all(|e| e.penalty.is_finite() && e.penalty >= 0.0);
    outcome(
        worst <= 1.0 + 1e-9 && penalties_ok && report.epochs.len() == 50,
        format!("{steps} steps, max row norm {worst:.12} (limit 1 + 1e-9), penalties finite and >= 0: {penalties_ok}"),
    )
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn synthetic_recovery() -> Outcome {
    let t = Instant::now();
    let (mut h1, mut mrr) = (Vec::new(), Vec::new());
    for seed in 0..5 {
        let (_dir, c) = synth_catalog(standard(seed));
        let cfg = TrainConfig { seed, eval_every: 0, dims: Dims::uniform(16).unwrap(), ..Default::default() };
        let (store, _) = train(&c, &cfg).unwrap();
        let m = evaluate(c.seeds(SeedSplit::Test), &store, &c, EvalOptions::default()).unwrap();
        h1.push(m.hits_at_1);
        mrr.push(m.mrr);
    }
    let secs = t.elapsed().as_secs_f64();
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" ");
    let (mh, mm) = (median(h1.clone()), median(mrr.clone()));
    outcome(
        mh >= 0.9 && mm >= 0.93 && secs < 300.0,
        format!(
            "median hits@1 {mh:.3} (>= 0.9) [{}], median MRR {mm:.3} (>= 0.93) [{}], {secs:.1}s for 5 seeds (limit 300s)",
            fmt(&h1),
            fmt(&mrr)
        ),
    )
}

/// One-dimensional identity-projection store with an all-zero source triple
/// and ε = 0: only the all-substitution path survives, so a binary target
/// `s(x, y)` sits at distance (s·x·y)² / 63.
fn hinge_fixture(pos: [f64; 3], neg: [f64; 3]) -> (KgCatalog, ParamStore) {
    let mut b = CatalogBuilder::new();
    b.add_triple(KgId::L1, "r", &["a", "b"]).unwrap();
    b.add_triple(KgId::L2, "s", &["x", "y"]).unwrap();
    b.add_triple(KgId::L2, "p", &["u", "w"]).unwrap();
    for e in ["a", "b", "x", "y", "u", "w"] {
        b.set_type(e, "T").unwrap();
    }
    b.add_seed(SeedSplit::Train, ("r", &["a", "b"]), ("s", &["x", "y"])).unwrap();
    let c = b.build().unwrap();
    let mut store = ParamStore::zeros(Dims::uniform(1).unwrap(), 6, 3, 1);
    for k in [ParamKey::RelProj(0), ParamKey::RelProj(1), ParamKey::RelProj(2), ParamKey::TypeProj(0)] {
        store.block_mut(k)[0] = 1.0;
    }
    store.block_mut(ParamKey::Relation(1))[0] = pos[0];
    store.block_mut(ParamKey::Relation(2))[0] = neg[0];
    for (slot, v) in [(2, pos[1]), (3, pos[2]), (4, neg[1]), (5, neg[2])] {
        store.block_mut(ParamKey::Entity(slot))[0] = v;
    }
    (c, store)
}

fn hinge_semantics() -> Outcome {
    let hand = |v: [f64; 3]| (v[0] * v[1] * v[2]).powi(2) / 63.0;
    let mut notes = Vec::new();
    let mut pass = true;
    for (pos, neg, gamma, active) in [
        ([0.5, 0.8, 0.9], [1.0, 0.8, 0.9], 1.0, true),
        ([0.9, -0.7, 0.6], [0.2, 0.3, -0.4], 0.5, true),
        ([0.1, 0.5, 0.5], [1.0, 1.0, 1.0], 1e-3, false),
        ([0.0, 0.5, 0.5], [0.9, -0.9, 0.9], 1e-3, false),
    ] {
        let (c, store) = hinge_fixture(pos, neg);
        let seed = &c.seeds(SeedSplit::Train)[0];
        let negative = c.graph(KgId::L2).resolve("p", &["u", "w"]).unwrap();
        let pl = pair_loss(seed, &negative, &store, &c, gamma).unwrap();
        let expect = (gamma + hand(pos) - hand(neg)).max(0.0);
        let ok = if active {
            (pl.loss - expect).abs() <= 1e-15 && expect > 0.0 && !pl.grad.is_all_zero()
        } else {
            expect == 0.0 && pl.loss == 0.0 && pl.grad.is_all_zero()
        };
        pass &= ok;
        notes.push(format!("{}={:.6}", if active { "active" } else { "inactive" }, pl.loss));
    }
    let c = toy_catalog();
    let seed = &c.seeds(SeedSplit::Train)[0];
    let l2 = c.graph(KgId::L2);
    let set_size = corruption_set(&seed.right, &c).unwrap().len();
    pass &= set_size == (l2.relations().len() - 1) + 2 * (l2.entities().len() - 1);
    outcome(pass, format!("fabricated states: {}; corruption set size {set_size}", notes.join(", ")))
}

fn reproducibility() -> Outcome {
    let (_dir, c) = synth_catalog(standard(2));
    let cfg = TrainConfig { epochs: 25, seed: 9, workers: 1, ..Default::default() };
    let (a, ra) = train(&c, &cfg).unwrap();
    let (b, rb) = train(&c, &cfg).unwrap();
    let same_ckpt = encode(&a) == encode(&b);
    let la: Vec<u64> = ra.losses().iter().map(|v| v.to_bits()).collect();
    let lb: Vec<u64> = rb.losses().iter().map(|v| v.to_bits()).collect();
    let same_losses = la == lb;
    outcome(
        same_ckpt && same_losses,
        format!("25-epoch runs, checkpoints bit-identical: {same_ckpt}, loss sequences bit-identical: {same_losses}"),
    )
}

fn main() -> ExitCode {
    let criteria: [Check; 8] = [
        ("oracle equivalence", oracle_equivalence),
        ("path-count correctness", path_counts),
        ("gradient correctness", gradient_check),
        ("symmetry", symmetry),
        ("constraint maintenance", constraints),
        ("synthetic recovery", synthetic_recovery),
        ("hinge semantics", hinge_semantics),
        ("reproducibility", reproducibility),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        failed += usize::from(!o.pass);
        println!("[{}] {} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
