//! Reverse-mode gradients of the margin ranking loss.

use std::collections::BTreeMap;

use crate::editdist::{distance_dp, project_triple, CharSource, DistanceResult, EditLattice};
use crate::kg::{AlignmentSeed, KgCatalog, Triple};
use crate::params::{ParamKey, ParamStore};

use super::TrainError;

/// Sparse gradient: one dense block per touched parameter row or matrix.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradientBuffer {
    blocks: BTreeMap<ParamKey, Vec<f64>>,
}

impl GradientBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    fn block(&mut self, key: ParamKey, len: usize) -> &mut [f64] {
        self.blocks.entry(key).or_insert_with(|| vec![0.0; len])
    }

    pub fn add(&mut self, key: ParamKey, grad: &[f64]) {
        self.block(key, grad.len()).iter_mut().zip(grad).for_each(|(g, v)| *g += v);
    }

    pub fn get(&self, key: ParamKey) -> Option<&[f64]> {
        self.blocks.get(&key).map(Vec::as_slice)
    }

    pub fn merge(&mut self, other: &GradientBuffer) {
        for (k, v) in &other.blocks {
            self.add(*k, v);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.blocks.values_mut().flatten().for_each(|g| *g *= factor);
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamKey, &[f64])> {
        self.blocks.iter().map(|(k, v)| (*k, v.as_slice()))
    }

    pub fn keys(&self) -> impl Iterator<Item = ParamKey> + '_ {
        self.blocks.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn is_all_zero(&self) -> bool {
        self.blocks.values().flatten().all(|g| *g == 0.0)
    }

    /// Global L2 norm over all blocks.
    pub fn norm(&self) -> f64 {
        self.blocks.values().flatten().map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.blocks.values().flatten().all(|g| g.is_finite())
    }

    /// Push a string-space gradient `dc` of a projected character back onto
    /// its embedding row and projection matrix (`c = v · M`).
    pub(crate) fn add_char(&mut self, store: &ParamStore, source: CharSource, dc: &[f64]) {
        let (emb_key, proj_key, v, m) = match source {
            CharSource::Relation { slot } => (
                ParamKey::Relation(slot),
                ParamKey::RelProj(slot),
                store.relation_emb().row(slot),
                store.rel_proj(slot),
            ),
            CharSource::Entity { slot, ty } => (
                ParamKey::Entity(slot),
                ParamKey::TypeProj(ty),
                store.entity_emb().row(slot),
                store.type_proj(ty),
            ),
            CharSource::Raw => return,
        };
        let dv: Vec<f64> = (0..m.rows()).map(|j| m.row(j).iter().zip(dc).map(|(a, b)| a * b).sum()).collect();
        self.add(emb_key, &dv);
        let dm = self.block(proj_key, m.rows() * m.cols());
        for (j, &vj) in v.iter().enumerate() {
            for (s, &g) in dc.iter().enumerate() {
                dm[j * m.cols() + s] += vj * g;
            }
        }
    }
}

/// Gradients of `upstream · distance` with respect to each character of both
/// strings and to ε.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeGrad {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
    pub null: Vec<f64>,
}

/// Reverse accumulation through the lattice recurrence.
pub fn backward_through_lattice(lattice: &EditLattice, upstream: f64) -> LatticeGrad {
    let (m, n, k) = (lattice.m, lattice.n, lattice.k);
    let mut adj = vec![0.0; lattice.cells.len()];
    let mut gx = vec![vec![0.0; k]; m];
    let mut gy = vec![vec![0.0; k]; n];
    let mut ge = vec![0.0; k];

    let top = lattice.idx(m, n);
    adj[top..top + k].fill(upstream / lattice.path_count as f64);

    for p in (0..=m).rev() {
        for q in (0..=n).rev() {
            if p == 0 && q == 0 {
                continue;
            }
            let here = lattice.idx(p, q);
            for i in 0..k {
                let g = adj[here + i];
                if g == 0.0 {
                    continue;
                }
                if p > 0 && q > 0 {
                    let prev = lattice.idx(p - 1, q - 1) + i;
                    let s = lattice.sub[((p - 1) * n + (q - 1)) * k + i];
                    adj[prev] += g * s * s;
                    let d = 2.0 * g * lattice.cells[prev] * s;
                    gx[p - 1][i] += d;
                    gy[q - 1][i] -= d;
                }
                if p > 0 {
                    let prev = lattice.idx(p - 1, q) + i;
                    let s = lattice.del[(p - 1) * k + i];
                    adj[prev] += g * s * s;
                    let d = 2.0 * g * lattice.cells[prev] * s;
                    gx[p - 1][i] += d;
                    ge[i] -= d;
                }
                if q > 0 {
                    let prev = lattice.idx(p, q - 1) + i;
                    let s = lattice.ins[(q - 1) * k + i];
                    adj[prev] += g * s * s;
                    let d = 2.0 * g * lattice.cells[prev] * s;
                    ge[i] += d;
                    gy[q - 1][i] -= d;
                }
            }
        }
    }
    LatticeGrad { x: gx, y: gy, null: ge }
}

fn lattice_of(r: &DistanceResult) -> Result<&EditLattice, TrainError> {
    r.lattice.as_ref().ok_or(TrainError::MissingLattice)
}

/// Hinge loss of one (seed, negative) pair with its gradient.
#[derive(Clone, Debug)]
pub struct PairLoss {
    pub loss: f64,
    pub dist_pos: f64,
    pub dist_neg: f64,
    pub grad: GradientBuffer,
    /// Projected characters the pair used.
    pub sources: Vec<CharSource>,
}

/// `max(0, γ + dist(T₁, T₂) − dist(T₁, T₂′))` and its gradient. An inactive
/// hinge yields an empty gradient.
pub fn pair_loss(
    seed: &AlignmentSeed,
    negative: &Triple,
    store: &ParamStore,
    catalog: &KgCatalog,
    gamma: f64,
) -> Result<PairLoss, TrainError> {
    let x = project_triple(&seed.left, store, catalog)?;
    let pos = project_triple(&seed.right, store, catalog)?;
    let neg = project_triple(negative, store, catalog)?;
    let eps = store.null_vec();
    let dp = distance_dp(&x, &pos, eps, true)?;
    let dn = distance_dp(&x, &neg, eps, true)?;

    let mut sources: Vec<CharSource> = Vec::with_capacity(x.len() + pos.len() + neg.len());
    sources.extend(x.provenance().iter().chain(pos.provenance()).chain(neg.provenance()));

    let raw = gamma + dp.value - dn.value;
    let mut grad = GradientBuffer::new();
    if raw <= 0.0 {
        return Ok(PairLoss { loss: 0.0, dist_pos: dp.value, dist_neg: dn.value, grad, sources });
    }

    for (result, sign, target) in [(&dp, 1.0, &pos), (&dn, -1.0, &neg)] {
        let lg = backward_through_lattice(lattice_of(result)?, sign);
        for (src, g) in x.provenance().iter().zip(&lg.x) {
            grad.add_char(store, *src, g);
        }
        for (src, g) in target.provenance().iter().zip(&lg.y) {
            grad.add_char(store, *src, g);
        }
        grad.add(ParamKey::Null, &lg.null);
    }
    Ok(PairLoss { loss: raw, dist_pos: dp.value, dist_neg: dn.value, grad, sources })
}

#[derive(Clone, Debug, Default)]
pub struct Penalty {
    pub value: f64,
    pub grad: GradientBuffer,
    /// Projected vectors outside the unit ball.
    pub violations: usize,
}

/// `λ · Σ max(0, ‖v·M‖² − 1)` over the projected characters in `touched`.
/// A character listed several times is counted that many times.
pub fn composite_penalty(touched: &[CharSource], store: &ParamStore, lambda_c: f64) -> Penalty {
    let mut out = Penalty::default();
    let mut uses: BTreeMap<CharSource, usize> = BTreeMap::new();
    for src in touched {
        *uses.entry(*src).or_default() += 1;
    }
    for (src, count) in uses {
        let c = match src {
            CharSource::Relation { slot } => store.rel_proj(slot).left_mul(store.relation_emb().row(slot)),
            CharSource::Entity { slot, ty } => store.type_proj(ty).left_mul(store.entity_emb().row(slot)),
            CharSource::Raw => continue,
        };
        let sq: f64 = c.iter().map(|v| v * v).sum();
        if sq > 1.0 {
            out.violations += count;
            if lambda_c != 0.0 {
                let w = lambda_c * count as f64;
                out.value += w * (sq - 1.0);
                let dc: Vec<f64> = c.iter().map(|v| 2.0 * w * v).collect();
                out.grad.add_char(store, src, &dc);
            }
        }
    }
    out
}

/// Central differences `(f(θ+h) − f(θ−h)) / 2h` for every coordinate of
/// the blocks named in `keys`.
pub fn finite_diff_grad<F>(f: F, store: &ParamStore, keys: &[ParamKey], h: f64) -> GradientBuffer
where
    F: Fn(&ParamStore) -> f64,
{
    let mut work = store.clone();
    let mut out = GradientBuffer::new();
    for &key in keys {
        let len = store.block(key).len();
        let mut g = vec![0.0; len];
        for (i, gi) in g.iter_mut().enumerate() {
            let orig = store.block(key)[i];
            work.block_mut(key)[i] = orig + h;
            let up = f(&work);
            work.block_mut(key)[i] = orig - h;
            let down = f(&work);
            work.block_mut(key)[i] = orig;
            *gi = (up - down) / (2.0 * h);
        }
        out.add(key, &g);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::editdist::ProjectedString;
    use crate::params::{Dims, Matrix};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn s(v: Vec<Vec<f64>>) -> ProjectedString {
        ProjectedString::from_vectors(v).unwrap()
    }

    fn dist(x: &[Vec<f64>], y: &[Vec<f64>], e: &[f64]) -> f64 {
        distance_dp(&s(x.to_vec()), &s(y.to_vec()), e, false).unwrap().value
    }

    fn numeric(x: &[Vec<f64>], y: &[Vec<f64>], e: &[f64], h: f64) -> LatticeGrad {
        let mut gx = vec![vec![0.0; e.len()]; x.len()];
        let mut gy = vec![vec![0.0; e.len()]; y.len()];
        let mut ge = vec![0.0; e.len()];
        for p in 0..x.len() {
            for i in 0..e.len() {
                let (mut a, mut b) = (x.to_vec(), x.to_vec());
                a[p][i] += h;
                b[p][i] -= h;
                gx[p][i] = (dist(&a, y, e) - dist(&b, y, e)) / (2.0 * h);
            }
        }
        for q in 0..y.len() {
            for i in 0..e.len() {
                let (mut a, mut b) = (y.to_vec(), y.to_vec());
                a[q][i] += h;
                b[q][i] -= h;
                gy[q][i] = (dist(x, &a, e) - dist(x, &b, e)) / (2.0 * h);
            }
        }
        for i in 0..e.len() {
            let (mut a, mut b) = (e.to_vec(), e.to_vec());
            a[i] += h;
            b[i] -= h;
            ge[i] = (dist(x, y, &a) - dist(x, y, &b)) / (2.0 * h);
        }
        LatticeGrad { x: gx, y: gy, null: ge }
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-5 * a.abs().max(b.abs()).max(1e-6)
    }

    #[test]
    fn lattice_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..40 {
            let (m, n, k) = (rng.gen_range(1..=4), rng.gen_range(1..=4), rng.gen_range(1..=3));
            let mut v = || (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>();
            let x: Vec<_> = (0..m).map(|_| v()).collect();
            let y: Vec<_> = (0..n).map(|_| v()).collect();
            let e = v();
            let r = distance_dp(&s(x.clone()), &s(y.clone()), &e, true).unwrap();
            let an = backward_through_lattice(r.lattice.as_ref().unwrap(), 1.0);
            let nu = numeric(&x, &y, &e, 1e-6);
            let flat = |g: &LatticeGrad| g.x.concat().into_iter().chain(g.y.concat()).chain(g.null.clone()).collect::<Vec<_>>();
            for (a, b) in flat(&an).into_iter().zip(flat(&nu)) {
                assert!(close(a, b), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn single_character_null_gradient() {
        let (x, y, e) = (vec![vec![0.5]], vec![vec![0.3]], vec![0.1]);
        let r = distance_dp(&s(x.clone()), &s(y.clone()), &e, true).unwrap();
        let an = backward_through_lattice(r.lattice.as_ref().unwrap(), 1.0);
        // d/dε of (2/3)·(0.5−ε)²(ε−0.3)² at ε = 0.1
        let exact = (2.0 / 3.0) * (-2.0 * 0.4 * 0.04 + 2.0 * 0.16 * -0.2);
        assert!(close(an.null[0], exact));
        assert!(close(an.null[0], numeric(&x, &y, &e, 1e-6).null[0]));
    }

    #[test]
    fn all_zero_ops_give_zero_gradient() {
        let z = vec![vec![0.0; 2]; 3];
        let r = distance_dp(&s(z.clone()), &s(z), &[0.0, 0.0], true).unwrap();
        let g = backward_through_lattice(r.lattice.as_ref().unwrap(), 1.0);
        assert!(g.x.iter().chain(&g.y).flatten().chain(&g.null).all(|v| *v == 0.0));
    }

    #[test]
    fn finite_diff_exact_cases() {
        let mut store = ParamStore::zeros(Dims::uniform(1).unwrap(), 1, 1, 1);
        store.null_vec[0] = 3.0;
        let g = finite_diff_grad(|s| s.null_vec()[0] * s.null_vec()[0], &store, &[ParamKey::Null], 1e-6);
        assert!((g.get(ParamKey::Null).unwrap()[0] - 6.0).abs() < 1e-8);
        let g = finite_diff_grad(|s| 2.5 * s.null_vec()[0] - 1.0, &store, &[ParamKey::Null], 1e-3);
        assert!((g.get(ParamKey::Null).unwrap()[0] - 2.5).abs() < 1e-12);
    }

    #[test]
    fn penalty_hinge() {
        let mut store = ParamStore::zeros(Dims::uniform(2).unwrap(), 2, 1, 1);
        store.type_proj[0] = Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]);
        store.entity_emb.row_mut(0).copy_from_slice(&[1.5f64.sqrt(), 0.0]);
        store.entity_emb.row_mut(1).copy_from_slice(&[0.6, 0.0]);
        let big = CharSource::Entity { slot: 0, ty: 0 };
        let small = CharSource::Entity { slot: 1, ty: 0 };
        let p = composite_penalty(&[big, small], &store, 0.25);
        assert!((p.value - 0.125).abs() < 1e-12);
        assert_eq!(p.violations, 1);
        let twice = composite_penalty(&[big, small, big], &store, 0.25);
        assert!((twice.value - 0.25).abs() < 1e-12);
        assert_eq!(composite_penalty(&[small], &store, 0.25).value, 0.0);
        assert_eq!(composite_penalty(&[big], &store, 0.0).value, 0.0);

        let fd = finite_diff_grad(|s| composite_penalty(&[big], s, 0.25).value, &store, &[ParamKey::Entity(0), ParamKey::TypeProj(0)], 1e-6);
        for key in [ParamKey::Entity(0), ParamKey::TypeProj(0)] {
            for (a, b) in p.grad.get(key).unwrap().iter().zip(fd.get(key).unwrap()) {
                assert!(close(*a, *b), "{key:?}: {a} vs {b}");
            }
        }
    }
}
