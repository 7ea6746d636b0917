//! Per-coordinate dynamic program over the `(m+1) × (n+1)` alignment grid.
//!
//! Because each path's value is a sum over coordinates of products of squared
//! operation components, the sum over paths factorizes per coordinate:
//!
//! ```text
//! D[0][0]   = 1
//! D[p][q]   = D[p-1][q-1]·sub²(p,q) + D[p-1][q]·del²(p) + D[p][q-1]·ins²(q)
//! distance  = Σ_i D[m][n][i] / delannoy(m, n)
//! ```

use super::{check_pair, delannoy, DistanceResult, EditError, ProjectedString};

/// Forward state of [`distance_dp`], kept for reverse-mode gradients.
#[derive(Clone, Debug)]
pub struct EditLattice {
    pub(crate) m: usize,
    pub(crate) n: usize,
    pub(crate) k: usize,
    /// `D[p][q][i]` at `(p * (n + 1) + q) * k + i`.
    pub(crate) cells: Vec<f64>,
    /// `x[p] − y[q]` at `(p * n + q) * k + i` (0-based characters).
    pub(crate) sub: Vec<f64>,
    /// `x[p] − ε` at `p * k + i`.
    pub(crate) del: Vec<f64>,
    /// `ε − y[q]` at `q * k + i`.
    pub(crate) ins: Vec<f64>,
    pub(crate) path_count: u64,
}

impl EditLattice {
    pub fn shape(&self) -> (usize, usize) {
        (self.m, self.n)
    }

    pub fn dim(&self) -> usize {
        self.k
    }

    /// The k-vector `D[p][q]`.
    pub fn cell(&self, p: usize, q: usize) -> &[f64] {
        let at = (p * (self.n + 1) + q) * self.k;
        &self.cells[at..at + self.k]
    }

    pub fn path_count(&self) -> u64 {
        self.path_count
    }

    pub(crate) fn idx(&self, p: usize, q: usize) -> usize {
        (p * (self.n + 1) + q) * self.k
    }
}

/// Edit distance by dynamic programming; `O(m·n·k)`.
pub fn distance_dp(
    x: &ProjectedString,
    y: &ProjectedString,
    null: &[f64],
    keep_lattice: bool,
) -> Result<DistanceResult, EditError> {
    check_pair(x, y, null)?;
    let (m, n, k) = (x.len(), y.len(), null.len());

    let mut sub = Vec::with_capacity(m * n * k);
    for a in x.chars() {
        for b in y.chars() {
            sub.extend(a.iter().zip(b).map(|(u, v)| u - v));
        }
    }
    let del: Vec<f64> = x.chars().iter().flat_map(|a| a.iter().zip(null).map(|(u, e)| u - e)).collect();
    let ins: Vec<f64> = y.chars().iter().flat_map(|b| null.iter().zip(b).map(|(e, v)| e - v)).collect();

    let path_count = delannoy(m, n);
    let mut lat = EditLattice { m, n, k, cells: vec![0.0; (m + 1) * (n + 1) * k], sub, del, ins, path_count };

    lat.cells[..k].fill(1.0);
    for p in 0..=m {
        for q in 0..=n {
            if p == 0 && q == 0 {
                continue;
            }
            let here = lat.idx(p, q);
            for i in 0..k {
                let mut acc = 0.0;
                if p > 0 && q > 0 {
                    let s = lat.sub[((p - 1) * n + (q - 1)) * k + i];
                    acc += lat.cells[lat.idx(p - 1, q - 1) + i] * s * s;
                }
                if p > 0 {
                    let d = lat.del[(p - 1) * k + i];
                    acc += lat.cells[lat.idx(p - 1, q) + i] * d * d;
                }
                if q > 0 {
                    let s = lat.ins[(q - 1) * k + i];
                    acc += lat.cells[lat.idx(p, q - 1) + i] * s * s;
                }
                lat.cells[here + i] = acc;
            }
        }
    }

    let value = lat.cell(m, n).iter().sum::<f64>() / path_count as f64;
    Ok(DistanceResult { value, path_count, lattice: keep_lattice.then_some(lat) })
}
