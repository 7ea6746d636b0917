//! Edit sequences as monotone paths through the alignment grid.

use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum EditKind {
    Substitution,
    Deletion,
    Insertion,
}

/// Number of monotone (diagonal/down/right) paths from `(0,0)` to `(m,n)`.
pub fn delannoy(m: usize, n: usize) -> u64 {
    let mut row = vec![1u64; n + 1];
    for _ in 1..=m {
        let mut diag = row[0];
        for q in 1..=n {
            let up = row[q];
            row[q] = up + row[q - 1] + diag;
            diag = up;
        }
    }
    row[n]
}

/// All edit sequences turning a length-`m` string into a length-`n` string,
/// depth-first with diagonal, then down, then right priority.
pub fn enumerate_paths(m: usize, n: usize) -> Vec<Vec<EditKind>> {
    fn walk(p: usize, q: usize, m: usize, n: usize, cur: &mut Vec<EditKind>, out: &mut Vec<Vec<EditKind>>) {
        if p == m && q == n {
            out.push(cur.clone());
            return;
        }
        if p < m && q < n {
            cur.push(EditKind::Substitution);
            walk(p + 1, q + 1, m, n, cur, out);
            cur.pop();
        }
        if p < m {
            cur.push(EditKind::Deletion);
            walk(p + 1, q, m, n, cur, out);
            cur.pop();
        }
        if q < n {
            cur.push(EditKind::Insertion);
            walk(p, q + 1, m, n, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    walk(0, 0, m, n, &mut Vec::with_capacity(m + n), &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use EditKind::*;

    #[test]
    fn tiny_grid() {
        assert_eq!(
            enumerate_paths(1, 1),
            vec![vec![Substitution], vec![Deletion, Insertion], vec![Insertion, Deletion]]
        );
    }

    #[test]
    fn known_counts() {
        assert_eq!(delannoy(0, 0), 1);
        assert_eq!(delannoy(1, 1), 3);
        assert_eq!(delannoy(3, 3), 63);
        assert_eq!(delannoy(3, 4), 129);
        assert_eq!(delannoy(4, 3), 129);
        assert_eq!(enumerate_paths(3, 3).len(), 63);
        assert_eq!(enumerate_paths(3, 4).len(), 129);
    }

    #[test]
    fn count_matches_enumeration_up_to_five() {
        for m in 0..=5 {
            for n in 0..=5 {
                let paths = enumerate_paths(m, n);
                assert_eq!(paths.len() as u64, delannoy(m, n), "({m},{n})");
                for p in &paths {
                    let subs = p.iter().filter(|k| **k == Substitution).count();
                    let dels = p.iter().filter(|k| **k == Deletion).count();
                    let ins = p.iter().filter(|k| **k == Insertion).count();
                    assert_eq!((subs + dels, subs + ins), (m, n));
                }
            }
        }
    }
}
