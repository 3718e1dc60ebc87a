//! Sparse LU factorization for matrices with a structurally symmetric pattern.
//!
//! Entries are dense `B x B` blocks (B = 1 for scalar systems, B = 2 for the coupled
//! `(u, w)` Newton system). Rows and columns are permuted symmetrically by a caller
//! supplied fill-reducing order, and the factorization uses static block pivoting:
//! only the diagonal blocks are inverted (with partial pivoting inside the block).
//! This requires every leading principal block minor of the permuted matrix to be
//! nonsingular, which holds for the operators assembled in this crate.
//!
//! The algorithm is up-looking: row `k` of `L` and column `k` of `U` are computed
//! from sparse triangular solves whose nonzero pattern is the elimination-tree reach
//! of row `k`. The symbolic analysis is computed once and reused for every numeric
//! factorization with the same pattern.

use std::sync::Arc;

use super::csr::SparsityPattern;
use crate::error::{Error, Result};

pub type Block<const B: usize> = [[f64; B]; B];

#[inline]
fn zero<const B: usize>() -> Block<B> {
    [[0.0; B]; B]
}

/// `acc -= a * b`
#[inline]
fn sub_mul<const B: usize>(acc: &mut Block<B>, a: &Block<B>, b: &Block<B>) {
    for i in 0..B {
        for k in 0..B {
            let aik = a[i][k];
            for j in 0..B {
                acc[i][j] -= aik * b[k][j];
            }
        }
    }
}

#[inline]
fn mul<const B: usize>(a: &Block<B>, b: &Block<B>) -> Block<B> {
    let mut out = zero::<B>();
    for i in 0..B {
        for k in 0..B {
            for j in 0..B {
                out[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    out
}

#[inline]
fn mul_vec<const B: usize>(a: &Block<B>, x: &[f64; B]) -> [f64; B] {
    let mut out = [0.0; B];
    for i in 0..B {
        for j in 0..B {
            out[i] += a[i][j] * x[j];
        }
    }
    out
}

/// Gauss-Jordan inverse with partial pivoting; `None` if numerically singular.
fn invert<const B: usize>(a: &Block<B>) -> Option<Block<B>> {
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return None;
    }
    let mut m = *a;
    let mut inv = zero::<B>();
    for (i, row) in inv.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for c in 0..B {
        let p = (c..B)
            .max_by(|&x, &y| m[x][c].abs().total_cmp(&m[y][c].abs()))
            .unwrap_or(c);
        if m[p][c].abs() <= 1e-14 * scale {
            return None;
        }
        m.swap(c, p);
        inv.swap(c, p);
        let d = 1.0 / m[c][c];
        for j in 0..B {
            m[c][j] *= d;
            inv[c][j] *= d;
        }
        for r in 0..B {
            if r != c {
                let f = m[r][c];
                if f != 0.0 {
                    for j in 0..B {
                        m[r][j] -= f * m[c][j];
                        inv[r][j] -= f * inv[c][j];
                    }
                }
            }
        }
    }
    Some(inv)
}

/// Pattern analysis shared by all numeric factorizations over the same pattern and order.
#[derive(Debug)]
pub struct SymbolicLu {
    n: usize,
    /// `perm[k]` = original index of the k-th eliminated node.
    perm: Vec<usize>,
    iperm: Vec<usize>,
    /// Row patterns of strict L (= column patterns of strict U), permuted indices, ascending.
    reach_ptr: Vec<usize>,
    reach_idx: Vec<usize>,
    /// Column lists of strict L: (row, position into reach arrays), ascending rows.
    lcol_ptr: Vec<usize>,
    lcol_row: Vec<usize>,
    lcol_pos: Vec<usize>,
    /// Original-pattern position of the transpose of each entry.
    transpose: Vec<usize>,
    pattern: Arc<SparsityPattern>,
}

impl SymbolicLu {
    /// Analyses `pattern` (structurally symmetric, every diagonal present) under the
    /// elimination order `order` (`order[k]` = original node eliminated k-th).
    pub fn analyse(pattern: Arc<SparsityPattern>, order: &[usize]) -> Result<Self> {
        let n = pattern.dim();
        if order.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: order.len(),
            });
        }
        const NONE: usize = usize::MAX;
        let mut iperm = vec![NONE; n];
        for (k, &o) in order.iter().enumerate() {
            if o >= n || iperm[o] != NONE {
                return Err(Error::invalid("order", "not a permutation"));
            }
            iperm[o] = k;
        }
        let transpose = pattern.transpose_positions()?;
        for i in 0..n {
            if pattern.find(i, i).is_none() {
                return Err(Error::invalid("pattern", format!("missing diagonal entry {i}")));
            }
        }

        // elimination tree (Liu's algorithm with path compression)
        let mut parent = vec![NONE; n];
        let mut ancestor = vec![NONE; n];
        for k in 0..n {
            for &c in pattern.row(order[k]) {
                let mut r = iperm[c];
                if r >= k {
                    continue;
                }
                while ancestor[r] != NONE && ancestor[r] != k {
                    let next = ancestor[r];
                    ancestor[r] = k;
                    r = next;
                }
                if ancestor[r] == NONE {
                    ancestor[r] = k;
                    parent[r] = k;
                }
            }
        }

        // row reaches
        let mut flag = vec![NONE; n];
        let mut reach_ptr = Vec::with_capacity(n + 1);
        let mut reach_idx = Vec::new();
        reach_ptr.push(0);
        let mut lcount = vec![0usize; n];
        for k in 0..n {
            flag[k] = k;
            let start = reach_idx.len();
            for &c in pattern.row(order[k]) {
                let mut r = iperm[c];
                if r >= k {
                    continue;
                }
                while flag[r] != k {
                    reach_idx.push(r);
                    flag[r] = k;
                    r = parent[r];
                }
            }
            reach_idx[start..].sort_unstable();
            for &j in &reach_idx[start..] {
                lcount[j] += 1;
            }
            reach_ptr.push(reach_idx.len());
        }

        let mut lcol_ptr = Vec::with_capacity(n + 1);
        lcol_ptr.push(0);
        for j in 0..n {
            lcol_ptr.push(lcol_ptr[j] + lcount[j]);
        }
        let mut fill = lcol_ptr[..n].to_vec();
        let mut lcol_row = vec![0; reach_idx.len()];
        let mut lcol_pos = vec![0; reach_idx.len()];
        for k in 0..n {
            for pos in reach_ptr[k]..reach_ptr[k + 1] {
                let j = reach_idx[pos];
                lcol_row[fill[j]] = k;
                lcol_pos[fill[j]] = pos;
                fill[j] += 1;
            }
        }

        Ok(SymbolicLu {
            n,
            perm: order.to_vec(),
            iperm,
            reach_ptr,
            reach_idx,
            lcol_ptr,
            lcol_row,
            lcol_pos,
            transpose,
            pattern,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Off-diagonal block count of `L` (equal to that of `U`).
    pub fn factor_nnz(&self) -> usize {
        self.reach_idx.len()
    }

    pub fn pattern(&self) -> &Arc<SparsityPattern> {
        &self.pattern
    }
}

/// Numeric block LU factors.
#[derive(Debug, Clone)]
pub struct SparseLu<const B: usize> {
    symbolic: Arc<SymbolicLu>,
    lvals: Vec<Block<B>>,
    uvals: Vec<Block<B>>,
    dinv: Vec<Block<B>>,
}

impl<const B: usize> SparseLu<B> {
    /// Factorizes the block matrix whose entries (in `symbolic.pattern()` storage order)
    /// are `values`.
    pub fn factor(symbolic: Arc<SymbolicLu>, values: &[Block<B>]) -> Result<Self> {
        let s = &*symbolic;
        if values.len() != s.pattern.nnz() {
            return Err(Error::DimensionMismatch {
                expected: s.pattern.nnz(),
                got: values.len(),
            });
        }
        let n = s.n;
        let nf = s.reach_idx.len();
        let mut lvals = vec![zero::<B>(); nf];
        let mut uvals = vec![zero::<B>(); nf];
        let mut dinv = vec![zero::<B>(); n];
        // dense workspaces in permuted indices
        let mut x = vec![zero::<B>(); n];
        let mut arow = vec![zero::<B>(); n];

        for k in 0..n {
            let o = s.perm[k];
            let reach = &s.reach_idx[s.reach_ptr[k]..s.reach_ptr[k + 1]];
            let base = s.reach_ptr[k];

            // scatter column k (rows <= k) and row k (cols < k) of the permuted matrix
            for p in s.pattern.row_range(o) {
                let kc = s.iperm[s.pattern.col(p)];
                if kc <= k {
                    x[kc] = values[s.transpose[p]];
                }
                if kc < k {
                    arow[kc] = values[p];
                }
            }

            // U(:, k): solve L x = A(:, k) restricted to the reach
            for (q, &j) in reach.iter().enumerate() {
                let xj = x[j];
                uvals[base + q] = xj;
                for t in s.lcol_ptr[j]..s.lcol_ptr[j + 1] {
                    let i = s.lcol_row[t];
                    if i >= k {
                        break;
                    }
                    let lij = lvals[s.lcol_pos[t]];
                    sub_mul(&mut x[i], &lij, &xj);
                }
            }

            // L(k, :): y U = A(k, :), stored directly into lvals; arow doubles as y
            for (q, &j) in reach.iter().enumerate() {
                let mut acc = arow[j];
                for pos in s.reach_ptr[j]..s.reach_ptr[j + 1] {
                    let i = s.reach_idx[pos];
                    sub_mul(&mut acc, &arow[i], &uvals[pos]);
                }
                let y = mul(&acc, &dinv[j]);
                arow[j] = y;
                lvals[base + q] = y;
            }

            // pivot block
            let mut d = x[k];
            for q in 0..reach.len() {
                sub_mul(&mut d, &lvals[base + q], &uvals[base + q]);
            }
            dinv[k] = invert(&d).ok_or_else(|| {
                Error::LinearSolveFailure(format!("singular pivot block at elimination step {k} (node {o})"))
            })?;

            for &j in reach {
                x[j] = zero::<B>();
                arow[j] = zero::<B>();
            }
            x[k] = zero::<B>();
        }

        Ok(SparseLu {
            symbolic,
            lvals,
            uvals,
            dinv,
        })
    }

    pub fn dim(&self) -> usize {
        self.symbolic.n
    }

    /// Solves `A x = b` for a right-hand side laid out node by node.
    pub fn solve(&self, b: &[[f64; B]]) -> Result<Vec<[f64; B]>> {
        let s = &*self.symbolic;
        if b.len() != s.n {
            return Err(Error::DimensionMismatch {
                expected: s.n,
                got: b.len(),
            });
        }
        let mut z: Vec<[f64; B]> = s.perm.iter().map(|&o| b[o]).collect();
        // forward: unit lower
        for k in 0..s.n {
            let mut acc = z[k];
            for pos in s.reach_ptr[k]..s.reach_ptr[k + 1] {
                let t = mul_vec(&self.lvals[pos], &z[s.reach_idx[pos]]);
                for r in 0..B {
                    acc[r] -= t[r];
                }
            }
            z[k] = acc;
        }
        // backward: column-oriented upper
        for k in (0..s.n).rev() {
            let xk = mul_vec(&self.dinv[k], &z[k]);
            z[k] = xk;
            for pos in s.reach_ptr[k]..s.reach_ptr[k + 1] {
                let j = s.reach_idx[pos];
                let t = mul_vec(&self.uvals[pos], &xk);
                for r in 0..B {
                    z[j][r] -= t[r];
                }
            }
        }
        let mut out = vec![[0.0; B]; s.n];
        for (k, &o) in s.perm.iter().enumerate() {
            out[o] = z[k];
        }
        Ok(out)
    }
}

impl SparseLu<1> {
    pub fn solve_scalar(&self, b: &[f64]) -> Result<Vec<f64>> {
        let bb: Vec<[f64; 1]> = b.iter().map(|&v| [v]).collect();
        Ok(self.solve(&bb)?.into_iter().map(|v| v[0]).collect())
    }
}

/// Wraps scalar values as 1x1 blocks.
pub fn scalar_blocks(values: &[f64]) -> Vec<Block<1>> {
    values.iter().map(|&v| [[v]]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let mut m: Vec<Vec<f64>> = a.iter().zip(b).map(|(r, &bi)| {
            let mut r = r.clone();
            r.push(bi);
            r
        }).collect();
        for c in 0..n {
            let p = (c..n).max_by(|&x, &y| m[x][c].abs().total_cmp(&m[y][c].abs())).unwrap();
            m.swap(c, p);
            for r in 0..n {
                if r != c {
                    let f = m[r][c] / m[c][c];
                    for j in c..=n {
                        m[r][j] -= f * m[c][j];
                    }
                }
            }
        }
        (0..n).map(|i| m[i][n] / m[i][i]).collect()
    }

    /// 2D 5-point-like pattern on a g x g grid with unsymmetric values.
    fn grid_system(g: usize) -> (Arc<SparsityPattern>, Vec<f64>) {
        let id = |i: usize, j: usize| j * g + i;
        let mut rows = vec![Vec::new(); g * g];
        for j in 0..g {
            for i in 0..g {
                let r = &mut rows[id(i, j)];
                r.push(id(i, j));
                if i > 0 { r.push(id(i - 1, j)); }
                if i + 1 < g { r.push(id(i + 1, j)); }
                if j > 0 { r.push(id(i, j - 1)); }
                if j + 1 < g { r.push(id(i, j + 1)); }
            }
        }
        let pattern = Arc::new(SparsityPattern::from_rows(rows).unwrap());
        let mut vals = vec![0.0; pattern.nnz()];
        for i in 0..pattern.dim() {
            for p in pattern.row_range(i) {
                let j = pattern.col(p);
                vals[p] = if i == j { 4.5 } else { -1.0 + 0.1 * ((i * 7 + j * 3) % 5) as f64 };
            }
        }
        (pattern, vals)
    }

    #[test]
    fn scalar_matches_dense_for_several_orders() {
        let g = 7;
        let (pattern, vals) = grid_system(g);
        let n = pattern.dim();
        let mut dense = vec![vec![0.0; n]; n];
        for i in 0..n {
            for p in pattern.row_range(i) {
                dense[i][pattern.col(p)] = vals[p];
            }
        }
        let b: Vec<f64> = (0..n).map(|i| ((i * 13) % 11) as f64 - 5.0).collect();
        let expect = dense_solve(&dense, &b);
        let identity: Vec<usize> = (0..n).collect();
        let reversed: Vec<usize> = (0..n).rev().collect();
        let mut scrambled: Vec<usize> = (0..n).collect();
        scrambled.sort_by_key(|&i| (i * 17) % n);
        for order in [identity, reversed, scrambled] {
            let sym = Arc::new(SymbolicLu::analyse(pattern.clone(), &order).unwrap());
            let lu = SparseLu::<1>::factor(sym, &scalar_blocks(&vals)).unwrap();
            let x = lu.solve_scalar(&b).unwrap();
            for (a, e) in x.iter().zip(&expect) {
                assert!((a - e).abs() < 1e-12, "{a} vs {e}");
            }
        }
    }

    #[test]
    fn block_system_matches_dense() {
        let g = 5;
        let (pattern, vals) = grid_system(g);
        let n = pattern.dim();
        let mut blocks = Vec::with_capacity(vals.len());
        let mut dense = vec![vec![0.0; 2 * n]; 2 * n];
        for i in 0..n {
            for p in pattern.row_range(i) {
                let j = pattern.col(p);
                let v = vals[p];
                // zero (1,1) entry on the diagonal forces in-block pivoting
                let blk = if i == j { [[v, 1.0], [2.0, 0.0]] } else { [[v, 0.1 * v], [-0.3 * v, 0.05 * v]] };
                for a in 0..2 {
                    for c in 0..2 {
                        dense[2 * i + a][2 * j + c] = blk[a][c];
                    }
                }
                blocks.push(blk);
            }
        }
        let b: Vec<f64> = (0..2 * n).map(|i| (i % 5) as f64 - 2.0).collect();
        let expect = dense_solve(&dense, &b);
        let order: Vec<usize> = (0..n).rev().collect();
        let sym = Arc::new(SymbolicLu::analyse(pattern, &order).unwrap());
        let lu = SparseLu::<2>::factor(sym, &blocks).unwrap();
        let bb: Vec<[f64; 2]> = (0..n).map(|i| [b[2 * i], b[2 * i + 1]]).collect();
        let x = lu.solve(&bb).unwrap();
        for i in 0..n {
            for a in 0..2 {
                assert!((x[i][a] - expect[2 * i + a]).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn singular_pivot_is_reported() {
        let pattern = Arc::new(SparsityPattern::from_rows(vec![vec![0, 1], vec![0, 1]]).unwrap());
        let sym = Arc::new(SymbolicLu::analyse(pattern, &[0, 1]).unwrap());
        let vals = scalar_blocks(&[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(SparseLu::<1>::factor(sym, &vals), Err(Error::LinearSolveFailure(_))));
    }

    #[test]
    fn rejects_bad_order() {
        let (pattern, _) = grid_system(3);
        assert!(SymbolicLu::analyse(pattern.clone(), &[0; 9]).is_err());
        assert!(SymbolicLu::analyse(pattern, &[0, 1]).is_err());
    }
}
