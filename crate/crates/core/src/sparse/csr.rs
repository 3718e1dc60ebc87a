use std::sync::Arc;

use crate::error::{Error, Result};

/// Compressed-row sparsity pattern with sorted column indices per row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparsityPattern {
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
}

impl SparsityPattern {
    /// Builds a pattern from per-row column lists (sorted and deduplicated here).
    pub fn from_rows(rows: Vec<Vec<usize>>) -> Result<Self> {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_unstable();
            row.dedup();
            if let Some(&c) = row.last() {
                if c >= n {
                    return Err(Error::IndexOutOfRange { index: c, len: n });
                }
            }
            col_idx.extend(row);
            row_ptr.push(col_idx.len());
        }
        Ok(SparsityPattern { row_ptr, col_idx })
    }

    pub fn dim(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        self.row_ptr[i]..self.row_ptr[i + 1]
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.col_idx[self.row_range(i)]
    }

    pub fn col(&self, p: usize) -> usize {
        self.col_idx[p]
    }

    /// Storage position of entry `(i, j)`, if structurally present.
    pub fn find(&self, i: usize, j: usize) -> Option<usize> {
        let r = self.row_range(i);
        self.col_idx[r.clone()]
            .binary_search(&j)
            .ok()
            .map(|k| r.start + k)
    }

    pub fn is_structurally_symmetric(&self) -> bool {
        (0..self.dim()).all(|i| self.row(i).iter().all(|&j| self.find(j, i).is_some()))
    }

    /// For each position `p = (i, j)`, the position of `(j, i)`. Requires a symmetric pattern.
    pub fn transpose_positions(&self) -> Result<Vec<usize>> {
        let mut out = vec![0; self.nnz()];
        for i in 0..self.dim() {
            for p in self.row_range(i) {
                let j = self.col_idx[p];
                out[p] = self.find(j, i).ok_or_else(|| {
                    Error::invalid("pattern", format!("entry ({i},{j}) has no transpose"))
                })?;
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Symmetry {
    Symmetric,
    General,
}

/// Scalar sparse matrix over a shared pattern.
#[derive(Debug, Clone)]
pub struct SparseOperator {
    pattern: Arc<SparsityPattern>,
    values: Vec<f64>,
    symmetry: Symmetry,
}

impl SparseOperator {
    pub fn zeros(pattern: Arc<SparsityPattern>, symmetry: Symmetry) -> Self {
        let values = vec![0.0; pattern.nnz()];
        SparseOperator {
            pattern,
            values,
            symmetry,
        }
    }

    pub fn from_values(pattern: Arc<SparsityPattern>, values: Vec<f64>, symmetry: Symmetry) -> Result<Self> {
        if values.len() != pattern.nnz() {
            return Err(Error::DimensionMismatch {
                expected: pattern.nnz(),
                got: values.len(),
            });
        }
        Ok(SparseOperator {
            pattern,
            values,
            symmetry,
        })
    }

    pub fn dim(&self) -> usize {
        self.pattern.dim()
    }

    pub fn pattern(&self) -> &Arc<SparsityPattern> {
        &self.pattern
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn symmetry(&self) -> Symmetry {
        self.symmetry
    }

    /// Entry `(i, j)`; zero when not stored.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.pattern.find(i, j).map_or(0.0, |p| self.values[p])
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.dim());
        assert_eq!(y.len(), self.dim());
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for p in self.pattern.row_range(i) {
                acc += self.values[p] * x[self.pattern.col(p)];
            }
            *yi = acc;
        }
    }

    /// `y += alpha * A x`
    pub fn mul_vec_add(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.dim());
        assert_eq!(y.len(), self.dim());
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for p in self.pattern.row_range(i) {
                acc += self.values[p] * x[self.pattern.col(p)];
            }
            *yi += alpha * acc;
        }
    }

    pub fn transpose_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim());
        let mut y = vec![0.0; self.dim()];
        for (i, &xi) in x.iter().enumerate() {
            for p in self.pattern.row_range(i) {
                y[self.pattern.col(p)] += self.values[p] * xi;
            }
        }
        y
    }

    /// `x^T A y`
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let ay = self.mul_vec(y);
        x.iter().zip(&ay).map(|(a, b)| a * b).sum()
    }

    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        self.bilinear(x, x)
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|i| self.pattern.row_range(i).map(|p| self.values[p]).sum())
            .collect()
    }

    /// `A^T 1`
    pub fn col_sums(&self) -> Vec<f64> {
        self.transpose_mul_vec(&vec![1.0; self.dim()])
    }

    /// Largest `|a_ij - a_ji|` over stored entries.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.dim() {
            for p in self.pattern.row_range(i) {
                let j = self.pattern.col(p);
                worst = worst.max((self.values[p] - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `a * self + b * other`; both operators must share the same pattern.
    pub fn linear_combination(&self, a: f64, other: &SparseOperator, b: f64) -> Result<SparseOperator> {
        if self.pattern != other.pattern {
            return Err(Error::invalid("other", "operators have different sparsity patterns"));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        let symmetry = if self.symmetry == Symmetry::Symmetric && other.symmetry == Symmetry::Symmetric {
            Symmetry::Symmetric
        } else {
            Symmetry::General
        };
        Ok(SparseOperator {
            pattern: self.pattern.clone(),
            values,
            symmetry,
        })
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        let mut d = vec![vec![0.0; n]; n];
        for (i, row) in d.iter_mut().enumerate() {
            for p in self.pattern.row_range(i) {
                row[self.pattern.col(p)] = self.values[p];
            }
        }
        d
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SparseOperator {
        let pattern = Arc::new(SparsityPattern::from_rows(vec![vec![0, 1], vec![1, 0, 2], vec![2, 1]]).unwrap());
        // [[2,-1,0],[-1,2,-1],[0,-1,2]] in row order with sorted columns
        SparseOperator::from_values(pattern, vec![2.0, -1.0, -1.0, 2.0, -1.0, -1.0, 2.0], Symmetry::Symmetric).unwrap()
    }

    #[test]
    fn matvec_and_lookup() {
        let a = small();
        assert_eq!(a.get(1, 2), -1.0);
        assert_eq!(a.get(0, 2), 0.0);
        assert_eq!(a.mul_vec(&[1.0, 1.0, 1.0]), vec![1.0, 0.0, 1.0]);
        assert_eq!(a.transpose_mul_vec(&[1.0, 0.0, 0.0]), vec![2.0, -1.0, 0.0]);
        assert_eq!(a.quadratic_form(&[1.0, 2.0, 3.0]), 2.0 + 8.0 + 18.0 - 2.0 * (2.0 + 6.0));
        assert_eq!(a.max_asymmetry(), 0.0);
        assert!(a.pattern().is_structurally_symmetric());
    }

    #[test]
    fn transpose_positions_roundtrip() {
        let a = small();
        let tp = a.pattern().transpose_positions().unwrap();
        for (p, &q) in tp.iter().enumerate() {
            assert_eq!(tp[q], p);
        }
    }

    #[test]
    fn pattern_rejects_out_of_range() {
        assert!(SparsityPattern::from_rows(vec![vec![0, 3]]).is_err());
    }
}
