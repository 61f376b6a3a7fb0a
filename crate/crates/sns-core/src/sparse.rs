//! Thin sparse-matrix utilities on top of faer's CSC storage.
//!
//! Assembly happens in triplet (COO) form; duplicate coordinates are summed
//! on conversion, which is exactly what finite-element accumulation needs.

use faer::prelude::Reborrow;
use faer::sparse::{SparseColMat, Triplet};

use crate::error::{Error, Result};

/// Compressed sparse column matrix with `f64` entries.
pub type Csc = SparseColMat<usize, f64>;

/// Triplet accumulator used by all assembly routines.
#[derive(Clone, Debug)]
pub struct Coo {
    nrows: usize,
    ncols: usize,
    entries: Vec<Triplet<usize, usize, f64>>,
}

impl Coo {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Coo {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    #[inline]
    pub fn push(&mut self, row: usize, col: usize, val: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        self.entries.push(Triplet { row, col, val });
    }

    /// Appends every entry of `other`, scaled and shifted into the block whose
    /// top-left corner is `(row_off, col_off)`.
    pub fn push_block(&mut self, other: &Csc, row_off: usize, col_off: usize, scale: f64) {
        for t in other.triplet_iter() {
            self.push(row_off + t.row, col_off + t.col, scale * t.val);
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries_mut(&mut self) -> &mut [Triplet<usize, usize, f64>] {
        &mut self.entries
    }

    pub fn entries(&self) -> &[Triplet<usize, usize, f64>] {
        &self.entries
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    /// Converts to CSC, summing duplicate coordinates.
    pub fn to_csc(&self) -> Result<Csc> {
        SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &self.entries)
            .map_err(|e| Error::invalid(format!("sparse assembly failed: {e:?}")))
    }
}

/// `y += scale * A * x`.
pub fn matvec_add(a: &Csc, x: &[f64], scale: f64, y: &mut [f64]) {
    assert_eq!(x.len(), a.ncols(), "matvec dimension mismatch");
    assert_eq!(y.len(), a.nrows(), "matvec dimension mismatch");
    let a = a.rb();
    for j in 0..a.ncols() {
        let xj = scale * x[j];
        if xj == 0.0 {
            continue;
        }
        let rows = a.row_idx_of_col_raw(j);
        let vals = a.val_of_col(j);
        for (&i, &v) in rows.iter().zip(vals) {
            y[i] += v * xj;
        }
    }
}

/// `y = A * x`.
pub fn matvec(a: &Csc, x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; a.nrows()];
    matvec_add(a, x, 1.0, &mut y);
    y
}

/// `y += scale * A^T * x`.
pub fn t_matvec_add(a: &Csc, x: &[f64], scale: f64, y: &mut [f64]) {
    assert_eq!(x.len(), a.nrows(), "matvec dimension mismatch");
    assert_eq!(y.len(), a.ncols(), "matvec dimension mismatch");
    let a = a.rb();
    for j in 0..a.ncols() {
        let rows = a.row_idx_of_col_raw(j);
        let vals = a.val_of_col(j);
        let mut acc = 0.0;
        for (&i, &v) in rows.iter().zip(vals) {
            acc += v * x[i];
        }
        y[j] += scale * acc;
    }
}

/// `A^T * x`.
pub fn t_matvec(a: &Csc, x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; a.ncols()];
    t_matvec_add(a, x, 1.0, &mut y);
    y
}

/// Quadratic form `x^T A y`.
pub fn quad_form(a: &Csc, x: &[f64], y: &[f64]) -> f64 {
    let ay = matvec(a, y);
    x.iter().zip(&ay).map(|(xi, ai)| xi * ai).sum()
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_triplets_are_summed() {
        let mut coo = Coo::new(2, 2);
        coo.push(0, 0, 1.0);
        coo.push(0, 0, 2.5);
        coo.push(1, 0, -1.0);
        let m = coo.to_csc().unwrap();
        let y = matvec(&m, &[1.0, 0.0]);
        assert_eq!(y, vec![3.5, -1.0]);
    }

    #[test]
    fn transpose_matvec_matches_dense() {
        let mut coo = Coo::new(2, 3);
        coo.push(0, 0, 1.0);
        coo.push(0, 2, 2.0);
        coo.push(1, 1, -3.0);
        let m = coo.to_csc().unwrap();
        let y = t_matvec(&m, &[2.0, 5.0]);
        assert_eq!(y, vec![2.0, -15.0, 4.0]);
    }
}
