//! Sparse direct solves backed by faer's LU with partial pivoting.

use faer::prelude::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use std::sync::Once;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinearSolveError {
    #[error("sparse factorization failed: {0}")]
    Factorization(String),
    #[error("linear solve produced non-finite values")]
    NonFinite,
}

/// Assembles a square matrix from (row, col, value) entries; duplicates are summed.
#[derive(Debug, Clone, Default)]
pub struct TripletMatrix {
    n: usize,
    entries: Vec<Triplet<usize, usize, f64>>,
}

impl TripletMatrix {
    pub fn new(n: usize) -> Self {
        TripletMatrix { n, entries: Vec::with_capacity(8 * n) }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn add(&mut self, row: usize, col: usize, val: f64) {
        if val != 0.0 {
            self.entries.push(Triplet::new(row, col, val));
        }
    }

    /// Drops row `row` and replaces it by the unit row selecting `col`.
    pub fn with_row_replaced(mut self, row: usize, col: usize) -> Self {
        self.entries.retain(|t| t.row != row);
        self.entries.push(Triplet::new(row, col, 1.0));
        self
    }

    /// Dense copy, used by tests.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut a = vec![vec![0.0; self.n]; self.n];
        for t in &self.entries {
            a[t.row][t.col] += t.val;
        }
        a
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>, LinearSolveError> {
        static SEQUENTIAL: Once = Once::new();
        // bitwise reproducible factorizations regardless of thread count
        SEQUENTIAL.call_once(|| faer::set_global_parallelism(faer::Par::Seq));

        assert_eq!(rhs.len(), self.n);
        let a = SparseColMat::<usize, f64>::try_new_from_triplets(self.n, self.n, &self.entries)
            .map_err(|e| LinearSolveError::Factorization(format!("{e:?}")))?;
        let lu = a.sp_lu().map_err(|e| LinearSolveError::Factorization(format!("{e:?}")))?;
        let b = Mat::from_fn(self.n, 1, |i, _| rhs[i]);
        let x = lu.solve(&b);
        let out: Vec<f64> = (0..self.n).map(|i| x[(i, 0)]).collect();
        if out.iter().all(|v| v.is_finite()) {
            Ok(out)
        } else {
            Err(LinearSolveError::NonFinite)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_nonsymmetric_system() {
        let mut a = TripletMatrix::new(3);
        a.add(0, 0, 4.0);
        a.add(0, 1, 1.0);
        a.add(1, 0, 2.0);
        a.add(1, 1, 5.0);
        a.add(1, 2, 1.0);
        a.add(2, 1, 3.0);
        a.add(2, 2, 6.0);
        a.add(2, 2, 1.0);
        let x_true = [1.0, -2.0, 0.5];
        let d = a.to_dense();
        let b: Vec<f64> = d.iter().map(|row| row.iter().zip(&x_true).map(|(a, x)| a * x).sum()).collect();
        let x = a.solve(&b).unwrap();
        for (xi, ti) in x.iter().zip(&x_true) {
            assert!((xi - ti).abs() < 1e-13);
        }
    }

    #[test]
    fn singular_is_an_error() {
        let mut a = TripletMatrix::new(2);
        a.add(0, 0, 1.0);
        a.add(1, 0, 1.0);
        assert!(a.solve(&[1.0, 2.0]).is_err());
    }
}
