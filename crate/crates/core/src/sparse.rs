//! Compressed sparse row matrices.

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Real-valued CSR matrix. Column indices within a row are sorted and unique.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CsrMatrix {
            rows,
            cols,
            indptr: vec![0; rows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            rows: n,
            cols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Builds a matrix from `(row, col, value)` triplets. Duplicate positions
    /// are summed.
    pub fn from_triplets(rows: usize, cols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Result<Self> {
        if let Some(&(r, c, _)) = triplets.iter().find(|&&(r, c, _)| r >= rows || c >= cols) {
            return Err(Error::shape(
                "CsrMatrix::from_triplets",
                format!("entry ({r}, {c}) outside {rows}x{cols}"),
            ));
        }
        triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut indptr = vec![0; rows + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            indptr[r + 1] += 1;
            indices.push(c);
            values.push(v);
            last = Some((r, c));
        }
        for r in 0..rows {
            indptr[r + 1] += indptr[r];
        }
        Ok(CsrMatrix {
            rows,
            cols,
            indptr,
            indices,
            values,
        })
    }

    /// Builds a 0/1 matrix from per-row sorted, deduplicated column lists.
    pub(crate) fn pattern_from_rows(cols: usize, neighbors: &[Vec<usize>]) -> Self {
        let mut indptr = Vec::with_capacity(neighbors.len() + 1);
        indptr.push(0);
        let mut indices = Vec::new();
        for row in neighbors {
            debug_assert!(row.windows(2).all(|w| w[0] < w[1]));
            indices.extend_from_slice(row);
            indptr.push(indices.len());
        }
        let values = vec![1.0; indices.len()];
        CsrMatrix {
            rows: neighbors.len(),
            cols,
            indptr,
            indices,
            values,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_indices(&self, r: usize) -> &[usize] {
        &self.indices[self.indptr[r]..self.indptr[r + 1]]
    }

    pub fn row_values(&self, r: usize) -> &[f64] {
        &self.values[self.indptr[r]..self.indptr[r + 1]]
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.row_indices(r)
            .iter()
            .copied()
            .zip(self.row_values(r).iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        match self.row_indices(r).binary_search(&c) {
            Ok(k) => self.row_values(r)[k],
            Err(_) => 0.0,
        }
    }

    pub fn contains(&self, r: usize, c: usize) -> bool {
        self.row_indices(r).binary_search(&c).is_ok()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|r| self.row_values(r).iter().sum()).collect()
    }

    /// Structural and numerical symmetry, compared bit for bit.
    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|r| {
                self.row(r)
                    .all(|(c, v)| self.row_indices(c).binary_search(&r).map_or(false, |k| {
                        self.row_values(c)[k].to_bits() == v.to_bits()
                    }))
            })
    }

    pub fn to_dense(&self) -> Matrix {
        let mut out = Matrix::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                out.set(r, c, v);
            }
        }
        out
    }

    /// `self · dense`.
    pub fn mul_dense(&self, dense: &Matrix) -> Result<Matrix> {
        if self.cols != dense.rows() {
            return Err(Error::shape(
                "spmm",
                format!(
                    "sparse {}x{} times dense {}x{}",
                    self.rows,
                    self.cols,
                    dense.rows(),
                    dense.cols()
                ),
            ));
        }
        let width = dense.cols();
        let mut out = Matrix::zeros(self.rows, width);
        for r in 0..self.rows {
            let out_row = out.row_mut(r);
            for (c, v) in self.row(r) {
                for (o, &d) in out_row.iter_mut().zip(dense.row(c)) {
                    *o += v * d;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · dense`, accumulated in row order of `self`.
    pub fn transpose_mul_dense(&self, dense: &Matrix) -> Result<Matrix> {
        if self.rows != dense.rows() {
            return Err(Error::shape(
                "spmm_transpose",
                format!(
                    "sparse ({}x{})ᵀ times dense {}x{}",
                    self.rows,
                    self.cols,
                    dense.rows(),
                    dense.cols()
                ),
            ));
        }
        let mut out = Matrix::zeros(self.cols, dense.cols());
        for r in 0..self.rows {
            let src = dense.row(r);
            for (c, v) in self.row(r) {
                for (o, &d) in out.row_mut(c).iter_mut().zip(src) {
                    *o += v * d;
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_sum_duplicates() {
        let m = CsrMatrix::from_triplets(2, 2, vec![(1, 0, 1.0), (0, 1, 2.0), (1, 0, 0.5)]).unwrap();
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.get(1, 0), 1.5);
        assert_eq!(m.get(0, 0), 0.0);
    }

    #[test]
    fn triplet_out_of_range() {
        assert!(CsrMatrix::from_triplets(2, 2, vec![(2, 0, 1.0)]).is_err());
    }

    #[test]
    fn transpose_product_matches_dense() {
        let m = CsrMatrix::from_triplets(3, 2, vec![(0, 1, 2.0), (2, 0, -1.0), (1, 1, 3.0)]).unwrap();
        let d = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        let expected = m.to_dense().transpose().matmul(&d).unwrap();
        assert_eq!(m.transpose_mul_dense(&d).unwrap(), expected);
    }
}
