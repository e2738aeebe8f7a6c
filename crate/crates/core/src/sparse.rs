//! Compressed sparse row matrices with just the products the models need.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    n_rows: usize,
    n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl Csr {
    /// Build from `(row, col, value)` triplets; duplicate coordinates are summed
    /// and exact zeros are kept so that explicit structure survives.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        mut triplets: Vec<(usize, usize, f64)>,
    ) -> Result<Self> {
        for &(r, c, _) in &triplets {
            if r >= n_rows || c >= n_cols {
                return Err(Error::shape(
                    "csr",
                    format!("entry ({r}, {c}) outside {n_rows}x{n_cols}"),
                ));
            }
        }
        triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut indptr = vec![0usize; n_rows + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *values.last_mut().expect("previous entry") += v;
                continue;
            }
            indices.push(c);
            values.push(v);
            indptr[r + 1] += 1;
            last = Some((r, c));
        }
        for r in 0..n_rows {
            indptr[r + 1] += indptr[r];
        }
        Ok(Self {
            n_rows,
            n_cols,
            indptr,
            indices,
            values,
        })
    }

    pub fn from_dense(dense: ArrayView2<'_, f64>) -> Self {
        let (n_rows, n_cols) = dense.dim();
        let mut indptr = Vec::with_capacity(n_rows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for row in dense.rows() {
            for (c, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    indices.push(c);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Self {
            n_rows,
            n_cols,
            indptr,
            indices,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n_rows: n,
            n_cols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_rows, self.n_cols)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `(column, value)` pairs of row `r`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    /// Iterate all stored `(row, col, value)` entries in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.indptr[r]..self.indptr[r + 1];
        match self.indices[span.clone()].binary_search(&c) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n_rows).map(|r| self.row(r).map(|(_, v)| v).sum()).collect()
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.n_rows, self.n_cols));
        for (r, c, v) in self.iter() {
            out[[r, c]] += v;
        }
        out
    }

    pub fn transpose(&self) -> Csr {
        let triplets = self.iter().map(|(r, c, v)| (c, r, v)).collect();
        Csr::from_triplets(self.n_cols, self.n_rows, triplets).expect("transpose stays in bounds")
    }

    /// Same sparsity pattern, values mapped through `f(row, col, value)`.
    pub fn map_values(&self, mut f: impl FnMut(usize, usize, f64) -> f64) -> Csr {
        let mut values = Vec::with_capacity(self.values.len());
        for r in 0..self.n_rows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                values.push(f(r, self.indices[k], self.values[k]));
            }
        }
        Csr {
            values,
            ..self.clone()
        }
    }

    /// `self · rhs`.
    pub fn mul_dense(&self, rhs: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let (k, m) = rhs.dim();
        if k != self.n_cols {
            return Err(Error::shape(
                "sparse matmul",
                format!("{}x{} · {}x{}", self.n_rows, self.n_cols, k, m),
            ));
        }
        let rhs = rhs.as_standard_layout();
        let src = rhs.as_slice().expect("standard layout");
        let mut out = vec![0.0; self.n_rows * m];
        for r in 0..self.n_rows {
            let dst = &mut out[r * m..(r + 1) * m];
            for (c, v) in self.row(r) {
                let row = &src[c * m..(c + 1) * m];
                for (d, s) in dst.iter_mut().zip(row) {
                    *d += v * s;
                }
            }
        }
        Ok(Array2::from_shape_vec((self.n_rows, m), out).expect("shape"))
    }

    /// `selfᵀ · rhs` without materializing the transpose.
    pub fn t_mul_dense(&self, rhs: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let (k, m) = rhs.dim();
        if k != self.n_rows {
            return Err(Error::shape(
                "sparse transpose matmul",
                format!("({}x{})ᵀ · {}x{}", self.n_rows, self.n_cols, k, m),
            ));
        }
        let rhs = rhs.as_standard_layout();
        let src = rhs.as_slice().expect("standard layout");
        let mut out = vec![0.0; self.n_cols * m];
        for r in 0..self.n_rows {
            let row = &src[r * m..(r + 1) * m];
            for (c, v) in self.row(r) {
                let dst = &mut out[c * m..(c + 1) * m];
                for (d, s) in dst.iter_mut().zip(row) {
                    *d += v * s;
                }
            }
        }
        Ok(Array2::from_shape_vec((self.n_cols, m), out).expect("shape"))
    }
}
