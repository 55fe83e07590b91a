//! Column-major dense matrices and a small CSR type for graph Laplacians.

use std::ops::{Index, IndexMut};

use crate::error::{shape_err, Result};
use crate::par;

/// Dense real matrix stored column by column.
///
/// Observations (data, centroids) and edges (U, Z, D) are columns, so each
/// `col(j)` is a contiguous `rows`-vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// Input data `A`: `d` features by `n` observations.
pub type DataMatrix = Mat;

/// `d x |E|` matrix whose column `e` belongs to edge `e` of a graph.
pub type EdgeMatrix = Mat;

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_col_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(shape_err(
                "Mat::from_col_major",
                format!("{} values", rows * cols),
                format!("{} values", data.len()),
            ));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equally long columns.
    pub fn from_columns<C: AsRef<[f64]>>(columns: &[C]) -> Result<Self> {
        let rows = columns.first().map_or(0, |c| c.as_ref().len());
        let mut data = Vec::with_capacity(rows * columns.len());
        for (j, c) in columns.iter().enumerate() {
            let c = c.as_ref();
            if c.len() != rows {
                return Err(shape_err("Mat::from_columns", format!("column {j} of length {rows}"), c.len()));
            }
            data.extend_from_slice(c);
        }
        Ok(Self { rows, cols: columns.len(), data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for j in 0..cols {
            for i in 0..rows {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    #[inline]
    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.cols).map(move |j| self.col(j))
    }

    /// Calls `f(j, column)` for every column, possibly in parallel.
    pub fn par_columns_mut<F>(&mut self, work_per_col: usize, f: F)
    where
        F: Fn(usize, &mut [f64]) + Sync + Send,
    {
        let work = work_per_col.saturating_mul(self.cols);
        par::for_each_chunk_mut(&mut self.data, self.rows, work, f);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn same_shape(&self, other: &Mat) -> bool {
        self.shape() == other.shape()
    }

    pub(crate) fn check_shape(&self, other: &Mat, context: &'static str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(shape_err(context, format!("{}x{}", self.rows, self.cols), format!("{}x{}", other.rows, other.cols)))
        }
    }

    /// Squared Frobenius norm.
    pub fn norm_sq(&self) -> f64 {
        dot(&self.data, &self.data)
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Trace inner product `<self, other>`.
    pub fn dot(&self, other: &Mat) -> f64 {
        debug_assert!(self.same_shape(other));
        dot(&self.data, &other.data)
    }

    /// `self += alpha * x`
    pub fn axpy(&mut self, alpha: f64, x: &Mat) {
        debug_assert!(self.same_shape(x));
        for (s, v) in self.data.iter_mut().zip(&x.data) {
            *s += alpha * v;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        self.data.iter_mut().for_each(|v| *v *= alpha);
    }

    pub fn scaled(&self, alpha: f64) -> Mat {
        let mut out = self.clone();
        out.scale(alpha);
        out
    }

    /// `self - other`
    pub fn sub(&self, other: &Mat) -> Mat {
        debug_assert!(self.same_shape(other));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Mat { rows: self.rows, cols: self.cols, data }
    }

    /// `self + other`
    pub fn add(&self, other: &Mat) -> Mat {
        debug_assert!(self.same_shape(other));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Mat { rows: self.rows, cols: self.cols, data }
    }

    /// Frobenius distance `||self - other||`.
    pub fn dist(&self, other: &Mat) -> f64 {
        debug_assert!(self.same_shape(other));
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    }

    /// Selects columns by index (used for permutation tests and subsetting).
    pub fn select_columns(&self, idx: &[usize]) -> Mat {
        let mut data = Vec::with_capacity(self.rows * idx.len());
        for &j in idx {
            data.extend_from_slice(self.col(j));
        }
        Mat { rows: self.rows, cols: idx.len(), data }
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[j * self.rows + i]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[j * self.rows + i]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Symmetric sparse matrix in compressed-row form. Row `i` lists its
/// nonzero columns in increasing order, diagonal included.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub(crate) fn from_parts(n: usize, indptr: Vec<usize>, indices: Vec<usize>, values: Vec<f64>) -> Self {
        debug_assert_eq!(indptr.len(), n + 1);
        debug_assert_eq!(indices.len(), values.len());
        Self { n, indptr, indices, values }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.indptr[i]..self.indptr[i + 1];
        self.indices[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.indptr[i]..self.indptr[i + 1];
        match self.indices[r.clone()].binary_search(&j) {
            Ok(k) => self.values[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.n]; self.n];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        out
    }

    /// `X * self` for a `d x n` matrix `X`.
    pub fn right_multiply(&self, x: &Mat) -> Result<Mat> {
        let mut out = Mat::zeros(x.rows(), x.cols());
        self.right_multiply_into(x, &mut out)?;
        Ok(out)
    }

    /// Writes `X * self` into `out`. Output column `j` gathers row `j`,
    /// which equals column `j` by symmetry.
    pub fn right_multiply_into(&self, x: &Mat, out: &mut Mat) -> Result<()> {
        if x.cols() != self.n {
            return Err(shape_err("CsrMatrix::right_multiply", self.n, x.cols()));
        }
        x.check_shape(out, "CsrMatrix::right_multiply output")?;
        let d = x.rows();
        let avg_row = self.nnz() / self.n.max(1) + 1;
        out.par_columns_mut(d * avg_row, |j, col| {
            col.fill(0.0);
            for (i, v) in self.row(j) {
                for (o, xi) in col.iter_mut().zip(x.col(i)) {
                    *o += v * xi;
                }
            }
        });
        Ok(())
    }
}
