//! Sparse Cholesky solves of the Newton system for low-dimensional data.
//!
//! The Newton operator `V = I + sigma sum_e (b_e b_e^T) (x) M_e` has the
//! sparsity of the graph with `d x d` blocks. Its lower triangle is stored
//! column-major over the vectorization `(node v, coordinate r) -> v d + r`:
//! column `(v, r)` holds rows `(v, r..d)` of the diagonal block followed by
//! one full block per neighbor `u > v` in increasing order. The symbolic
//! factorization depends only on the graph and `d` and is computed once.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, SymbolicLlt};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{MatMut, Side};

use crate::error::{Error, Result};
use crate::graph::WeightedGraph;
use crate::linalg::Mat;

/// Fixed sparsity pattern of `V` plus its symbolic factorization.
#[derive(Debug, Clone)]
pub struct NewtonPattern {
    dim: usize,
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    /// Per edge `(i, j)`, `i < j`: offset of row `(j, 0)` inside column
    /// `(i, 0)`; columns `(i, r)` use the same offset shifted by `-r`.
    edge_offset: Vec<usize>,
    symbolic: SymbolicLlt<usize>,
}

impl NewtonPattern {
    pub fn new(graph: &WeightedGraph, dim: usize) -> Result<Self> {
        let n = graph.n();
        let mut upper: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for (e, &(i, j)) in graph.edges().iter().enumerate() {
            upper[i].push((j, e));
        }
        let mut edge_offset = vec![0usize; graph.num_edges()];
        let mut col_ptr = Vec::with_capacity(n * dim + 1);
        let mut row_idx = Vec::new();
        col_ptr.push(0);
        for (v, nbrs) in upper.iter_mut().enumerate() {
            nbrs.sort_unstable();
            for r in 0..dim {
                for rr in r..dim {
                    row_idx.push(v * dim + rr);
                }
                for (k, &(u, e)) in nbrs.iter().enumerate() {
                    if r == 0 {
                        edge_offset[e] = dim + k * dim;
                    }
                    for rr in 0..dim {
                        row_idx.push(u * dim + rr);
                    }
                }
                col_ptr.push(row_idx.len());
            }
        }
        let size = n * dim;
        let sym = SymbolicSparseColMatRef::new_checked(size, size, &col_ptr, None, &row_idx);
        let symbolic = SymbolicLlt::try_new(sym, Side::Lower)
            .map_err(|e| Error::NumericalFailure(format!("symbolic Cholesky failed: {e:?}")))?;
        Ok(Self { dim, n, col_ptr, row_idx, edge_offset, symbolic })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    /// Stored entries of the lower triangle.
    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    /// Assembles `V` from per-edge `d x d` blocks `M_e` (column-major,
    /// `d * d` values each) and factorizes it.
    pub fn factorize(&self, graph: &WeightedGraph, sigma: f64, blocks: &[f64]) -> Result<NewtonFactor> {
        let d = self.dim;
        if blocks.len() != graph.num_edges() * d * d {
            return Err(crate::error::shape_err(
                "NewtonPattern::factorize",
                format!("{} block entries", graph.num_edges() * d * d),
                blocks.len(),
            ));
        }
        let mut values = vec![0.0; self.row_idx.len()];
        // Identity.
        for v in 0..self.n {
            for r in 0..d {
                values[self.col_ptr[v * d + r]] += 1.0;
            }
        }
        for (e, &(i, j)) in graph.edges().iter().enumerate() {
            let m = &blocks[e * d * d..(e + 1) * d * d];
            for c in 0..d {
                for r in c..d {
                    let s = sigma * m[c * d + r];
                    // Diagonal blocks of i and j, entry (r, c), r >= c.
                    values[self.col_ptr[i * d + c] + (r - c)] += s;
                    values[self.col_ptr[j * d + c] + (r - c)] += s;
                }
            }
            // Block (j, i), full: column (i, c) row (j, r).
            for c in 0..d {
                let base = self.col_ptr[i * d + c] + self.edge_offset[e] - c;
                for r in 0..d {
                    values[base + r] -= sigma * m[c * d + r];
                }
            }
        }
        let size = self.n * d;
        let sym = SymbolicSparseColMatRef::new_checked(size, size, &self.col_ptr, None, &self.row_idx);
        let mat = SparseColMatRef::new(sym, &values);
        let llt = Llt::try_new_with_symbolic(self.symbolic.clone(), mat, Side::Lower)
            .map_err(|e| Error::NumericalFailure(format!("Cholesky of the Newton system failed: {e:?}")))?;
        Ok(NewtonFactor { llt })
    }
}

/// Numeric factorization of one Newton system.
pub struct NewtonFactor {
    llt: Llt<usize, f64>,
}

impl NewtonFactor {
    /// Solves `V(x) = rhs`; `rhs` is a `d x n` matrix in the usual layout.
    pub fn solve(&self, rhs: &Mat) -> Mat {
        let mut x = rhs.clone();
        let len = x.as_slice().len();
        let view = MatMut::from_column_major_slice_mut(x.as_mut_slice(), len, 1);
        self.llt.solve_in_place(view);
        x
    }
}
