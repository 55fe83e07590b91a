//! Weighted k-nearest-neighbor graphs and the edge-difference operator.
//!
//! For a graph with edges `(i, j)`, `i < j`, the operator `B` maps a `d x n`
//! matrix to the `d x |E|` matrix of column differences `x_i - x_j`. Its
//! adjoint scatters edge columns back onto nodes, and `B*B` is right
//! multiplication by the unweighted Laplacian `L_J = diag(J e) - J`.

use std::cmp::Ordering;

use crate::error::{shape_err, Error, Result};
use crate::linalg::{CsrMatrix, DataMatrix, EdgeMatrix, Mat};
use crate::par;

/// Undirected weighted graph over `n` observations.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
    weights: Vec<f64>,
    node_degrees: Vec<usize>,
    // node -> incident (edge, +1 if node is the head i, -1 if the tail j)
    inc_ptr: Vec<usize>,
    inc: Vec<(usize, f64)>,
    // CSR pattern of the Laplacian; `lap_edge[k]` is the edge behind
    // off-diagonal entry k, or `None` on the diagonal.
    lap_ptr: Vec<usize>,
    lap_idx: Vec<usize>,
    lap_edge: Vec<Option<usize>>,
}

impl WeightedGraph {
    /// Builds a graph from `(i, j, w)` triples. Pairs are normalized to
    /// `i < j`, sorted lexicographically, and zero-weight edges are dropped.
    pub fn from_weighted_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut list = Vec::with_capacity(edges.len());
        for &(a, b, w) in edges {
            if a == b {
                return Err(Error::Parameter(format!("self-edge ({a}, {a})")));
            }
            let (i, j) = if a < b { (a, b) } else { (b, a) };
            if j >= n {
                return Err(Error::Parameter(format!("edge ({i}, {j}) out of range for n = {n}")));
            }
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::Parameter(format!("edge ({i}, {j}) has invalid weight {w}")));
            }
            if w > 0.0 {
                list.push((i, j, w));
            }
        }
        list.sort_by_key(|a| (a.0, a.1));
        if let Some(w) = list.windows(2).find(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1)) {
            return Err(Error::Parameter(format!("duplicate edge ({}, {})", w[0].0, w[0].1)));
        }
        let edges: Vec<(usize, usize)> = list.iter().map(|&(i, j, _)| (i, j)).collect();
        let weights = list.iter().map(|&(_, _, w)| w).collect();
        Ok(Self::assemble(n, edges, weights))
    }

    /// Unit-weight graph on the given pairs.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let triples: Vec<_> = edges.iter().map(|&(i, j)| (i, j, 1.0)).collect();
        Self::from_weighted_edges(n, &triples)
    }

    /// Complete graph with unit weights: the fully connected model.
    pub fn complete(n: usize) -> Self {
        let mut edges = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                edges.push((i, j));
            }
        }
        let weights = vec![1.0; edges.len()];
        Self::assemble(n, edges, weights)
    }

    fn assemble(n: usize, edges: Vec<(usize, usize)>, weights: Vec<f64>) -> Self {
        let mut node_degrees = vec![0usize; n];
        for &(i, j) in &edges {
            node_degrees[i] += 1;
            node_degrees[j] += 1;
        }

        let mut inc_ptr = Vec::with_capacity(n + 1);
        inc_ptr.push(0);
        for deg in &node_degrees {
            inc_ptr.push(inc_ptr.last().unwrap() + deg);
        }
        let mut fill = inc_ptr[..n].to_vec();
        let mut inc = vec![(0usize, 0.0f64); inc_ptr[n]];
        // Edges are sorted, so each node's incidence list is in edge order.
        for (e, &(i, j)) in edges.iter().enumerate() {
            inc[fill[i]] = (e, 1.0);
            fill[i] += 1;
            inc[fill[j]] = (e, -1.0);
            fill[j] += 1;
        }

        let mut lap_ptr = Vec::with_capacity(n + 1);
        let mut lap_idx = Vec::with_capacity(n + inc.len());
        let mut lap_edge = Vec::with_capacity(n + inc.len());
        lap_ptr.push(0);
        let mut row: Vec<(usize, Option<usize>)> = Vec::new();
        for v in 0..n {
            row.clear();
            row.push((v, None));
            for &(e, _) in &inc[inc_ptr[v]..inc_ptr[v + 1]] {
                let (i, j) = edges[e];
                let other = if i == v { j } else { i };
                row.push((other, Some(e)));
            }
            row.sort_by_key(|&(c, _)| c);
            for &(c, e) in &row {
                lap_idx.push(c);
                lap_edge.push(e);
            }
            lap_ptr.push(lap_idx.len());
        }

        Self { n, edges, weights, node_degrees, inc_ptr, inc, lap_ptr, lap_idx, lap_edge }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn node_degrees(&self) -> &[usize] {
        &self.node_degrees
    }

    /// Incident edges of `node` as `(edge, sign)`; sign is `+1` when the
    /// node is the smaller endpoint.
    pub fn incidence(&self, node: usize) -> &[(usize, f64)] {
        &self.inc[self.inc_ptr[node]..self.inc_ptr[node + 1]]
    }

    /// `B(X)`: column `e` is `x_i - x_j` for `edges[e] = (i, j)`.
    pub fn apply_b(&self, x: &Mat) -> Result<EdgeMatrix> {
        let mut out = Mat::zeros(x.rows(), self.num_edges());
        self.apply_b_into(x, &mut out)?;
        Ok(out)
    }

    pub fn apply_b_into(&self, x: &Mat, out: &mut EdgeMatrix) -> Result<()> {
        if x.cols() != self.n {
            return Err(shape_err("apply_b", format!("{} columns", self.n), x.cols()));
        }
        if out.shape() != (x.rows(), self.num_edges()) {
            return Err(shape_err(
                "apply_b output",
                format!("{}x{}", x.rows(), self.num_edges()),
                format!("{}x{}", out.rows(), out.cols()),
            ));
        }
        let d = x.rows();
        out.par_columns_mut(d, |e, col| {
            let (i, j) = self.edges[e];
            for ((o, a), b) in col.iter_mut().zip(x.col(i)).zip(x.col(j)) {
                *o = a - b;
            }
        });
        Ok(())
    }

    /// `B*(Z)`: node `i` collects `+Z_e` for edges where it is the smaller
    /// endpoint and `-Z_e` where it is the larger one.
    pub fn apply_b_adjoint(&self, z: &EdgeMatrix) -> Result<Mat> {
        let mut out = Mat::zeros(z.rows(), self.n);
        self.apply_b_adjoint_into(z, &mut out)?;
        Ok(out)
    }

    pub fn apply_b_adjoint_into(&self, z: &EdgeMatrix, out: &mut Mat) -> Result<()> {
        if z.cols() != self.num_edges() {
            return Err(shape_err("apply_b_adjoint", format!("{} columns", self.num_edges()), z.cols()));
        }
        if out.shape() != (z.rows(), self.n) {
            return Err(shape_err(
                "apply_b_adjoint output",
                format!("{}x{}", z.rows(), self.n),
                format!("{}x{}", out.rows(), out.cols()),
            ));
        }
        let avg = 2 * z.rows() * (self.num_edges() / self.n.max(1) + 1);
        out.par_columns_mut(avg, |v, col| {
            col.fill(0.0);
            for &(e, s) in self.incidence(v) {
                for (o, zv) in col.iter_mut().zip(z.col(e)) {
                    *o += s * zv;
                }
            }
        });
        Ok(())
    }

    /// Unweighted Laplacian `L_J = diag(J e) - J` of the edge set.
    pub fn laplacian(&self) -> CsrMatrix {
        self.laplacian_with(|_| 1.0)
    }

    /// Laplacian `L_M` of the symmetric matrix with `M_ij = edge_scalars[e]`
    /// on edge `e = (i, j)` and zero elsewhere.
    pub fn scaled_laplacian(&self, edge_scalars: &[f64]) -> Result<CsrMatrix> {
        if edge_scalars.len() != self.num_edges() {
            return Err(shape_err(
                "scaled_laplacian",
                format!("{} edge scalars", self.num_edges()),
                edge_scalars.len(),
            ));
        }
        Ok(self.laplacian_with(|e| edge_scalars[e]))
    }

    pub(crate) fn laplacian_with(&self, scalar: impl Fn(usize) -> f64) -> CsrMatrix {
        let mut values = vec![0.0; self.lap_idx.len()];
        for v in 0..self.n {
            let r = self.lap_ptr[v]..self.lap_ptr[v + 1];
            let mut diag_pos = r.start;
            let mut diag = 0.0;
            for k in r {
                match self.lap_edge[k] {
                    Some(e) => {
                        let s = scalar(e);
                        values[k] = -s;
                        diag += s;
                    }
                    None => diag_pos = k,
                }
            }
            values[diag_pos] = diag;
        }
        CsrMatrix::from_parts(self.n, self.lap_ptr.clone(), self.lap_idx.clone(), values)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Symmetrized k-nearest-neighbor graph with Gaussian weights
/// `w_ij = exp(-phi * ||a_i - a_j||^2)`.
///
/// Edge `(i, j)` is kept when either endpoint is among the other's `k`
/// nearest neighbors. Distance ties go to the smaller node index. Exact
/// brute force, `O(n^2 d)`.
pub fn build_knn_graph(a: &DataMatrix, k: usize, phi: f64) -> Result<WeightedGraph> {
    let n = a.cols();
    if n < 2 || k == 0 || k > n - 1 {
        return Err(Error::Parameter(format!("k = {k} must lie in [1, n - 1] with n = {n}")));
    }
    if !(phi.is_finite() && phi >= 0.0) {
        return Err(Error::Parameter(format!("phi = {phi} must be finite and >= 0")));
    }
    if !a.is_finite() {
        return Err(Error::Parameter("data matrix has non-finite entries".into()));
    }

    let d = a.rows();
    let cmp = |x: &(f64, usize), y: &(f64, usize)| match x.0.total_cmp(&y.0) {
        Ordering::Equal => x.1.cmp(&y.1),
        o => o,
    };
    let neighbors: Vec<Vec<usize>> = par::map_range(n, n * n * d, |i| {
        let ai = a.col(i);
        let mut cand: Vec<(f64, usize)> = (0..n).filter(|&j| j != i).map(|j| (sq_dist(ai, a.col(j)), j)).collect();
        if k < cand.len() {
            cand.select_nth_unstable_by(k - 1, cmp);
            cand.truncate(k);
        }
        // Fresh allocation: collecting from `into_iter` would keep the
        // length-n candidate buffer alive for every node.
        cand.iter().map(|&(_, j)| j).collect::<Vec<usize>>()
    });

    let mut pairs: Vec<(usize, usize)> =
        neighbors.iter().enumerate().flat_map(|(i, nb)| nb.iter().map(move |&j| (i.min(j), i.max(j)))).collect();
    pairs.sort_unstable();
    pairs.dedup();

    let triples: Vec<(usize, usize, f64)> =
        pairs.into_iter().map(|(i, j)| (i, j, (-phi * sq_dist(a.col(i), a.col(j))).exp())).collect();
    WeightedGraph::from_weighted_edges(n, &triples)
}
