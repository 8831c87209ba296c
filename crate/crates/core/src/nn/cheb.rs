//! Chebyshev spectral graph convolution.
//!
//! `y = Σ_k T_k(L̂) x W_k` with `L̂ = 2 L_sym / λ_max - I`, `λ_max = 2`, so
//! `L̂ = L_sym - I`. Edges are symmetrised before normalisation. Nodes with
//! no incident edge have an all-zero `L_sym` row, hence `L̂ = -I` there.

use std::collections::BTreeMap;

use ndarray::{linalg::general_mat_mul, Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::graph::BatchedGraph;

/// Largest eigenvalue assumed for the normalised Laplacian.
pub const LAMBDA_MAX: f64 = 2.0;

/// Sparse scaled Laplacian `L̂` in CSR form.
#[derive(Debug, Clone, PartialEq)]
pub struct ChebOperator {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl ChebOperator {
    pub fn new(n: usize, src: &[usize], dst: &[usize], weights: &[f64]) -> Result<Self> {
        if src.len() != dst.len() || src.len() != weights.len() {
            return Err(Error::shape(
                "edge index and attribute lengths differ".to_string(),
            ));
        }
        let mut declared: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for ((&u, &v), &w) in src.iter().zip(dst).zip(weights) {
            if u >= n || v >= n {
                return Err(Error::shape(format!("edge ({u}, {v}) outside {n} nodes")));
            }
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::InvalidGraph(format!(
                    "edge weight {w} must be finite and >= 0"
                )));
            }
            *declared.entry((u, v)).or_default() += w;
        }
        let mut adj: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (&(u, v), &w) in &declared {
            for key in [(u, v), (v, u)] {
                let e = adj.entry(key).or_default();
                *e = e.max(w);
            }
        }
        adj.retain(|_, w| *w > 0.0);
        let mut deg = vec![0.0; n];
        for (&(u, _), &w) in &adj {
            deg[u] += w;
        }
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (&(u, v), &w) in &adj {
            rows[u].push((v, -w / (deg[u] * deg[v]).sqrt()));
        }
        for (i, row) in rows.iter_mut().enumerate() {
            if deg[i] == 0.0 {
                row.push((i, -1.0));
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for row in rows {
            for (c, v) in row {
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        Ok(Self {
            n,
            row_ptr,
            cols,
            vals,
        })
    }

    pub fn from_batched(g: &BatchedGraph) -> Result<Self> {
        Self::new(
            g.num_nodes,
            &g.edge_index[0],
            &g.edge_index[1],
            &g.edge_attr,
        )
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    /// `L̂ x`.
    pub fn apply(&self, x: &ArrayView2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros(x.raw_dim());
        self.apply_scaled_into(x, 1.0, &mut out);
        out
    }

    /// `out += alpha * L̂ x`.
    pub fn apply_scaled_into(&self, x: &ArrayView2<f64>, alpha: f64, out: &mut Array2<f64>) {
        for i in 0..self.n {
            let mut orow = out.row_mut(i);
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                let w = alpha * self.vals[p];
                orow.scaled_add(w, &x.row(self.cols[p]));
            }
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut m = Array2::zeros((self.n, self.n));
        for i in 0..self.n {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                m[[i, self.cols[p]]] += self.vals[p];
            }
        }
        m
    }
}

/// Chebyshev basis `[T_0(L̂) x, ..., T_{kc-1}(L̂) x]`.
pub fn cheb_basis(x: ArrayView2<f64>, op: &ChebOperator, kc: usize) -> Vec<Array2<f64>> {
    let mut basis: Vec<Array2<f64>> = Vec::with_capacity(kc);
    basis.push(x.to_owned());
    if kc > 1 {
        basis.push(op.apply(&x));
    }
    for k in 2..kc {
        let mut next = basis[k - 2].mapv(|v| -v);
        op.apply_scaled_into(&basis[k - 1].view(), 2.0, &mut next);
        basis.push(next);
    }
    basis
}

/// Gradient of the input given gradients of every basis term.
///
/// `L̂` is symmetric, so the recursion is run backwards with the same operator.
pub fn cheb_basis_backward(op: &ChebOperator, mut d_basis: Vec<Array2<f64>>) -> Array2<f64> {
    let kc = d_basis.len();
    for k in (2..kc).rev() {
        let dk = std::mem::take(&mut d_basis[k]);
        op.apply_scaled_into(&dk.view(), 2.0, &mut d_basis[k - 1]);
        d_basis[k - 2] -= &dk;
    }
    if kc > 1 {
        let d1 = std::mem::take(&mut d_basis[1]);
        op.apply_scaled_into(&d1.view(), 1.0, &mut d_basis[0]);
    }
    d_basis.swap_remove(0)
}

/// `Σ_k T_k(L̂) x W_k`; `weights[k]` is `F_in x F_out`.
pub fn cheb_conv(
    x: ArrayView2<f64>,
    op: &ChebOperator,
    weights: &[ArrayView2<f64>],
) -> Result<Array2<f64>> {
    let kc = weights.len();
    if kc == 0 {
        return Err(Error::InvalidArgument(
            "Chebyshev order must be at least 1".into(),
        ));
    }
    if x.nrows() != op.num_nodes() {
        return Err(Error::shape(format!(
            "{} feature rows for {} nodes",
            x.nrows(),
            op.num_nodes()
        )));
    }
    let f_out = weights[0].ncols();
    if weights
        .iter()
        .any(|w| w.nrows() != x.ncols() || w.ncols() != f_out)
    {
        return Err(Error::shape(
            "Chebyshev weight shapes disagree with input".to_string(),
        ));
    }
    let basis = cheb_basis(x, op, kc);
    let mut y = Array2::zeros((x.nrows(), f_out));
    for (t, w) in basis.iter().zip(weights) {
        general_mat_mul(1.0, t, w, 1.0, &mut y);
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
    }

    /// Dense oracle: builds `L̂` from the adjacency matrix and evaluates the
    /// matrix polynomial directly.
    fn dense_oracle(
        n: usize,
        edges: &[(usize, usize)],
        x: &Array2<f64>,
        w: &[Array2<f64>],
    ) -> Array2<f64> {
        let mut a = Array2::<f64>::zeros((n, n));
        for &(u, v) in edges {
            a[[u, v]] = 1.0;
            a[[v, u]] = 1.0;
        }
        let deg: Vec<f64> = (0..n).map(|i| a.row(i).sum()).collect();
        let mut lsym = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                let mut v = 0.0;
                if i == j && deg[i] > 0.0 {
                    v += 1.0;
                }
                if a[[i, j]] != 0.0 {
                    v -= a[[i, j]] / (deg[i] * deg[j]).sqrt();
                }
                lsym[[i, j]] = v;
            }
        }
        let lhat = &lsym * (2.0 / LAMBDA_MAX) - Array2::<f64>::eye(n);
        let mut t_prev = Array2::<f64>::eye(n);
        let mut t_cur = lhat.clone();
        let mut y = t_prev.dot(x).dot(&w[0]);
        for (k, wk) in w.iter().enumerate().skip(1) {
            if k > 1 {
                let next = lhat.dot(&t_cur) * 2.0 - &t_prev;
                t_prev = std::mem::replace(&mut t_cur, next);
            }
            y += &t_cur.dot(x).dot(wk);
        }
        y
    }

    #[test]
    fn order_one_ignores_edges() {
        let op = ChebOperator::new(3, &[0, 1], &[1, 2], &[1.0, 1.0]).unwrap();
        let x = array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]];
        let w = array![[1.0], [-1.0]];
        let y = cheb_conv(x.view(), &op, &[w.view()]).unwrap();
        assert_eq!(y, x.dot(&w));
    }

    #[test]
    fn empty_edges_negate_first_order() {
        let op = ChebOperator::new(2, &[], &[], &[]).unwrap();
        assert_eq!(op.to_dense(), -Array2::<f64>::eye(2));
        let x = array![[1.0], [2.0]];
        let w0 = array![[3.0]];
        let w1 = array![[0.5]];
        let y = cheb_conv(x.view(), &op, &[w0.view(), w1.view()]).unwrap();
        assert_eq!(y, x.dot(&w0) - x.dot(&w1));
    }

    #[test]
    fn path_graph_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let edges = [(0, 1), (1, 2)];
        let op = ChebOperator::new(3, &[0, 1], &[1, 2], &[1.0, 1.0]).unwrap();
        for kc in 1..=4 {
            let x = random(3, 2, &mut rng);
            let w: Vec<_> = (0..kc).map(|_| random(2, 3, &mut rng)).collect();
            let views: Vec<_> = w.iter().map(|m| m.view()).collect();
            let y = cheb_conv(x.view(), &op, &views).unwrap();
            let oracle = dense_oracle(3, &edges, &x, &w);
            for (a, b) in y.iter().zip(oracle.iter()) {
                assert!((a - b).abs() < 1e-10, "kc={kc}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn reverse_edges_do_not_double() {
        let one = ChebOperator::new(2, &[0], &[1], &[1.0]).unwrap();
        let both = ChebOperator::new(2, &[0, 1], &[1, 0], &[1.0, 1.0]).unwrap();
        assert_eq!(one.to_dense(), both.to_dense());
        assert_eq!(one.to_dense(), array![[0.0, -1.0], [-1.0, 0.0]]);
    }

    #[test]
    fn basis_backward_is_adjoint() {
        // <T_k x, g_k> summed equals <x, backward(g)> for symmetric L̂.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let op = ChebOperator::new(
            5,
            &[0, 1, 2, 3, 0],
            &[1, 2, 3, 4, 2],
            &[1.0, 0.5, 2.0, 1.0, 1.0],
        )
        .unwrap();
        let x = random(5, 3, &mut rng);
        let g: Vec<_> = (0..4).map(|_| random(5, 3, &mut rng)).collect();
        let basis = cheb_basis(x.view(), &op, 4);
        let lhs: f64 = basis.iter().zip(&g).map(|(b, gk)| (b * gk).sum()).sum();
        let dx = cheb_basis_backward(&op, g);
        let rhs = (&x * &dx).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let op = ChebOperator::new(2, &[], &[], &[]).unwrap();
        let x = array![[1.0], [2.0]];
        assert!(cheb_conv(x.view(), &op, &[]).is_err());
        let bad = array![[1.0], [2.0], [3.0]];
        let w = array![[1.0]];
        assert!(cheb_conv(bad.view(), &op, &[w.view()]).is_err());
        assert!(ChebOperator::new(2, &[0], &[5], &[1.0]).is_err());
    }
}
