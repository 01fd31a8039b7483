//! k-nearest-neighbour visual graph over intermediate codes, its Laplacian,
//! and the combined matrix `A = L + (beta/alpha)(I - Y' Q Y)` used by the
//! discrete solver.

use std::io::Write;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{col, sq_dist};

/// `A` is materialized densely up to this many training images; above it the
/// solver applies `A` through sparse and low-rank products.
pub const DENSE_A_LIMIT: usize = 4_096;

#[derive(Debug, Clone, PartialEq)]
pub struct VisualGraph {
    pub k: usize,
    pub bandwidth: f64,
    /// Row `i`: `(j, w_ij)` sorted by `j`, no self loops.
    pub neighbors: Vec<Vec<(usize, f64)>>,
}

impl VisualGraph {
    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.neighbors[i]
            .binary_search_by_key(&j, |&(c, _)| c)
            .map_or(0.0, |p| self.neighbors[i][p].1)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut w = DMatrix::zeros(n, n);
        for (i, row) in self.neighbors.iter().enumerate() {
            for &(j, v) in row {
                w[(i, j)] = v;
            }
        }
        w
    }

    /// Coordinate-list dump `i,j,w` for debugging.
    pub fn write_coo_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["i", "j", "w"])?;
        for (i, row) in self.neighbors.iter().enumerate() {
            for &(j, v) in row {
                wr.write_record([i.to_string(), j.to_string(), format!("{v:.17e}")])?;
            }
        }
        wr.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// The `k` nearest other columns of `i`, ties broken by index.
fn knn_row(y: &DMatrix<f64>, i: usize, k: usize) -> Vec<(usize, f64)> {
    let ci = col(y, i);
    let mut d: Vec<(f64, usize)> = (0..y.ncols())
        .filter(|&j| j != i)
        .map(|j| (sq_dist(ci, col(y, j)), j))
        .collect();
    if k < d.len() {
        d.select_nth_unstable_by(k, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        d.truncate(k);
    }
    d.into_iter().map(|(dd, j)| (j, dd.sqrt())).collect()
}

/// Gaussian-weighted kNN graph on the columns of `y`, symmetrized with
/// `max(w_ij, w_ji)`. `bandwidth = None` uses the mean kNN distance.
pub fn build_graph(y: &DMatrix<f64>, k: usize, bandwidth: Option<f64>) -> Result<VisualGraph> {
    let n = y.ncols();
    if k == 0 {
        return Err(Error::invalid("graph needs k >= 1"));
    }
    if k >= n {
        return Err(Error::invalid(format!("k = {k} must be below the {n} graph nodes")));
    }
    let knn: Vec<Vec<(usize, f64)>> = crate::par::map_indices(n, |i| knn_row(y, i, k));
    let bw = match bandwidth {
        Some(b) if b > 0.0 && b.is_finite() => b,
        Some(b) => return Err(Error::invalid(format!("graph bandwidth must be positive, got {b}"))),
        None => {
            let m = knn.iter().flatten().map(|&(_, d)| d).sum::<f64>() / (n * k) as f64;
            if m > 0.0 {
                m
            } else {
                1.0
            }
        }
    };
    let mut neighbors: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (i, row) in knn.iter().enumerate() {
        for &(j, d) in row {
            let w = (-d * d / (2.0 * bw * bw)).exp();
            neighbors[i].push((j, w));
            neighbors[j].push((i, w));
        }
    }
    for row in &mut neighbors {
        row.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.total_cmp(&a.1)));
        // keep the larger weight of duplicate (i, j) entries
        row.dedup_by_key(|e| e.0);
    }
    Ok(VisualGraph {
        k,
        bandwidth: bw,
        neighbors,
    })
}

/// Unnormalized Laplacian `D - W`, kept in sparse form.
#[derive(Debug, Clone, PartialEq)]
pub struct Laplacian {
    pub degree: Vec<f64>,
    pub neighbors: Vec<Vec<(usize, f64)>>,
}

pub fn laplacian(g: &VisualGraph) -> Laplacian {
    Laplacian {
        degree: g
            .neighbors
            .iter()
            .map(|row| row.iter().map(|&(_, w)| w).sum())
            .collect(),
        neighbors: g.neighbors.clone(),
    }
}

impl Laplacian {
    pub fn len(&self) -> usize {
        self.degree.len()
    }

    pub fn is_empty(&self) -> bool {
        self.degree.is_empty()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut l = DMatrix::zeros(n, n);
        for i in 0..n {
            l[(i, i)] = self.degree[i];
            for &(j, w) in &self.neighbors[i] {
                l[(i, j)] -= w;
            }
        }
        l
    }

    /// `X L` for `X` with `N` columns.
    pub fn right_mul(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let rows = x.nrows();
        let mut out = DMatrix::zeros(rows, self.len());
        crate::par::for_each_chunk_mut(out.as_mut_slice(), rows.max(1), |j, column| {
            let xj = col(x, j);
            for r in 0..rows {
                column[r] = self.degree[j] * xj[r];
            }
            for &(i, w) in &self.neighbors[j] {
                let xi = col(x, i);
                for r in 0..rows {
                    column[r] -= w * xi[r];
                }
            }
        });
        out
    }
}

/// Everything the discrete solver needs from the graph and the ridge term.
#[derive(Debug, Clone)]
pub struct SolverMatrices {
    pub laplacian: Laplacian,
    /// `(Y Y' + gamma I)^-1`.
    pub q: DMatrix<f64>,
    pub y: DMatrix<f64>,
    /// `beta / alpha`.
    pub ratio: f64,
    pub dense: Option<DMatrix<f64>>,
}

impl SolverMatrices {
    pub fn n(&self) -> usize {
        self.y.ncols()
    }

    /// `X A`; `A` is symmetric so this also gives `(A X')'`.
    pub fn right_mul(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        if let Some(a) = &self.dense {
            return x * a;
        }
        let mut out = self.laplacian.right_mul(x);
        if self.ratio != 0.0 {
            // X (I - Y' Q Y) = X - ((X Y') Q) Y
            let xyt = x * self.y.transpose();
            let low = (xyt * &self.q) * &self.y;
            out += (x - low) * self.ratio;
        }
        out
    }

    /// `Tr(V A V')`.
    pub fn trace_form(&self, v: &DMatrix<f64>) -> f64 {
        self.right_mul(v).dot(v)
    }

    pub fn dense_a(&self) -> DMatrix<f64> {
        if let Some(a) = &self.dense {
            return a.clone();
        }
        let n = self.n();
        let mut a = self.laplacian.to_dense();
        if self.ratio != 0.0 {
            let yqy = self.y.transpose() * &self.q * &self.y;
            a += (DMatrix::identity(n, n) - yqy) * self.ratio;
        }
        (&a + a.transpose()) * 0.5
    }
}

/// `Q = (Y Y' + gamma I)^-1` via Cholesky.
pub fn ridge_inverse(y: &DMatrix<f64>, gamma: f64) -> Result<DMatrix<f64>> {
    let d = y.nrows();
    let gram = y * y.transpose() + DMatrix::identity(d, d) * gamma;
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::Numerical(format!("Y Y' + {gamma} I is not positive definite")))?;
    let q = chol.inverse();
    Ok((&q + q.transpose()) * 0.5)
}

#[allow(non_snake_case)]
pub fn build_A(l: Laplacian, y: &DMatrix<f64>, alpha: f64, beta: f64, gamma: f64) -> Result<SolverMatrices> {
    build_a_with_limit(l, y, alpha, beta, gamma, DENSE_A_LIMIT)
}

pub fn build_a_with_limit(
    l: Laplacian,
    y: &DMatrix<f64>,
    alpha: f64,
    beta: f64,
    gamma: f64,
    dense_limit: usize,
) -> Result<SolverMatrices> {
    if !(alpha > 0.0) {
        return Err(Error::invalid("alpha must be positive"));
    }
    if !(beta >= 0.0) {
        return Err(Error::invalid("beta must be non-negative"));
    }
    if !(gamma >= 0.0) {
        return Err(Error::invalid("gamma must be non-negative"));
    }
    if l.len() != y.ncols() {
        return Err(Error::DimensionMismatch {
            context: "Laplacian size vs intermediate columns",
            expected: y.ncols(),
            found: l.len(),
        });
    }
    let q = ridge_inverse(y, gamma)?;
    let mut m = SolverMatrices {
        laplacian: l,
        q,
        y: y.clone(),
        ratio: beta / alpha,
        dense: None,
    };
    if m.n() <= dense_limit {
        m.dense = Some(m.dense_a());
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    fn signs(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(rows, cols, |_, _| if rng.random_bool(0.5) { 1.0 } else { -1.0 })
    }

    #[test]
    fn identical_columns_get_unit_weight() {
        let mut y = random(3, 6, 1);
        let c0 = y.column(0).clone_owned();
        y.set_column(4, &c0);
        let g = build_graph(&y, 2, None).unwrap();
        assert_eq!(g.weight(0, 4), 1.0);
        let w = g.to_dense();
        assert_eq!(w, w.transpose());
        assert!((0..6).all(|i| w[(i, i)] == 0.0));
        assert!(build_graph(&y, 0, None).is_err());
        assert!(build_graph(&y, 6, None).is_err());
    }

    #[test]
    fn degree_bounds() {
        let y = random(4, 60, 2);
        let g = build_graph(&y, 5, None).unwrap();
        assert!(g.neighbors.iter().all(|r| r.len() >= 5));
        let mean = g.neighbors.iter().map(|r| r.len()).sum::<usize>() as f64 / 60.0;
        assert!(mean <= 10.0);
    }

    #[test]
    fn two_node_laplacian() {
        let y = DMatrix::from_column_slice(1, 2, &[0.0, 0.0]);
        let g = build_graph(&y, 1, None).unwrap();
        let l = laplacian(&g).to_dense();
        assert_eq!(l, DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
    }

    #[test]
    fn laplacian_quadratic_form_identity() {
        let y = random(3, 25, 3);
        let g = build_graph(&y, 4, None).unwrap();
        let lap = laplacian(&g);
        let l = lap.to_dense();
        let ones = nalgebra::DVector::from_element(25, 1.0);
        assert!((&l * ones).amax() < 1e-12);
        let x = random(1, 25, 4);
        let quad = (&x * &l * x.transpose())[(0, 0)];
        let mut direct = 0.0;
        for i in 0..25 {
            for j in 0..25 {
                direct += 0.5 * g.weight(i, j) * (x[(0, i)] - x[(0, j)]).powi(2);
            }
        }
        assert!((quad - direct).abs() < 1e-10);
        assert!((lap.right_mul(&x) - &x * &l).amax() < 1e-12);
        let eig = l.symmetric_eigenvalues();
        assert!(eig.min() >= -1e-10 * l.norm());
    }

    #[test]
    fn a_reduces_to_l_without_ridge_term() {
        let y = random(5, 20, 5);
        let lap = laplacian(&build_graph(&y, 3, None).unwrap());
        let m = build_A(lap.clone(), &y, 0.5, 0.0, 1.0).unwrap();
        assert_eq!(m.dense.as_ref().unwrap(), &lap.to_dense());
        let big = build_A(lap.clone(), &y, 0.5, 1.0, 1e12).unwrap();
        let expect = lap.to_dense() + DMatrix::identity(20, 20) * 2.0;
        assert!((big.dense_a() - expect).amax() < 1e-9);
        let a = big.dense.unwrap();
        assert_eq!(a, a.transpose());
    }

    #[test]
    fn factored_and_dense_products_agree() {
        let y = random(6, 30, 6);
        let lap = laplacian(&build_graph(&y, 4, None).unwrap());
        let dense = build_a_with_limit(lap.clone(), &y, 0.1, 0.3, 2.0, usize::MAX).unwrap();
        let factored = build_a_with_limit(lap, &y, 0.1, 0.3, 2.0, 0).unwrap();
        let v = signs(3, 30, 7);
        assert!((dense.right_mul(&v) - factored.right_mul(&v)).amax() < 1e-10);
    }

    #[test]
    fn ridge_identity_at_optimal_projection() {
        for seed in 0..10 {
            let y = random(6, 15, seed);
            let v = signs(3, 15, seed + 100);
            let gamma = 0.7;
            let q = ridge_inverse(&y, gamma).unwrap();
            let w = &q * &y * v.transpose();
            let lhs = (&v - w.transpose() * &y).norm_squared() + gamma * w.norm_squared();
            let rhs = (&v * (DMatrix::identity(15, 15) - y.transpose() * &q * &y) * v.transpose()).trace();
            assert!((lhs - rhs).abs() <= 1e-8 * lhs.abs().max(1.0));
        }
    }

    #[test]
    fn trace_form_matches_weighted_objective() {
        let y = random(5, 18, 9);
        let v = signs(4, 18, 10);
        let (alpha, beta, gamma) = (0.3, 0.2, 1.5);
        let lap = laplacian(&build_graph(&y, 3, None).unwrap());
        let l = lap.to_dense();
        let m = build_A(lap, &y, alpha, beta, gamma).unwrap();
        let q = ridge_inverse(&y, gamma).unwrap();
        let w = &q * &y * v.transpose();
        let eq3 = alpha * (&v * &l * v.transpose()).trace()
            + beta * ((&v - w.transpose() * &y).norm_squared() + gamma * w.norm_squared());
        assert!((alpha * m.trace_form(&v) - eq3).abs() < 1e-8 * eq3.abs().max(1.0));
    }

    #[test]
    fn singular_gram_without_ridge_is_an_error() {
        let y = random(6, 3, 11);
        assert!(ridge_inverse(&y, 0.0).is_err());
    }
}
