//! Small dense linear-algebra helpers shared across the pipeline.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[inline]
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    sq_dist(a, b).sqrt()
}

/// Column `j` of a column-major matrix as a slice.
#[inline]
pub fn col(m: &DMatrix<f64>, j: usize) -> &[f64] {
    let r = m.nrows();
    &m.as_slice()[j * r..(j + 1) * r]
}

/// `+1` for `x >= 0`, `-1` otherwise.
#[inline]
pub fn sgn(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

pub fn sgn_matrix(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.map(sgn)
}

pub fn all_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| v.is_finite())
}

/// Mean Euclidean distance between distinct columns. Uses every pair when
/// there are at most `max_pairs` of them, otherwise a seeded uniform sample.
pub fn mean_pairwise_distance(m: &DMatrix<f64>, max_pairs: usize, seed: u64) -> f64 {
    let n = m.ncols();
    if n < 2 {
        return 0.0;
    }
    let total = n * (n - 1) / 2;
    if total <= max_pairs {
        let rows: Vec<f64> = crate::par::map_indices(n, |i| ((i + 1)..n).map(|j| dist(col(m, i), col(m, j))).sum());
        return rows.iter().sum::<f64>() / total as f64;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = 0.0;
    for _ in 0..max_pairs {
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        acc += dist(col(m, i), col(m, j));
    }
    acc / max_pairs as f64
}

/// Solve `m x = rhs` for symmetric positive-definite `m`.
pub fn spd_solve(m: &DMatrix<f64>, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("matrix is not positive definite".into()))?;
    Ok(chol.solve(rhs))
}

/// Extend the orthonormal columns of `basis` (n × k, may be empty) with
/// `extra` more orthonormal columns, also orthogonal to each vector in
/// `avoid`. `basis` and `avoid` together must be orthonormal. Candidates are drawn from a fixed-seed
/// Gaussian so the completion is deterministic.
pub fn orthonormal_completion(
    n: usize,
    basis: &[DVector<f64>],
    avoid: &[DVector<f64>],
    extra: usize,
    seed: u64,
) -> Result<Vec<DVector<f64>>> {
    if basis.len() + avoid.len() + extra > n {
        return Err(Error::invalid(format!(
            "cannot complete {} + {} vectors with {} more in dimension {n}",
            basis.len(),
            avoid.len(),
            extra
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<DVector<f64>> = Vec::with_capacity(extra);
    let mut attempts = 0;
    while out.len() < extra {
        attempts += 1;
        if attempts > 100 * (extra + 1) {
            return Err(Error::Numerical("orthonormal completion stalled".into()));
        }
        let mut v = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
        // two passes of modified Gram-Schmidt
        for _ in 0..2 {
            for b in basis.iter().chain(avoid).chain(out.iter()) {
                let p = b.dot(&v);
                v.axpy(-p, b, 1.0);
            }
        }
        let norm = v.norm();
        if norm > 1e-8 {
            out.push(v / norm);
        }
    }
    Ok(out)
}
