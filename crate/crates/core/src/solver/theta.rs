//! Maximize `Tr(Θ' C)` over `Θ Θ' = N I`, `Θ 1 = 0`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Singular values at or below this fraction of the largest are dropped.
pub const RANK_TOLERANCE: f64 = 1e-10;
const COMPLETION_SEED: u64 = 0x005e_ed0f_7e7a;

/// Closed-form maximizer. `C` is first projected onto the complement of
/// `1_N` (the constraint makes that component irrelevant to the trace), then
/// `Θ = sqrt(N) [P, P̂][Q, Q̂]'` from its thin SVD, with `P̂` completing `P`
/// and `Q̂` orthogonal to both `Q` and `1_N`.
pub fn balanced_orthogonal_maximizer(target: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (c, n) = target.shape();
    if c >= n {
        return Err(Error::invalid(format!(
            "{c} balanced orthogonal bits need more than {c} columns, have {n}"
        )));
    }
    let mut centered = target.clone();
    for mut row in centered.row_iter_mut() {
        let m = row.mean();
        row.add_scalar_mut(-m);
    }
    let svd = centered.transpose().svd(true, true);
    let right = svd.u.expect("left vectors requested"); // N × c, right singular vectors of C
    let left_t = svd.v_t.expect("right vectors requested"); // c × c, rows are left vectors of C
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]).then(a.cmp(&b)));
    let top = sv[order[0]];
    if !(top > 0.0) {
        return Err(Error::Numerical("target matrix has rank 0".into()));
    }
    let rank = order.iter().take_while(|&&i| sv[i] > RANK_TOLERANCE * top).count();

    let mut p_cols: Vec<DVector<f64>> = Vec::with_capacity(c);
    let mut q_cols: Vec<DVector<f64>> = Vec::with_capacity(c);
    for &i in &order[..rank] {
        let mut p = left_t.row(i).transpose();
        let mut q = right.column(i).clone_owned();
        let k = p.iamax();
        if p[k] < 0.0 {
            p.neg_mut();
            q.neg_mut();
        }
        p_cols.push(p);
        q_cols.push(q);
    }
    if rank < c {
        let ones = DVector::from_element(n, 1.0 / (n as f64).sqrt());
        let p_hat = crate::linalg::orthonormal_completion(c, &p_cols, &[], c - rank, COMPLETION_SEED)?;
        let q_hat = crate::linalg::orthonormal_completion(n, &q_cols, &[ones], c - rank, COMPLETION_SEED + 1)?;
        p_cols.extend(p_hat);
        q_cols.extend(q_hat);
    }
    let p = DMatrix::from_columns(&p_cols);
    let q = DMatrix::from_columns(&q_cols);
    Ok(p * q.transpose() * (n as f64).sqrt())
}

/// `‖Θ Θ' − N I‖_F` and `‖Θ 1‖_∞`.
pub fn feasibility(theta: &DMatrix<f64>) -> (f64, f64) {
    let (c, n) = theta.shape();
    let gram = theta * theta.transpose() - DMatrix::identity(c, c) * n as f64;
    let row_sums = theta.column_sum();
    (gram.norm(), row_sums.amax())
}
