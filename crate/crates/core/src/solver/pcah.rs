use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Eigenpairs of the centered scatter matrix of `y`'s columns, sorted by
/// decreasing eigenvalue. Each eigenvector's largest-magnitude entry is made
/// positive.
pub(crate) fn principal_directions(y: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let mean = y.column_mean();
    let mut centered = y.clone();
    for mut c in centered.column_iter_mut() {
        c -= &mean;
    }
    let scatter = &centered * centered.transpose();
    let eig = scatter.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut dirs = eig.eigenvectors.select_columns(&order);
    for mut d in dirs.column_iter_mut() {
        let k = d.iamax();
        if d[k] < 0.0 {
            d.neg_mut();
        }
    }
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    (dirs, values, centered)
}

/// Sign of the projections onto the top-`c` principal directions
/// (`sign(0) = +1`). Bits beyond the numerical rank alternate `±1` with the
/// image index.
pub fn pcah_init(y: &DMatrix<f64>, c: usize) -> Result<DMatrix<f64>> {
    let dim = y.nrows();
    let n = y.ncols();
    if c == 0 {
        return Err(Error::invalid("code length must be at least 1"));
    }
    if c > dim {
        return Err(Error::invalid(format!(
            "code length {c} exceeds representation dimension {dim}"
        )));
    }
    let (dirs, values, centered) = principal_directions(y);
    let top = values.first().copied().unwrap_or(0.0);
    let rank = values.iter().filter(|&&v| v > 1e-10 * top && v > 0.0).count();
    let used = c.min(rank);
    let proj = dirs.columns(0, used).transpose() * centered;
    Ok(DMatrix::from_fn(c, n, |j, i| {
        if j < used {
            crate::linalg::sgn(proj[(j, i)])
        } else if (i + j) % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dominant_direction_splits_by_sign() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let scores: Vec<f64> = (0..40)
            .map(|i| if i % 3 == 0 { -5.0 } else { 4.0 } + rng.random_range(-0.5..0.5))
            .collect();
        let y = DMatrix::from_fn(3, 40, |r, i| match r {
            0 => scores[i],
            _ => 0.01 * rng.random_range(-1.0..1.0),
        });
        let v = pcah_init(&y, 1).unwrap();
        let mean = scores.iter().sum::<f64>() / 40.0;
        for i in 0..40 {
            assert_eq!(v[(0, i)], if scores[i] - mean >= 0.0 { 1.0 } else { -1.0 });
        }
    }

    #[test]
    fn duplicated_columns_share_codes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut y = DMatrix::from_fn(6, 30, |_, _| rng.random_range(-1.0..1.0));
        let c3 = y.column(3).clone_owned();
        y.set_column(17, &c3);
        let v = pcah_init(&y, 4).unwrap();
        assert_eq!(v.column(3), v.column(17));
    }

    #[test]
    fn bits_roughly_balanced() {
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let y = DMatrix::from_fn(10, 300, |_, _| rng.random_range(-1.0..1.0));
            let v = pcah_init(&y, 8).unwrap();
            for j in 0..8 {
                let m = v.row(j).sum() / 300.0;
                assert!(m.abs() <= 0.2, "bit {j} mean {m}");
            }
        }
    }

    #[test]
    fn rank_deficient_padding() {
        let y = DMatrix::from_fn(4, 10, |r, i| if r == 0 { i as f64 } else { 0.0 });
        let v = pcah_init(&y, 3).unwrap();
        for i in 0..10 {
            assert_eq!(v[(1, i)], if (i + 1) % 2 == 0 { 1.0 } else { -1.0 });
            assert_eq!(v[(2, i)], if i % 2 == 0 { 1.0 } else { -1.0 });
        }
        assert!(pcah_init(&y, 5).is_err());
    }
}
