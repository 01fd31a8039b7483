//! Locality-constrained sparse coding against canonical views.
//!
//! Each image is coded, per modality, over its `r` nearest exemplars with a
//! sum-to-one constraint and a penalty that grows exponentially with the
//! distance to each exemplar. The per-modality codes are stacked into one
//! `TP × N` representation.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::canonical_views::CanonicalViewSet;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{col, dist, mean_pairwise_distance};
use crate::matrix_io::{load_matrix, save_matrix};

pub const RHO_SAMPLE_PAIRS: usize = 1_000_000;
/// Largest exponent fed to `exp` in the locality weights.
const MAX_EXPONENT: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Rho {
    Fixed(f64),
    Auto(AutoTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoTag {
    Auto,
}

impl Default for Rho {
    fn default() -> Self {
        Rho::Auto(AutoTag::Auto)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparseCodeConfig {
    pub r: usize,
    pub sigma: f64,
    #[serde(default)]
    pub rho: Rho,
}

impl Default for SparseCodeConfig {
    fn default() -> Self {
        Self {
            r: 70,
            sigma: 1e-4,
            rho: Rho::default(),
        }
    }
}

impl SparseCodeConfig {
    pub fn validate(&self, t: usize) -> Result<()> {
        if self.r == 0 {
            return Err(Error::invalid("r must be at least 1"));
        }
        if self.r > t {
            return Err(Error::invalid(format!(
                "r = {} exceeds the {t} canonical views",
                self.r
            )));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::invalid("sigma must be positive"));
        }
        if let Rho::Fixed(rho) = self.rho {
            if !(rho > 0.0) {
                return Err(Error::invalid("rho must be positive"));
            }
        }
        Ok(())
    }

    /// Freeze `rho` per modality. `Auto` uses the mean pairwise feature
    /// distance over the train split.
    pub fn resolve(&self, ds: &Dataset, seed: u64) -> Result<CodingParams> {
        let rho = match self.rho {
            Rho::Fixed(v) => vec![v; ds.num_modalities()],
            Rho::Auto(_) => {
                if ds.split.train.len() < 2 {
                    return Err(Error::invalid("automatic rho needs at least two train images"));
                }
                ds.modalities
                    .iter()
                    .map(|m| {
                        let d = mean_pairwise_distance(&m.select(&ds.split.train), RHO_SAMPLE_PAIRS, seed);
                        if d > 0.0 {
                            d
                        } else {
                            1.0
                        }
                    })
                    .collect()
            }
        };
        Ok(CodingParams {
            r: self.r,
            sigma: self.sigma,
            rho,
        })
    }
}

/// Coding parameters with `rho` frozen per modality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodingParams {
    pub r: usize,
    pub sigma: f64,
    pub rho: Vec<f64>,
}

/// `d[t] = exp(|x - e_t| / rho)`.
pub fn locality_weights(x: &[f64], exemplars: &DMatrix<f64>, rho: f64) -> Result<Vec<f64>> {
    if x.len() != exemplars.nrows() {
        return Err(Error::DimensionMismatch {
            context: "locality weights",
            expected: exemplars.nrows(),
            found: x.len(),
        });
    }
    if !(rho > 0.0) {
        return Err(Error::invalid("rho must be positive"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("feature vector".into()));
    }
    Ok((0..exemplars.ncols())
        .map(|t| (dist(x, col(exemplars, t)) / rho).min(MAX_EXPONENT).exp())
        .collect())
}

/// Indices of the `r` exemplars nearest to `x`, ties to the lower index.
pub fn nearest_support(x: &[f64], exemplars: &DMatrix<f64>, r: usize) -> Vec<usize> {
    let mut order: Vec<(f64, usize)> = (0..exemplars.ncols())
        .map(|t| (crate::linalg::sq_dist(x, col(exemplars, t)), t))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    order.truncate(r);
    order.into_iter().map(|(_, t)| t).collect()
}

/// `|x - E_s y|^2 + sigma * |d_s ⊙ y|^2` for a code restricted to `support`.
pub fn coding_objective(
    x: &[f64],
    exemplars: &DMatrix<f64>,
    support: &[usize],
    y: &[f64],
    weights: &[f64],
    sigma: f64,
) -> f64 {
    let mut resid = DVector::from_column_slice(x);
    for (k, &t) in support.iter().enumerate() {
        resid.axpy(-y[k], &exemplars.column(t), 1.0);
    }
    let pen: f64 = support.iter().zip(y).map(|(&t, v)| (weights[t] * v).powi(2)).sum();
    resid.norm_squared() + sigma * pen
}

/// Solve the locality-penalized sum-to-one least squares on the support
/// through its `(r + 1)`-dimensional KKT system. Returns a full-length code
/// with exact zeros off the support.
pub fn sparse_code_one(x: &[f64], exemplars: &DMatrix<f64>, r: usize, sigma: f64, rho: f64) -> Result<Vec<f64>> {
    let t = exemplars.ncols();
    if r == 0 || r > t {
        return Err(Error::invalid(format!("support size {r} invalid for {t} exemplars")));
    }
    let weights = locality_weights(x, exemplars, rho)?;
    let support = nearest_support(x, exemplars, r);

    // Differences x - e_s as columns; the reconstruction term is y' G y
    // under the sum-to-one constraint.
    let diffs = DMatrix::from_fn(x.len(), r, |i, k| x[i] - exemplars[(i, support[k])]);
    let gram = diffs.tr_mul(&diffs);
    let build = |ridge: f64| {
        let mut kkt = DMatrix::zeros(r + 1, r + 1);
        for a in 0..r {
            for b in 0..r {
                kkt[(a, b)] = 2.0 * gram[(a, b)];
            }
            kkt[(a, a)] += 2.0 * (sigma * weights[support[a]].powi(2) + ridge);
            kkt[(a, r)] = 1.0;
            kkt[(r, a)] = 1.0;
        }
        kkt
    };
    let mut rhs = DVector::zeros(r + 1);
    rhs[r] = 1.0;
    let solve = |kkt: DMatrix<f64>| -> Option<DVector<f64>> {
        let sol = kkt.lu().solve(&rhs)?;
        sol.iter().all(|v| v.is_finite()).then_some(sol)
    };
    let sol = match solve(build(0.0)) {
        Some(s) => s,
        None => {
            let tr = gram.trace();
            let ridge = 1e-10 * if tr > 0.0 { tr } else { 1.0 };
            solve(build(ridge)).ok_or_else(|| Error::Numerical("singular sparse-coding system".into()))?
        }
    };
    let mut y = vec![0.0; t];
    for (k, &s) in support.iter().enumerate() {
        y[s] = sol[k];
    }
    Ok(y)
}

/// Stacked per-modality codes, one column per image.
#[derive(Debug, Clone, PartialEq)]
pub struct IntermediateRep {
    pub data: DMatrix<f64>,
    /// First row of each modality block.
    pub offsets: Vec<usize>,
}

impl IntermediateRep {
    pub fn ncols(&self) -> usize {
        self.data.ncols()
    }

    pub fn nrows(&self) -> usize {
        self.data.nrows()
    }

    pub fn block(&self, p: usize) -> std::ops::Range<usize> {
        let end = self.offsets.get(p + 1).copied().unwrap_or(self.data.nrows());
        self.offsets[p]..end
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepSidecar {
    #[serde(rename = "T")]
    pub t: usize,
    #[serde(rename = "P")]
    pub p: usize,
    pub r: usize,
    pub sigma: f64,
    pub rho: Vec<f64>,
}

fn check_views(views: &[CanonicalViewSet], dims: &[usize]) -> Result<usize> {
    if views.len() != dims.len() {
        return Err(Error::DimensionMismatch {
            context: "canonical view sets per modality",
            expected: dims.len(),
            found: views.len(),
        });
    }
    let t = views.first().map_or(0, |v| v.len());
    for (v, &d) in views.iter().zip(dims) {
        if v.len() != t {
            return Err(Error::invalid(
                "all modalities must have the same number of canonical views",
            ));
        }
        if v.exemplars.nrows() != d {
            return Err(Error::DimensionMismatch {
                context: "exemplar dimension",
                expected: d,
                found: v.exemplars.nrows(),
            });
        }
    }
    Ok(t)
}

/// Encode the given image indices of `ds`, in order.
pub fn encode_images(
    ds: &Dataset,
    images: &[usize],
    views: &[CanonicalViewSet],
    params: &CodingParams,
) -> Result<IntermediateRep> {
    let t = check_views(views, &ds.dims())?;
    let p = views.len();
    let rows = t * p;
    let mut data = DMatrix::zeros(rows, images.len());
    let mut failure: std::sync::Mutex<Option<Error>> = std::sync::Mutex::new(None);
    crate::par::for_each_chunk_mut(data.as_mut_slice(), rows.max(1), |j, column| {
        let n = images[j];
        for (q, (m, v)) in ds.modalities.iter().zip(views).enumerate() {
            match sparse_code_one(m.column(n), &v.exemplars, params.r, params.sigma, params.rho[q]) {
                Ok(y) => column[q * t..(q + 1) * t].copy_from_slice(&y),
                Err(e) => {
                    failure.lock().unwrap().get_or_insert(e);
                    return;
                }
            }
        }
    });
    if let Some(e) = failure.get_mut().unwrap().take() {
        return Err(e);
    }
    Ok(IntermediateRep {
        data,
        offsets: (0..p).map(|q| q * t).collect(),
    })
}

pub fn encode_dataset(ds: &Dataset, views: &[CanonicalViewSet], params: &CodingParams) -> Result<IntermediateRep> {
    let all: Vec<usize> = (0..ds.len()).collect();
    encode_images(ds, &all, views, params)
}

/// Encode one image given its feature vector in every modality.
pub fn encode_query(x_multi: &[Vec<f64>], views: &[CanonicalViewSet], params: &CodingParams) -> Result<DVector<f64>> {
    let dims: Vec<usize> = x_multi.iter().map(|x| x.len()).collect();
    let t = check_views(views, &dims)?;
    let mut out = DVector::zeros(t * views.len());
    for (q, (x, v)) in x_multi.iter().zip(views).enumerate() {
        let y = sparse_code_one(x, &v.exemplars, params.r, params.sigma, params.rho[q])?;
        out.rows_mut(q * t, t).copy_from_slice(&y);
    }
    Ok(out)
}

pub fn save_rep(rep: &IntermediateRep, params: &CodingParams, matrix_path: &Path) -> Result<()> {
    save_matrix(matrix_path, &rep.data)?;
    let p = rep.offsets.len();
    let sidecar = RepSidecar {
        t: rep.nrows().checked_div(p).unwrap_or(0),
        p,
        r: params.r,
        sigma: params.sigma,
        rho: params.rho.clone(),
    };
    let side = matrix_path.with_extension("json");
    fs::write(&side, serde_json::to_string_pretty(&sidecar)?).map_err(|e| Error::io(&side, e))
}

pub fn load_rep(matrix_path: &Path) -> Result<(IntermediateRep, RepSidecar)> {
    let data = load_matrix(matrix_path)?;
    let side = matrix_path.with_extension("json");
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let sidecar: RepSidecar = serde_json::from_str(&text)?;
    if sidecar.t * sidecar.p != data.nrows() {
        return Err(Error::format(matrix_path, "row count disagrees with sidecar T·P"));
    }
    let offsets = (0..sidecar.p).map(|q| q * sidecar.t).collect();
    Ok((IntermediateRep { data, offsets }, sidecar))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn weights_basic_values() {
        let e = DMatrix::from_column_slice(2, 2, &[0.0, 0.0, 3.0, 4.0]);
        let d = locality_weights(&[0.0, 0.0], &e, 5.0).unwrap();
        assert_eq!(d[0], 1.0);
        assert!((d[1] - std::f64::consts::E).abs() < 1e-12);
        let d2 = locality_weights(&[0.0, 0.0], &e, 10.0).unwrap();
        assert!(d2[1] < d[1]);
        assert!(locality_weights(&[f64::NAN, 0.0], &e, 1.0).is_err());
        assert!(locality_weights(&[0.0], &e, 1.0).is_err());
    }

    #[test]
    fn exact_exemplar_gives_one_hot() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let e = random_matrix(4, 5, &mut rng);
        let x: Vec<f64> = e.column(3).iter().copied().collect();
        let y = sparse_code_one(&x, &e, 1, 1e-12, 1.0).unwrap();
        assert_eq!(y, vec![0.0, 0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn midpoint_splits_evenly() {
        let e = DMatrix::from_column_slice(2, 3, &[-1.0, 0.0, 1.0, 0.0, 0.0, 9.0]);
        let y = sparse_code_one(&[0.0, 0.0], &e, 2, 1e-4, 1.0).unwrap();
        assert!((y[0] - 0.5).abs() < 1e-12);
        assert!((y[1] - 0.5).abs() < 1e-12);
        assert_eq!(y[2], 0.0);
    }

    #[test]
    fn support_and_sum_constraints() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let e = random_matrix(6, 10, &mut rng);
        for _ in 0..20 {
            let x: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y = sparse_code_one(&x, &e, 4, 1e-4, 0.7).unwrap();
            assert_eq!(y.iter().filter(|v| **v != 0.0).count(), 4);
            assert!((y.iter().sum::<f64>() - 1.0).abs() < 1e-8);
            let support = nearest_support(&x, &e, 4);
            for (t, v) in y.iter().enumerate() {
                assert_eq!(*v != 0.0, support.contains(&t));
            }
        }
        assert!(sparse_code_one(&[0.0; 6], &e, 11, 1e-4, 1.0).is_err());
    }

    #[test]
    fn duplicated_exemplars_do_not_abort() {
        let e = DMatrix::from_column_slice(2, 3, &[1.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
        let y = sparse_code_one(&[1.0, 1.0], &e, 3, 0.0, 1.0).unwrap();
        assert!((y.iter().sum::<f64>() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn shift_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let e = random_matrix(5, 8, &mut rng);
        let x: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let shift: Vec<f64> = (0..5).map(|_| rng.random_range(-10.0..10.0)).collect();
        let e2 = DMatrix::from_fn(5, 8, |i, j| e[(i, j)] + shift[i]);
        let x2: Vec<f64> = x.iter().zip(&shift).map(|(a, b)| a + b).collect();
        let y1 = sparse_code_one(&x, &e, 5, 1e-2, 0.9).unwrap();
        let y2 = sparse_code_one(&x2, &e2, 5, 1e-2, 0.9).unwrap();
        for (a, b) in y1.iter().zip(&y2) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn rho_round_trips_through_json() {
        let cfg: SparseCodeConfig = serde_json::from_str(r#"{"r":3,"sigma":0.1,"rho":"auto"}"#).unwrap();
        assert_eq!(cfg.rho, Rho::Auto(AutoTag::Auto));
        let cfg: SparseCodeConfig = serde_json::from_str(r#"{"r":3,"sigma":0.1,"rho":2.5}"#).unwrap();
        assert_eq!(cfg.rho, Rho::Fixed(2.5));
        assert!(cfg.validate(2).is_err());
        assert!(cfg.validate(3).is_ok());
    }
}
