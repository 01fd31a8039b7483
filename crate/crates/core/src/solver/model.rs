use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::sgn;
use crate::matrix_io::{load_matrix, save_matrix};

/// What a query needs, besides `W`, to be encoded the way the training data was.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub c: usize,
    #[serde(rename = "T")]
    pub t: usize,
    #[serde(rename = "P")]
    pub p: usize,
    pub r: usize,
    pub sigma: f64,
    pub rho: Vec<f64>,
    pub gamma: f64,
    pub modality_dims: Vec<usize>,
    pub exemplar_files: Vec<String>,
    /// Codes were learned on stacked raw features instead of canonical-view codes.
    #[serde(default)]
    pub raw_features: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HashModel {
    /// Projection `W` (`TP × c`).
    pub w: DMatrix<f64>,
    pub meta: ModelMeta,
}

/// `W = (Y Y' + γ I)⁻¹ Y V'`.
pub fn learn_projection(y: &DMatrix<f64>, v: &DMatrix<f64>, gamma: f64) -> Result<DMatrix<f64>> {
    if !(gamma > 0.0) {
        return Err(Error::invalid("gamma must be positive"));
    }
    if y.ncols() != v.ncols() {
        return Err(Error::DimensionMismatch {
            context: "codes vs representation columns",
            expected: y.ncols(),
            found: v.ncols(),
        });
    }
    let d = y.nrows();
    let gram = y * y.transpose() + DMatrix::identity(d, d) * gamma;
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::Numerical("ridge system not positive definite".into()))?;
    Ok(chol.solve(&(y * v.transpose())))
}

impl HashModel {
    pub fn learn(y: &DMatrix<f64>, v: &DMatrix<f64>, gamma: f64, meta: ModelMeta) -> Result<Self> {
        let w = learn_projection(y, v, gamma)?;
        if !crate::linalg::all_finite(&w) {
            return Err(Error::NonFinite("hash projection".into()));
        }
        Ok(Self { w, meta })
    }

    pub fn c(&self) -> usize {
        self.w.ncols()
    }

    pub fn input_dim(&self) -> usize {
        self.w.nrows()
    }

    /// Codes `Sgn(W' Y)` for every column.
    pub fn hash_matrix(&self, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if y.nrows() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "hash input",
                expected: self.input_dim(),
                found: y.nrows(),
            });
        }
        Ok((self.w.tr_mul(y)).map(sgn))
    }

    pub fn save(&self, matrix_path: &Path) -> Result<()> {
        save_matrix(matrix_path, &self.w)?;
        let side = matrix_path.with_extension("json");
        fs::write(&side, serde_json::to_string_pretty(&self.meta)?).map_err(|e| Error::io(&side, e))
    }

    pub fn load(matrix_path: &Path) -> Result<Self> {
        let w = load_matrix(matrix_path)?;
        let side = matrix_path.with_extension("json");
        let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
        let meta: ModelMeta = serde_json::from_str(&text)?;
        if meta.c != w.ncols() {
            return Err(Error::format(matrix_path, "code length disagrees with sidecar"));
        }
        Ok(Self { w, meta })
    }
}

/// `Sgn(W' y)` as `±1` bits.
pub fn hash_vector(model: &HashModel, y: &DVector<f64>) -> Result<Vec<i8>> {
    if y.len() != model.input_dim() {
        return Err(Error::DimensionMismatch {
            context: "hash input",
            expected: model.input_dim(),
            found: y.len(),
        });
    }
    Ok(model
        .w
        .tr_mul(y)
        .iter()
        .map(|&v| if v >= 0.0 { 1 } else { -1 })
        .collect())
}
