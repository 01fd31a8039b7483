//! Multi-modal feature collections: loading, splitting and synthesis.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::col;
use crate::matrix_io::{load_matrix, save_matrix};

/// One modality's features, one column per image.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalityFeatures {
    pub modality_id: usize,
    pub name: String,
    pub data: DMatrix<f64>,
}

impl ModalityFeatures {
    pub fn new(modality_id: usize, name: impl Into<String>, data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() == 0 {
            return Err(Error::invalid(format!("modality {modality_id} has zero dimensions")));
        }
        if !crate::linalg::all_finite(&data) {
            return Err(Error::NonFinite(format!("features of modality {modality_id}")));
        }
        Ok(Self {
            modality_id,
            name: name.into(),
            data,
        })
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn len(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.data.ncols() == 0
    }

    pub fn column(&self, n: usize) -> &[f64] {
        col(&self.data, n)
    }

    /// Features restricted to the given image indices, in that order.
    pub fn select(&self, indices: &[usize]) -> DMatrix<f64> {
        self.data.select_columns(indices)
    }
}

/// Partition of image indices. Every index appears in exactly one part.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub query: Vec<usize>,
    pub train: Vec<usize>,
    pub database: Vec<usize>,
}

impl Split {
    pub fn all_database(n: usize) -> Self {
        Self {
            query: Vec::new(),
            train: Vec::new(),
            database: (0..n).collect(),
        }
    }

    pub fn total(&self) -> usize {
        self.query.len() + self.train.len() + self.database.len()
    }

    pub fn is_partition_of(&self, n: usize) -> bool {
        let mut seen = vec![false; n];
        for &i in self.query.iter().chain(&self.train).chain(&self.database) {
            if i >= n || seen[i] {
                return false;
            }
            seen[i] = true;
        }
        seen.into_iter().all(|s| s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub modalities: Vec<ModalityFeatures>,
    /// Landmark id per image, starting at 1.
    pub labels: Vec<u32>,
    pub split: Split,
    /// The manifest asked for train-statistics z-scoring.
    pub normalize: bool,
}

impl Dataset {
    pub fn new(modalities: Vec<ModalityFeatures>, labels: Vec<u32>) -> Result<Self> {
        let n = labels.len();
        if modalities.is_empty() {
            return Err(Error::invalid("dataset needs at least one modality"));
        }
        for (p, m) in modalities.iter().enumerate() {
            if m.len() != n {
                return Err(Error::ColumnCountMismatch {
                    modality: p,
                    expected: n,
                    found: m.len(),
                });
            }
        }
        if let Some(i) = labels.iter().position(|&l| l == 0) {
            return Err(Error::LabelOutOfRange {
                line: i + 1,
                value: "0".into(),
            });
        }
        Ok(Self {
            modalities,
            labels,
            split: Split::all_database(n),
            normalize: false,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_modalities(&self) -> usize {
        self.modalities.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.modalities.iter().map(|m| m.dim()).collect()
    }

    pub fn num_landmarks(&self) -> usize {
        self.labels.iter().copied().max().unwrap_or(0) as usize
    }

    /// Features of one image in every modality.
    pub fn image(&self, n: usize) -> Vec<Vec<f64>> {
        self.modalities.iter().map(|m| m.column(n).to_vec()).collect()
    }

    /// Per-modality features stacked into one `(sum d_p) × N` matrix.
    pub fn stacked_features(&self) -> DMatrix<f64> {
        let rows: usize = self.dims().iter().sum();
        let mut out = DMatrix::zeros(rows, self.len());
        let mut off = 0;
        for m in &self.modalities {
            out.rows_mut(off, m.dim()).copy_from(&m.data);
            off += m.dim();
        }
        out
    }

    /// Z-score every feature dimension using statistics of the train part only.
    pub fn zscore_from_train(&mut self) -> Result<()> {
        if self.split.train.is_empty() {
            return Err(Error::invalid("z-scoring needs a non-empty train split"));
        }
        let train = self.split.train.clone();
        let nt = train.len() as f64;
        for m in &mut self.modalities {
            for r in 0..m.dim() {
                let mean = train.iter().map(|&n| m.data[(r, n)]).sum::<f64>() / nt;
                let var = train.iter().map(|&n| (m.data[(r, n)] - mean).powi(2)).sum::<f64>() / nt;
                let sd = if var > 1e-24 { var.sqrt() } else { 1.0 };
                m.data.row_mut(r).apply(|v| *v = (*v - mean) / sd);
            }
        }
        Ok(())
    }

    /// SHA-256 over labels and every feature value.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for m in &self.modalities {
            h.update((m.dim() as u64).to_le_bytes());
            for v in m.data.iter() {
                h.update(v.to_le_bytes());
            }
        }
        for l in &self.labels {
            h.update(l.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ManifestModality {
    pub path: PathBuf,
    #[serde(default)]
    pub name: String,
}

/// JSON dataset manifest. Relative paths resolve against the manifest's directory.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Manifest {
    pub modalities: Vec<ManifestModality>,
    pub labels: PathBuf,
    #[serde(default)]
    pub normalize: bool,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub fn read_labels(path: &Path) -> Result<Vec<u32>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        match t.parse::<i64>() {
            Ok(v) if v >= 1 && v <= u32::MAX as i64 => out.push(v as u32),
            _ => {
                return Err(Error::LabelOutOfRange {
                    line: i + 1,
                    value: t.to_string(),
                })
            }
        }
    }
    Ok(out)
}

pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let labels = read_labels(&resolve(base, &manifest.labels))?;
    let mut modalities = Vec::with_capacity(manifest.modalities.len());
    for (p, entry) in manifest.modalities.iter().enumerate() {
        let path = resolve(base, &entry.path);
        let data = load_matrix(&path)?;
        if data.ncols() != labels.len() {
            return Err(Error::ColumnCountMismatch {
                modality: p,
                expected: labels.len(),
                found: data.ncols(),
            });
        }
        let name = if entry.name.is_empty() {
            format!("m{p}")
        } else {
            entry.name.clone()
        };
        modalities.push(ModalityFeatures::new(p, name, data)?);
    }
    let mut ds = Dataset::new(modalities, labels)?;
    ds.normalize = manifest.normalize;
    Ok(ds)
}

/// Write features, labels and a manifest into `dir`; returns the manifest path.
pub fn save_dataset(ds: &Dataset, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::new();
    for m in &ds.modalities {
        let file = format!("modality_{}.cvdm", m.modality_id);
        save_matrix(&dir.join(&file), &m.data)?;
        entries.push(ManifestModality {
            path: file.into(),
            name: m.name.clone(),
        });
    }
    let labels: String = ds.labels.iter().map(|l| format!("{l}\n")).collect();
    let label_path = dir.join("labels.txt");
    fs::write(&label_path, labels).map_err(|e| Error::io(&label_path, e))?;
    let manifest = Manifest {
        modalities: entries,
        labels: "labels.txt".into(),
        normalize: ds.normalize,
    };
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Stratified random split. Within each label the images are shuffled and
/// cut by the rounded fractions; every part gets at least one image per label
/// and rounding slack goes to the database part.
pub fn split_dataset(mut ds: Dataset, query_frac: f64, train_frac: f64, db_frac: f64, seed: u64) -> Result<Dataset> {
    for f in [query_frac, train_frac, db_frac] {
        if !(f > 0.0) {
            return Err(Error::invalid("split fractions must be positive"));
        }
    }
    if (query_frac + train_frac + db_frac - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "split fractions sum to {}, not 1",
            query_frac + train_frac + db_frac
        )));
    }
    if ds.len() < 10 {
        return Err(Error::invalid(format!(
            "need at least 10 images to split, have {}",
            ds.len()
        )));
    }
    let mut by_label: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, &l) in ds.labels.iter().enumerate() {
        by_label.entry(l).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split = Split {
        query: Vec::new(),
        train: Vec::new(),
        database: Vec::new(),
    };
    for (label, mut idx) in by_label {
        let n = idx.len();
        if n < 3 {
            return Err(Error::invalid(format!(
                "label {label} has {n} images, fewer than the 3 split parts"
            )));
        }
        idx.shuffle(&mut rng);
        let nq = ((query_frac * n as f64).round() as usize).clamp(1, n - 2);
        let nt = ((train_frac * n as f64).round() as usize).clamp(1, n - 1 - nq);
        split.query.extend_from_slice(&idx[..nq]);
        split.train.extend_from_slice(&idx[nq..nq + nt]);
        split.database.extend_from_slice(&idx[nq + nt..]);
    }
    split.query.sort_unstable();
    split.train.sort_unstable();
    split.database.sort_unstable();
    ds.split = split;
    Ok(ds)
}

fn default_latent_dim() -> usize {
    8
}

/// Parameters of the synthetic landmark generator.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SyntheticSpec {
    pub num_landmarks: usize,
    pub images_per_landmark: usize,
    pub dims: Vec<usize>,
    pub noise: f64,
    /// Fraction of each landmark's latent shared across modalities, in `[0, 1]`.
    pub correlation: f64,
    pub seed: u64,
    #[serde(default = "default_latent_dim")]
    pub latent_dim: usize,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_landmarks == 0 || self.images_per_landmark == 0 || self.latent_dim == 0 {
            return Err(Error::invalid("synthetic counts must be at least 1"));
        }
        if self.dims.is_empty() {
            return Err(Error::invalid("synthetic spec needs at least one modality"));
        }
        if let Some(p) = self.dims.iter().position(|&d| d == 0) {
            return Err(Error::invalid(format!("modality {p} has zero dimensions")));
        }
        if !(self.noise > 0.0) || !self.noise.is_finite() {
            return Err(Error::invalid("noise scale must be positive"));
        }
        if !(0.0..=1.0).contains(&self.correlation) {
            return Err(Error::invalid("correlation must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Each landmark gets a latent vector per modality, mixing a shared and a
/// private Gaussian component by `correlation`. Modality `p` observes the
/// latent through a fixed random linear map, and every image adds isotropic
/// noise of scale `noise`. Images are grouped by landmark; labels start at 1.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut gauss = move || -> f64 { StandardNormal.sample(&mut rng) };
    let m = spec.num_landmarks;
    let k = spec.latent_dim;
    let n = m * spec.images_per_landmark;
    let shared = spec.correlation.sqrt();
    let private = (1.0 - spec.correlation).sqrt();

    let shared_latents: Vec<Vec<f64>> = (0..m).map(|_| (0..k).map(|_| gauss()).collect()).collect();
    let mut modalities = Vec::with_capacity(spec.dims.len());
    for (p, &d) in spec.dims.iter().enumerate() {
        let map = DMatrix::from_fn(d, k, |_, _| gauss() / (k as f64).sqrt());
        let latents: Vec<nalgebra::DVector<f64>> = shared_latents
            .iter()
            .map(|s| nalgebra::DVector::from_fn(k, |i, _| shared * s[i] + private * gauss()))
            .collect();
        let centers: Vec<nalgebra::DVector<f64>> = latents.iter().map(|z| &map * z).collect();
        let mut data = DMatrix::zeros(d, n);
        for (j, mut column) in data.column_iter_mut().enumerate() {
            let c = &centers[j / spec.images_per_landmark];
            for r in 0..d {
                column[r] = c[r] + spec.noise * gauss();
            }
        }
        modalities.push(ModalityFeatures::new(p, format!("synthetic_{p}"), data)?);
    }
    let labels = (0..n).map(|j| (j / spec.images_per_landmark) as u32 + 1).collect();
    Dataset::new(modalities, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(noise: f64, seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            num_landmarks: 5,
            images_per_landmark: 50,
            dims: vec![12, 9],
            noise,
            correlation: 0.5,
            seed,
            latent_dim: 8,
        }
    }

    fn one_nn_accuracy(ds: &Dataset) -> f64 {
        let x = ds.stacked_features();
        let n = ds.len();
        let mut hits = 0;
        for i in 0..n {
            let best = (0..n)
                .filter(|&j| j != i)
                .min_by(|&a, &b| {
                    crate::linalg::sq_dist(col(&x, i), col(&x, a))
                        .total_cmp(&crate::linalg::sq_dist(col(&x, i), col(&x, b)))
                })
                .unwrap();
            hits += (ds.labels[best] == ds.labels[i]) as usize;
        }
        hits as f64 / n as f64
    }

    #[test]
    fn zero_noise_limit_collapses_landmarks() {
        let ds = generate_synthetic(&spec(1e-12, 3)).unwrap();
        let x = ds.stacked_features();
        for i in 0..ds.len() {
            for j in 0..ds.len() {
                let d = crate::linalg::dist(col(&x, i), col(&x, j));
                if ds.labels[i] == ds.labels[j] {
                    assert!(d < 1e-9);
                } else {
                    assert!(d > 1e-3);
                }
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_synthetic(&spec(0.3, 11)).unwrap();
        let b = generate_synthetic(&spec(0.3, 11)).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(&spec(0.3, 12)).unwrap();
        assert_ne!(a.modalities[0].data, c.modalities[0].data);
    }

    #[test]
    fn noisy_features_beat_chance() {
        let ds = generate_synthetic(&spec(0.5, 5)).unwrap();
        let acc = one_nn_accuracy(&ds);
        assert!(acc > 0.2, "1-NN accuracy {acc}");
    }

    #[test]
    fn more_noise_does_not_help() {
        let levels = [0.2, 0.6, 1.5];
        let means: Vec<f64> = levels
            .iter()
            .map(|&s| {
                (0..5)
                    .map(|seed| one_nn_accuracy(&generate_synthetic(&spec(s, seed)).unwrap()))
                    .sum::<f64>()
                    / 5.0
            })
            .collect();
        assert!(means[0] >= means[1] && means[1] >= means[2], "{means:?}");
    }

    #[test]
    fn rejects_degenerate_spec() {
        let mut s = spec(0.5, 0);
        s.dims = vec![4, 0];
        assert!(generate_synthetic(&s).is_err());
        let mut s = spec(0.5, 0);
        s.noise = 0.0;
        assert!(generate_synthetic(&s).is_err());
    }

    #[test]
    fn split_sizes_and_partition() {
        let mut s = spec(0.5, 1);
        s.images_per_landmark = 20; // N = 100
        let ds = generate_synthetic(&s).unwrap();
        let ds = split_dataset(ds, 0.1, 0.2, 0.7, 7).unwrap();
        assert_eq!(ds.split.query.len(), 10);
        assert_eq!(ds.split.train.len(), 20);
        assert_eq!(ds.split.database.len(), 70);
        assert!(ds.split.is_partition_of(100));
        for label in 1..=5u32 {
            assert!(ds.split.database.iter().any(|&i| ds.labels[i] == label));
            assert!(ds.split.query.iter().any(|&i| ds.labels[i] == label));
        }
    }

    #[test]
    fn split_is_deterministic_and_accepts_large_ratios() {
        let ds = generate_synthetic(&spec(0.5, 1)).unwrap();
        let a = split_dataset(ds.clone(), 0.1, 0.2, 0.7, 7).unwrap();
        let b = split_dataset(ds.clone(), 0.1, 0.2, 0.7, 7).unwrap();
        assert_eq!(a.split, b.split);
        let c = split_dataset(ds, 0.1, 0.1, 0.8, 7).unwrap();
        assert!(c.split.is_partition_of(250));
        assert_eq!(c.split.train.len(), 25);
    }

    #[test]
    fn split_errors() {
        let ds = generate_synthetic(&spec(0.5, 1)).unwrap();
        assert!(split_dataset(ds.clone(), 0.1, 0.2, 0.6, 7).is_err());
        let tiny = Dataset::new(
            vec![ModalityFeatures::new(0, "a", DMatrix::zeros(1, 12)).unwrap()],
            vec![1, 1, 1, 1, 1, 2, 2, 2, 2, 2, 3, 3],
        )
        .unwrap();
        let err = split_dataset(tiny, 0.1, 0.2, 0.7, 0).unwrap_err();
        assert!(err.to_string().contains("label 3"));
    }

    #[test]
    fn zscore_uses_train_only() {
        let ds = generate_synthetic(&spec(0.5, 2)).unwrap();
        let mut ds = split_dataset(ds, 0.1, 0.2, 0.7, 3).unwrap();
        ds.zscore_from_train().unwrap();
        let m = &ds.modalities[0];
        let t = &ds.split.train;
        let mean = t.iter().map(|&n| m.data[(0, n)]).sum::<f64>() / t.len() as f64;
        let var = t.iter().map(|&n| (m.data[(0, n)] - mean).powi(2)).sum::<f64>() / t.len() as f64;
        assert!(mean.abs() < 1e-10);
        assert!((var - 1.0).abs() < 1e-10);
    }
}
