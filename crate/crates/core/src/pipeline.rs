//! Offline learning and online search wired end to end, plus the on-disk
//! layout of a trained model directory.
//!
//! ```text
//! <out>/views/views.json            selected views per modality
//! <out>/views/modality_<p>.cvdm     exemplar matrices
//! <out>/views/modality_<p>_trace.csv
//! <out>/intermediate_train.cvdm     (+ .json sidecar)
//! <out>/model_c<c>.cvdm             projection W (+ .json sidecar)
//! <out>/codes_c<c>.cvdh             packed database codes
//! <out>/run_manifest.json
//! <out>/cache/                      stage cache keyed by input hashes
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::canonical_views::{mine_all_modalities, BandwidthRule, CanonicalViewSet, SimilarityFn};
use crate::config::RunConfig;
use crate::dataset::{generate_synthetic, load_dataset, split_dataset, Dataset, Split};
use crate::error::{Error, Result, StageExt};
use crate::eval::{evaluate_codes, ConfigEcho, MetricReport};
use crate::graph::{build_A, build_graph, laplacian};
use crate::intermediate::{encode_images, encode_query, save_rep, CodingParams, IntermediateRep};
use crate::linalg::sgn;
use crate::matrix_io::{load_matrix, save_matrix};
use crate::search::{pack, pack_signs, query, PackedCodes, SearchResult};
use crate::solver::{hash_vector, solve, HashModel, ModelMeta, SolveOutcome};

/// Load or synthesize the dataset, split it with `seed`, and z-score on the
/// train part when the manifest asks for it.
pub fn prepare_dataset(cfg: &RunConfig, seed: u64) -> Result<Dataset> {
    let ds = match (&cfg.manifest, &cfg.synthetic) {
        (Some(m), _) => load_dataset(m)?,
        (None, Some(spec)) => generate_synthetic(spec)?,
        (None, None) => return Err(Error::invalid("config needs either `manifest` or `synthetic`")),
    };
    let [q, t, d] = cfg.split;
    let mut ds = split_dataset(ds, q, t, d, seed)?;
    if ds.normalize {
        ds.zscore_from_train()?;
    }
    Ok(ds)
}

/// How images become hashing inputs.
#[derive(Debug, Clone)]
pub enum Representation {
    CanonicalViews {
        views: Vec<CanonicalViewSet>,
        params: CodingParams,
    },
    /// Stacked raw features, bypassing view mining and sparse coding.
    RawFeatures { dims: Vec<usize> },
}

impl Representation {
    pub fn dim(&self) -> usize {
        match self {
            Representation::CanonicalViews { views, .. } => views.iter().map(|v| v.len()).sum(),
            Representation::RawFeatures { dims } => dims.iter().sum(),
        }
    }

    pub fn encode_images(&self, ds: &Dataset, images: &[usize]) -> Result<DMatrix<f64>> {
        match self {
            Representation::CanonicalViews { views, params } => Ok(encode_images(ds, images, views, params)?.data),
            Representation::RawFeatures { .. } => Ok(ds.stacked_features().select_columns(images)),
        }
    }

    pub fn encode_query(&self, x_multi: &[Vec<f64>]) -> Result<DVector<f64>> {
        match self {
            Representation::CanonicalViews { views, params } => encode_query(x_multi, views, params),
            Representation::RawFeatures { dims } => {
                if x_multi.len() != dims.len() {
                    return Err(Error::DimensionMismatch {
                        context: "query modalities",
                        expected: dims.len(),
                        found: x_multi.len(),
                    });
                }
                for (x, &d) in x_multi.iter().zip(dims) {
                    if x.len() != d {
                        return Err(Error::DimensionMismatch {
                            context: "query feature dimension",
                            expected: d,
                            found: x.len(),
                        });
                    }
                }
                Ok(DVector::from_iterator(self.dim(), x_multi.iter().flatten().copied()))
            }
        }
    }
}

/// Mine views and freeze the coding parameters, or pick the raw-feature path.
pub fn fit_representation(ds: &Dataset, cfg: &RunConfig, seed: u64) -> Result<Representation> {
    if cfg.bypass_canonical_views {
        return Ok(Representation::RawFeatures { dims: ds.dims() });
    }
    let views = mine_all_modalities(ds, cfg.t, BandwidthRule::MeanPairwise, seed).stage("mine")?;
    let params = cfg.coding().resolve(ds, seed).stage("encode")?;
    Ok(Representation::CanonicalViews { views, params })
}

/// One trained code length.
#[derive(Debug, Clone)]
pub struct TrainedLength {
    pub model: HashModel,
    pub solve: SolveOutcome,
    pub database_codes: PackedCodes,
}

fn model_meta(rep: &Representation, ds: &Dataset, c: usize, gamma: f64) -> ModelMeta {
    match rep {
        Representation::CanonicalViews { views, params } => ModelMeta {
            c,
            t: views.first().map_or(0, |v| v.len()),
            p: views.len(),
            r: params.r,
            sigma: params.sigma,
            rho: params.rho.clone(),
            gamma,
            modality_dims: ds.dims(),
            exemplar_files: (0..views.len()).map(|p| format!("views/modality_{p}.cvdm")).collect(),
            raw_features: false,
        },
        Representation::RawFeatures { dims } => ModelMeta {
            c,
            t: 0,
            p: dims.len(),
            r: 0,
            sigma: 0.0,
            rho: vec![],
            gamma,
            modality_dims: dims.clone(),
            exemplar_files: vec![],
            raw_features: true,
        },
    }
}

/// Graph, solver and projection for one code length on prepared inputs.
pub fn train_length(
    y_train: &DMatrix<f64>,
    y_database: &DMatrix<f64>,
    cfg: &RunConfig,
    c: usize,
    meta: ModelMeta,
) -> Result<TrainedLength> {
    let graph = build_graph(y_train, cfg.k, None).stage("graph")?;
    let a = build_A(laplacian(&graph), y_train, cfg.alpha, cfg.beta, cfg.gamma).stage("graph")?;
    let hash_cfg = cfg.hash(c);
    let outcome = solve(y_train, &a, &hash_cfg, None).stage("solve")?;
    let model = HashModel::learn(y_train, &outcome.codes, cfg.gamma, meta).stage("hash")?;
    let database_codes = pack(&model.hash_matrix(y_database)?).stage("index")?;
    Ok(TrainedLength {
        model,
        solve: outcome,
        database_codes,
    })
}

/// Everything the offline stage produces for one seed.
#[derive(Debug, Clone)]
pub struct Trained {
    pub dataset: Dataset,
    pub representation: Representation,
    pub y_train: DMatrix<f64>,
    pub y_database: DMatrix<f64>,
    pub lengths: Vec<(usize, TrainedLength)>,
}

impl Trained {
    pub fn length(&self, c: usize) -> Option<&TrainedLength> {
        self.lengths.iter().find(|(k, _)| *k == c).map(|(_, t)| t)
    }

    /// Hash the query split with the model for code length `c`.
    pub fn query_codes(&self, c: usize) -> Result<PackedCodes> {
        let t = self
            .length(c)
            .ok_or_else(|| Error::invalid(format!("no model for c = {c}")))?;
        let yq = self
            .representation
            .encode_images(&self.dataset, &self.dataset.split.query)?;
        pack(&t.model.hash_matrix(&yq)?)
    }

    pub fn labels_of(&self, ids: &[usize]) -> Vec<u32> {
        ids.iter().map(|&i| self.dataset.labels[i]).collect()
    }
}

/// Offline learning for every configured code length, in memory.
pub fn train_in_memory(cfg: &RunConfig, seed: u64) -> Result<Trained> {
    cfg.validate()?;
    let ds = prepare_dataset(cfg, seed).stage("dataset")?;
    let rep = fit_representation(&ds, cfg, seed)?;
    train_with_representation(ds, rep, cfg)
}

pub fn train_with_representation(ds: Dataset, rep: Representation, cfg: &RunConfig) -> Result<Trained> {
    let y_train = rep.encode_images(&ds, &ds.split.train).stage("encode")?;
    let y_database = rep.encode_images(&ds, &ds.split.database).stage("encode")?;
    let mut lengths = Vec::new();
    for c in cfg.code_lengths() {
        let meta = model_meta(&rep, &ds, c, cfg.gamma);
        lengths.push((c, train_length(&y_train, &y_database, cfg, c, meta)?));
    }
    Ok(Trained {
        dataset: ds,
        representation: rep,
        y_train,
        y_database,
        lengths,
    })
}

/// Uniform random ±1 codes.
pub fn random_codes(c: usize, n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(c, n, |_, _| if rng.random_bool(0.5) { 1.0 } else { -1.0 })
}

/// Signed one-hot of the label: bit `(l - 1) mod c` is +1, the rest −1.
pub fn oracle_codes(labels: &[u32], c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(c, labels.len(), |j, i| {
        if (labels[i] as usize - 1) % c == j {
            1.0
        } else {
            -1.0
        }
    })
}

/// Sign-of-PCA codes fitted on `fit` and applied to each of `apply`.
pub fn pca_sign_codes(fit: &DMatrix<f64>, apply: &[&DMatrix<f64>], c: usize) -> Result<Vec<DMatrix<f64>>> {
    if c > fit.nrows() {
        return Err(Error::invalid(format!(
            "{c} bits exceed feature dimension {}",
            fit.nrows()
        )));
    }
    let mean = fit.column_mean();
    let mut centered = fit.clone();
    for mut col in centered.column_iter_mut() {
        col -= &mean;
    }
    let eig = (&centered * centered.transpose()).symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let dirs = eig.eigenvectors.select_columns(&order[..c]);
    Ok(apply
        .iter()
        .map(|x| {
            let mut xc = (*x).clone();
            for mut col in xc.column_iter_mut() {
                col -= &mean;
            }
            (dirs.transpose() * xc).map(sgn)
        })
        .collect())
}

// ---------------------------------------------------------------------------
// on-disk model directory

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ViewRecord {
    pub modality_id: usize,
    pub indices: Vec<usize>,
    pub image_ids: Vec<usize>,
    pub bandwidth: f64,
    pub score_trace: Vec<f64>,
    pub gain_evaluations: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SolverSummary {
    pub iterations: usize,
    pub converged: bool,
    pub initial_objective: f64,
    pub objective_trace: Vec<f64>,
    pub residual_trace: Vec<crate::solver::Residuals>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunManifest {
    pub config: RunConfig,
    pub seed: u64,
    pub dataset_hash: String,
    pub split: Split,
    pub code_lengths: Vec<usize>,
    /// Relative artifact path → SHA-256 of its bytes.
    pub artifacts: BTreeMap<String, String>,
    pub solver: BTreeMap<usize, SolverSummary>,
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn key_of(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    hex::encode(h.finalize())[..16].to_string()
}

/// Cache keys for the mining and coding stages.
fn stage_keys(ds: &Dataset, cfg: &RunConfig, seed: u64) -> Result<(String, String)> {
    let dataset = ds.content_hash();
    let split = serde_json::to_string(&ds.split)?;
    let mine = key_of(&["mine", &dataset, &split, &cfg.t.to_string(), &seed.to_string()]);
    let coding = serde_json::to_string(&cfg.coding())?;
    let encode = key_of(&["encode", &mine, &coding]);
    Ok((mine, encode))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn views_from_records(ds: &Dataset, records: &[ViewRecord]) -> Result<Vec<CanonicalViewSet>> {
    records
        .iter()
        .map(|r| {
            let m = ds
                .modalities
                .get(r.modality_id)
                .ok_or_else(|| Error::invalid("cached views reference a missing modality"))?;
            Ok(CanonicalViewSet {
                modality_id: r.modality_id,
                indices: r.indices.clone(),
                image_ids: r.image_ids.clone(),
                exemplars: m.select(&r.image_ids),
                score_trace: r.score_trace.clone(),
                similarity: SimilarityFn::gaussian(r.bandwidth)?,
                gain_evaluations: r.gain_evaluations,
            })
        })
        .collect()
}

fn view_records(views: &[CanonicalViewSet]) -> Vec<ViewRecord> {
    views
        .iter()
        .map(|v| ViewRecord {
            modality_id: v.modality_id,
            indices: v.indices.clone(),
            image_ids: v.image_ids.clone(),
            bandwidth: v.similarity.bandwidth,
            score_trace: v.score_trace.clone(),
            gain_evaluations: v.gain_evaluations,
        })
        .collect()
}

/// Mining with an on-disk cache under `cache_dir`.
pub fn mine_cached(ds: &Dataset, cfg: &RunConfig, seed: u64, cache_dir: &Path) -> Result<Vec<CanonicalViewSet>> {
    let (mine_key, _) = stage_keys(ds, cfg, seed)?;
    let path = cache_dir.join(format!("views-{mine_key}.json"));
    if path.exists() {
        let records: Vec<ViewRecord> = read_json(&path)?;
        return views_from_records(ds, &records);
    }
    let views = mine_all_modalities(ds, cfg.t, BandwidthRule::MeanPairwise, seed).stage("mine")?;
    fs::create_dir_all(cache_dir).map_err(|e| Error::io(cache_dir, e))?;
    write_json(&path, &view_records(&views))?;
    Ok(views)
}

/// Coding of the train and database parts, cached under `cache_dir`.
pub fn encode_cached(
    ds: &Dataset,
    rep: &Representation,
    cfg: &RunConfig,
    seed: u64,
    cache_dir: &Path,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (_, key) = stage_keys(ds, cfg, seed)?;
    let train_path = cache_dir.join(format!("encode-{key}-train.cvdm"));
    let db_path = cache_dir.join(format!("encode-{key}-database.cvdm"));
    if train_path.exists() && db_path.exists() {
        return Ok((load_matrix(&train_path)?, load_matrix(&db_path)?));
    }
    let y_train = rep.encode_images(ds, &ds.split.train).stage("encode")?;
    let y_db = rep.encode_images(ds, &ds.split.database).stage("encode")?;
    fs::create_dir_all(cache_dir).map_err(|e| Error::io(cache_dir, e))?;
    save_matrix(&train_path, &y_train)?;
    save_matrix(&db_path, &y_db)?;
    Ok((y_train, y_db))
}

/// Fit the representation with the stage cache in `<out>/cache`.
pub fn fit_representation_cached(ds: &Dataset, cfg: &RunConfig, seed: u64) -> Result<Representation> {
    if cfg.bypass_canonical_views {
        return Ok(Representation::RawFeatures { dims: ds.dims() });
    }
    let cache = cfg.output_dir.join("cache");
    let views = mine_cached(ds, cfg, seed, &cache)?;
    let params = cfg.coding().resolve(ds, seed).stage("encode")?;
    Ok(Representation::CanonicalViews { views, params })
}

/// Write the mined views into `<dir>/views/`.
pub fn write_views(dir: &Path, views: &[CanonicalViewSet]) -> Result<Vec<String>> {
    let vdir = dir.join("views");
    fs::create_dir_all(&vdir).map_err(|e| Error::io(&vdir, e))?;
    let mut written = vec!["views/views.json".to_string()];
    write_json(&vdir.join("views.json"), &view_records(views))?;
    for v in views {
        let m = format!("views/modality_{}.cvdm", v.modality_id);
        save_matrix(&dir.join(&m), &v.exemplars)?;
        let t = format!("views/modality_{}_trace.csv", v.modality_id);
        v.save_trace_csv(&dir.join(&t))?;
        written.push(m);
        written.push(t);
    }
    Ok(written)
}

/// Offline learning with every artifact written under `cfg.output_dir`.
pub fn train_to_disk(cfg: &RunConfig) -> Result<RunManifest> {
    cfg.validate()?;
    let seed = cfg.primary_seed();
    let out = &cfg.output_dir;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let ds = prepare_dataset(cfg, seed).stage("dataset")?;
    let rep = fit_representation_cached(&ds, cfg, seed)?;
    let (y_train, y_db) = encode_cached(&ds, &rep, cfg, seed, &out.join("cache"))?;

    let mut written = Vec::new();
    if let Representation::CanonicalViews { views, params } = &rep {
        written.extend(write_views(out, views)?);
        let rep_out = IntermediateRep {
            offsets: (0..views.len()).map(|p| p * cfg.t).collect(),
            data: y_train.clone(),
        };
        save_rep(&rep_out, params, &out.join("intermediate_train.cvdm"))?;
        written.push("intermediate_train.cvdm".into());
        written.push("intermediate_train.json".into());
    }
    let mut solver = BTreeMap::new();
    for c in cfg.code_lengths() {
        let meta = model_meta(&rep, &ds, c, cfg.gamma);
        let t = train_length(&y_train, &y_db, cfg, c, meta)?;
        let model_file = format!("model_c{c}.cvdm");
        t.model.save(&out.join(&model_file))?;
        let code_file = format!("codes_c{c}.cvdh");
        t.database_codes.save(&out.join(&code_file))?;
        written.extend([model_file, format!("model_c{c}.json"), code_file]);
        solver.insert(
            c,
            SolverSummary {
                iterations: t.solve.iterations,
                converged: t.solve.converged,
                initial_objective: t.solve.initial_objective,
                objective_trace: t.solve.state.objective_trace.clone(),
                residual_trace: t.solve.state.residual_trace.clone(),
            },
        );
    }
    let mut artifacts = BTreeMap::new();
    for w in written {
        artifacts.insert(w.clone(), file_sha256(&out.join(&w))?);
    }
    let manifest = RunManifest {
        config: cfg.clone(),
        seed,
        dataset_hash: ds.content_hash(),
        split: ds.split.clone(),
        code_lengths: cfg.code_lengths(),
        artifacts,
        solver,
    };
    write_json(&out.join("run_manifest.json"), &manifest)?;
    Ok(manifest)
}

/// A trained model directory opened for querying.
#[derive(Debug, Clone)]
pub struct ModelDir {
    pub root: PathBuf,
    pub manifest: RunManifest,
    pub representation: Representation,
}

impl ModelDir {
    pub fn open(root: &Path) -> Result<Self> {
        let manifest: RunManifest = read_json(&root.join("run_manifest.json"))?;
        let c0 = *manifest
            .code_lengths
            .first()
            .ok_or_else(|| Error::format(root, "run manifest lists no code lengths"))?;
        let meta = HashModel::load(&root.join(format!("model_c{c0}.cvdm")))?.meta;
        let representation = if meta.raw_features {
            Representation::RawFeatures {
                dims: meta.modality_dims.clone(),
            }
        } else {
            let records: Vec<ViewRecord> = read_json(&root.join("views/views.json"))?;
            let mut views = Vec::with_capacity(records.len());
            for (r, file) in records.iter().zip(&meta.exemplar_files) {
                views.push(CanonicalViewSet {
                    modality_id: r.modality_id,
                    indices: r.indices.clone(),
                    image_ids: r.image_ids.clone(),
                    exemplars: load_matrix(&root.join(file))?,
                    score_trace: r.score_trace.clone(),
                    similarity: SimilarityFn::gaussian(r.bandwidth)?,
                    gain_evaluations: r.gain_evaluations,
                });
            }
            Representation::CanonicalViews {
                views,
                params: CodingParams {
                    r: meta.r,
                    sigma: meta.sigma,
                    rho: meta.rho.clone(),
                },
            }
        };
        Ok(Self {
            root: root.to_path_buf(),
            manifest,
            representation,
        })
    }

    pub fn default_length(&self) -> usize {
        self.manifest.code_lengths[0]
    }

    pub fn model(&self, c: usize) -> Result<HashModel> {
        HashModel::load(&self.root.join(format!("model_c{c}.cvdm")))
    }

    pub fn codes(&self, c: usize) -> Result<PackedCodes> {
        PackedCodes::load(&self.root.join(format!("codes_c{c}.cvdh")))
    }

    /// Encode, hash and rank one multi-modal query. Hit ids are dataset
    /// image ids.
    pub fn query(&self, x_multi: &[Vec<f64>], c: usize, k: usize) -> Result<SearchResult> {
        let model = self.model(c)?;
        let y = self.representation.encode_query(x_multi)?;
        let bits = hash_vector(&model, &y)?;
        let code = pack_signs(&bits)?;
        let mut res = query(&self.codes(c)?, &code, k)?;
        for h in &mut res.hits {
            h.id = self.manifest.split.database[h.id];
        }
        Ok(res)
    }

    /// Rebuild the packed database codes for `c` from the model.
    pub fn reindex(&self, ds: &Dataset, c: usize) -> Result<PackedCodes> {
        let model = self.model(c)?;
        let y = self.representation.encode_images(ds, &self.manifest.split.database)?;
        let codes = pack(&model.hash_matrix(&y)?)?;
        codes.save(&self.root.join(format!("codes_c{c}.cvdh")))?;
        Ok(codes)
    }

    /// Dataset as it was prepared for training.
    pub fn dataset(&self) -> Result<Dataset> {
        let ds = prepare_dataset(&self.manifest.config, self.manifest.seed)?;
        if ds.content_hash() != self.manifest.dataset_hash && !ds.normalize {
            return Err(Error::invalid("dataset content differs from the one used for training"));
        }
        Ok(ds)
    }
}

/// Methods the evaluation harness knows how to score.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Cvdmh,
    Random,
    Oracle,
    PcaRaw,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Cvdmh => "cvdmh",
            Method::Random => "random",
            Method::Oracle => "oracle",
            Method::PcaRaw => "pca_raw",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "cvdmh" => Ok(Method::Cvdmh),
            "random" => Ok(Method::Random),
            "oracle" => Ok(Method::Oracle),
            "pca_raw" | "pca" => Ok(Method::PcaRaw),
            other => Err(Error::invalid(format!("unknown method `{other}`"))),
        }
    }
}

/// Database and query codes for a method; `learned` supplies the trained codes.
pub fn method_codes(
    method: Method,
    ds: &Dataset,
    c: usize,
    seed: u64,
    learned: impl FnOnce() -> Result<(PackedCodes, PackedCodes)>,
) -> Result<(PackedCodes, PackedCodes)> {
    let db = &ds.split.database;
    let q = &ds.split.query;
    match method {
        Method::Cvdmh => learned(),
        Method::Random => Ok((
            pack(&random_codes(c, db.len(), seed ^ 0xd1b))?,
            pack(&random_codes(c, q.len(), seed ^ 0x9e3))?,
        )),
        Method::Oracle => {
            let lab = |ids: &[usize]| ids.iter().map(|&i| ds.labels[i]).collect::<Vec<_>>();
            Ok((pack(&oracle_codes(&lab(db), c))?, pack(&oracle_codes(&lab(q), c))?))
        }
        Method::PcaRaw => {
            let x = ds.stacked_features();
            let fit = x.select_columns(&ds.split.train);
            let xd = x.select_columns(db);
            let xq = x.select_columns(q);
            let codes = pca_sign_codes(&fit, &[&xd, &xq], c)?;
            Ok((pack(&codes[0])?, pack(&codes[1])?))
        }
    }
}

/// Score a method on the query split against the database split.
pub fn evaluate_method(
    method: Method,
    ds: &Dataset,
    c: usize,
    seed: u64,
    cfg: &RunConfig,
    learned: impl FnOnce() -> Result<(PackedCodes, PackedCodes)>,
) -> Result<MetricReport> {
    let (db, q) = method_codes(method, ds, c, seed, learned)?;
    let lab = |ids: &[usize]| ids.iter().map(|&i| ds.labels[i]).collect::<Vec<_>>();
    evaluate_codes(
        &db,
        &lab(&ds.split.database),
        &q,
        &lab(&ds.split.query),
        cfg.cutoff,
        &crate::eval::default_scopes(),
        ConfigEcho {
            method: method.name().into(),
            c,
            t: cfg.t,
            r: cfg.r,
            seeds: vec![seed],
        },
    )
}
