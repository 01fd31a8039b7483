//! Canonical view mining.
//!
//! A view set is scored by how similar its members are to the rest of the
//! pool (representativeness) minus how similar they are to each other
//! (redundancy). The score is submodular, so views are picked greedily by
//! marginal gain.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, ModalityFeatures};
use crate::error::{Error, Result};
use crate::linalg::{col, mean_pairwise_distance, sq_dist};

/// Number of column pairs sampled when estimating the kernel bandwidth.
pub const BANDWIDTH_SAMPLE_PAIRS: usize = 1_000;

/// Gaussian similarity `exp(-|a - b|^2 / (2 w^2))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityFn {
    pub bandwidth: f64,
}

impl SimilarityFn {
    pub fn gaussian(bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0) || !bandwidth.is_finite() {
            return Err(Error::invalid(format!("bandwidth must be positive, got {bandwidth}")));
        }
        Ok(Self { bandwidth })
    }

    /// Bandwidth set to the mean pairwise distance of the pool (sampled).
    pub fn auto(pool: &DMatrix<f64>, seed: u64) -> Self {
        let w = mean_pairwise_distance(pool, BANDWIDTH_SAMPLE_PAIRS, seed);
        Self {
            bandwidth: if w > 0.0 && w.is_finite() { w } else { 1.0 },
        }
    }

    #[inline]
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        (-sq_dist(a, b) / (2.0 * self.bandwidth * self.bandwidth)).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub enum BandwidthRule {
    #[default]
    MeanPairwise,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalViewSet {
    pub modality_id: usize,
    /// Selected positions within the mining pool, in selection order.
    pub indices: Vec<usize>,
    /// Dataset-level image ids of the selections.
    pub image_ids: Vec<usize>,
    /// Column `t` is the feature of `indices[t]`.
    pub exemplars: DMatrix<f64>,
    /// Score of the growing set after each greedy step.
    pub score_trace: Vec<f64>,
    pub similarity: SimilarityFn,
    /// Marginal gains evaluated during mining.
    pub gain_evaluations: usize,
}

impl CanonicalViewSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn write_trace_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["step", "chosen_index", "h_value"])?;
        for (step, (&idx, &h)) in self.indices.iter().zip(&self.score_trace).enumerate() {
            wr.write_record([(step + 1).to_string(), idx.to_string(), format!("{h:.17e}")])?;
        }
        wr.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn save_trace_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_trace_csv(f)
    }
}

fn check_indices(view: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    for &v in view {
        if v >= n {
            return Err(Error::invalid(format!("view index {v} outside pool of {n}")));
        }
        if std::mem::replace(&mut seen[v], true) {
            return Err(Error::DuplicateIndex(v));
        }
    }
    Ok(())
}

/// Total similarity from each view to every other pool member.
pub fn rep_score(view: &[usize], pool: &ModalityFeatures, sim: &SimilarityFn) -> Result<f64> {
    check_indices(view, pool.len())?;
    Ok(view
        .iter()
        .map(|&i| {
            (0..pool.len())
                .filter(|&j| j != i)
                .map(|j| sim.eval(pool.column(i), pool.column(j)))
                .sum::<f64>()
        })
        .sum())
}

/// Similarity summed over ordered pairs of distinct views.
pub fn red_score(view: &[usize], pool: &ModalityFeatures, sim: &SimilarityFn) -> Result<f64> {
    check_indices(view, pool.len())?;
    let mut acc = 0.0;
    for (a, &i) in view.iter().enumerate() {
        for &j in &view[a + 1..] {
            acc += 2.0 * sim.eval(pool.column(i), pool.column(j));
        }
    }
    Ok(acc)
}

pub fn h_score(view: &[usize], pool: &ModalityFeatures, sim: &SimilarityFn) -> Result<f64> {
    Ok(rep_score(view, pool, sim)? - red_score(view, pool, sim)?)
}

/// Greedy maximization of `h` with `t` picks.
///
/// Each candidate's marginal gain is `Rep(v) - 2 * sum_{u in C} g(u, v)`; the
/// penalty term is updated in O(N) after every pick. Ties go to the lowest
/// pool index.
pub fn greedy_mine(pool: &ModalityFeatures, t: usize, sim: &SimilarityFn) -> Result<CanonicalViewSet> {
    let n = pool.len();
    if t == 0 {
        return Err(Error::invalid("canonical view count must be at least 1"));
    }
    if t > n {
        return Err(Error::invalid(format!(
            "requested {t} canonical views from a pool of {n}"
        )));
    }
    let x = &pool.data;
    let rep: Vec<f64> = crate::par::map_indices(n, |i| {
        let ci = col(x, i);
        (0..n).filter(|&j| j != i).map(|j| sim.eval(ci, col(x, j))).sum()
    });
    let mut penalty = vec![0.0; n];
    let mut taken = vec![false; n];
    let mut indices = Vec::with_capacity(t);
    let mut trace = Vec::with_capacity(t);
    let mut h = 0.0;
    let mut evaluations = 0;
    for _ in 0..t {
        let mut best: Option<(usize, f64)> = None;
        for v in (0..n).filter(|&v| !taken[v]) {
            evaluations += 1;
            let gain = rep[v] - penalty[v];
            if best.is_none_or(|(_, g)| gain > g) {
                best = Some((v, gain));
            }
        }
        let (chosen, gain) = best.expect("pool not exhausted");
        taken[chosen] = true;
        indices.push(chosen);
        h += gain;
        trace.push(h);
        let cc = col(x, chosen);
        let bumps = crate::par::map_indices(n, |v| if taken[v] { 0.0 } else { 2.0 * sim.eval(cc, col(x, v)) });
        for (p, b) in penalty.iter_mut().zip(bumps) {
            *p += b;
        }
    }
    Ok(CanonicalViewSet {
        modality_id: pool.modality_id,
        exemplars: pool.select(&indices),
        image_ids: indices.clone(),
        indices,
        score_trace: trace,
        similarity: *sim,
        gain_evaluations: evaluations,
    })
}

/// Mine `t` views in every modality from the train split. Modalities run
/// independently; `image_ids` are mapped back to dataset indices.
pub fn mine_all_modalities(ds: &Dataset, t: usize, rule: BandwidthRule, seed: u64) -> Result<Vec<CanonicalViewSet>> {
    let train = &ds.split.train;
    if train.is_empty() {
        return Err(Error::invalid("canonical view mining needs a non-empty train split"));
    }
    let results = crate::par::map_slice(&ds.modalities, |m| {
        let pool = ModalityFeatures {
            modality_id: m.modality_id,
            name: m.name.clone(),
            data: m.select(train),
        };
        let sim = match rule {
            BandwidthRule::MeanPairwise => SimilarityFn::auto(&pool.data, seed),
            BandwidthRule::Fixed(w) => SimilarityFn::gaussian(w)?,
        };
        let mut set = greedy_mine(&pool, t, &sim)?;
        set.image_ids = set.indices.iter().map(|&i| train[i]).collect();
        Ok(set)
    });
    results.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pool(n: usize, d: usize, seed: u64) -> ModalityFeatures {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = DMatrix::from_fn(d, n, |_, _| rng.random_range(-1.0..1.0));
        ModalityFeatures::new(0, "r", data).unwrap()
    }

    fn brute_h(view: &[usize], pool: &ModalityFeatures, sim: &SimilarityFn) -> f64 {
        let mut rep = 0.0;
        for &i in view {
            for j in 0..pool.len() {
                if i != j {
                    rep += sim.eval(pool.column(i), pool.column(j));
                }
            }
        }
        let mut red = 0.0;
        for &i in view {
            for &j in view {
                if i != j {
                    red += sim.eval(pool.column(i), pool.column(j));
                }
            }
        }
        rep - red
    }

    #[test]
    fn empty_and_identical_points() {
        let pool = ModalityFeatures::new(0, "p", DMatrix::from_element(2, 3, 0.5)).unwrap();
        let sim = SimilarityFn::gaussian(1.0).unwrap();
        assert_eq!(rep_score(&[], &pool, &sim).unwrap(), 0.0);
        assert_eq!(h_score(&[], &pool, &sim).unwrap(), 0.0);
        assert_eq!(rep_score(&[0], &pool, &sim).unwrap(), 2.0);
        assert_eq!(red_score(&[1], &pool, &sim).unwrap(), 0.0);
        assert_eq!(red_score(&[0, 2], &pool, &sim).unwrap(), 2.0);
        assert_eq!(h_score(&[1], &pool, &sim).unwrap(), 2.0);
        assert!(matches!(rep_score(&[1, 1], &pool, &sim), Err(Error::DuplicateIndex(1))));
        assert!(red_score(&[0, 0], &pool, &sim).is_err());
    }

    #[test]
    fn scores_match_double_sums() {
        let pool = random_pool(8, 3, 1);
        let sim = SimilarityFn::auto(&pool.data, 0);
        let view = [2, 5];
        let rep: f64 = view
            .iter()
            .map(|&i| {
                (0..8)
                    .filter(|&j| j != i)
                    .map(|j| sim.eval(pool.column(i), pool.column(j)))
                    .sum::<f64>()
            })
            .sum();
        assert!((rep_score(&view, &pool, &sim).unwrap() - rep).abs() < 1e-12);
        let view3 = [1, 4, 7];
        let red: f64 = view3
            .iter()
            .flat_map(|&i| view3.iter().map(move |&j| (i, j)))
            .filter(|(i, j)| i != j)
            .map(|(i, j)| sim.eval(pool.column(i), pool.column(j)))
            .sum();
        assert!((red_score(&view3, &pool, &sim).unwrap() - red).abs() < 1e-12);
        assert!((h_score(&view3, &pool, &sim).unwrap() - brute_h(&view3, &pool, &sim)).abs() < 1e-12);
    }

    #[test]
    fn similarity_is_symmetric_and_bounded() {
        let pool = random_pool(10, 4, 2);
        let sim = SimilarityFn::auto(&pool.data, 0);
        for i in 0..10 {
            assert_eq!(sim.eval(pool.column(i), pool.column(i)), 1.0);
            for j in 0..10 {
                let g = sim.eval(pool.column(i), pool.column(j));
                assert!((0.0..=1.0).contains(&g));
                assert_eq!(g, sim.eval(pool.column(j), pool.column(i)));
            }
        }
        assert!(SimilarityFn::gaussian(0.0).is_err());
    }

    #[test]
    fn two_clusters_one_exemplar_each() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let data = DMatrix::from_fn(2, 20, |_, c| {
            let center = if c < 10 { 0.0 } else { 50.0 };
            center + rng.random_range(-1.0..1.0)
        });
        let pool = ModalityFeatures::new(0, "c", data).unwrap();
        let sim = SimilarityFn::auto(&pool.data, 0);
        let set = greedy_mine(&pool, 2, &sim).unwrap();
        assert_ne!(set.indices[0] < 10, set.indices[1] < 10);
        // exhaustive T=2 optimum
        let mut best = (f64::MIN, (0, 0));
        for i in 0..20 {
            for j in i + 1..20 {
                let h = brute_h(&[i, j], &pool, &sim);
                if h > best.0 {
                    best = (h, (i, j));
                }
            }
        }
        let mut got = set.indices.clone();
        got.sort();
        assert_eq!((got[0], got[1]), best.1);
    }

    #[test]
    fn exhausting_the_pool() {
        let pool = random_pool(7, 2, 4);
        let sim = SimilarityFn::auto(&pool.data, 0);
        let set = greedy_mine(&pool, 7, &sim).unwrap();
        let mut idx = set.indices.clone();
        idx.sort();
        assert_eq!(idx, (0..7).collect::<Vec<_>>());
        assert!(greedy_mine(&pool, 8, &sim).is_err());
        assert!(greedy_mine(&pool, 0, &sim).is_err());
    }

    #[test]
    fn trace_matches_h_and_exemplars_match_indices() {
        let pool = random_pool(40, 3, 5);
        let sim = SimilarityFn::auto(&pool.data, 0);
        let set = greedy_mine(&pool, 10, &sim).unwrap();
        for (k, &h) in set.score_trace.iter().enumerate() {
            let direct = h_score(&set.indices[..=k], &pool, &sim).unwrap();
            assert!((h - direct).abs() < 1e-9 * direct.abs().max(1.0));
        }
        assert!(set.score_trace.windows(2).all(|w| w[1] >= w[0]));
        for (t, &i) in set.indices.iter().enumerate() {
            assert_eq!(set.exemplars.column(t), pool.data.column(i));
        }
        // O(N T) gain evaluations: sum over steps of remaining candidates
        assert_eq!(set.gain_evaluations, (0..10).map(|s| 40 - s).sum::<usize>());
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let pool = ModalityFeatures::new(0, "p", DMatrix::from_element(1, 5, 1.0)).unwrap();
        let sim = SimilarityFn::gaussian(1.0).unwrap();
        let set = greedy_mine(&pool, 3, &sim).unwrap();
        assert_eq!(set.indices, vec![0, 1, 2]);
    }

    #[test]
    fn trace_csv_format() {
        let pool = random_pool(6, 2, 1);
        let sim = SimilarityFn::auto(&pool.data, 0);
        let set = greedy_mine(&pool, 2, &sim).unwrap();
        let mut buf = Vec::new();
        set.write_trace_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "step,chosen_index,h_value");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with(&format!("1,{},", set.indices[0])));
    }

    #[test]
    fn modalities_mined_on_train_only() {
        use crate::dataset::{generate_synthetic, split_dataset, SyntheticSpec};
        let ds = generate_synthetic(&SyntheticSpec {
            num_landmarks: 3,
            images_per_landmark: 20,
            dims: vec![5, 5],
            noise: 0.3,
            correlation: 1.0,
            seed: 1,
            latent_dim: 4,
        })
        .unwrap();
        let mut ds = split_dataset(ds, 0.1, 0.4, 0.5, 2).unwrap();
        ds.modalities[1].data = ds.modalities[0].data.clone();
        let sets = mine_all_modalities(&ds, 4, BandwidthRule::MeanPairwise, 0).unwrap();
        assert_eq!(sets.len(), 2);
        assert_eq!(sets[0].indices, sets[1].indices);
        for id in &sets[0].image_ids {
            assert!(ds.split.train.contains(id));
        }
        let pool = ModalityFeatures {
            modality_id: 0,
            name: String::new(),
            data: ds.modalities[0].select(&ds.split.train),
        };
        let single = greedy_mine(&pool, 4, &SimilarityFn::auto(&pool.data, 0)).unwrap();
        assert_eq!(single.indices, sets[0].indices);
    }
}
