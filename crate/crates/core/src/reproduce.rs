//! The acceptance suite: property checks against independent oracles plus
//! trend checks on synthetic data. Each check returns a report instead of
//! panicking so the CLI can print the whole table.

use std::fmt;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::canonical_views::{greedy_mine, h_score, SimilarityFn};
use crate::config::{CodeLengths, RunConfig};
use crate::dataset::{ModalityFeatures, SyntheticSpec};
use crate::error::Result;
use crate::eval::{average_precision, default_scopes, evaluate_codes, mean_ap, ConfigEcho, RankedQuery};
use crate::graph::{build_A, build_graph, laplacian, ridge_inverse};
use crate::intermediate::{coding_objective, locality_weights, sparse_code_one};
use crate::pipeline::{evaluate_method, fit_representation, oracle_codes, prepare_dataset, train_in_memory, Method};
use crate::search::{pack, query, PackedCodes};
use crate::solver::{
    balanced_orthogonal_maximizer, feasibility, learn_projection, solve, update_gamma, update_multipliers,
    update_theta, update_u, update_v, HashConfig, SolverState,
};

#[derive(Debug, Clone, Serialize)]
pub struct CriterionReport {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    /// Soft checks and traces, reported but not gating.
    pub notes: Vec<String>,
}

impl CriterionReport {
    fn new(id: usize, name: &'static str, passed: bool, detail: String) -> Self {
        Self {
            id,
            name,
            passed,
            detail,
            notes: Vec::new(),
        }
    }

    fn failed_with(id: usize, name: &'static str, err: crate::Error) -> Self {
        Self::new(id, name, false, format!("error: {err}"))
    }
}

impl fmt::Display for CriterionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{tag}] {}. {}: {}", self.id, self.name, self.detail)
    }
}

/// Synthetic stand-in used by the solver and retrieval checks: five
/// landmarks, 2000 images, two modalities.
pub fn acceptance_spec(seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        num_landmarks: 5,
        images_per_landmark: 400,
        dims: vec![128, 256],
        noise: 1.0,
        correlation: 0.5,
        seed,
        latent_dim: 8,
    }
}

pub fn acceptance_config(seed: u64) -> RunConfig {
    RunConfig {
        synthetic: Some(acceptance_spec(seed)),
        c: CodeLengths::Many(vec![32, 128]),
        seeds: vec![seed],
        ..RunConfig::default()
    }
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn random_signs(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| if rng.random_bool(0.5) { 1.0 } else { -1.0 })
}

/// Points drawn from a few random blobs so that instances vary between
/// clustered and diffuse.
fn random_pool(rng: &mut ChaCha8Rng, dim: usize, n: usize) -> ModalityFeatures {
    let blobs = rng.random_range(1..=4);
    let centers = gaussian_matrix(rng, dim, blobs) * rng.random_range(0.5..4.0);
    let data = DMatrix::from_fn(dim, n, |i, j| {
        centers[(i, j % blobs)] + rng.sample::<f64, _>(StandardNormal)
    });
    ModalityFeatures::new(0, "pool", data).expect("finite random pool")
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Criterion 1: Greedy mining against the exhaustive optimum.
pub fn greedy_bound(instances: usize, seed: u64) -> CriterionReport {
    const NAME: &str = "submodular greedy bound";
    let bound = 1.0 - (-1f64).exp();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let subsets = combinations(12, 3);
    let mut worst = f64::INFINITY;
    let mut violations = 0;
    for i in 0..instances {
        let pool = random_pool(&mut rng, 3, 12);
        let sim = SimilarityFn::auto(&pool.data, seed + i as u64);
        let run = || -> Result<(f64, f64)> {
            let greedy = greedy_mine(&pool, 3, &sim)?;
            let hg = h_score(&greedy.indices, &pool, &sim)?;
            let mut best = f64::NEG_INFINITY;
            for s in &subsets {
                best = best.max(h_score(s, &pool, &sim)?);
            }
            Ok((hg, best))
        };
        match run() {
            Ok((hg, best)) => {
                if hg < bound * best - 1e-9 {
                    violations += 1;
                }
                if best > 0.0 {
                    worst = worst.min(hg / best);
                }
            }
            Err(e) => return CriterionReport::failed_with(1, NAME, e),
        }
    }
    let secs = start.elapsed().as_secs_f64();
    CriterionReport::new(
        1,
        NAME,
        violations == 0 && secs < 10.0,
        format!(
            "{instances} instances (N=12, T=3): min greedy/exhaustive ratio {worst:.4} (bound {bound:.3}), \
             {violations} violations, {secs:.2}s (limit 10s)"
        ),
    )
}

/// Criterion 2: Diminishing gains on nested sets, and non-negative gains while `|V| ≤ N/4`.
pub fn submodularity_suite(samples: usize, seed: u64) -> CriterionReport {
    const NAME: &str = "submodularity and monotonicity";
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 40;
    let mut sub_fail = 0;
    let mut mono_fail = 0;
    let mut run = || -> Result<()> {
        for i in 0..samples {
            let pool = random_pool(&mut rng, 4, n);
            let sim = SimilarityFn::auto(&pool.data, seed + i as u64);
            // B has at most N/4 - 1 elements so B + v stays within N/4
            let b_len = rng.random_range(1..n / 4);
            let picks = sample(&mut rng, n, b_len + 1).into_vec();
            let (v, big) = (picks[0], picks[1..].to_vec());
            let a_len = rng.random_range(0..=b_len);
            let small = big[..a_len].to_vec();
            let gain = |set: &[usize]| -> Result<f64> {
                let mut with = set.to_vec();
                with.push(v);
                Ok(h_score(&with, &pool, &sim)? - h_score(set, &pool, &sim)?)
            };
            let (ga, gb) = (gain(&small)?, gain(&big)?);
            if ga < gb - 1e-9 {
                sub_fail += 1;
            }
            if gb < -1e-9 {
                mono_fail += 1;
            }
        }
        Ok(())
    };
    if let Err(e) = run() {
        return CriterionReport::failed_with(2, NAME, e);
    }
    CriterionReport::new(
        2,
        NAME,
        samples >= 100 && sub_fail == 0 && mono_fail == 0,
        format!(
            "{samples} nested samples (N={n}): {sub_fail} submodularity violations, \
             {mono_fail} monotonicity violations"
        ),
    )
}

/// Projected accelerated gradient on the affine set `sum(y) = 1`, run to
/// stationarity. Independent of the KKT route used in production.
pub fn coding_oracle(x: &[f64], support_cols: &DMatrix<f64>, weights: &[f64], sigma: f64) -> Vec<f64> {
    let r = support_cols.ncols();
    let e = support_cols;
    let mut h = e.tr_mul(e);
    for k in 0..r {
        h[(k, k)] += sigma * weights[k] * weights[k];
    }
    let h = h * 2.0;
    let lin = e.tr_mul(&DVector::from_column_slice(x)) * 2.0;
    let lipschitz = h.symmetric_eigenvalues().max().max(1e-300);
    let project = |g: &DVector<f64>| {
        let m = g.mean();
        g.map(|v| v - m)
    };
    let mut y = DVector::from_element(r, 1.0 / r as f64);
    let mut prev = y.clone();
    let mut momentum = 1.0f64;
    for _ in 0..2_000_000 {
        let next_m = (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt()) / 2.0;
        let z = &y + (&y - &prev) * ((momentum - 1.0) / next_m);
        let g = project(&(&h * &z - &lin));
        prev = y;
        y = &z - g / lipschitz;
        momentum = next_m;
        let stat = project(&(&h * &y - &lin));
        if stat.amax() < 1e-14 * lipschitz.max(1.0) {
            break;
        }
    }
    y.iter().copied().collect()
}

/// Criterion 3: Column contract of the sparse codes and agreement with the oracle.
pub fn sparse_coding_contract(instances: usize, seed: u64) -> CriterionReport {
    const NAME: &str = "sparse-coding contract";
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_sum: f64 = 0.0;
    let mut worst_gap: f64 = 0.0;
    let mut too_dense = 0;
    let mut run = || -> Result<()> {
        for _ in 0..instances {
            let d = 10;
            let t = rng.random_range(2..=8);
            let r = rng.random_range(1..=t);
            let sigma = [1e-4, 1e-2, 1.0][rng.random_range(0..3)];
            let exemplars = gaussian_matrix(&mut rng, d, t);
            let x: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let rho = crate::linalg::mean_pairwise_distance(&exemplars, usize::MAX, 0).max(1e-12);
            let code = sparse_code_one(&x, &exemplars, r, sigma, rho)?;
            worst_sum = worst_sum.max((code.iter().sum::<f64>() - 1.0).abs());
            if code.iter().filter(|v| **v != 0.0).count() > r {
                too_dense += 1;
            }
            // oracle support: r nearest exemplars, ties to the lower index
            let mut order: Vec<usize> = (0..t).collect();
            let d2 = |j: usize| (0..d).map(|i| (x[i] - exemplars[(i, j)]).powi(2)).sum::<f64>();
            order.sort_by(|&a, &b| d2(a).total_cmp(&d2(b)).then(a.cmp(&b)));
            order.truncate(r);
            let weights = locality_weights(&x, &exemplars, rho)?;
            let sub_w: Vec<f64> = order.iter().map(|&j| weights[j]).collect();
            let oracle = coding_oracle(&x, &exemplars.select_columns(&order), &sub_w, sigma);
            let ours: Vec<f64> = order.iter().map(|&j| code[j]).collect();
            let f_ours = coding_objective(&x, &exemplars, &order, &ours, &weights, sigma);
            let f_oracle = coding_objective(&x, &exemplars, &order, &oracle, &weights, sigma);
            worst_gap = worst_gap.max((f_ours - f_oracle).abs());
        }
        Ok(())
    };
    if let Err(e) = run() {
        return CriterionReport::failed_with(3, NAME, e);
    }
    CriterionReport::new(
        3,
        NAME,
        worst_sum <= 1e-8 && too_dense == 0 && worst_gap <= 1e-6,
        format!(
            "{instances} instances (T ≤ 8): max |sum − 1| {worst_sum:.2e}, {too_dense} columns over r, \
             max objective gap to oracle {worst_gap:.2e}"
        ),
    )
}

/// Criterion 4: Eliminating `W` leaves the quadratic form `Tr(V (I − Y'QY) V')`.
pub fn ridge_identity(trials: usize, seed: u64) -> CriterionReport {
    const NAME: &str = "ridge elimination identity";
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut run = || -> Result<()> {
        for _ in 0..trials {
            let d = rng.random_range(2..20);
            let n = rng.random_range(5..60);
            let c = rng.random_range(1..8);
            let gamma = 10f64.powf(rng.random_range(-3.0..2.0));
            let y = gaussian_matrix(&mut rng, d, n);
            let v = random_signs(&mut rng, c, n);
            let w = learn_projection(&y, &v, gamma)?;
            let lhs = (&v - w.transpose() * &y).norm_squared() + gamma * w.norm_squared();
            let q = ridge_inverse(&y, gamma)?;
            let m = DMatrix::identity(n, n) - y.transpose() * q * &y;
            let rhs = (&v * m * v.transpose()).trace();
            worst = worst.max((lhs - rhs).abs() / lhs.abs().max(f64::MIN_POSITIVE));
        }
        Ok(())
    };
    if let Err(e) = run() {
        return CriterionReport::failed_with(4, NAME, e);
    }
    CriterionReport::new(
        4,
        NAME,
        worst <= 1e-8,
        format!("{trials} random (Y, V, γ): max relative gap {worst:.2e} (limit 1e-8)"),
    )
}

/// Uniformly oriented point of `{Θ : ΘΘ' = N I, Θ1 = 0}`.
pub fn random_feasible(rng: &mut ChaCha8Rng, c: usize, n: usize) -> DMatrix<f64> {
    let mut g = gaussian_matrix(rng, n, c);
    for mut col in g.column_iter_mut() {
        let m = col.mean();
        col.add_scalar_mut(-m);
    }
    let q = g.qr().q();
    q.transpose() * (n as f64).sqrt()
}

/// Criterion 5: Feasibility after every relaxed-code update, and maximality of the
/// closed form against random feasible points.
pub fn theta_feasibility(instances: usize, samples: usize, seed: u64) -> CriterionReport {
    const NAME: &str = "relaxed-code feasibility";
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_orth: f64 = 0.0;
    let mut worst_bal: f64 = 0.0;
    let mut beaten = 0;
    let mut updates = 0;
    let mut run = || -> Result<()> {
        // inside a solver run
        let cfg = RunConfig {
            synthetic: Some(SyntheticSpec {
                num_landmarks: 5,
                images_per_landmark: 60,
                dims: vec![16, 24],
                noise: 1.0,
                correlation: 0.5,
                seed,
                latent_dim: 8,
            }),
            t: 20,
            r: 10,
            ..RunConfig::default()
        };
        let ds = prepare_dataset(&cfg, seed)?;
        let rep = fit_representation(&ds, &cfg, seed)?;
        let y = rep.encode_images(&ds, &ds.split.train)?;
        let a = build_A(
            laplacian(&build_graph(&y, cfg.k, None)?),
            &y,
            cfg.alpha,
            cfg.beta,
            cfg.gamma,
        )?;
        let hc = HashConfig { c: 8, ..cfg.hash(8) };
        let n = y.ncols() as f64;
        let mut s = SolverState::new(&y, crate::solver::pcah_init(&y, hc.c)?, &hc);
        for _ in 0..hc.max_iters {
            s.residual = update_gamma(&s, &y);
            s.basis = update_u(&s, &y);
            s.relaxed = update_theta(&s, &a, hc.alpha)?;
            let (orth, bal) = feasibility(&s.relaxed);
            worst_orth = worst_orth.max(orth / n);
            worst_bal = worst_bal.max(bal / n.sqrt());
            updates += 1;
            s.codes = update_v(&s, &y, &a, hc.alpha);
            update_multipliers(&mut s, &y, hc.rho_lm);
        }
        // on random targets, including rank-deficient ones
        for i in 0..instances {
            let c = rng.random_range(2..6);
            let n = rng.random_range(c + 2..30);
            let rank = if i % 2 == 0 { rng.random_range(1..=c) } else { c };
            let target = gaussian_matrix(&mut rng, c, rank) * gaussian_matrix(&mut rng, rank, n);
            let theta = balanced_orthogonal_maximizer(&target)?;
            let (orth, bal) = feasibility(&theta);
            worst_orth = worst_orth.max(orth / n as f64);
            worst_bal = worst_bal.max(bal / (n as f64).sqrt());
            updates += 1;
            let best = theta.dot(&target);
            for _ in 0..samples {
                let other = random_feasible(&mut rng, c, n);
                if other.dot(&target) > best + 1e-9 * best.abs().max(1.0) {
                    beaten += 1;
                }
            }
        }
        Ok(())
    };
    if let Err(e) = run() {
        return CriterionReport::failed_with(5, NAME, e);
    }
    CriterionReport::new(
        5,
        NAME,
        worst_orth <= 1e-6 && worst_bal <= 1e-6 && beaten == 0,
        format!(
            "{updates} updates: max ‖ΘΘ'−NI‖_F/N {worst_orth:.2e}, max ‖Θ1‖_∞/√N {worst_bal:.2e}; \
             {instances} instances × {samples} random feasible points, {beaten} beat the closed form"
        ),
    )
}

/// First iteration (1-based) from which every later relative change of the
/// series stays within `tol`.
pub fn plateau_start(series: &[f64], tol: f64) -> Option<usize> {
    if series.is_empty() {
        return None;
    }
    let mut start = 1;
    for i in 1..series.len() {
        let rel = (series[i] - series[i - 1]).abs() / series[i - 1].abs().max(f64::MIN_POSITIVE);
        if rel > tol {
            start = i + 1;
        }
    }
    // a change at the very last step means no plateau was observed
    (start < series.len()).then_some(start)
}

/// Criterion 6: Solver on all 2000 synthetic images at c = 16.
pub fn solver_behavior(seed: u64) -> CriterionReport {
    const NAME: &str = "solver behavior";
    let start = Instant::now();
    let run = || -> Result<CriterionReport> {
        let cfg = acceptance_config(seed);
        let ds = prepare_dataset(&cfg, seed)?;
        let rep = fit_representation(&ds, &cfg, seed)?;
        let all: Vec<usize> = (0..ds.len()).collect();
        let y = rep.encode_images(&ds, &all)?;
        let a = build_A(
            laplacian(&build_graph(&y, cfg.k, None)?),
            &y,
            cfg.alpha,
            cfg.beta,
            cfg.gamma,
        )?;
        let hc = cfg.hash(16);
        let out = solve(&y, &a, &hc, None)?;
        let secs = start.elapsed().as_secs_f64();
        let violation: Vec<f64> = out.state.residual_trace.iter().map(|r| r.code).collect();
        let plateau = plateau_start(&violation, 0.01);
        let last = *out.state.objective_trace.last().unwrap_or(&out.initial_objective);
        let ok_iters = out.iterations <= 50;
        let ok_plateau = plateau.is_some_and(|k| k <= 15);
        let ok_obj = last < out.initial_objective;
        let (orth_v, _) = feasibility(&out.codes);
        let (orth_0, _) = feasibility(&crate::solver::pcah_init(&y, 16)?);
        let mut report = CriterionReport::new(
            6,
            NAME,
            ok_iters && ok_plateau && ok_obj && secs < 60.0,
            format!(
                "N={}, c=16: {} iterations (converged: {}); ‖V−Θ‖ plateau (≤1%) from iteration {} (need ≤ 15); \
                 objective {:.6e} vs PCAH init {:.6e} ({}); {secs:.1}s (limit 60s)",
                y.ncols(),
                out.iterations,
                out.converged,
                plateau.map_or("never".to_string(), |k| k.to_string()),
                last,
                out.initial_objective,
                if ok_obj { "lower" } else { "not lower" },
            ),
        );
        report
            .notes
            .push(format!("‖VV'−NI‖_F: PCAH init {orth_0:.1}, solver output {orth_v:.1}"));
        report.notes.push(format!(
            "‖V−Θ‖_F trace: {}",
            violation
                .iter()
                .map(|v| format!("{v:.3}"))
                .collect::<Vec<_>>()
                .join(" ")
        ));
        report.notes.push(format!(
            "objective trace: {}",
            out.state
                .objective_trace
                .iter()
                .map(|v| format!("{v:.5e}"))
                .collect::<Vec<_>>()
                .join(" ")
        ));
        Ok(report)
    };
    run().unwrap_or_else(|e| CriterionReport::failed_with(6, NAME, e))
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len().is_multiple_of(2) {
        (v[m - 1] + v[m]) / 2.0
    } else {
        v[m]
    }
}

/// Per-seed mAP rows for the retrieval comparison.
#[derive(Debug, Clone, Serialize)]
pub struct LiftRow {
    pub seed: u64,
    pub cvdmh_32: f64,
    pub cvdmh_128: f64,
    pub random_32: f64,
    pub pca_32: f64,
}

pub fn lift_rows(seeds: &[u64]) -> Result<Vec<LiftRow>> {
    let mut rows = Vec::new();
    for &seed in seeds {
        let cfg = acceptance_config(seed);
        let trained = train_in_memory(&cfg, seed)?;
        let ds = &trained.dataset;
        let learned = |c: usize| {
            let t = trained.length(c).expect("trained length");
            evaluate_method(Method::Cvdmh, ds, c, seed, &cfg, || {
                Ok((t.database_codes.clone(), trained.query_codes(c)?))
            })
        };
        let none = || unreachable!();
        rows.push(LiftRow {
            seed,
            cvdmh_32: learned(32)?.map,
            cvdmh_128: learned(128)?.map,
            random_32: evaluate_method(Method::Random, ds, 32, seed, &cfg, none)?.map,
            pca_32: evaluate_method(Method::PcaRaw, ds, 32, seed, &cfg, none)?.map,
        });
    }
    Ok(rows)
}

/// Criterion 7: Learned codes against random and sign-PCA codes over five seeds.
pub fn retrieval_lift(seeds: &[u64]) -> CriterionReport {
    const NAME: &str = "retrieval lift";
    let rows = match lift_rows(seeds) {
        Ok(r) => r,
        Err(e) => return CriterionReport::failed_with(7, NAME, e),
    };
    let col = |f: fn(&LiftRow) -> f64| rows.iter().map(f).collect::<Vec<_>>();
    let (ours, ours128, rand, pca) = (
        col(|r| r.cvdmh_32),
        col(|r| r.cvdmh_128),
        col(|r| r.random_32),
        col(|r| r.pca_32),
    );
    let (m_ours, m_rand, m_pca, m_128) = (mean(&ours), mean(&rand), mean(&pca), mean(&ours128));
    let passed = seeds.len() >= 5 && m_ours >= m_rand + 0.20 && m_ours >= m_pca;
    let mut report = CriterionReport::new(
        7,
        NAME,
        passed,
        format!(
            "{} seeds, 32 bits, mean (median) mAP: CV-DMH {m_ours:.4} ({:.4}), random {m_rand:.4} ({:.4}), \
             sign-PCA {m_pca:.4} ({:.4}); need ≥ random + 0.20 and ≥ sign-PCA",
            seeds.len(),
            median(&ours),
            median(&rand),
            median(&pca),
        ),
    );
    let trend = m_128 >= m_ours - 0.02;
    report.notes.push(format!(
        "soft trend mAP(128) ≥ mAP(32) − 0.02: {} (128 bits {m_128:.4}, 32 bits {m_ours:.4})",
        if trend { "holds" } else { "does not hold" }
    ));
    for r in &rows {
        report.notes.push(format!(
            "seed {}: cvdmh32 {:.4} cvdmh128 {:.4} random32 {:.4} pca32 {:.4}",
            r.seed, r.cvdmh_32, r.cvdmh_128, r.random_32, r.pca_32
        ));
    }
    report
}

/// Criterion 8: Packed Hamming ranking against a brute-force scan of the ±1 matrix.
pub fn search_exactness(seed: u64) -> CriterionReport {
    const NAME: &str = "search exactness";
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 1000;
    let mut mismatched = 0;
    let mut roundtrip_ok = true;
    let mut run = || -> Result<()> {
        for c in [32usize, 64, 128] {
            let db = random_signs(&mut rng, c, n);
            let packed = pack(&db)?;
            roundtrip_ok &= packed.unpack() == db;
            let mut bytes = Vec::new();
            packed.write(&mut bytes).map_err(|e| crate::Error::io("<memory>", e))?;
            let back = PackedCodes::read(bytes.as_slice(), std::path::Path::new("<memory>"))?;
            roundtrip_ok &= back == packed;
            for _ in 0..20 {
                let q = random_signs(&mut rng, c, 1);
                let qp = pack(&q)?;
                let got = query(&packed, qp.code(0), n)?;
                let mut expect: Vec<(u32, usize)> = (0..n)
                    .map(|j| ((0..c).filter(|&b| db[(b, j)] != q[(b, 0)]).count() as u32, j))
                    .collect();
                expect.sort();
                let got: Vec<(u32, usize)> = got.hits.iter().map(|h| (h.distance, h.id)).collect();
                if got != expect {
                    mismatched += 1;
                }
            }
        }
        Ok(())
    };
    if let Err(e) = run() {
        return CriterionReport::failed_with(8, NAME, e);
    }
    CriterionReport::new(
        8,
        NAME,
        mismatched == 0 && roundtrip_ok,
        format!(
            "1000 random codes, c ∈ {{32, 64, 128}}, 60 queries: {mismatched} rankings differ from brute force; \
             pack/unpack and file round trips {}",
            if roundtrip_ok { "bitwise equal" } else { "differ" }
        ),
    )
}

/// Criterion 9: AP hand example and the two extreme rankings.
pub fn metric_correctness() -> CriterionReport {
    const NAME: &str = "metric correctness";
    let run = || -> Result<(f64, f64, f64)> {
        // relevant, irrelevant, relevant at R = 3
        let hand = average_precision(&[1, 2, 1], 1, 3)?;
        let labels: Vec<u32> = (0..200).map(|i| i % 5 + 1).collect();
        let queries: Vec<u32> = (1..=5).collect();
        let oracle = evaluate_codes(
            &pack(&oracle_codes(&labels, 8))?,
            &labels,
            &pack(&oracle_codes(&queries, 8))?,
            &queries,
            20,
            &default_scopes()[..1],
            ConfigEcho {
                method: "oracle".into(),
                c: 8,
                t: 0,
                r: 0,
                seeds: vec![],
            },
        )?
        .map;
        // every relevant item ranked past the cutoff
        let anti: Vec<RankedQuery> = queries
            .iter()
            .map(|&q| {
                let mut ranked: Vec<u32> = labels.iter().copied().filter(|&l| l != q).collect();
                ranked.extend(labels.iter().copied().filter(|&l| l == q));
                RankedQuery {
                    query_label: q,
                    ranked_labels: ranked,
                }
            })
            .collect();
        let (anti_map, _) = mean_ap(&anti, 100)?;
        Ok((hand, oracle, anti_map))
    };
    match run() {
        Ok((hand, oracle, anti)) => CriterionReport::new(
            9,
            NAME,
            (hand - 5.0 / 6.0).abs() <= 1e-12 && oracle == 1.0 && anti == 0.0,
            format!("hand example AP {hand:.6} (expect 5/6), oracle mAP {oracle}, anti-oracle mAP {anti}"),
        ),
        Err(e) => CriterionReport::failed_with(9, NAME, e),
    }
}

/// Every criterion, in order.
pub fn run_all(seed: u64) -> Vec<CriterionReport> {
    let seeds: Vec<u64> = (seed..seed + 5).collect();
    vec![
        greedy_bound(200, seed),
        submodularity_suite(200, seed),
        sparse_coding_contract(50, seed),
        ridge_identity(100, seed),
        theta_feasibility(20, 10_000, seed),
        solver_behavior(seed),
        retrieval_lift(&seeds),
        search_exactness(seed),
        metric_correctness(),
    ]
}
