//! Discrete binary embedding.
//!
//! Codes `V ∈ {-1, 1}^{c×N}` minimize `‖Y − U V‖² + α Tr(V A V')` under the
//! bit-uncorrelation and balance constraints. The constraints are split off
//! through two auxiliary variables (a fit residual and a relaxed code matrix)
//! and handled with augmented-Lagrangian alternating updates.

mod model;
mod pcah;
mod theta;

pub use model::{hash_vector, learn_projection, HashModel, ModelMeta};
pub use pcah::pcah_init;
pub use theta::{balanced_orthogonal_maximizer, feasibility, RANK_TOLERANCE};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SolverMatrices;
use crate::linalg::sgn_matrix;

/// Cap on the growing penalty parameters.
pub const PENALTY_CAP: f64 = 1e12;
/// Consecutive objective increases tolerated before aborting.
pub const DIVERGENCE_PATIENCE: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HashConfig {
    pub c: usize,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub mu0: f64,
    pub eta0: f64,
    pub rho_lm: f64,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for HashConfig {
    fn default() -> Self {
        Self {
            c: 32,
            alpha: 1e-2,
            beta: 1e-4,
            gamma: 1e2,
            mu0: 1.0,
            eta0: 1.0,
            rho_lm: 1.1,
            max_iters: 50,
            tol: 1e-4,
        }
    }
}

impl HashConfig {
    pub fn validate(&self) -> Result<()> {
        if self.c == 0 {
            return Err(Error::invalid("code length must be at least 1"));
        }
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("mu0", self.mu0),
            ("eta0", self.eta0),
            ("tol", self.tol),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.rho_lm > 1.0) {
            return Err(Error::invalid("rho_lm must exceed 1"));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be at least 1"));
        }
        Ok(())
    }
}

/// Variables of the augmented-Lagrangian iteration.
#[derive(Debug, Clone)]
pub struct SolverState {
    /// Latent basis `U` (`TP × c`).
    pub basis: DMatrix<f64>,
    /// Binary codes `V` (`c × N`, entries ±1).
    pub codes: DMatrix<f64>,
    /// Relaxed codes `Θ` carrying the orthogonality and balance constraints.
    pub relaxed: DMatrix<f64>,
    /// Auxiliary fit residual `Γ ≈ Y − U V`.
    pub residual: DMatrix<f64>,
    /// Multiplier for `Y − U V − Γ`.
    pub residual_mult: DMatrix<f64>,
    /// Multiplier for `V − Θ`.
    pub code_mult: DMatrix<f64>,
    pub eta: f64,
    pub mu: f64,
    pub objective_trace: Vec<f64>,
    pub residual_trace: Vec<Residuals>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// `‖Y − U V − Γ‖_F`
    pub fit: f64,
    /// `‖V − Θ‖_F`
    pub code: f64,
    /// `‖V − Θ‖_∞`
    pub code_max: f64,
}

impl SolverState {
    /// Fresh state around initial codes: zero multipliers and residual, `Θ = V`,
    /// `U = Y V' / N`.
    pub fn new(y: &DMatrix<f64>, codes: DMatrix<f64>, cfg: &HashConfig) -> Self {
        let n = y.ncols() as f64;
        let basis = y * codes.transpose() / n;
        Self {
            basis,
            relaxed: codes.clone(),
            residual: DMatrix::zeros(y.nrows(), y.ncols()),
            residual_mult: DMatrix::zeros(y.nrows(), y.ncols()),
            code_mult: DMatrix::zeros(codes.nrows(), codes.ncols()),
            codes,
            eta: cfg.eta0,
            mu: cfg.mu0,
            objective_trace: Vec::new(),
            residual_trace: Vec::new(),
        }
    }

    pub fn residuals(&self, y: &DMatrix<f64>) -> Residuals {
        let fit = (y - &self.basis * &self.codes - &self.residual).norm();
        let diff = &self.codes - &self.relaxed;
        Residuals {
            fit,
            code: diff.norm(),
            code_max: diff.amax(),
        }
    }
}

/// `Y − Γ + E_η / η`, the target the basis has to reproduce.
fn fit_target(s: &SolverState, y: &DMatrix<f64>) -> DMatrix<f64> {
    y - &s.residual + &s.residual_mult / s.eta
}

/// `Γ = (η Y − η U V + E_η) / (2 + η)`.
pub fn update_gamma(s: &SolverState, y: &DMatrix<f64>) -> DMatrix<f64> {
    let uv = &s.basis * &s.codes;
    ((y - uv) * s.eta + &s.residual_mult) / (2.0 + s.eta)
}

/// `U = (Y − Γ + E_η/η) V' (V V')⁺`, which is `(Y − Γ + E_η/η) V' / N`
/// once `V V' = N I`.
pub fn update_u(s: &SolverState, y: &DMatrix<f64>) -> DMatrix<f64> {
    // off the constraint set the 1/N shortcut overshoots along repeated
    // code rows and the multipliers amplify it
    let gram = &s.codes * s.codes.transpose();
    let eps = 1e-10 * gram.amax().max(1.0);
    let pinv = gram.pseudo_inverse(eps).expect("eps is non-negative");
    fit_target(s, y) * s.codes.transpose() * pinv
}

/// Relaxed codes maximizing `Tr(Θ' C)` with `C = V + E_μ/μ − (α/μ) V A`.
pub fn update_theta(s: &SolverState, a: &SolverMatrices, alpha: f64) -> Result<DMatrix<f64>> {
    let c = &s.codes + &s.code_mult / s.mu - a.right_mul(&s.codes) * (alpha / s.mu);
    balanced_orthogonal_maximizer(&c)
}

/// `V = Sgn(Θ − E_μ/μ − (α/μ) Θ A + (η/μ) U' (Y − Γ + E_η/η))`.
pub fn update_v(s: &SolverState, y: &DMatrix<f64>, a: &SolverMatrices, alpha: f64) -> DMatrix<f64> {
    let arg = &s.relaxed - &s.code_mult / s.mu - a.right_mul(&s.relaxed) * (alpha / s.mu)
        + s.basis.transpose() * fit_target(s, y) * (s.eta / s.mu);
    sgn_matrix(&arg)
}

/// Multiplier ascent and penalty growth (capped at [`PENALTY_CAP`]).
pub fn update_multipliers(s: &mut SolverState, y: &DMatrix<f64>, rho_lm: f64) {
    let fit = y - &s.basis * &s.codes - &s.residual;
    s.residual_mult += fit * s.eta;
    s.code_mult += (&s.codes - &s.relaxed) * s.mu;
    s.eta = (s.eta * rho_lm).min(PENALTY_CAP);
    s.mu = (s.mu * rho_lm).min(PENALTY_CAP);
}

/// Augmented Lagrangian with a squared residual norm:
/// `‖Γ‖² + η/2 ‖Y − UV − Γ + E_η/η‖² + α Tr(V A Θ') + μ/2 ‖V − Θ + E_μ/μ‖²`.
pub fn lagrangian(s: &SolverState, y: &DMatrix<f64>, a: &SolverMatrices, alpha: f64) -> f64 {
    let fit = y - &s.basis * &s.codes - &s.residual + &s.residual_mult / s.eta;
    let coupling = a.right_mul(&s.codes).dot(&s.relaxed);
    let codes = &s.codes - &s.relaxed + &s.code_mult / s.mu;
    s.residual.norm_squared() + 0.5 * s.eta * fit.norm_squared() + alpha * coupling + 0.5 * s.mu * codes.norm_squared()
}

/// Iterations until the penalties double, `⌈ln 2 / ln ρ⌉`.
pub fn penalty_doubling_iterations(rho_lm: f64) -> usize {
    (2f64.ln() / rho_lm.ln()).ceil() as usize
}

/// Least-squares basis for fixed codes, `U = Y V' (V V')⁺`.
pub fn best_basis(y: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
    let gram = v * v.transpose();
    let rhs = y * v.transpose();
    let eps = 1e-12 * gram.amax().max(1.0);
    let pinv = gram.pseudo_inverse(eps).expect("non-negative epsilon");
    rhs * pinv
}

/// `min_U ‖Y − U V‖² + α Tr(V A V')`.
pub fn reduced_objective(y: &DMatrix<f64>, v: &DMatrix<f64>, a: &SolverMatrices, alpha: f64) -> f64 {
    let u = best_basis(y, v);
    (y - u * v).norm_squared() + alpha * a.trace_form(v)
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub codes: DMatrix<f64>,
    pub state: SolverState,
    pub initial_objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Run the alternating updates until the stopping rule or `max_iters`.
///
/// Stops when `max(‖V − Θ‖_∞ / 2, relative objective change) < tol`. Aborts
/// with [`Error::Divergence`] after [`DIVERGENCE_PATIENCE`] consecutive
/// objective increases past the warm-up, or once the fit residual outgrows `Y`.
pub fn solve(
    y: &DMatrix<f64>,
    a: &SolverMatrices,
    cfg: &HashConfig,
    init: Option<DMatrix<f64>>,
) -> Result<SolveOutcome> {
    cfg.validate()?;
    let n = y.ncols();
    if a.n() != n {
        return Err(Error::DimensionMismatch {
            context: "solver matrices vs training columns",
            expected: n,
            found: a.n(),
        });
    }
    if cfg.c >= n {
        return Err(Error::invalid(format!(
            "code length {} needs more than {} training images",
            cfg.c, n
        )));
    }
    let v0 = match init {
        Some(v) => {
            if v.shape() != (cfg.c, n) {
                return Err(Error::DimensionMismatch {
                    context: "initial codes",
                    expected: cfg.c * n,
                    found: v.len(),
                });
            }
            v
        }
        None => pcah_init(y, cfg.c)?,
    };
    let mut s = SolverState::new(y, v0, cfg);
    let initial_objective = reduced_objective(y, &s.codes, a, cfg.alpha);
    let mut prev = initial_objective;
    let mut rising = 0;
    let warmup = penalty_doubling_iterations(cfg.rho_lm);
    let mut prev_violation = f64::INFINITY;
    let y_norm = y.norm();
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..cfg.max_iters {
        iterations += 1;
        s.residual = update_gamma(&s, y);
        s.basis = update_u(&s, y);
        s.relaxed = update_theta(&s, a, cfg.alpha)?;
        s.codes = update_v(&s, y, a, cfg.alpha);
        update_multipliers(&mut s, y, cfg.rho_lm);

        let obj = reduced_objective(y, &s.codes, a, cfg.alpha);
        if !obj.is_finite() {
            return Err(Error::Divergence(format!(
                "objective became {obj} at iteration {iterations}"
            )));
        }
        let res = s.residuals(y);
        if !(res.fit <= y_norm) {
            // far from the constraint set the splitting can run away
            return Err(Error::Divergence(format!(
                "residual ‖Y − UV − Γ‖ = {:.3e} exceeds ‖Y‖ = {y_norm:.3e} at iteration {iterations}",
                res.fit
            )));
        }
        s.objective_trace.push(obj);
        s.residual_trace.push(res);
        // The PCAH start is off the constraint set, so the objective climbs
        // while the penalties pull V onto it. Growth only counts once they
        // have doubled, when it exceeds the tolerance, and when it buys no
        // reduction of the ‖V − Θ‖ violation.
        let worse = obj - prev > cfg.tol * prev.abs() && res.code >= prev_violation;
        rising = if iterations > warmup && worse { rising + 1 } else { 0 };
        prev_violation = res.code;
        if rising >= DIVERGENCE_PATIENCE {
            return Err(Error::Divergence(format!(
                "objective rose {rising} iterations in a row, reaching {obj:.6e} at iteration {iterations}"
            )));
        }
        let rel = (obj - prev).abs() / prev.abs().max(f64::MIN_POSITIVE);
        prev = obj;
        if (res.code_max / 2.0).max(rel) < cfg.tol {
            converged = true;
            break;
        }
    }
    Ok(SolveOutcome {
        codes: s.codes.clone(),
        state: s,
        initial_objective,
        iterations,
        converged,
    })
}
