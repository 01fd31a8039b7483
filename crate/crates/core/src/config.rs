//! Run configuration: one flat JSON object. Unset keys take the defaults
//! below (`alpha = 1e-2`, `beta = 1e-4`, `gamma = 1e2`, `mu0 = eta0 = 1`,
//! `T = 100`, `r = 70`, `sigma = 1e-4`).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::SyntheticSpec;
use crate::error::{Error, Result};
use crate::intermediate::{Rho, SparseCodeConfig};
use crate::solver::HashConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CodeLengths {
    One(usize),
    Many(Vec<usize>),
}

impl CodeLengths {
    pub fn to_vec(&self) -> Vec<usize> {
        match self {
            CodeLengths::One(c) => vec![*c],
            CodeLengths::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub manifest: Option<PathBuf>,
    pub synthetic: Option<SyntheticSpec>,
    /// Query / train / database fractions.
    pub split: [f64; 3],
    #[serde(rename = "T")]
    pub t: usize,
    pub r: usize,
    pub sigma: f64,
    pub rho: Rho,
    pub k: usize,
    pub c: CodeLengths,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub mu0: f64,
    pub eta0: f64,
    pub rho_lm: f64,
    pub tol: f64,
    pub max_iters: usize,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// Hash stacked raw features instead of canonical-view codes (A/B switch).
    pub bypass_canonical_views: bool,
    pub cutoff: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let h = HashConfig::default();
        let s = SparseCodeConfig::default();
        Self {
            manifest: None,
            synthetic: None,
            split: [0.1, 0.2, 0.7],
            t: 100,
            r: s.r,
            sigma: s.sigma,
            rho: s.rho,
            k: 10,
            c: CodeLengths::One(h.c),
            alpha: h.alpha,
            beta: h.beta,
            gamma: h.gamma,
            mu0: h.mu0,
            eta0: h.eta0,
            rho_lm: h.rho_lm,
            tol: h.tol,
            max_iters: h.max_iters,
            seeds: vec![0],
            output_dir: PathBuf::from("cvdmh-out"),
            bypass_canonical_views: false,
            cutoff: crate::eval::DEFAULT_CUTOFF,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)?;
        // manifest paths in a config file are relative to that file
        if let (Some(m), Some(base)) = (&cfg.manifest, path.parent()) {
            if m.is_relative() {
                cfg.manifest = Some(base.join(m));
            }
        }
        Ok(cfg)
    }

    pub fn coding(&self) -> SparseCodeConfig {
        SparseCodeConfig {
            r: self.r,
            sigma: self.sigma,
            rho: self.rho,
        }
    }

    pub fn hash(&self, c: usize) -> HashConfig {
        HashConfig {
            c,
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
            mu0: self.mu0,
            eta0: self.eta0,
            rho_lm: self.rho_lm,
            max_iters: self.max_iters,
            tol: self.tol,
        }
    }

    pub fn code_lengths(&self) -> Vec<usize> {
        self.c.to_vec()
    }

    pub fn primary_seed(&self) -> u64 {
        self.seeds.first().copied().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.manifest, &self.synthetic) {
            (None, None) => return Err(Error::invalid("config needs either `manifest` or `synthetic`")),
            (Some(_), Some(_)) => return Err(Error::invalid("config sets both `manifest` and `synthetic`")),
            (None, Some(s)) => s.validate()?,
            _ => {}
        }
        if self.t == 0 {
            return Err(Error::invalid("T must be at least 1"));
        }
        if !self.bypass_canonical_views {
            self.coding().validate(self.t)?;
        }
        if self.k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        if self.seeds.is_empty() {
            return Err(Error::invalid("at least one seed is required"));
        }
        if self.cutoff == 0 {
            return Err(Error::invalid("cutoff must be at least 1"));
        }
        let lengths = self.code_lengths();
        if lengths.is_empty() {
            return Err(Error::invalid("no code lengths given"));
        }
        for c in lengths {
            self.hash(c).validate()?;
        }
        Ok(())
    }
}
