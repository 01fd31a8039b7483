//! Multi-modal discrete hashing over canonical views.
//!
//! The offline pipeline mines a small set of exemplar images per modality,
//! re-expresses every image as locality-constrained sparse codes over those
//! exemplars, and learns balanced, uncorrelated binary codes with an
//! augmented-Lagrangian discrete solver. The online side encodes queries with
//! the same path, hashes them with a linear projection and ranks the database
//! in Hamming space.

pub mod canonical_views;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod graph;
pub mod intermediate;
pub mod linalg;
pub mod matrix_io;
pub mod par;
pub mod pipeline;
pub mod reproduce;
pub mod search;
pub mod solver;

pub use error::{Error, Result};
