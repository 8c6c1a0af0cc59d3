//! Broad learning system (BLS) classifiers with semi-supervised domain
//! adaptation.
//!
//! The crate provides:
//!
//! - [`data`]: CSV dataset loading, one-hot label encoding, z-score
//!   normalization, and seeded stratified source/target splits.
//! - [`bls`]: the plain broad learning system — random feature and
//!   enhancement nodes, optional sparse-autoencoder fine-tuning of the
//!   feature weights, and the ridge-regression output layer.
//! - [`lle`]: the locally-linear-embedding neighborhood graph (exact KNN,
//!   constrained reconstruction weights, and the graph matrix used as a
//!   manifold regularizer).
//! - [`dabls`]: the domain-adaptation trainer that couples source and
//!   target losses with class-imbalance weights and the LLE regularizer,
//!   solved in closed form.
//! - [`harness`]: grid search, the 12-task cross-domain benchmark,
//!   labeled-fraction sweeps, and report emission.
//! - [`model`]: JSON model serialization with exact round-tripping.
//!
//! The `broadlearn` binary exposes the same functionality as subcommands;
//! the `examples/` directory holds one runnable example per capability.

pub mod bls;
pub mod cli;
pub mod dabls;
pub mod data;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod lle;
pub mod model;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
