//! Recovery of structured signals from one-bit (sign-quantized) linear
//! measurements, using a trained decoder network as the signal prior, with
//! classic sparse baselines for comparison.
//!
//! The pipeline: sample or load signals ([`data`]), train a small
//! autoencoder and export its decoder ([`train`]), take sign measurements
//! under additive noise and random sign flips ([`sensing`]), reconstruct by
//! latent-space gradient descent or a sparse baseline ([`recon`]), and score
//! the results ([`analysis`]). [`experiment`] wires these into reproducible
//! sweeps, and every randomized step draws from seeded, forkable streams
//! ([`rng`]) so runs are exactly repeatable.
//!
//! Each major capability has a runnable example:
//!
//! ```text
//! cargo run --example train_decoder
//! cargo run --example reconstruct_signal
//! cargo run --example baseline_comparison
//! cargo run --example measurement_sweep
//! cargo run --example noise_robustness
//! cargo run --example matrix_uncertainty
//! cargo run --example theory_checks
//! cargo run --example idx_images
//! ```
//!
//! The same capabilities are reachable from the thin `onebit-cs` binary
//! (subcommands `gen-data`, `train`, `export-decoder`, `measure`,
//! `reconstruct`, `sweep`, `theory-check`).

pub mod analysis;
pub mod data;
mod error;
pub mod experiment;
pub mod io;
pub mod linalg;
pub mod model;
pub mod recon;
pub mod rng;
pub mod sensing;
pub mod train;

pub use error::{Error, Result};
pub use linalg::DenseMatrix;
pub use model::{Activation, MlpGenerator, MlpLayer};
pub use rng::RngStream;
