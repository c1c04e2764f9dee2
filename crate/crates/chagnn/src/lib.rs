//! Graph-robustness toolkit built around a homophily-driven defense for
//! graph convolutional networks under node-injection attacks.
//!
//! The pipeline: train a GCN, use its pseudo-labels to flag suspicious
//! (heterophilous) edges around test and injected nodes, score them by
//! Jensen-Shannon divergence of the endpoint soft labels, sample a fraction
//! for removal, fine-tune, and repeat. Attack simulators (random wiring plus
//! two gradient-guided variants) and a numerical harness for the margin-loss
//! bounds that motivate the defense live alongside it.
//!
//! Module map:
//! - [`graph`]: CSR storage, adjacency normalization, sparse-dense matmul,
//!   homophily measurement
//! - [`dataset`]: node classification datasets with split masks
//! - [`synth`]: seeded synthetic graph generators
//! - [`io`]: on-disk dataset format
//! - [`models`]: GCN/SGC forward passes, training, checkpoints
//! - [`attack`]: node injection attack simulators
//! - [`defense`]: heterophilous edge identification, scoring, sampled removal
//! - [`theory`]: closed-form and simulated margin-loss comparisons
//! - [`experiment`]: end-to-end seeded runs and sweeps

pub mod attack;
pub mod dataset;
pub mod defense;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod io;
pub mod models;
mod parallel;
pub mod synth;
pub mod theory;

pub use error::{Error, Result};

/// Cap the global worker pool at `n` threads. Must be called before any
/// parallel work; later calls fail. A no-op without the `parallel` feature.
#[cfg(feature = "parallel")]
pub fn configure_threads(n: usize) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

#[cfg(not(feature = "parallel"))]
pub fn configure_threads(_n: usize) -> Result<()> {
    Ok(())
}
