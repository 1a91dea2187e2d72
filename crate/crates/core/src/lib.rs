//! Sparse coding with the Locally Competitive Algorithm (LCA), from graded
//! leaky integrators to spiking accumulator neurons (S-LCA), with online
//! unsupervised dictionary learning.
//!
//! - [`dictionary`]: unit-norm feature dictionary, synthesis/analysis, Hebbian rule, checkpoints
//! - [`lca`]: graded membrane dynamics, soft threshold, energy
//! - [`accumulator`]: spike discretization with carry, S-LCA step
//! - [`filters`]: exponential and boxcar smoothing of latent codes
//! - [`period`]: display-period runner shared by both regimes
//! - [`data`]: CIFAR binaries, DVS events, windowing, synthetic datasets
//! - [`classifier`]: softmax linear head on latent features
//! - [`experiment`]: training schedule, sweeps, metrics, run directories
//! - [`export`]: PPM/PGM rendering of dictionaries and reconstructions
//! - [`cli`]: command-line front end
//!
//! Batch work runs through [`exec`], which uses rayon when the `parallel`
//! feature is enabled and degrades to plain iteration otherwise.

pub mod accumulator;
pub mod classifier;
pub mod cli;
pub mod data;
pub mod dictionary;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod export;
pub mod filters;
pub mod lca;
pub mod linalg;
pub mod period;

pub use accumulator::{accumulate_step, run_spiking_inference, slca_step, AccumulatorState, SpikeFrame};
pub use dictionary::{Dictionary, InputDims, Residual};
pub use error::{Error, Result};
pub use exec::Execution;
pub use filters::{CodeFilter, FilterSpec};
pub use lca::{energy, lca_step, run_inference, soft_threshold, LcaParams, MembraneState, SparseCode};
pub use period::{DisplayPeriod, InputEncoding, PeriodOutput};
