//! Time-frequency analysis of customer transaction histories for
//! suspicious-activity scoring.
//!
//! The pipeline runs in stages, one module each:
//!
//! 1. [`ingest`] parses transaction, CRM and label files and aggregates each
//!    customer's signed flows into a daily series.
//! 2. [`spectral`] slides a window over the series and builds a magnitude
//!    spectrogram with a short-time Fourier transform.
//! 3. [`tffeatures`] reduces a spectrogram to eleven scalar features
//!    (moments, sparsity, discontinuity, entropy).
//! 4. [`dataset`] joins transaction (T), time-frequency (TF) and CRM feature
//!    groups into labelled rows for one of six feature-set selections.
//! 5. [`forest`] trains a random-forest scorer, [`anneal`] tunes its
//!    structural hyperparameters by simulated annealing.
//! 6. [`eval`] computes ROC/AUC, confusion matrices, error rates and a
//!    mutual-information feature ranking.
//!
//! [`synth`] generates a labelled synthetic population in the ingest file
//! formats so the whole pipeline can run end to end without real bank data.
//!
//! Per-customer and per-tree work is data parallel. With the default
//! `parallel` feature it runs on rayon; [`Execution`] selects the mode at
//! runtime and both modes produce identical results.

pub mod anneal;
pub mod dataset;
mod error;
pub mod eval;
mod exec;
pub mod forest;
pub mod ingest;
pub mod spectral;
pub mod synth;
pub mod tffeatures;

pub use error::{Error, Result};
pub use exec::Execution;
