//! Multi-speaker direction-of-arrival estimation for binaural hearing-aid
//! arrays.
//!
//! The pipeline estimates a direct-path relative transfer function (RTF) per
//! time-frequency bin by covariance whitening, compares it against a database
//! of anechoic prototype RTFs through the Hermitian angle, and accumulates
//! the angles over a coherence-selected subset of bins into a spatial
//! spectrum whose `J` highest peaks are the DOA estimates. A MUSIC spectrum
//! over the same bin subsets serves as the baseline, and a shoebox simulator
//! plus evaluation harness drive threshold sweeps end to end.

pub mod array_model;
pub mod audio;
pub mod coherence;
pub mod covariance;
pub mod error;
pub mod harness;
pub mod numerics;
pub mod rtf;
pub mod simulator;
pub mod spectra;

pub use error::{Error, Result};
