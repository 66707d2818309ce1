//! Attractor reconstruction from scalar time series and its characterization
//! by shape distributions and classical chaotic invariants.

pub mod chaos;
pub mod classify;
pub mod embedding;
pub mod error;
pub mod experiments;
pub mod models;
pub mod par;
pub mod series;
pub mod shape;

pub use error::{Error, Result};
