//! Multivariate EWMA early-warning detectors for weekly outbreak surveillance.

pub mod baselines;
pub mod calibrate;
pub mod config;
pub mod error;
pub mod evaluate;
pub mod experiment;
pub mod events;
pub mod kv;
pub mod mewma;
pub mod panel;
pub mod seed;
pub mod select;

pub use error::{Error, Result};
