//! Geographically weighted lasso for station-level ridership regression.
//!
//! Local lasso fits are computed with least angle regression under kernel
//! weights built from either great-circle or shortest-path (network)
//! distances, with a leave-one-out bandwidth search. Baseline OLS and GWR
//! estimators, spatial diagnostics and coefficient clustering sit around
//! that core.

pub mod ada_gwl;
pub mod cli;
pub mod clustering;
pub mod config;
pub mod dataset;
pub mod design;
pub mod diagnostics;
pub mod error;
pub mod gwr;
pub mod kernel;
pub mod lars;
pub mod network;
pub mod synth;

pub use error::{Error, Result};
