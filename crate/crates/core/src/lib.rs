//! Weak measurements with post-selection.
//!
//! Closed-form meter distributions for the von Neumann measurement model with
//! a Gaussian pointer, the random-kick comparison protocol, sequential and
//! collective measurements, the Kraus/Lindblad decomposition of the joint
//! outcome density, and a per-run Monte Carlo simulator of the same
//! experiments.

pub mod cli;
pub mod collective;
pub mod config;
pub mod error;
pub mod fit;
pub mod io;
pub mod lindblad;
pub mod montecarlo;
pub mod pointer;
pub mod protocols;
pub mod quadrature;
pub mod quantum;

pub use error::{Error, Result};
