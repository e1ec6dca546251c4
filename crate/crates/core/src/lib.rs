//! Staged Anosov–Katok construction of mean-equicontinuous skew products on
//! the 2-torus, with finite-stage certificates and spectral probes.

pub mod certificates;
pub mod cli;
pub mod conjugacy;
pub mod covers;
pub mod dynamics;
pub mod engine;
pub mod error;
pub mod maps;
pub mod plot;
pub mod rotation;
pub mod spectral;
pub mod surd;
pub mod torus;

pub use error::{Error, Result};
