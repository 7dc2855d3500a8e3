//! Adaptive Petrov-Galerkin localized orthogonal decomposition (PG-LOD) for
//! sequences of similar rough elliptic coefficients, with a two-phase Darcy
//! upscaling driver.

pub mod error;
pub mod fem;
pub mod field;
pub mod grid;
pub mod interp;
pub mod linalg;
pub mod space;
pub mod adaptive;
pub mod config;
pub mod corrector;
pub mod darcy;
pub mod experiment;
pub mod indicator;
pub mod pglod;

pub use error::{Error, Result};
