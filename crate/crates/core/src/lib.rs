//! Near-field microwave imaging for quasi-monostatic planar apertures.
//!
//! Spectral inverse-source reconstruction (GMRES on the normal-error
//! equations), ω-k and back-projection imaging, synthetic Born-model data,
//! image metrics and the file formats used by the `wavescope` CLI.

pub mod error;
pub mod imaging;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod probes;
pub mod quadrature;
pub mod rng;
pub mod scenario;
pub mod solver;
pub mod spectral;
pub mod wave;

pub use error::{Error, Result};
