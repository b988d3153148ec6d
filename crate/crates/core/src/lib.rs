//! Numerical toolkit for SDEs `dX = b(X) dt + dZ` driven by a symmetric
//! 1-stable process `Z` with a general, possibly atomic, spectral measure.
//!
//! The modules follow the data flow: [`spectral`] describes the noise,
//! [`sampler`] draws its increments, [`density`] inverts its characteristic
//! function, [`generator`] applies the nonlocal operator to test functions,
//! [`resolvent`] solves `λu - Lu - b·Du = f` on a periodic grid, and
//! [`mcverify`] checks the analytic side against path simulation.

pub mod density;
pub mod drift;
pub mod error;
pub mod fft;
pub mod generator;
pub mod grid;
pub mod mcverify;
pub mod quad;
pub mod resolvent;
pub mod rng;
pub mod sampler;
pub mod spectral;
pub mod stats;

pub use density::{density_grid, density_point, DensityGrid};
pub use drift::{DriftField, DriftSpec};
pub use error::{Error, Result};
pub use generator::{apply_full, apply_l, QuadConfig, TestFunction};
pub use grid::{GridField, GridSpec};
pub use mcverify::SimConfig;
pub use resolvent::ResolventSolution;
pub use sampler::{IncrementBatch, Scheme};
pub use spectral::{NondegeneracyReport, SpectralMeasure};

/// Version recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Lowercase hex SHA-256 of `bytes`; the hash used for fingerprints and manifests.
pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex_digest(&Sha256::digest(bytes))
}
