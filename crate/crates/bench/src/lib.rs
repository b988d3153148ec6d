//! Fixtures shared by the benchmarks.

use stabledrift_core::drift::{DriftField, DriftSpec};
use stabledrift_core::{GridField, GridSpec, SpectralMeasure};

pub fn cauchy1() -> SpectralMeasure {
    SpectralMeasure::symmetrize(&[(vec![1.0], 1.0)]).expect("valid measure")
}

/// Gaussian bump on a centered 1-d grid with a tanh drift fitted to it.
pub fn resolvent_problem(n: usize, h: f64) -> (GridField, DriftSpec) {
    let spec = GridSpec::centered(1, n, h);
    let drift = DriftSpec::from_grid(DriftField::Tanh { amp: 0.1, scale: 1.0 }, &spec).expect("valid drift");
    (GridField::from_fn(spec, |x| (-0.5 * x[0] * x[0]).exp()), drift)
}
