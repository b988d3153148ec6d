//! Densities of `Z_t` and of the frozen process by Fourier inversion.
//!
//! Grid evaluation inverts `exp(-tΦ̄(p) + i⟨p, shift⟩)` with a discrete
//! transform, which returns the periodization of the density over the grid
//! extent. Pointwise evaluation integrates the radial variable in closed form,
//! `∫_0^∞ r^{d-1} e^{-ar} cos(br) dr = Re[(d-1)! / (a - ib)^d]`, and leaves a
//! one-dimensional angular integral for adaptive quadrature.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;
use crate::grid::{GridField, GridSpec};
use crate::quad;
use crate::spectral::SpectralMeasure;

/// `-ln(1e-12)`: the characteristic function must fall below 1e-12 at Nyquist.
pub const TRUNCATION_DECAY: f64 = 27.631_021_115_928_548;
const CLIP_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct DensityGrid {
    pub field: GridField,
    /// Number of values below `-1e-9` before clipping.
    pub clipped: usize,
    pub min_raw: f64,
}

/// Frequency cutoff the grid must resolve so that `exp(-t P_max / κ) < 1e-12`.
pub fn required_nyquist(t: f64, kappa: f64) -> f64 {
    TRUNCATION_DECAY * kappa / t
}

/// A centered grid with `n` points per axis at the coarsest spacing meeting
/// the Nyquist requirement. Callers should pick `n` so the extent reaches
/// `40 t κ`.
pub fn default_grid(mu: &SpectralMeasure, t: f64, n: usize) -> Result<GridSpec> {
    let kappa = mu.nondegeneracy_kappa(64)?.kappa;
    let h = std::f64::consts::PI / required_nyquist(t, kappa);
    Ok(GridSpec::centered(mu.dimension(), n, h))
}

fn check_grid(mu: &SpectralMeasure, t: f64, grid: &GridSpec) -> Result<f64> {
    if grid.dimension() != mu.dimension() {
        return Err(Error::DimensionError { expected: mu.dimension(), got: grid.dimension() });
    }
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::InvalidParameter(format!("time {t} must be positive")));
    }
    let kappa = mu.nondegeneracy_kappa(64)?.kappa;
    let required = required_nyquist(t, kappa);
    let p_max = grid.nyquist();
    if p_max < required {
        return Err(Error::GridTooCoarse { p_max, required_p_max: required });
    }
    Ok(kappa)
}

/// Inverts a characteristic function `cf(p)` on `grid`, returning the
/// complex field `(2π)^{-d} Σ_k cf(p_k) e^{-i⟨p_k, x⟩} Δp^d`.
pub fn invert_characteristic(grid: &GridSpec, cf: impl Fn(&[f64]) -> Complex64 + Sync) -> Vec<Complex64> {
    let d = grid.dimension();
    let freqs: Vec<Vec<f64>> = (0..d).map(|k| grid.frequencies(k)).collect();
    let fspec = GridSpec { origin: vec![0.0; d], spacing: vec![1.0; d], shape: grid.shape.clone() };
    let mut data: Vec<Complex64> = (0..grid.len())
        .into_par_iter()
        .map(|flat| {
            let idx = fspec.multi_index(flat);
            let p: Vec<f64> = idx.iter().enumerate().map(|(k, &i)| freqs[k][i]).collect();
            let phase: f64 = -p.iter().zip(&grid.origin).map(|(a, b)| a * b).sum::<f64>();
            cf(&p) * Complex64::from_polar(1.0, phase)
        })
        .collect();
    fft::forward(&mut data, &grid.shape);
    let norm = 1.0 / (0..d).map(|k| grid.extent(k)).product::<f64>();
    data.par_iter_mut().for_each(|v| *v *= norm);
    data
}

fn shifted_cf<'a>(mu: &'a SpectralMeasure, t: f64, shift: &'a [f64]) -> impl Fn(&[f64]) -> Complex64 + Sync + 'a {
    move |p: &[f64]| {
        let ph: f64 = p.iter().zip(shift).map(|(a, b)| a * b).sum();
        Complex64::from_polar((-t * mu.exponent(p)).exp(), ph)
    }
}

/// Density of `shift + Z_t` on `grid`.
pub fn density_grid(mu: &SpectralMeasure, t: f64, shift: &[f64], grid: &GridSpec) -> Result<DensityGrid> {
    if shift.len() != mu.dimension() {
        return Err(Error::DimensionError { expected: mu.dimension(), got: shift.len() });
    }
    check_grid(mu, t, grid)?;
    let raw = invert_characteristic(grid, shifted_cf(mu, t, shift));
    let mut clipped = 0;
    let mut min_raw = f64::INFINITY;
    let values = raw
        .iter()
        .map(|v| {
            min_raw = min_raw.min(v.re);
            if v.re < -CLIP_TOL {
                clipped += 1;
            }
            v.re.max(0.0)
        })
        .collect();
    Ok(DensityGrid { field: GridField { spec: grid.clone(), values }, clipped, min_raw })
}

/// Frozen density `p̃(t, x, ·) = p_{Z_t}(· - x - b₀t)` on `grid`.
pub fn frozen_density_grid(mu: &SpectralMeasure, t: f64, x: &[f64], b0: &[f64], grid: &GridSpec) -> Result<DensityGrid> {
    let shift: Vec<f64> = x.iter().zip(b0).map(|(x, b)| x + b * t).collect();
    density_grid(mu, t, &shift, grid)
}

/// Mixed partial derivative `∂^β p` of the density of `shift + Z_t`, with
/// `beta[k]` the derivative order along axis `k`.
pub fn density_derivative_grid(
    mu: &SpectralMeasure,
    t: f64,
    shift: &[f64],
    grid: &GridSpec,
    beta: &[usize],
) -> Result<GridField> {
    if beta.len() != mu.dimension() || shift.len() != mu.dimension() {
        return Err(Error::DimensionError { expected: mu.dimension(), got: beta.len().min(shift.len()) });
    }
    check_grid(mu, t, grid)?;
    let base = shifted_cf(mu, t, shift);
    let raw = invert_characteristic(grid, |p: &[f64]| {
        let mut m = Complex64::new(1.0, 0.0);
        for (pk, &b) in p.iter().zip(beta) {
            for _ in 0..b {
                m *= Complex64::new(0.0, -pk);
            }
        }
        base(p) * m
    });
    Ok(GridField { spec: grid.clone(), values: raw.iter().map(|v| v.re).collect() })
}

/// Density of `Z_t` at a single point, `d ≤ 2`.
pub fn density_point(mu: &SpectralMeasure, t: f64, x: &[f64]) -> Result<f64> {
    let d = mu.dimension();
    if x.len() != d {
        return Err(Error::DimensionError { expected: d, got: x.len() });
    }
    if d > 2 {
        return Err(Error::UnsupportedDimension(d));
    }
    mu.nondegeneracy_kappa(64)?;
    if d == 1 {
        let a = t * mu.exponent(&[1.0]);
        return Ok(a / (std::f64::consts::PI * (a * a + x[0] * x[0])));
    }
    let integrand = |phi: f64| {
        let (s, c) = phi.sin_cos();
        let a = t * mu.exponent(&[c, s]);
        let b = c * x[0] + s * x[1];
        let (a2, b2) = (a * a, b * b);
        (a2 - b2) / ((a2 + b2) * (a2 + b2))
    };
    let pi = std::f64::consts::PI;
    let wrap = |phi: f64| phi.rem_euclid(pi);
    let mut breaks = vec![0.0, pi];
    for pair in mu.pairs() {
        breaks.push(wrap(pair.dir[1].atan2(pair.dir[0]) + 0.5 * pi));
    }
    let r = x[0].hypot(x[1]);
    if r > 0.0 {
        let perp = wrap(x[1].atan2(x[0]) + 0.5 * pi);
        // angular width of the peak where ⟨ω, x⟩ ≈ 0
        let a_perp = t * mu.exponent(&[perp.cos(), perp.sin()]);
        let w = (a_perp / r).min(0.25);
        for k in -4..=4 {
            breaks.push(wrap(perp + k as f64 * w));
        }
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    let half = quad::adaptive_breaks(&integrand, &breaks, 1e-14, 1e-12);
    Ok(2.0 * half / (4.0 * pi * pi))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingRow {
    pub t: f64,
    pub sup: f64,
    /// `sup · t^{d + |β|}`, constant in `t` for a 1-stable density.
    pub scaled: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingProbe {
    pub order: usize,
    pub rows: Vec<ScalingRow>,
    /// `max/min` of the scaled column.
    pub spread: f64,
    pub flagged: bool,
}

fn multi_indices(d: usize, order: usize) -> Vec<Vec<usize>> {
    if d == 1 {
        return vec![vec![order]];
    }
    (0..=order)
        .flat_map(|first| multi_indices(d - 1, order - first).into_iter().map(move |mut rest| {
            rest.insert(0, first);
            rest
        }))
        .collect()
}

/// Sup norms of `∂^β p_{Z_t}` over a shared grid for each `t`, scaled by `t^{d+|β|}`.
pub fn derivative_scaling_probe(
    mu: &SpectralMeasure,
    t_list: &[f64],
    order: usize,
    grid: &GridSpec,
) -> Result<ScalingProbe> {
    if t_list.len() < 2 {
        return Err(Error::InvalidParameter("need at least two times".into()));
    }
    if order > 2 {
        return Err(Error::InvalidParameter(format!("derivative order {order} > 2")));
    }
    let d = mu.dimension();
    let zero = vec![0.0; d];
    let mut rows = Vec::with_capacity(t_list.len());
    for &t in t_list {
        let mut sup: f64 = 0.0;
        for beta in multi_indices(d, order) {
            let f = density_derivative_grid(mu, t, &zero, grid, &beta)?;
            sup = sup.max(f.sup_norm());
        }
        rows.push(ScalingRow { t, sup, scaled: sup * t.powi((d + order) as i32) });
    }
    let hi = rows.iter().map(|r| r.scaled).fold(f64::MIN, f64::max);
    let lo = rows.iter().map(|r| r.scaled).fold(f64::MAX, f64::min);
    let spread = hi / lo;
    Ok(ScalingProbe { order, rows, spread, flagged: spread > 1.05 })
}

/// Piecewise-linear CDF of a one-dimensional density tabulated on a grid.
#[derive(Debug, Clone)]
pub struct TabulatedCdf {
    origin: f64,
    spacing: f64,
    values: Vec<f64>,
}

impl TabulatedCdf {
    /// Cumulative trapezoid of `density`, anchored so that `F(center) = ½`
    /// for a density symmetric about `center`.
    pub fn from_symmetric_density(density: &GridField, center: f64) -> Result<Self> {
        if density.spec.dimension() != 1 {
            return Err(Error::UnsupportedDimension(density.spec.dimension()));
        }
        let h = density.spec.spacing[0];
        let origin = density.spec.origin[0];
        let mut values = Vec::with_capacity(density.values.len());
        let mut acc = 0.0;
        values.push(0.0);
        for w in density.values.windows(2) {
            acc += 0.5 * h * (w[0] + w[1]);
            values.push(acc);
        }
        let mut cdf = TabulatedCdf { origin, spacing: h, values };
        let offset = 0.5 - cdf.raw(center);
        cdf.values.iter_mut().for_each(|v| *v += offset);
        Ok(cdf)
    }

    /// Cumulative trapezoid from the left edge, for densities whose mass
    /// lies inside the grid.
    pub fn from_density(density: &GridField) -> Result<Self> {
        let mut cdf = Self::from_symmetric_density(density, density.spec.origin[0])?;
        let first = cdf.values[0];
        cdf.values.iter_mut().for_each(|v| *v -= first);
        let total = *cdf.values.last().unwrap_or(&1.0);
        cdf.values.iter_mut().for_each(|v| *v /= total);
        Ok(cdf)
    }

    fn raw(&self, x: f64) -> f64 {
        let s = (x - self.origin) / self.spacing;
        let n = self.values.len();
        if s <= 0.0 {
            return self.values[0];
        }
        let i = s.floor() as usize;
        if i + 1 >= n {
            return self.values[n - 1];
        }
        let f = s - i as f64;
        self.values[i] * (1.0 - f) + self.values[i + 1] * f
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.raw(x).clamp(0.0, 1.0)
    }

    /// Inverse by bisection over the table with linear interpolation.
    pub fn quantile(&self, u: f64) -> f64 {
        let n = self.values.len();
        let i = self.values.partition_point(|&v| v < u);
        if i == 0 {
            return self.origin;
        }
        if i >= n {
            return self.origin + (n - 1) as f64 * self.spacing;
        }
        let (lo, hi) = (self.values[i - 1], self.values[i]);
        let f = if hi > lo { (u - lo) / (hi - lo) } else { 0.5 };
        self.origin + (i as f64 - 1.0 + f) * self.spacing
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn cauchy1() -> SpectralMeasure {
        SpectralMeasure::symmetrize(&[(vec![1.0], 1.0)]).unwrap()
    }

    #[test]
    fn grid_value_at_origin_standard_cauchy() {
        // independent oracle: adaptive quadrature of (1/π)∫_0^∞ e^{-p} dp
        let oracle = quad::adaptive(|p: f64| (-p).exp() / PI, 0.0, 60.0, 1e-15, 1e-15);
        let grid = GridSpec::centered(1, 1 << 17, 0.05);
        let g = density_grid(&cauchy1(), 1.0, &[0.0], &grid).unwrap();
        let at0 = g.field.values[1 << 16];
        assert!((at0 - oracle).abs() < 1e-6, "{at0}");
        assert!((g.field.integral() - 1.0).abs() < 1e-4);
        assert_eq!(g.clipped, 0);
        assert!(g.min_raw >= -CLIP_TOL);
    }

    #[test]
    fn grid_rejects_coarse_spacing_and_degenerate_measures() {
        let grid = GridSpec::centered(1, 256, 0.5);
        assert!(matches!(density_grid(&cauchy1(), 1.0, &[0.0], &grid), Err(Error::GridTooCoarse { .. })));
        let ray = SpectralMeasure::symmetrize(&[(vec![1.0, 0.0], 1.0)]).unwrap();
        let g2 = GridSpec::centered(2, 16, 0.05);
        assert!(matches!(density_grid(&ray, 1.0, &[0.0, 0.0], &g2), Err(Error::DegenerateMeasure { .. })));
        assert!(matches!(density_point(&ray, 1.0, &[0.0, 0.0]), Err(Error::DegenerateMeasure { .. })));
    }

    #[test]
    fn point_values_match_closed_forms() {
        let p = density_point(&cauchy1(), 1.0, &[1.0]).unwrap();
        assert!((p - 1.0 / (2.0 * PI)).abs() < 1e-14);
        let cyl = SpectralMeasure::cylindrical(2);
        let p0 = density_point(&cyl, 1.0, &[0.0, 0.0]).unwrap();
        assert!((p0 - 1.0 / (PI * PI)).abs() < 1e-10);
        // product of two Cauchy densities off the origin
        for x in [[0.3, -1.7], [4.0, 0.1], [-12.0, 9.0]] {
            let exact = (1.0 / (PI * (1.0 + x[0] * x[0]))) * (1.0 / (PI * (1.0 + x[1] * x[1])));
            let v = density_point(&cyl, 1.0, &x).unwrap();
            assert!((v - exact).abs() < 1e-9 * exact.max(1e-3), "{x:?}: {v} vs {exact}");
        }
        // isotropic with Φ̄(λ) = |λ|: radial oracle ∫ e^{-r} r dr / (2π) = 1/(2π)
        let iso = SpectralMeasure::isotropic(2, PI / 2.0).unwrap();
        let radial = quad::adaptive(|r: f64| (-r).exp() * r, 0.0, 80.0, 1e-15, 1e-15) / (2.0 * PI);
        assert!((density_point(&iso, 1.0, &[0.0, 0.0]).unwrap() - radial).abs() < 1e-10);
    }

    #[test]
    fn point_density_is_even() {
        let mu = SpectralMeasure::symmetrize(&[(vec![1.0, 0.3], 1.0), (vec![-0.2, 1.0], 0.7)]).unwrap();
        for x in [[0.4, 1.1], [3.0, -2.0]] {
            let a = density_point(&mu, 0.8, &x).unwrap();
            let b = density_point(&mu, 0.8, &[-x[0], -x[1]]).unwrap();
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn grid_scaling_identity() {
        let mu = SpectralMeasure::symmetrize(&[(vec![1.0, 0.3], 1.0), (vec![-0.2, 1.0], 0.7)]).unwrap();
        let g1 = default_grid(&mu, 1.0, 128).unwrap();
        let g2 = g1.scaled(2.0);
        let p1 = density_grid(&mu, 1.0, &[0.0, 0.0], &g1).unwrap().field;
        let p2 = density_grid(&mu, 2.0, &[0.0, 0.0], &g2).unwrap().field;
        for i in (0..p1.values.len()).step_by(97) {
            let expect = 0.25 * p1.values[i];
            assert!((p2.values[i] - expect).abs() <= 1e-6 * expect.abs() + 1e-15);
        }
    }

    #[test]
    fn frozen_density_is_translation() {
        let mu = cauchy1();
        let grid = GridSpec::centered(1, 4096, 0.1);
        let base = density_grid(&mu, 1.0, &[0.0], &grid).unwrap().field;
        // x + b0 t = 0.3 + 0.5 = 8 cells
        let frozen = frozen_density_grid(&mu, 1.0, &[0.3], &[0.5], &grid).unwrap().field;
        for i in 100..3900 {
            assert!((frozen.values[i + 8] - base.values[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn derivative_grid_matches_closed_form() {
        let grid = GridSpec::centered(1, 1 << 15, 0.05);
        let d1 = density_derivative_grid(&cauchy1(), 1.0, &[0.0], &grid, &[1]).unwrap();
        for &i in &[(1 << 14) + 7, (1 << 14) - 31, (1 << 14) + 200] {
            let x = grid.point(i)[0];
            let exact = -2.0 * x / (PI * (1.0 + x * x).powi(2));
            assert!((d1.values[i] - exact).abs() < 1e-6);
        }
    }

    #[test]
    fn derivative_scaling_in_one_dimension() {
        let grid = GridSpec::centered(1, 1 << 14, 0.01);
        for order in 0..=2 {
            let probe = derivative_scaling_probe(&cauchy1(), &[0.5, 1.0, 2.0], order, &grid).unwrap();
            assert!(probe.spread < 1.02, "order {order}: {probe:?}");
        }
    }

    #[test]
    fn tabulated_cdf_inverts() {
        let grid = GridSpec::centered(1, 1 << 16, 0.05);
        let g = density_grid(&cauchy1(), 1.0, &[0.0], &grid).unwrap().field;
        let cdf = TabulatedCdf::from_symmetric_density(&g, 0.0).unwrap();
        for x in [-3.0, 0.0, 0.5, 10.0] {
            let exact = 0.5 + f64::atan(x) / PI;
            assert!((cdf.cdf(x) - exact).abs() < 1e-4, "{x}");
            assert!((cdf.quantile(cdf.cdf(x)) - x).abs() < 1e-6);
        }
    }
}
