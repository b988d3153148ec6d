//! The nonlocal generator `L` and the full operator `𝓛 = L + b·D` on test functions.
//!
//! With `ν(dz) = (2/π) ρ⁻² dρ μ(dθ)` the symmetrized principal value is
//!
//! `Lφ(x) = (1/π) Σ_atoms m ∫_0^∞ [φ(x+ρθ) + φ(x-ρθ) - 2φ(x)] ρ⁻² dρ`,
//!
//! which sends `cos⟨ω,·⟩` to `-Φ̄(ω) cos⟨ω,·⟩`. The radial integral is split
//! into a second-order Taylor closure on `(0, ρ_min)`, composite
//! Gauss–Legendre on log-spaced panels over `[ρ_min, ρ_max]`, and the tail.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::drift::DriftSpec;
use crate::error::{Error, Result};
use crate::grid::{GridField, GridSpec};
use crate::quad::gauss_legendre;
use crate::spectral::{fibonacci_sphere, MeasureKind, SpectralMeasure, LEVY_MEASURE_SCALE};

/// `√(2 ln 10¹⁶)`: a Gaussian window is below 1e-16 beyond this many widths.
const WINDOW_RADIUS: f64 = 8.582_643_8;

/// Smooth bounded test functions with closed-form derivatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum TestFunction {
    /// `amp · exp(-|x-c|² / 2w²)`
    GaussianBump { center: Vec<f64>, width: f64, amp: f64 },
    /// `cos(⟨ω,x⟩ + phase)`
    Trig { omega: Vec<f64>, phase: f64 },
    /// `(c₀ + ⟨a, x-c⟩) · exp(-|x-c|² / 2w²)`
    PolynomialWindowed { center: Vec<f64>, constant: f64, linear: Vec<f64>, width: f64 },
    /// `value` everywhere.
    Constant { dimension: usize, value: f64 },
}

/// Declared sup bounds for `φ`, `|Dφ|` and the operator norm of `D²φ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub value: f64,
    pub gradient: f64,
    pub hessian: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

impl TestFunction {
    pub fn gaussian(center: Vec<f64>, width: f64) -> Self {
        TestFunction::GaussianBump { center, width, amp: 1.0 }
    }

    pub fn character(omega: Vec<f64>) -> Self {
        TestFunction::Trig { omega, phase: 0.0 }
    }

    pub fn dimension(&self) -> usize {
        match self {
            TestFunction::GaussianBump { center, .. } | TestFunction::PolynomialWindowed { center, .. } => center.len(),
            TestFunction::Trig { omega, .. } => omega.len(),
            TestFunction::Constant { dimension, .. } => *dimension,
        }
    }

    /// Scales the function by `a`.
    pub fn scaled(&self, a: f64) -> Self {
        match self.clone() {
            TestFunction::GaussianBump { center, width, amp } => TestFunction::GaussianBump { center, width, amp: a * amp },
            TestFunction::PolynomialWindowed { center, constant, linear, width } => TestFunction::PolynomialWindowed {
                center,
                constant: a * constant,
                linear: linear.iter().map(|v| a * v).collect(),
                width,
            },
            TestFunction::Constant { dimension, value } => TestFunction::Constant { dimension, value: a * value },
            TestFunction::Trig { .. } => panic!("characters are not closed under scaling; use a windowed family"),
        }
    }

    #[inline]
    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            TestFunction::GaussianBump { center, width, amp } => {
                let r2: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
                amp * (-0.5 * r2 / (width * width)).exp()
            }
            TestFunction::Trig { omega, phase } => (dot(omega, x) + phase).cos(),
            TestFunction::PolynomialWindowed { center, constant, linear, width } => {
                let mut r2 = 0.0;
                let mut q = *constant;
                for k in 0..x.len() {
                    let y = x[k] - center[k];
                    r2 += y * y;
                    q += linear[k] * y;
                }
                q * (-0.5 * r2 / (width * width)).exp()
            }
            TestFunction::Constant { value, .. } => *value,
        }
    }

    pub fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            TestFunction::GaussianBump { center, width, .. } => {
                let v = self.value(x);
                let w2 = width * width;
                for k in 0..x.len() {
                    out[k] = -(x[k] - center[k]) / w2 * v;
                }
            }
            TestFunction::Trig { omega, phase } => {
                let s = -(dot(omega, x) + phase).sin();
                omega.iter().zip(out).for_each(|(w, o)| *o = w * s);
            }
            TestFunction::PolynomialWindowed { center, constant, linear, width } => {
                let w2 = width * width;
                let y: Vec<f64> = x.iter().zip(center).map(|(a, c)| a - c).collect();
                let g = (-0.5 * dot(&y, &y) / w2).exp();
                let q = constant + dot(linear, &y);
                for k in 0..x.len() {
                    out[k] = (linear[k] - q * y[k] / w2) * g;
                }
            }
            TestFunction::Constant { .. } => out.iter_mut().for_each(|o| *o = 0.0),
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        self.gradient_into(x, &mut g);
        g
    }

    /// `D²φ(x)` as a row-major `d×d` matrix.
    pub fn hessian(&self, x: &[f64]) -> Vec<f64> {
        let d = x.len();
        let mut h = vec![0.0; d * d];
        match self {
            TestFunction::GaussianBump { center, width, .. } => {
                let v = self.value(x);
                let w2 = width * width;
                for i in 0..d {
                    for j in 0..d {
                        let yi = x[i] - center[i];
                        let yj = x[j] - center[j];
                        h[i * d + j] = (yi * yj / (w2 * w2) - if i == j { 1.0 / w2 } else { 0.0 }) * v;
                    }
                }
            }
            TestFunction::Trig { omega, phase } => {
                let c = -(dot(omega, x) + phase).cos();
                for i in 0..d {
                    for j in 0..d {
                        h[i * d + j] = omega[i] * omega[j] * c;
                    }
                }
            }
            TestFunction::PolynomialWindowed { center, constant, linear, width } => {
                let w2 = width * width;
                let y: Vec<f64> = x.iter().zip(center).map(|(a, c)| a - c).collect();
                let g = (-0.5 * dot(&y, &y) / w2).exp();
                let q = constant + dot(linear, &y);
                for i in 0..d {
                    for j in 0..d {
                        let dgi = -y[i] / w2;
                        let dgj = -y[j] / w2;
                        let d2g = y[i] * y[j] / (w2 * w2) - if i == j { 1.0 / w2 } else { 0.0 };
                        h[i * d + j] = (linear[i] * dgj + linear[j] * dgi + q * d2g) * g;
                    }
                }
            }
            TestFunction::Constant { .. } => {}
        }
        h
    }

    pub fn bounds(&self) -> Bounds {
        match self {
            TestFunction::GaussianBump { width, amp, .. } => Bounds {
                value: amp.abs(),
                gradient: amp.abs() / width * (-0.5f64).exp(),
                hessian: amp.abs() / (width * width),
            },
            TestFunction::Trig { omega, .. } => {
                let w = norm(omega);
                Bounds { value: 1.0, gradient: w, hessian: w * w }
            }
            TestFunction::PolynomialWindowed { constant, linear, width, .. } => {
                let a = norm(linear);
                let c = constant.abs();
                Bounds {
                    value: c + a * width * (-0.5f64).exp(),
                    gradient: a * (1.0 + 2.0 / std::f64::consts::E) + c / width * (-0.5f64).exp(),
                    hessian: 3.0 * a / width + c / (width * width),
                }
            }
            TestFunction::Constant { value, .. } => Bounds { value: value.abs(), gradient: 0.0, hessian: 0.0 },
        }
    }

    /// Center and radius of a ball outside which `|φ|` is below 1e-16 of its scale.
    pub fn effective_support(&self) -> Option<(Vec<f64>, f64)> {
        match self {
            TestFunction::GaussianBump { center, width, .. } => Some((center.clone(), WINDOW_RADIUS * width)),
            TestFunction::PolynomialWindowed { center, width, .. } => {
                Some((center.clone(), (WINDOW_RADIUS + 1.0) * width))
            }
            _ => None,
        }
    }

    /// Samples `n` points in `[-r, r]^d` around the natural center and checks
    /// the declared bounds (with the Frobenius norm bounding the Hessian by `√d`).
    pub fn check_bounds(&self, n: usize, seed: u64) -> Result<()> {
        use rand::{Rng, SeedableRng};
        let d = self.dimension();
        let (c, r) = self.effective_support().unwrap_or((vec![0.0; d], 10.0));
        let b = self.bounds();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let tol = 1.0 + 1e-12;
        for _ in 0..n {
            let x: Vec<f64> = c.iter().map(|ci| ci + rng.random_range(-r..r)).collect();
            let v = self.value(&x);
            let g = norm(&self.gradient(&x));
            let h = norm(&self.hessian(&x));
            if !(v.is_finite() && g.is_finite() && h.is_finite()) {
                return Err(Error::EvaluationError(format!("test function is not finite at {x:?}")));
            }
            if v.abs() > b.value * tol || g > b.gradient * tol || h > b.hessian * (d as f64).sqrt() * tol {
                return Err(Error::InvalidParameter(format!("declared bounds violated at {x:?}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadConfig {
    pub rho_min: f64,
    pub rho_max: f64,
    pub n_rho: usize,
}

impl Default for QuadConfig {
    fn default() -> Self {
        QuadConfig { rho_min: 1e-4, rho_max: 1e4, n_rho: 2048 }
    }
}

const PANEL_NODES: usize = 16;

/// Value of `Lφ(x)` with a bound on the neglected outer tail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorValue {
    pub value: f64,
    pub error_bar: f64,
}

/// Precomputed angular and radial rules for one measure.
#[derive(Debug, Clone)]
pub struct Generator {
    dimension: usize,
    /// Directions with coefficient `(1/π) · mass`, already merged over `±θ`.
    rays: Vec<(Vec<f64>, f64)>,
    nodes: Vec<f64>,
    /// Gauss–Legendre weights divided by `ρ²`.
    weights: Vec<f64>,
    quad: QuadConfig,
}

impl Generator {
    pub fn new(mu: &SpectralMeasure, quad: QuadConfig) -> Result<Self> {
        if !(quad.rho_min > 0.0 && quad.rho_min < quad.rho_max && quad.n_rho >= PANEL_NODES) {
            return Err(Error::InvalidParameter(format!("invalid radial quadrature {quad:?}")));
        }
        let d = mu.dimension();
        // a pair ±θ of mass m each carries (2/π)·m = w/π
        let scale = LEVY_MEASURE_SCALE / 2.0;
        let rays = match mu.kind() {
            MeasureKind::Discrete { .. } => mu.pairs().into_iter().map(|p| (p.dir, scale * p.weight)).collect(),
            MeasureKind::Isotropic { total_mass } => match d {
                1 => vec![(vec![1.0], scale * total_mass)],
                2 => {
                    let n = 64;
                    (0..n)
                        .map(|j| {
                            let a = std::f64::consts::PI * (j as f64 + 0.5) / n as f64;
                            (vec![a.cos(), a.sin()], scale * 2.0 * total_mass / (2 * n) as f64)
                        })
                        .collect()
                }
                _ => {
                    let pts = fibonacci_sphere(2048);
                    let m = total_mass / pts.len() as f64;
                    // unmerged atoms: each counts once with coefficient m/π
                    pts.into_iter().map(|p| (p, scale * m)).collect()
                }
            },
        };
        let panels = quad.n_rho / PANEL_NODES;
        let (gx, gw) = gauss_legendre(PANEL_NODES);
        let (la, lb) = (quad.rho_min.ln(), quad.rho_max.ln());
        let mut nodes = Vec::with_capacity(panels * PANEL_NODES);
        let mut weights = Vec::with_capacity(panels * PANEL_NODES);
        for p in 0..panels {
            let a = (la + (lb - la) * p as f64 / panels as f64).exp();
            let b = (la + (lb - la) * (p + 1) as f64 / panels as f64).exp();
            let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
            for (x, w) in gx.iter().zip(&gw) {
                let r = c + h * x;
                nodes.push(r);
                weights.push(h * w / (r * r));
            }
        }
        Ok(Generator { dimension: d, rays, nodes, weights, quad })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn quad(&self) -> QuadConfig {
        self.quad
    }

    /// `Lφ(x)`.
    pub fn apply_l(&self, phi: &TestFunction, x: &[f64]) -> Result<GeneratorValue> {
        if x.len() != self.dimension || phi.dimension() != self.dimension {
            return Err(Error::DimensionError { expected: self.dimension, got: x.len() });
        }
        if let TestFunction::Constant { .. } = phi {
            return Ok(GeneratorValue { value: 0.0, error_bar: 0.0 });
        }
        let d = self.dimension;
        let f0 = phi.value(x);
        let hess = phi.hessian(x);
        let sup = phi.bounds().value;
        let mut y = vec![0.0; d];
        let mut z = vec![0.0; d];
        let mut total = 0.0;
        let mut bar = 0.0;
        for (theta, coef) in &self.rays {
            let mut quad_sum = 0.0;
            for (&r, &w) in self.nodes.iter().zip(&self.weights) {
                for k in 0..d {
                    y[k] = x[k] + r * theta[k];
                    z[k] = x[k] - r * theta[k];
                }
                quad_sum += w * (phi.value(&y) + phi.value(&z) - 2.0 * f0);
            }
            let mut curv = 0.0;
            for i in 0..d {
                for j in 0..d {
                    curv += theta[i] * hess[i * d + j] * theta[j];
                }
            }
            let inner = self.quad.rho_min * curv;
            let tail = -2.0 * f0 / self.quad.rho_max;
            total += coef * (quad_sum + inner + tail);
            bar += coef * 2.0 * sup / self.quad.rho_max;
        }
        if !total.is_finite() {
            return Err(Error::EvaluationError(format!("generator is not finite at {x:?}")));
        }
        Ok(GeneratorValue { value: total, error_bar: bar })
    }

    /// `Lφ(x) + ⟨b(x), Dφ(x)⟩`.
    pub fn apply_full(&self, phi: &TestFunction, x: &[f64], drift: &DriftSpec) -> Result<GeneratorValue> {
        let l = self.apply_l(phi, x)?;
        let b = drift.eval(x);
        let g = phi.gradient(x);
        let v = l.value + dot(&b, &g);
        if !v.is_finite() {
            return Err(Error::EvaluationError(format!("drift term is not finite at {x:?}")));
        }
        Ok(GeneratorValue { value: v, error_bar: l.error_bar })
    }

    /// `Lφ` at many points in parallel.
    pub fn apply_l_batch(&self, phi: &TestFunction, xs: &[Vec<f64>]) -> Result<Vec<GeneratorValue>> {
        xs.par_iter().map(|x| self.apply_l(phi, x)).collect()
    }

    /// `Lφ(x)` for `x` outside the effective support ball of `φ`: only the
    /// chords of each ray line through the ball contribute.
    fn apply_l_far(&self, phi: &TestFunction, x: &[f64], center: &[f64], radius: f64, rule: &(Vec<f64>, Vec<f64>)) -> f64 {
        let d = self.dimension;
        let diff: Vec<f64> = center.iter().zip(x).map(|(c, a)| c - a).collect();
        let dist2 = dot(&diff, &diff);
        let mut total = 0.0;
        let mut y = vec![0.0; d];
        for (theta, coef) in &self.rays {
            // line x + sθ meets the ball for s in [p - q, p + q]
            let p = dot(&diff, theta);
            let disc = radius * radius - (dist2 - p * p);
            if disc <= 0.0 {
                continue;
            }
            let q = disc.sqrt();
            let (a, b) = (p - q, p + q);
            let mut acc = 0.0;
            let panels = 4;
            for k in 0..panels {
                let lo = a + (b - a) * k as f64 / panels as f64;
                let hi = a + (b - a) * (k + 1) as f64 / panels as f64;
                let (c, h) = (0.5 * (lo + hi), 0.5 * (hi - lo));
                for (t, w) in rule.0.iter().zip(&rule.1) {
                    let s = c + h * t;
                    for i in 0..d {
                        y[i] = x[i] + s * theta[i];
                    }
                    acc += h * w * phi.value(&y) / (s * s);
                }
            }
            total += coef * acc;
        }
        total
    }
}

/// `Lφ(x)` with a freshly built rule.
pub fn apply_l(phi: &TestFunction, x: &[f64], mu: &SpectralMeasure, quad: QuadConfig) -> Result<GeneratorValue> {
    Generator::new(mu, quad)?.apply_l(phi, x)
}

/// `Lφ(x) + ⟨b(x), Dφ(x)⟩` with a freshly built rule.
pub fn apply_full(
    phi: &TestFunction,
    x: &[f64],
    mu: &SpectralMeasure,
    drift: &DriftSpec,
    quad: QuadConfig,
) -> Result<GeneratorValue> {
    Generator::new(mu, quad)?.apply_full(phi, x, drift)
}

/// `Lφ` tabulated on a box around the support of a windowed test function,
/// with chord quadrature outside the box. Used inside path simulations where
/// `Lφ` is needed at millions of points.
#[derive(Debug, Clone)]
pub struct GeneratorTable {
    generator: Generator,
    phi: TestFunction,
    table: GridField,
    center: Vec<f64>,
    radius: f64,
    rule: (Vec<f64>, Vec<f64>),
}

impl GeneratorTable {
    /// `cells_per_width` grid points per window width inside the box.
    pub fn new(generator: Generator, phi: TestFunction, cells_per_width: usize) -> Result<Self> {
        let (center, radius) = phi
            .effective_support()
            .ok_or_else(|| Error::InvalidParameter("tabulation needs a windowed test function".into()))?;
        let width = match &phi {
            TestFunction::GaussianBump { width, .. } | TestFunction::PolynomialWindowed { width, .. } => *width,
            _ => unreachable!("windowed families only"),
        };
        let d = generator.dimension();
        let h = width / cells_per_width as f64;
        let half = radius + 2.0 * h;
        let n = (2.0 * half / h).ceil() as usize + 1;
        let origin: Vec<f64> = center.iter().map(|c| c - half).collect();
        let spec = GridSpec::new(origin, vec![h; d], vec![n; d])?;
        let pts: Vec<Vec<f64>> = (0..spec.len()).map(|i| spec.point(i)).collect();
        let values = generator.apply_l_batch(&phi, &pts)?.into_iter().map(|g| g.value).collect();
        let table = GridField::new(spec, values)?;
        Ok(GeneratorTable { generator, phi, table, center, radius, rule: gauss_legendre(16) })
    }

    pub fn phi(&self) -> &TestFunction {
        &self.phi
    }

    pub fn generator(&self) -> &Generator {
        &self.generator
    }

    /// Interpolated `Lφ(x)`.
    #[inline]
    pub fn apply_l(&self, x: &[f64]) -> f64 {
        match self.table.interpolate_cubic(x) {
            Some(v) => v,
            None => self.generator.apply_l_far(&self.phi, x, &self.center, self.radius, &self.rule),
        }
    }

    /// Interpolated `𝓛φ(x)`.
    #[inline]
    pub fn apply_full(&self, x: &[f64], b: &[f64]) -> f64 {
        let mut g = [0.0; 3];
        self.phi.gradient_into(x, &mut g[..x.len()]);
        self.apply_l(x) + dot(b, &g[..x.len()])
    }
}
