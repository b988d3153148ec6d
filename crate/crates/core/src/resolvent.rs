//! Frozen-proxy resolvent as a Fourier multiplier and the Neumann series for
//! the variable-drift resolvent equation `λu - Lu - ⟨b, Du⟩ = f`.
//!
//! On a periodic grid with `û(ζ) = Σ u(x) e^{-i⟨ζ,x⟩}`, the proxy operator
//! `λ - L - ⟨b₀, D⟩` has symbol `λ + Φ̄(ζ) - i⟨ζ, b₀⟩` and `∂_k` has symbol
//! `iζ_k`. The remainder is `𝓡f = ⟨b - b₀, D R̃f⟩` and the solution is
//! `u = R̃ Σ_k 𝓡^k f`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::density_derivative_grid;
use crate::drift::DriftSpec;
use crate::error::{Error, Result};
use crate::fft;
use crate::grid::{GridField, GridHeader, GridSpec};
use crate::spectral::SpectralMeasure;

/// Refuse the Neumann series when the first-term ratio reaches this value.
pub const CONTRACTION_THRESHOLD: f64 = 0.9;
const BOUNDARY_TOL: f64 = 1e-6;
const IMAG_TOL: f64 = 1e-9;

/// Symbols of `L`, `D` and the proxy resolvent on one grid.
#[derive(Debug, Clone)]
pub struct ProxyOperator {
    spec: GridSpec,
    lambda: f64,
    b0: Vec<f64>,
    exponent: Vec<f64>,
    /// Frequency vector per flat index, component-major.
    zeta: Vec<Vec<f64>>,
}

fn to_complex(v: &[f64]) -> Vec<Complex64> {
    v.iter().map(|&x| Complex64::new(x, 0.0)).collect()
}

impl ProxyOperator {
    pub fn new(mu: &SpectralMeasure, spec: &GridSpec, lambda: f64, b0: &[f64]) -> Result<Self> {
        let d = spec.dimension();
        if mu.dimension() != d {
            return Err(Error::DimensionError { expected: mu.dimension(), got: d });
        }
        if b0.len() != d {
            return Err(Error::DimensionError { expected: d, got: b0.len() });
        }
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::InvalidParameter(format!("lambda {lambda} must be positive")));
        }
        mu.nondegeneracy_kappa(64)?;
        let freqs: Vec<Vec<f64>> = (0..d).map(|k| spec.frequencies(k)).collect();
        let idx = GridSpec { origin: vec![0.0; d], spacing: vec![1.0; d], shape: spec.shape.clone() };
        let mut zeta = vec![Vec::with_capacity(spec.len()); d];
        let mut exponent = Vec::with_capacity(spec.len());
        let mut p = vec![0.0; d];
        let mut q = vec![0.0; d];
        for flat in 0..spec.len() {
            let mi = idx.multi_index(flat);
            let mut nyq = Vec::new();
            for k in 0..d {
                p[k] = freqs[k][mi[k]];
                if spec.shape[k] % 2 == 0 && mi[k] == spec.shape[k] / 2 {
                    nyq.push(k);
                    // a Nyquist mode is its own conjugate: no odd part survives
                    zeta[k].push(0.0);
                } else {
                    zeta[k].push(p[k]);
                }
            }
            // both signs of a Nyquist wavenumber alias to one mode; average them
            let flips = 1usize << nyq.len();
            let mut e = 0.0;
            for mask in 0..flips {
                q.copy_from_slice(&p);
                for (bit, &k) in nyq.iter().enumerate() {
                    if mask >> bit & 1 == 1 {
                        q[k] = -q[k];
                    }
                }
                e += mu.exponent(&q);
            }
            exponent.push(e / flips as f64);
        }
        Ok(ProxyOperator { spec: spec.clone(), lambda, b0: b0.to_vec(), exponent, zeta })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn b0(&self) -> &[f64] {
        &self.b0
    }

    #[inline]
    fn symbol(&self, i: usize) -> Complex64 {
        let drift: f64 = (0..self.b0.len()).map(|k| self.zeta[k][i] * self.b0[k]).sum();
        Complex64::new(self.lambda + self.exponent[i], -drift)
    }

    fn transform(&self, v: &[f64]) -> Vec<Complex64> {
        let mut c = to_complex(v);
        fft::forward(&mut c, &self.spec.shape);
        c
    }

    fn back_real(&self, mut c: Vec<Complex64>) -> Vec<f64> {
        fft::inverse(&mut c, &self.spec.shape);
        let scale = c.iter().fold(0.0f64, |m, v| m.max(v.norm()));
        debug_assert!(c.iter().all(|v| v.im.abs() <= IMAG_TOL * scale.max(1.0)), "non-real multiplier output");
        c.into_iter().map(|v| v.re).collect()
    }

    /// `R̃^λ f`.
    pub fn resolvent(&self, f: &[f64]) -> Vec<f64> {
        let mut c = self.transform(f);
        c.par_iter_mut().enumerate().for_each(|(i, v)| *v /= self.symbol(i));
        self.back_real(c)
    }

    fn gradient_of_hat(&self, hat: &[Complex64]) -> Vec<Vec<f64>> {
        (0..self.spec.dimension())
            .map(|k| {
                let c: Vec<Complex64> = hat
                    .par_iter()
                    .enumerate()
                    .map(|(i, v)| v * Complex64::new(0.0, self.zeta[k][i]))
                    .collect();
                self.back_real(c)
            })
            .collect()
    }

    /// `D R̃^λ f`, one field per axis.
    pub fn gradient(&self, f: &[f64]) -> Vec<Vec<f64>> {
        let mut c = self.transform(f);
        c.par_iter_mut().enumerate().for_each(|(i, v)| *v /= self.symbol(i));
        self.gradient_of_hat(&c)
    }

    /// Spectral derivative `D_h u`.
    pub fn derivative(&self, u: &[f64]) -> Vec<Vec<f64>> {
        self.gradient_of_hat(&self.transform(u))
    }

    /// `L_h u`, the multiplier `-Φ̄`.
    pub fn generator(&self, u: &[f64]) -> Vec<f64> {
        let mut c = self.transform(u);
        c.par_iter_mut().enumerate().for_each(|(i, v)| *v *= -self.exponent[i]);
        self.back_real(c)
    }

    /// `sup_ζ |ζ| / |λ + Φ̄(ζ) - i⟨ζ,b₀⟩|` over the grid frequencies.
    pub fn gradient_multiplier_sup(&self) -> f64 {
        (0..self.spec.len())
            .map(|i| {
                let z: f64 = (0..self.b0.len()).map(|k| self.zeta[k][i].powi(2)).sum::<f64>().sqrt();
                z / self.symbol(i).norm()
            })
            .fold(0.0, f64::max)
    }
}

/// Drift deviation `b(x) - b₀` on every grid point, component-major.
fn deviation(drift: &DriftSpec, spec: &GridSpec) -> Result<Vec<Vec<f64>>> {
    let d = spec.dimension();
    if drift.dimension != d {
        return Err(Error::DimensionError { expected: d, got: drift.dimension });
    }
    let mut out = vec![vec![0.0; spec.len()]; d];
    let mut x = vec![0.0; d];
    let mut b = vec![0.0; d];
    for i in 0..spec.len() {
        spec.point_into(i, &mut x);
        drift.eval_into(&x, &mut b);
        for k in 0..d {
            if !b[k].is_finite() {
                return Err(Error::EvaluationError(format!("drift is not finite at {x:?}")));
            }
            out[k][i] = b[k] - drift.b0[k];
        }
    }
    Ok(out)
}

fn check_support(f: &GridField) -> Result<()> {
    let sup = f.sup_norm();
    let boundary = f.boundary_max();
    if sup > 0.0 && boundary >= BOUNDARY_TOL * sup {
        return Err(Error::BoundarySupportError { boundary_max: boundary, sup });
    }
    Ok(())
}

/// `R̃^λ f = (λ - L - ⟨b₀, D⟩)^{-1} f`.
pub fn proxy_resolvent(f: &GridField, lambda: f64, b0: &[f64], mu: &SpectralMeasure) -> Result<GridField> {
    check_support(f)?;
    let op = ProxyOperator::new(mu, &f.spec, lambda, b0)?;
    Ok(GridField { spec: f.spec.clone(), values: op.resolvent(&f.values) })
}

/// `D R̃^λ f`, one field per axis.
pub fn proxy_gradient(f: &GridField, lambda: f64, b0: &[f64], mu: &SpectralMeasure) -> Result<Vec<GridField>> {
    check_support(f)?;
    let op = ProxyOperator::new(mu, &f.spec, lambda, b0)?;
    Ok(op.gradient(&f.values).into_iter().map(|values| GridField { spec: f.spec.clone(), values }).collect())
}

/// Remainder operator bound to one grid, drift and `λ`.
#[derive(Debug, Clone)]
pub struct Remainder {
    op: ProxyOperator,
    dev: Vec<Vec<f64>>,
}

impl Remainder {
    pub fn new(mu: &SpectralMeasure, spec: &GridSpec, lambda: f64, drift: &DriftSpec) -> Result<Self> {
        let op = ProxyOperator::new(mu, spec, lambda, &drift.b0)?;
        let dev = deviation(drift, spec)?;
        Ok(Remainder { op, dev })
    }

    pub fn proxy(&self) -> &ProxyOperator {
        &self.op
    }

    /// `𝓡f = ⟨b - b₀, D R̃f⟩`.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let g = self.op.gradient(f);
        (0..f.len()).map(|i| (0..g.len()).map(|k| self.dev[k][i] * g[k][i]).sum()).collect()
    }

    /// `λu - L_h u - ⟨b, D_h u⟩ - f`.
    pub fn defect(&self, u: &[f64], f: &[f64]) -> Vec<f64> {
        let lu = self.op.generator(u);
        let du = self.op.derivative(u);
        let b0 = self.op.b0();
        (0..u.len())
            .map(|i| {
                let drift: f64 = (0..du.len()).map(|k| (b0[k] + self.dev[k][i]) * du[k][i]).sum();
                self.op.lambda() * u[i] - lu[i] - drift - f[i]
            })
            .collect()
    }
}

/// `⟨b(x) - b₀, D R̃^λ f(x)⟩`.
pub fn remainder(f: &GridField, lambda: f64, drift: &DriftSpec, mu: &SpectralMeasure) -> Result<GridField> {
    check_support(f)?;
    let r = Remainder::new(mu, &f.spec, lambda, drift)?;
    Ok(GridField { spec: f.spec.clone(), values: r.apply(&f.values) })
}

fn lp(spec: &GridSpec, v: &[f64], p: f64) -> f64 {
    GridField { spec: spec.clone(), values: v.to_vec() }.norm(p)
}

/// Discrete `L^p` norm of `λu - L_h u - ⟨b, D_h u⟩ - f` over the whole periodic grid.
pub fn residual(u: &GridField, f: &GridField, lambda: f64, drift: &DriftSpec, mu: &SpectralMeasure, p: f64) -> Result<f64> {
    u.same_grid(f)?;
    let r = Remainder::new(mu, &u.spec, lambda, drift)?;
    Ok(lp(&u.spec, &r.defect(&u.values, &f.values), p))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeumannConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub p: f64,
}

impl Default for NeumannConfig {
    fn default() -> Self {
        NeumannConfig { tol: 1e-8, max_iter: 200, p: 2.0 }
    }
}

#[derive(Debug, Clone)]
pub struct ResolventSolution {
    pub u: GridField,
    /// Number of Neumann terms summed, including `𝓡⁰f = f`.
    pub iterations: usize,
    /// Residual of `R̃ Σ_{j≤k} 𝓡^j f` for each `k`.
    pub partial_sums_residuals: Vec<f64>,
    /// `‖𝓡^k f‖_p` for each `k`.
    pub term_norms: Vec<f64>,
    pub lambda: f64,
    pub epsilon_used: f64,
    pub b0: Vec<f64>,
    /// `r̂ = ‖𝓡f‖_p / ‖f‖_p`.
    pub contraction_ratio: f64,
    pub final_residual: f64,
    pub f_norm: f64,
    pub p: f64,
}

impl ResolventSolution {
    /// Geometric mean of consecutive residual ratios.
    pub fn observed_ratio(&self) -> f64 {
        let r = &self.partial_sums_residuals;
        if r.len() < 2 || r[0] <= 0.0 {
            return 0.0;
        }
        let last = r.len() - 1;
        (r[last] / r[0]).powf(1.0 / last as f64)
    }

    pub fn report(&self) -> SolveReport {
        SolveReport {
            lambda: self.lambda,
            epsilon: self.epsilon_used,
            b0: self.b0.clone(),
            iterations: self.iterations,
            contraction_ratio: self.contraction_ratio,
            observed_ratio: self.observed_ratio(),
            residual_history: self.partial_sums_residuals.clone(),
            final_residual: self.final_residual,
            relative_residual: self.final_residual / self.f_norm.max(f64::MIN_POSITIVE),
            p: self.p,
            grid: self.u.header(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub lambda: f64,
    pub epsilon: f64,
    pub b0: Vec<f64>,
    pub iterations: usize,
    pub contraction_ratio: f64,
    pub observed_ratio: f64,
    pub residual_history: Vec<f64>,
    pub final_residual: f64,
    pub relative_residual: f64,
    pub p: f64,
    pub grid: GridHeader,
}

/// `u = R̃^λ Σ_k 𝓡^k f`, summed until `‖𝓡^k f‖_p < tol·‖f‖_p`.
pub fn neumann_solve(
    f: &GridField,
    lambda: f64,
    drift: &DriftSpec,
    mu: &SpectralMeasure,
    cfg: NeumannConfig,
) -> Result<ResolventSolution> {
    check_support(f)?;
    let spec = &f.spec;
    let rem = Remainder::new(mu, spec, lambda, drift)?;
    let f_norm = lp(spec, &f.values, cfg.p);
    let residual_of = |g: &[f64]| {
        let u = rem.proxy().resolvent(g);
        let r = lp(spec, &rem.defect(&u, &f.values), cfg.p);
        (u, r)
    };
    if f_norm == 0.0 {
        return Ok(ResolventSolution {
            u: GridField::zeros(spec.clone()),
            iterations: 1,
            partial_sums_residuals: vec![0.0],
            term_norms: vec![0.0],
            lambda,
            epsilon_used: drift.epsilon,
            b0: drift.b0.clone(),
            contraction_ratio: 0.0,
            final_residual: 0.0,
            f_norm,
            p: cfg.p,
        });
    }
    let mut term = f.values.clone();
    let mut g = f.values.clone();
    let mut term_norms = vec![f_norm];
    let (mut u, r0) = residual_of(&g);
    let mut residuals = vec![r0];
    let mut ratio = None;
    loop {
        let next = rem.apply(&term);
        let n = lp(spec, &next, cfg.p);
        let r_hat = *ratio.get_or_insert(n / f_norm);
        if r_hat >= CONTRACTION_THRESHOLD {
            return Err(Error::ContractionFailure { ratio: r_hat, threshold: CONTRACTION_THRESHOLD });
        }
        if term_norms.last().copied().unwrap_or(0.0) < cfg.tol * f_norm {
            break;
        }
        if term_norms.len() >= cfg.max_iter {
            return Err(Error::MaxIterExceeded { max_iter: cfg.max_iter, last: residuals[residuals.len() - 1] / f_norm });
        }
        g.iter_mut().zip(&next).for_each(|(a, b)| *a += b);
        term = next;
        term_norms.push(n);
        let (uu, r) = residual_of(&g);
        u = uu;
        residuals.push(r);
    }
    Ok(ResolventSolution {
        u: GridField { spec: spec.clone(), values: u },
        iterations: term_norms.len(),
        final_residual: *residuals.last().unwrap_or(&0.0),
        partial_sums_residuals: residuals,
        term_norms,
        lambda,
        epsilon_used: drift.epsilon,
        b0: drift.b0.clone(),
        contraction_ratio: ratio.unwrap_or(0.0),
        f_norm,
        p: cfg.p,
    })
}

/// Random smooth sources: sums of modulated Gaussian bumps in the central
/// half of the grid, negligible at the boundary.
pub fn random_sources(spec: &GridSpec, count: usize, seed: u64) -> Vec<GridField> {
    let d = spec.dimension();
    let half: Vec<f64> = (0..d).map(|k| 0.5 * spec.extent(k)).collect();
    let mid: Vec<f64> = (0..d).map(|k| spec.origin[k] + half[k]).collect();
    (0..count)
        .map(|j| {
            let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(crate::rng::derive_seed(seed, &format!("source{j}")));
            let bumps: Vec<(Vec<f64>, Vec<f64>, f64, f64, f64)> = (0..4)
                .map(|_| {
                    let c: Vec<f64> = (0..d).map(|k| mid[k] + r.random_range(-0.15..0.15) * half[k]).collect();
                    let w = r.random_range(0.03..0.06) * half.iter().copied().fold(f64::INFINITY, f64::min);
                    let k: Vec<f64> = (0..d).map(|_| r.random_range(-2.0..2.0) / w).collect();
                    (c, k, w, r.random_range(-1.0..1.0), r.random_range(0.0..std::f64::consts::TAU))
                })
                .collect();
            GridField::from_fn(spec.clone(), |x| {
                bumps
                    .iter()
                    .map(|(c, k, w, a, ph)| {
                        let r2: f64 = x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
                        let phase: f64 = x.iter().zip(k).map(|(a, b)| a * b).sum::<f64>() + ph;
                        a * (-0.5 * r2 / (w * w)).exp() * phase.cos()
                    })
                    .sum()
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioProbe {
    pub p: f64,
    pub epsilon: f64,
    pub ratios: Vec<f64>,
    pub max: f64,
    pub median: f64,
    /// `max / ε`, the empirical constant in `‖𝓡f‖_p ≤ C_p ε ‖f‖_p`.
    pub c_p: f64,
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n == 0 {
        return 0.0;
    }
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Distribution of `‖𝓡f‖_p / ‖f‖_p` over random sources.
pub fn remainder_ratio_probe(
    mu: &SpectralMeasure,
    spec: &GridSpec,
    lambda: f64,
    drift: &DriftSpec,
    p: f64,
    count: usize,
    seed: u64,
) -> Result<RatioProbe> {
    let rem = Remainder::new(mu, spec, lambda, drift)?;
    let ratios: Vec<f64> = random_sources(spec, count, seed)
        .iter()
        .map(|f| lp(spec, &rem.apply(&f.values), p) / f.norm(p))
        .collect();
    let max = ratios.iter().copied().fold(0.0, f64::max);
    Ok(RatioProbe {
        p,
        epsilon: drift.epsilon,
        median: median(&ratios),
        c_p: if drift.epsilon > 0.0 { max / drift.epsilon } else { 0.0 },
        max,
        ratios,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiplierReport {
    pub lambda: f64,
    pub kappa: f64,
    pub multiplier_sup: f64,
    /// `‖D R̃f‖₂ / ‖f‖₂` over random sources.
    pub gradient_ratios: Vec<f64>,
    pub max_gradient_ratio: f64,
}

/// Discrete content of the `L²` gradient bound: multiplier supremum and
/// realized gradient ratios, both compared against `κ`.
pub fn multiplier_probe(
    mu: &SpectralMeasure,
    spec: &GridSpec,
    lambda: f64,
    b0: &[f64],
    count: usize,
    seed: u64,
) -> Result<MultiplierReport> {
    let kappa = mu.nondegeneracy_kappa(256)?.kappa;
    let op = ProxyOperator::new(mu, spec, lambda, b0)?;
    let gradient_ratios: Vec<f64> = random_sources(spec, count, seed)
        .iter()
        .map(|f| {
            let g = op.gradient(&f.values);
            let n2: f64 = g.iter().map(|c| lp(spec, c, 2.0).powi(2)).sum::<f64>().sqrt();
            n2 / f.norm(2.0)
        })
        .collect();
    Ok(MultiplierReport {
        lambda,
        kappa,
        multiplier_sup: op.gradient_multiplier_sup(),
        max_gradient_ratio: gradient_ratios.iter().copied().fold(0.0, f64::max),
        gradient_ratios,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpikeRow {
    pub width: f64,
    pub ratio: f64,
}

/// `sup |R̃ f_w| / ‖f_w‖_p` for Gaussian spikes of shrinking width at the grid center.
pub fn spike_probe(
    mu: &SpectralMeasure,
    spec: &GridSpec,
    lambda: f64,
    b0: &[f64],
    p: f64,
    widths: &[f64],
) -> Result<Vec<SpikeRow>> {
    let op = ProxyOperator::new(mu, spec, lambda, b0)?;
    let d = spec.dimension();
    let center: Vec<f64> = (0..d).map(|k| spec.origin[k] + 0.5 * spec.extent(k)).collect();
    Ok(widths
        .iter()
        .map(|&w| {
            let f = GridField::from_fn(spec.clone(), |x| {
                let r2: f64 = x.iter().zip(&center).map(|(a, b)| (a - b) * (a - b)).sum();
                (-0.5 * r2 / (w * w)).exp()
            });
            let u = op.resolvent(&f.values);
            let sup = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            SpikeRow { width: w, ratio: sup / f.norm(p) }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviationQuad {
    /// Points per axis of the unit-time gradient grid.
    pub n: usize,
    pub spacing: f64,
    /// Log-spaced time nodes.
    pub n_t: usize,
}

impl DeviationQuad {
    pub fn for_dimension(d: usize) -> Self {
        match d {
            1 => DeviationQuad { n: 1 << 17, spacing: 0.03, n_t: 120 },
            _ => DeviationQuad { n: 512, spacing: 0.05, n_t: 60 },
        }
    }
}

/// Unit-time density gradient reused for every `(x, ξ, λ)`.
#[derive(Debug, Clone)]
pub struct DeviationKernel {
    grad: Vec<GridField>,
    b0: Vec<f64>,
    quad: DeviationQuad,
    /// Half-width of the region where the grid gradient is trusted.
    reach: f64,
}

impl DeviationKernel {
    pub fn new(mu: &SpectralMeasure, b0: &[f64], quad: DeviationQuad) -> Result<Self> {
        let d = mu.dimension();
        if d > 2 {
            return Err(Error::UnsupportedDimension(d));
        }
        let spec = GridSpec::centered(d, quad.n, quad.spacing);
        let grad = (0..d)
            .map(|k| {
                let mut beta = vec![0; d];
                beta[k] = 1;
                density_derivative_grid(mu, 1.0, &vec![0.0; d], &spec, &beta)
            })
            .collect::<Result<Vec<_>>>()?;
        let reach = 0.5 * quad.n as f64 * quad.spacing;
        Ok(DeviationKernel { grad, b0: b0.to_vec(), quad, reach })
    }

    /// `I(t) = t⁻¹ ∫_{|u+b₀| ≥ K|e|/t} |Dp₁(u) - Dp₁(u + e/t)| du` with `e = x - ξ`.
    fn inner(&self, e: &[f64], k: f64, t: f64) -> f64 {
        let spec = &self.grad[0].spec;
        let d = spec.dimension();
        let en: f64 = e.iter().map(|v| v * v).sum::<f64>().sqrt();
        let cut = k * en / t;
        let shift: Vec<f64> = e.iter().map(|v| v / t).collect();
        let moved: Vec<Vec<f64>> = self.grad.iter().map(|g| g.shifted_cubic(&shift)).collect();
        let total: f64 = (0..spec.len())
            .into_par_iter()
            .map(|i| {
                let mut u = [0.0; 2];
                spec.point_into(i, &mut u[..d]);
                let r: f64 = (0..d).map(|j| (u[j] + self.b0[j]).powi(2)).sum::<f64>().sqrt();
                if r < cut {
                    return 0.0;
                }
                self.grad.iter().zip(&moved).map(|(g, m)| (g.values[i] - m[i]).powi(2)).sum::<f64>().sqrt()
            })
            .sum();
        total * spec.cell_volume() / t
    }

    /// `∫_0^∞ e^{-λt} I(t) dt` by trapezoid in `log t`. Times below the
    /// first node, where `I` is flat, contribute `t_min·I(t_min)`.
    pub fn integral(&self, x: &[f64], xi: &[f64], lambda: f64, k: f64) -> Result<f64> {
        let e: Vec<f64> = x.iter().zip(xi).map(|(a, b)| a - b).collect();
        let en: f64 = e.iter().map(|v| v * v).sum::<f64>().sqrt();
        if en == 0.0 {
            return Err(Error::InvalidParameter("x and xi must differ".into()));
        }
        if k < 1.0 {
            return Err(Error::InvalidParameter(format!("K = {k} must be at least 1")));
        }
        // the excluded ball must stay inside the trusted region
        let t_min = (2.0 * k * en / self.reach).max(1e-3 * en);
        let t_max = 40.0 / lambda;
        let n = self.quad.n_t.max(2);
        let (la, lb) = (t_min.ln(), t_max.ln().max(t_min.ln() + 1.0));
        let ds = (lb - la) / (n - 1) as f64;
        let mut acc = 0.0;
        let mut head = 0.0;
        for j in 0..n {
            let t = (la + ds * j as f64).exp();
            let v = (-lambda * t).exp() * self.inner(&e, k, t) * t;
            if j == 0 {
                head = v;
            }
            acc += if j == 0 || j == n - 1 { 0.5 * v } else { v };
        }
        Ok(acc * ds + head)
    }
}

/// `∫_0^∞ e^{-λt} ∫_{|x-y| ≥ K|x-ξ|} |Dp̃(t,x,y) - Dp̃(t,ξ,y)| dy dt`.
pub fn deviation_integral(
    x: &[f64],
    xi: &[f64],
    lambda: f64,
    k: f64,
    b0: &[f64],
    mu: &SpectralMeasure,
    quad: DeviationQuad,
) -> Result<f64> {
    DeviationKernel::new(mu, b0, quad)?.integral(x, xi, lambda, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drift::DriftField;

    fn cauchy1() -> SpectralMeasure {
        SpectralMeasure::symmetrize(&[(vec![1.0], 1.0)]).unwrap()
    }

    fn window(spec: &GridSpec, half: f64) -> impl Fn(f64) -> f64 {
        let _ = spec;
        move |x: f64| (-(x / half).powi(8)).exp()
    }

    #[test]
    fn cosine_source_in_a_wide_window() {
        let spec = GridSpec::centered(1, 1 << 14, 0.05);
        let w = window(&spec, 150.0);
        let f = GridField::from_fn(spec.clone(), |x| x[0].cos() * w(x[0]));
        let u = proxy_resolvent(&f, 1.0, &[0.0], &cauchy1()).unwrap();
        let g = proxy_gradient(&f, 1.0, &[0.0], &cauchy1()).unwrap();
        let mut err: f64 = 0.0;
        let mut gerr: f64 = 0.0;
        for i in 0..spec.len() {
            let x = spec.point(i)[0];
            if x.abs() < 20.0 {
                err = err.max((u.values[i] - x.cos() / 2.0).abs());
                gerr = gerr.max((g[0].values[i] + x.sin() / 2.0).abs());
            }
        }
        assert!(err < 1e-3, "{err}");
        assert!(gerr < 1e-3, "{gerr}");
    }

    #[test]
    fn zero_source_and_contraction() {
        let spec = GridSpec::centered(1, 1024, 0.05);
        let zero = GridField::zeros(spec.clone());
        assert_eq!(proxy_resolvent(&zero, 1.0, &[0.0], &cauchy1()).unwrap().sup_norm(), 0.0);
        let f = GridField::from_fn(spec, |x| (-x[0] * x[0]).exp());
        for lam in [1.0, 2.0, 5.0] {
            let u = proxy_resolvent(&f, lam, &[0.3], &cauchy1()).unwrap();
            assert!(u.sup_norm() <= f.sup_norm() / lam * (1.0 + 1e-9));
        }
    }

    #[test]
    fn boundary_check() {
        let spec = GridSpec::centered(1, 256, 0.1);
        let f = GridField::from_fn(spec, |x| x[0].cos());
        assert!(matches!(proxy_resolvent(&f, 1.0, &[0.0], &cauchy1()), Err(Error::BoundarySupportError { .. })));
    }

    #[test]
    fn proxy_residual_is_round_off() {
        let spec = GridSpec::centered(2, 128, 0.1);
        let mu = SpectralMeasure::cylindrical(2);
        let f = GridField::from_fn(spec, |x| (-(x[0] * x[0] + x[1] * x[1])).exp());
        let b0 = vec![0.4, -0.1];
        let u = proxy_resolvent(&f, 1.0, &b0, &mu).unwrap();
        let drift = DriftSpec::constant(b0);
        let r = residual(&u, &f, 1.0, &drift, &mu, 2.0).unwrap();
        assert!(r < 1e-10 * f.norm(2.0), "{r}");
        let zero = GridField::zeros(f.spec.clone());
        assert!((residual(&zero, &f, 1.0, &drift, &mu, 2.0).unwrap() - f.norm(2.0)).abs() < 1e-12);
    }

    #[test]
    fn nyquist_multiplier_sup_for_cauchy() {
        let spec = GridSpec::centered(1, 512, 0.1);
        let op = ProxyOperator::new(&cauchy1(), &spec, 1.0, &[0.0]).unwrap();
        // the Nyquist mode carries no derivative; the sup sits one mode below
        let top = std::f64::consts::PI / 0.1 * (1.0 - 2.0 / 512.0);
        assert!((op.gradient_multiplier_sup() - top / (1.0 + top)).abs() < 1e-12);
    }

    #[test]
    fn remainder_is_linear_in_deviation() {
        let spec = GridSpec::centered(1, 1024, 0.05);
        let mu = cauchy1();
        let drift = DriftSpec::from_grid(DriftField::Tanh { amp: 0.1, scale: 1.0 }, &spec).unwrap();
        let f = GridField::from_fn(spec.clone(), |x| (-x[0] * x[0]).exp());
        let r1 = remainder(&f, 1.0, &drift, &mu).unwrap();
        let r3 = remainder(&f, 1.0, &drift.scaled(3.0), &mu).unwrap();
        for (a, b) in r1.values.iter().zip(&r3.values) {
            assert!((3.0 * a - b).abs() < 1e-14);
        }
        let flat = DriftSpec::constant(vec![0.2]);
        assert!(remainder(&f, 1.0, &flat, &mu).unwrap().sup_norm() < 1e-15);
    }

    #[test]
    fn neumann_converges_and_refuses() {
        let spec = GridSpec::centered(1, 2048, 0.05);
        let mu = cauchy1();
        let f = GridField::from_fn(spec.clone(), |x| (-x[0] * x[0]).exp());
        let drift = DriftSpec::from_grid(DriftField::Tanh { amp: 0.1, scale: 1.0 }, &spec).unwrap();
        let sol = neumann_solve(&f, 1.0, &drift, &mu, NeumannConfig { tol: 1e-10, ..Default::default() }).unwrap();
        assert!(sol.final_residual < 1e-8 * sol.f_norm);
        let strong = DriftSpec::from_grid(DriftField::Tanh { amp: 5.0, scale: 0.2 }, &spec).unwrap();
        assert!(matches!(
            neumann_solve(&f, 1.0, &strong, &mu, NeumannConfig::default()),
            Err(Error::ContractionFailure { .. })
        ));
    }

    #[test]
    fn deviation_integral_shrinks_with_distance_and_lambda() {
        let mu = cauchy1();
        let q = DeviationQuad { n: 1 << 14, spacing: 0.05, n_t: 40 };
        let kern = DeviationKernel::new(&mu, &[0.0], q).unwrap();
        let a = kern.integral(&[0.0], &[0.5], 1.0, 4.0).unwrap();
        let b = kern.integral(&[0.0], &[0.5], 10.0, 4.0).unwrap();
        assert!(a.is_finite() && a > 0.0);
        assert!(b < a);
    }
}
