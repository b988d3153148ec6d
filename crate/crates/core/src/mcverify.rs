//! Monte Carlo cross-checks on the Euler scheme
//! `X_{k+1} = X_k + b(X_k) h + ΔZ_k` with exact stable increments.
//!
//! Paths can be simulated on several coupled levels at once: level `ℓ` uses
//! step `2^ℓ h` and the sum of the finest increments over its step. The
//! difference between levels 0 and 1 measures the Euler bias on the same
//! noise, which is what the bias budgets below report.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::drift::DriftSpec;
use crate::error::{Error, Result};
use crate::generator::{Generator, GeneratorTable, TestFunction};
use crate::rng;
use crate::sampler::{make_sampler, IncrementBatch, IncrementSampler, Scheme};
use crate::spectral::{MeasureFile, SpectralMeasure};
use crate::stats::{ks_two_sample, wasserstein1, MeanEstimate};

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub drift: DriftSpec,
    pub mu: SpectralMeasure,
    pub x0: Vec<f64>,
    pub horizon: f64,
    pub step: f64,
    pub paths: usize,
    pub seed: u64,
    pub scheme: Scheme,
}

/// Serializable view of a [`SimConfig`], embedded in every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRecord {
    pub measure: MeasureFile,
    pub drift: DriftSpec,
    pub x0: Vec<f64>,
    pub horizon: f64,
    pub step: f64,
    pub paths: usize,
    pub seed: u64,
    pub scheme: Scheme,
    pub config_hash: String,
}

impl SimConfig {
    pub fn new(mu: SpectralMeasure, drift: DriftSpec, x0: Vec<f64>, horizon: f64, step: f64, paths: usize, seed: u64) -> Self {
        SimConfig { drift, mu, x0, horizon, step, paths, seed, scheme: Scheme::ExactRay }
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_step(mut self, step: f64) -> Self {
        self.step = step;
        self
    }

    pub fn with_paths(mut self, paths: usize) -> Self {
        self.paths = paths;
        self
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn with_x0(mut self, x0: Vec<f64>) -> Self {
        self.x0 = x0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.mu.dimension();
        if self.x0.len() != d {
            return Err(Error::DimensionError { expected: d, got: self.x0.len() });
        }
        if self.drift.dimension != d {
            return Err(Error::DimensionError { expected: d, got: self.drift.dimension });
        }
        if !(self.step > 0.0 && self.horizon > 0.0 && self.step <= self.horizon * (1.0 + 1e-12)) {
            return Err(Error::InvalidParameter(format!("need 0 < h = {} ≤ T = {}", self.step, self.horizon)));
        }
        if self.paths == 0 {
            return Err(Error::EmptyBatch);
        }
        Ok(())
    }

    pub fn record(&self) -> SimRecord {
        let mut rec = SimRecord {
            measure: self.mu.to_file(),
            drift: self.drift.clone(),
            x0: self.x0.clone(),
            horizon: self.horizon,
            step: self.step,
            paths: self.paths,
            seed: self.seed,
            scheme: self.scheme,
            config_hash: String::new(),
        };
        let json = serde_json::to_vec(&rec).unwrap_or_default();
        rec.config_hash = crate::hex_digest(&Sha256::digest(&json));
        rec
    }

    /// Number of finest steps, which must be divisible by `2^(levels-1)`.
    fn steps(&self, levels: usize) -> Result<usize> {
        let n = (self.horizon / self.step).round() as usize;
        if n == 0 || ((n as f64) * self.step - self.horizon).abs() > 1e-9 * self.horizon {
            return Err(Error::InvalidParameter(format!(
                "horizon {} is not a multiple of the step {}",
                self.horizon, self.step
            )));
        }
        let block = 1usize << (levels - 1);
        if n % block != 0 {
            return Err(Error::InvalidParameter(format!("{n} steps cannot be coarsened {levels} times")));
        }
        Ok(n)
    }
}

/// Resolvent truncation horizon `max(10/λ, 10)`.
pub fn resolvent_horizon(lambda: f64) -> f64 {
    (10.0 / lambda).max(10.0)
}

/// Walks one path on `levels` coupled step sizes, calling
/// `visit(level, k, t, x)` at every skeleton point of every level.
fn walk(
    cfg: &SimConfig,
    sampler: &dyn IncrementSampler,
    n_steps: usize,
    levels: usize,
    index: u64,
    mut visit: impl FnMut(usize, usize, f64, &[f64]) -> Result<()>,
) -> Result<()> {
    let d = cfg.x0.len();
    let h = cfg.step;
    let mut r = rng::stream(cfg.seed, index);
    let mut x: Vec<[f64; 3]> = vec![[0.0; 3]; levels];
    let mut acc = vec![[0.0; 3]; levels];
    let mut dz = [0.0; 3];
    let mut b = [0.0; 3];
    for (l, xl) in x.iter_mut().enumerate() {
        xl[..d].copy_from_slice(&cfg.x0);
        visit(l, 0, 0.0, &xl[..d])?;
    }
    for s in 1..=n_steps {
        sampler.draw(&mut r, h, &mut dz[..d]);
        for l in 0..levels {
            for k in 0..d {
                acc[l][k] += dz[k];
            }
            if s % (1 << l) != 0 {
                continue;
            }
            let hl = h * (1 << l) as f64;
            cfg.drift.eval_into(&x[l][..d], &mut b[..d]);
            for k in 0..d {
                if !b[k].is_finite() {
                    return Err(Error::EvaluationError(format!("drift is not finite at {:?}", &x[l][..d])));
                }
                x[l][k] += b[k] * hl + acc[l][k];
                acc[l][k] = 0.0;
            }
            visit(l, s >> l, s as f64 * h, &x[l][..d])?;
        }
    }
    Ok(())
}

fn terminal_levels(cfg: &SimConfig, levels: usize) -> Result<Vec<IncrementBatch>> {
    cfg.validate()?;
    let n = cfg.steps(levels)?;
    let sampler = make_sampler(&cfg.mu, cfg.scheme)?;
    let d = cfg.x0.len();
    let per_path: Vec<Vec<Vec<f64>>> = (0..cfg.paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut out = vec![vec![0.0; d]; levels];
            walk(cfg, sampler.as_ref(), n, levels, i, |l, k, _, x| {
                if k == n >> l {
                    out[l].copy_from_slice(x);
                }
                Ok(())
            })?;
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok((0..levels)
        .map(|l| IncrementBatch {
            dimension: d,
            t: cfg.horizon,
            scheme: cfg.scheme,
            seed: cfg.seed,
            samples: per_path.iter().map(|p| p[l].clone()).collect(),
        })
        .collect())
}

/// Terminal positions `X_T`.
pub fn simulate_terminal(cfg: &SimConfig) -> Result<IncrementBatch> {
    Ok(terminal_levels(cfg, 1)?.remove(0))
}

/// Terminal clouds at steps `h, 2h, ..., 2^(levels-1) h` on the same noise.
pub fn simulate_terminal_coupled(cfg: &SimConfig, levels: usize) -> Result<Vec<IncrementBatch>> {
    if levels == 0 {
        return Err(Error::InvalidParameter("at least one level is required".into()));
    }
    terminal_levels(cfg, levels)
}

/// Fixed projection directions: the axes and the diagonal.
pub fn default_projections(d: usize) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = (0..d)
        .map(|k| {
            let mut e = vec![0.0; d];
            e[k] = 1.0;
            e
        })
        .collect();
    if d > 1 {
        out.push(vec![1.0 / (d as f64).sqrt(); d]);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub step: f64,
    pub finer_step: f64,
    /// `W1` between the clouds at `step` and `step/2`, per projection.
    pub w1: Vec<f64>,
}

/// Wasserstein-1 gaps between consecutive step sizes. `cfg.step` is the
/// finest step; all clouds share its noise.
pub fn step_halving_sweep(cfg: &SimConfig, levels: usize) -> Result<Vec<SweepRow>> {
    let clouds = simulate_terminal_coupled(cfg, levels)?;
    let proj = default_projections(cfg.x0.len());
    Ok((1..levels)
        .rev()
        .map(|l| SweepRow {
            step: cfg.step * (1 << l) as f64,
            finer_step: cfg.step * (1 << (l - 1)) as f64,
            w1: proj.iter().map(|u| wasserstein1(&clouds[l].projection(u), &clouds[l - 1].projection(u))).collect(),
        })
        .collect())
}

/// `𝓛φ` and `φ` as needed along paths.
pub trait PathGenerator: Sync {
    fn phi(&self, x: &[f64]) -> f64;
    /// `Lφ(x) + ⟨b, Dφ(x)⟩`.
    fn full(&self, x: &[f64], b: &[f64]) -> Result<f64>;
}

impl PathGenerator for GeneratorTable {
    fn phi(&self, x: &[f64]) -> f64 {
        self.phi().value(x)
    }

    fn full(&self, x: &[f64], b: &[f64]) -> Result<f64> {
        Ok(self.apply_full(x, b))
    }
}

/// Direct quadrature at every point; for functions without compact support.
pub struct DirectGenerator<'a> {
    pub generator: &'a Generator,
    pub phi: &'a TestFunction,
}

impl PathGenerator for DirectGenerator<'_> {
    fn phi(&self, x: &[f64]) -> f64 {
        self.phi.value(x)
    }

    fn full(&self, x: &[f64], b: &[f64]) -> Result<f64> {
        let l = self.generator.apply_l(self.phi, x)?.value;
        let g = self.phi.gradient(x);
        Ok(l + g.iter().zip(b).map(|(a, c)| a * c).sum::<f64>())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MartingaleRow {
    pub t: f64,
    pub mean: f64,
    pub stderr: f64,
    /// Mean at step `2h` on the same noise.
    pub coarse_mean: f64,
    /// `|E[M^h - M^{2h}]|`, the measured Euler bias.
    pub bias: f64,
    pub bias_stderr: f64,
    /// `|mean| ≤ 3·stderr + bias + 3·bias_stderr`.
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleReport {
    pub config: SimRecord,
    pub rows: Vec<MartingaleRow>,
    pub pass: bool,
}

/// `E[φ(X_t) - φ(X_0) - ∫_0^t 𝓛φ(X_s) ds]` at each checkpoint, with the
/// time integral by trapezoid on the skeleton.
pub fn martingale_residual(cfg: &SimConfig, gen: &dyn PathGenerator, checkpoints: &[f64]) -> Result<MartingaleReport> {
    cfg.validate()?;
    let levels = 2;
    let n = cfg.steps(levels)?;
    let ck: Vec<usize> = checkpoints
        .iter()
        .map(|&t| {
            let k = (t / cfg.step).round() as usize;
            if k == 0 || k > n || k % 2 != 0 || (k as f64 * cfg.step - t).abs() > 1e-9 * t.max(1.0) {
                Err(Error::InvalidParameter(format!("checkpoint {t} must be a positive multiple of 2h within T")))
            } else {
                Ok(k)
            }
        })
        .collect::<Result<_>>()?;
    let sampler = make_sampler(&cfg.mu, cfg.scheme)?;
    let d = cfg.x0.len();
    let phi0 = gen.phi(&cfg.x0);
    let m: Vec<Vec<[f64; 2]>> = (0..cfg.paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut out = vec![[0.0; 2]; ck.len()];
            let mut integral = [0.0; 2];
            let mut prev = [0.0; 2];
            let mut b = [0.0; 3];
            walk(cfg, sampler.as_ref(), n, levels, i, |l, k, _, x| {
                cfg.drift.eval_into(x, &mut b[..d]);
                let g = gen.full(x, &b[..d])?;
                if k > 0 {
                    integral[l] += 0.5 * cfg.step * (1 << l) as f64 * (prev[l] + g);
                }
                prev[l] = g;
                let fine_k = k << l;
                for (j, &c) in ck.iter().enumerate() {
                    if c == fine_k {
                        out[j][l] = gen.phi(x) - phi0 - integral[l];
                    }
                }
                Ok(())
            })?;
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let rows: Vec<MartingaleRow> = ck
        .iter()
        .enumerate()
        .map(|(j, &k)| {
            let fine: Vec<f64> = m.iter().map(|p| p[j][0]).collect();
            let coarse: Vec<f64> = m.iter().map(|p| p[j][1]).collect();
            let diff: Vec<f64> = m.iter().map(|p| p[j][0] - p[j][1]).collect();
            let f = MeanEstimate::from_samples(&fine);
            let c = MeanEstimate::from_samples(&coarse);
            let e = MeanEstimate::from_samples(&diff);
            let pass = f.mean.abs() <= 3.0 * f.stderr + e.mean.abs() + 3.0 * e.stderr;
            MartingaleRow {
                t: k as f64 * cfg.step,
                mean: f.mean,
                stderr: f.stderr,
                coarse_mean: c.mean,
                bias: e.mean.abs(),
                bias_stderr: e.stderr,
                pass,
            }
        })
        .collect();
    let pass = rows.iter().all(|r| r.pass);
    Ok(MartingaleReport { config: cfg.record(), rows, pass })
}

/// `E cos⟨ω, X⟩` over a terminal cloud.
pub fn character_expectation(batch: &IncrementBatch, omega: &[f64]) -> MeanEstimate {
    let v: Vec<f64> = batch.projection(omega).iter().map(|s| s.cos()).collect();
    MeanEstimate::from_samples(&v)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolventEstimate {
    pub estimate: f64,
    pub stderr: f64,
    /// `|E[I^h - I^{2h}]|` on the same noise.
    pub bias: f64,
    pub bias_stderr: f64,
    /// `e^{-λT} ‖f‖_∞ / λ`.
    pub truncation: f64,
}

impl ResolventEstimate {
    /// `3·stderr + bias + 3·bias_stderr + truncation`.
    pub fn budget(&self) -> f64 {
        3.0 * self.stderr + self.bias + 3.0 * self.bias_stderr + self.truncation
    }
}

/// A source term evaluated along paths, with a bound on `‖f‖_∞`.
pub struct Source<'a> {
    pub f: Box<dyn Fn(&[f64]) -> f64 + Sync + 'a>,
    pub sup: f64,
}

impl<'a> Source<'a> {
    pub fn new(f: impl Fn(&[f64]) -> f64 + Sync + 'a, sup: f64) -> Self {
        Source { f: Box::new(f), sup }
    }

    pub fn from_test_function(phi: &'a TestFunction) -> Self {
        let sup = phi.bounds().value;
        Source::new(move |x| phi.value(x), sup)
    }
}

/// `E ∫_0^T e^{-λs} f(X_s) ds` for several sources on common paths, with
/// `T = max(10/λ, 10)` overriding `cfg.horizon`.
pub fn resolvent_mc_many(cfg: &SimConfig, sources: &[Source<'_>], lambda: f64) -> Result<Vec<ResolventEstimate>> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter(format!("lambda {lambda} must be positive")));
    }
    let horizon = resolvent_horizon(lambda);
    let cfg = cfg.clone().with_horizon((horizon / (2.0 * cfg.step)).ceil() * 2.0 * cfg.step);
    cfg.validate()?;
    let levels = 2;
    let n = cfg.steps(levels)?;
    let sampler = make_sampler(&cfg.mu, cfg.scheme)?;
    let ns = sources.len();
    let per_path: Vec<Vec<[f64; 2]>> = (0..cfg.paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut integral = vec![[0.0; 2]; ns];
            let mut prev = vec![[0.0; 2]; ns];
            walk(&cfg, sampler.as_ref(), n, levels, i, |l, k, t, x| {
                let hl = cfg.step * (1 << l) as f64;
                let w = (-lambda * t).exp();
                for (j, s) in sources.iter().enumerate() {
                    let g = w * (s.f)(x);
                    if k > 0 {
                        integral[j][l] += 0.5 * hl * (prev[j][l] + g);
                    }
                    prev[j][l] = g;
                }
                Ok(())
            })?;
            Ok(integral)
        })
        .collect::<Result<_>>()?;
    let tail = (-lambda * cfg.horizon).exp() / lambda;
    Ok((0..ns)
        .map(|j| {
            let fine: Vec<f64> = per_path.iter().map(|p| p[j][0]).collect();
            let diff: Vec<f64> = per_path.iter().map(|p| p[j][0] - p[j][1]).collect();
            let f = MeanEstimate::from_samples(&fine);
            let e = MeanEstimate::from_samples(&diff);
            ResolventEstimate {
                estimate: f.mean,
                stderr: f.stderr,
                bias: e.mean.abs(),
                bias_stderr: e.stderr,
                truncation: tail * sources[j].sup,
            }
        })
        .collect())
}

/// `G(λ)f(x₀)` by path simulation.
pub fn resolvent_mc(cfg: &SimConfig, f: &TestFunction, lambda: f64) -> Result<ResolventEstimate> {
    Ok(resolvent_mc_many(cfg, &[Source::from_test_function(f)], lambda)?.remove(0))
}

/// For constant drift, `G(λ)f(x₀) = λ⁻¹ E f(x₀ + b₀τ + τZ₁)` with
/// `τ ~ Exp(λ)` independent of `Z₁`: no time stepping and no truncation.
pub fn resolvent_mc_exponential_time(cfg: &SimConfig, f: &(dyn Fn(&[f64]) -> f64 + Sync), lambda: f64) -> Result<ResolventEstimate> {
    cfg.validate()?;
    if cfg.drift.epsilon != 0.0 {
        return Err(Error::InvalidParameter("exponential-time estimator needs a constant drift".into()));
    }
    let sampler = make_sampler(&cfg.mu, cfg.scheme)?;
    let d = cfg.x0.len();
    let b0 = &cfg.drift.b0;
    let vals: Vec<f64> = (0..cfg.paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(cfg.seed, i);
            let tau = -rng::open_unit(&mut r).ln() / lambda;
            let mut z = [0.0; 3];
            sampler.draw(&mut r, tau, &mut z[..d]);
            for k in 0..d {
                z[k] += cfg.x0[k] + b0[k] * tau;
            }
            f(&z[..d]) / lambda
        })
        .collect();
    let m = MeanEstimate::from_samples(&vals);
    Ok(ResolventEstimate { estimate: m.mean, stderr: m.stderr, bias: 0.0, bias_stderr: 0.0, truncation: 0.0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KrylovRow {
    pub width: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub lp_norm: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KrylovProbe {
    pub config: SimRecord,
    pub lambda: f64,
    pub p: f64,
    pub rows: Vec<KrylovRow>,
    pub max_over_median: f64,
    /// `max/median ≤ 5`; asserted only for `p > d`.
    pub bounded: bool,
}

/// Gaussian spike of width `w` at `center` with unit `L^p` norm.
pub fn unit_spike(center: &[f64], width: f64, p: f64) -> (f64, impl Fn(&[f64]) -> f64 + Sync + '_) {
    let d = center.len() as f64;
    let amp = 1.0 / ((std::f64::consts::TAU / p).powf(d / (2.0 * p)) * width.powf(d / p));
    let f = move |x: &[f64]| {
        let r2: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
        amp * (-0.5 * r2 / (width * width)).exp()
    };
    (amp, f)
}

/// `|G(λ)f_w(x₀)| / ‖f_w‖_p` for spikes centered at `center`, on common paths.
pub fn krylov_ratio_probe(cfg: &SimConfig, lambda: f64, p: f64, widths: &[f64], center: &[f64]) -> Result<KrylovProbe> {
    let spikes: Vec<(f64, _)> = widths.iter().map(|&w| unit_spike(center, w, p)).collect();
    let sources: Vec<Source<'_>> = spikes.iter().map(|(amp, f)| Source::new(f, *amp)).collect();
    let est = resolvent_mc_many(cfg, &sources, lambda)?;
    let rows: Vec<KrylovRow> = widths
        .iter()
        .zip(&est)
        .map(|(&w, e)| KrylovRow { width: w, estimate: e.estimate, stderr: e.stderr, lp_norm: 1.0, ratio: e.estimate.abs() })
        .collect();
    let mut r: Vec<f64> = rows.iter().map(|r| r.ratio).collect();
    r.sort_by(f64::total_cmp);
    let med = if r.len() % 2 == 1 { r[r.len() / 2] } else { 0.5 * (r[r.len() / 2 - 1] + r[r.len() / 2]) };
    let max_over_median = r.last().copied().unwrap_or(0.0) / med.max(f64::MIN_POSITIVE);
    Ok(KrylovProbe {
        config: cfg.record(),
        lambda,
        p,
        rows,
        max_over_median,
        bounded: max_over_median <= 5.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionComparison {
    pub direction: Vec<f64>,
    pub ks_p_value: f64,
    pub ks_statistic: f64,
    pub w1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakUniquenessReport {
    pub a: SimRecord,
    pub b: SimRecord,
    pub t: f64,
    pub projections: Vec<ProjectionComparison>,
    pub pass: bool,
}

/// Compares the one-dimensional marginals at time `t` of two simulations
/// that share drift, measure and start but differ in step, seed or scheme.
pub fn weak_uniqueness_probe(a: &SimConfig, b: &SimConfig, t: f64) -> Result<WeakUniquenessReport> {
    if a.x0 != b.x0 || a.mu.dimension() != b.mu.dimension() {
        return Err(Error::InvalidParameter("configurations must share the starting point and dimension".into()));
    }
    let (a, b) = (a.clone().with_horizon(t), b.clone().with_horizon(t));
    let xa = simulate_terminal(&a)?;
    let xb = simulate_terminal(&b)?;
    let projections: Vec<ProjectionComparison> = default_projections(a.x0.len())
        .into_iter()
        .map(|u| {
            let pa = xa.projection(&u);
            let pb = xb.projection(&u);
            let ks = ks_two_sample(&pa, &pb);
            let w1 = if pa.len() == pb.len() { wasserstein1(&pa, &pb) } else { f64::NAN };
            ProjectionComparison { direction: u, ks_p_value: ks.p_value, ks_statistic: ks.statistic, w1 }
        })
        .collect();
    let pass = projections.iter().all(|p| p.ks_p_value > 0.01);
    Ok(WeakUniquenessReport { a: a.record(), b: b.record(), t, projections, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drift::DriftField;
    use crate::generator::QuadConfig;
    use crate::grid::GridSpec;
    use crate::sampler::sample_exact;

    fn cauchy1() -> SpectralMeasure {
        SpectralMeasure::symmetrize(&[(vec![1.0], 1.0)]).unwrap()
    }

    #[test]
    fn zero_drift_is_exact() {
        let mu = SpectralMeasure::cylindrical(2);
        let cfg = SimConfig::new(mu.clone(), DriftSpec::constant(vec![0.0, 0.0]), vec![0.0, 0.0], 1.0, 0.1, 20_000, 3);
        let x = simulate_terminal(&cfg).unwrap();
        let z = sample_exact(&mu, 1.0, 20_000, 4).unwrap();
        for k in 0..2 {
            assert!(ks_two_sample(&x.coordinate(k), &z.coordinate(k)).p_value > 0.01);
        }
        assert_eq!(x, simulate_terminal(&cfg).unwrap());
    }

    #[test]
    fn constant_drift_translates() {
        let mu = cauchy1();
        let b0 = vec![0.7];
        let cfg = SimConfig::new(mu.clone(), DriftSpec::constant(b0), vec![1.0], 2.0, 0.25, 20_000, 5);
        let x: Vec<f64> = simulate_terminal(&cfg).unwrap().coordinate(0).iter().map(|v| v - 1.0 - 1.4).collect();
        let z = sample_exact(&mu, 2.0, 20_000, 6).unwrap().coordinate(0);
        assert!(ks_two_sample(&x, &z).p_value > 0.01);
    }

    #[test]
    fn constant_function_has_zero_martingale() {
        let mu = SpectralMeasure::cylindrical(2);
        let g = Generator::new(&mu, QuadConfig::default()).unwrap();
        let phi = TestFunction::Constant { dimension: 2, value: 2.0 };
        let gen = DirectGenerator { generator: &g, phi: &phi };
        let grid = GridSpec::centered(2, 16, 1.0);
        let drift = DriftSpec::from_grid(DriftField::Sin { amp: 0.2, scale: 1.0 }, &grid).unwrap();
        let cfg = SimConfig::new(mu, drift, vec![0.0, 0.0], 1.0, 0.1, 200, 1);
        let rep = martingale_residual(&cfg, &gen, &[0.4, 1.0]).unwrap();
        assert!(rep.rows.iter().all(|r| r.mean == 0.0 && r.stderr == 0.0));
    }

    #[test]
    fn unit_source_gives_inverse_lambda() {
        let cfg = SimConfig::new(cauchy1(), DriftSpec::constant(vec![0.1]), vec![0.0], 1.0, 0.01, 50, 2);
        let est = resolvent_mc_many(&cfg, &[Source::new(|_| 1.0, 1.0)], 2.0).unwrap().remove(0);
        // trapezoid error on e^{-λs}: λ²h²/12 relative
        assert!((est.estimate - 0.5).abs() < 2e-4 + est.truncation, "{est:?}");
        assert!(est.stderr < 1e-12);
    }

    #[test]
    fn spike_has_unit_norm() {
        let c = [0.3];
        let (_, f) = unit_spike(&c, 0.1, 2.0);
        let h = 1e-3;
        let s: f64 = (-2000..2000).map(|i| f(&[0.3 + i as f64 * h]).powi(2) * h).sum();
        assert!((s.sqrt() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn coupled_levels_share_noise() {
        let cfg = SimConfig::new(cauchy1(), DriftSpec::constant(vec![0.0]), vec![0.0], 1.0, 0.125, 100, 8);
        let lv = simulate_terminal_coupled(&cfg, 3).unwrap();
        // zero drift: every level ends at the same point
        for l in 1..3 {
            for (a, b) in lv[0].samples.iter().zip(&lv[l].samples) {
                assert!((a[0] - b[0]).abs() < 1e-9 * (1.0 + a[0].abs()));
            }
        }
    }
}
