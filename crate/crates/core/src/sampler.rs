//! Increments `Z_t` of the 1-stable process.
//!
//! The exact scheme sums independent Cauchy variables along each ray pair of
//! an atomic measure (or uses the multivariate Cauchy law for the isotropic
//! kind). The decomposition scheme splits `Z_t = M_t^t + N_t^t` at jump
//! size `t`: `N` is compound Poisson with rate `(2/π)·μ(S)` and radii `t/U`,
//! and `M` is drawn per ray from a tabulated CDF of the truncated
//! small-jump law at unit time, then scaled by `t`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{invert_characteristic, TabulatedCdf};
use crate::error::{Error, Result};
use crate::grid::{GridField, GridSpec};
use crate::quad::sine_integral;
use crate::rng;
use crate::spectral::{MeasureKind, RayPair, SpectralMeasure, LEVY_MEASURE_SCALE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    ExactRay,
    Decomposition,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::ExactRay => "exact_ray",
            Scheme::Decomposition => "decomposition",
        }
    }
}

/// A seeded batch of samples with the parameters that reproduce it.
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementBatch {
    pub dimension: usize,
    pub t: f64,
    pub scheme: Scheme,
    pub seed: u64,
    pub samples: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchMetadata {
    pub scheme: Scheme,
    pub seed: u64,
    pub t: f64,
    pub n: usize,
    pub dimension: usize,
    pub measure_hash: String,
}

impl IncrementBatch {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// `⟨u, sample⟩` for every sample.
    pub fn projection(&self, u: &[f64]) -> Vec<f64> {
        self.samples.iter().map(|s| s.iter().zip(u).map(|(a, b)| a * b).sum()).collect()
    }

    pub fn coordinate(&self, k: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s[k]).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("sample_index");
        for k in 1..=self.dimension {
            out.push_str(&format!(",x{k}"));
        }
        out.push('\n');
        for (i, s) in self.samples.iter().enumerate() {
            out.push_str(&i.to_string());
            for v in s {
                out.push(',');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }

    pub fn metadata(&self, mu: &SpectralMeasure) -> BatchMetadata {
        BatchMetadata {
            scheme: self.scheme,
            seed: self.seed,
            t: self.t,
            n: self.len(),
            dimension: self.dimension,
            measure_hash: mu.fingerprint(),
        }
    }
}

/// Something that draws one increment of `Z` over a time step.
pub trait IncrementSampler: Send + Sync {
    fn dimension(&self) -> usize;
    /// Writes a draw of `Z_t` into `out`.
    fn draw(&self, rng: &mut ChaCha8Rng, t: f64, out: &mut [f64]);
}

#[derive(Debug, Clone)]
enum ExactLaw {
    Rays(Vec<RayPair>),
    Isotropic { scale: f64 },
}

/// Exact sampler: `Z_t = Σ_k t·w_k·C_k·θ_k` with independent standard Cauchy `C_k`.
#[derive(Debug, Clone)]
pub struct ExactSampler {
    dimension: usize,
    law: ExactLaw,
}

impl ExactSampler {
    pub fn new(mu: &SpectralMeasure) -> Self {
        let law = match mu.kind() {
            MeasureKind::Discrete { .. } => ExactLaw::Rays(mu.pairs()),
            MeasureKind::Isotropic { .. } => ExactLaw::Isotropic { scale: mu.isotropic_scale().unwrap_or(0.0) },
        };
        ExactSampler { dimension: mu.dimension(), law }
    }
}

impl IncrementSampler for ExactSampler {
    fn dimension(&self) -> usize {
        self.dimension
    }

    #[inline]
    fn draw(&self, rng: &mut ChaCha8Rng, t: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        match &self.law {
            ExactLaw::Rays(pairs) => {
                for p in pairs {
                    let c = t * p.weight * rng::cauchy(rng);
                    for (o, th) in out.iter_mut().zip(&p.dir) {
                        *o += c * th;
                    }
                }
            }
            ExactLaw::Isotropic { scale } => {
                // Gaussian vector over |N(0,1)|: multivariate Cauchy with exponent |λ|
                let w: f64 = rng.sample(StandardNormal);
                let r = t * scale / w.abs();
                for o in out.iter_mut() {
                    let g: f64 = rng.sample(StandardNormal);
                    *o = r * g;
                }
            }
        }
    }
}

/// Exponent of the small-jump part at unit time for a ray of weight `w`:
/// `(2w/π)(1 - cos s - s Si(s))`.
pub fn small_jump_exponent(weight: f64, s: f64) -> f64 {
    if s == 0.0 {
        return 0.0;
    }
    2.0 * weight / std::f64::consts::PI * (1.0 - s.cos() - s * sine_integral(s))
}

/// Tabulated law of the unit-time small-jump part along one ray.
#[derive(Debug, Clone)]
pub struct SmallJumpTable {
    pub weight: f64,
    pub density: GridField,
    cdf: TabulatedCdf,
}

impl SmallJumpTable {
    pub fn new(weight: f64) -> Result<Self> {
        let sigma = (2.0 * weight / std::f64::consts::PI).sqrt();
        let h = (weight * std::f64::consts::PI / (1.5 * crate::density::TRUNCATION_DECAY))
            .min(sigma / 50.0)
            .min(weight / 20.0);
        let half = 10.0 + 12.0 * sigma;
        let n = (2.0 * half / h).ceil() as usize;
        let grid = GridSpec::centered(1, n, h);
        let raw = invert_characteristic(&grid, |p: &[f64]| {
            num_complex::Complex64::new(small_jump_exponent(weight, p[0]).exp(), 0.0)
        });
        let density = GridField { spec: grid, values: raw.iter().map(|v| v.re.max(0.0)).collect() };
        let cdf = TabulatedCdf::from_density(&density)?;
        Ok(SmallJumpTable { weight, density, cdf })
    }

    #[inline]
    pub fn sample(&self, u: f64) -> f64 {
        self.cdf.quantile(u)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.cdf.cdf(x)
    }
}

/// Decomposition sampler `Z_t = M_t^t + N_t^t`.
#[derive(Debug, Clone)]
pub struct DecompositionSampler {
    dimension: usize,
    pairs: Vec<RayPair>,
    tables: Vec<SmallJumpTable>,
    table_of_pair: Vec<usize>,
    jump_rate: f64,
    /// Atom directions with cumulative selection probabilities.
    directions: Vec<(Vec<f64>, f64)>,
    poisson: Poisson<f64>,
}

impl DecompositionSampler {
    pub fn new(mu: &SpectralMeasure) -> Result<Self> {
        let atoms = mu.atoms().ok_or(Error::UnsupportedScheme("decomposition"))?;
        let pairs = mu.pairs();
        let mut tables: Vec<SmallJumpTable> = Vec::new();
        let mut table_of_pair = Vec::with_capacity(pairs.len());
        for p in &pairs {
            match tables.iter().position(|t| (t.weight - p.weight).abs() <= 1e-14 * p.weight) {
                Some(i) => table_of_pair.push(i),
                None => {
                    tables.push(SmallJumpTable::new(p.weight)?);
                    table_of_pair.push(tables.len() - 1);
                }
            }
        }
        let total = mu.total_mass();
        let mut acc = 0.0;
        let directions = atoms
            .iter()
            .map(|a| {
                acc += a.mass / total;
                (a.dir.clone(), acc)
            })
            .collect();
        // ν(|z| > t) = (2/π) μ(S) / t, so the count over [0, t] has mean (2/π) μ(S)
        let jump_rate = LEVY_MEASURE_SCALE * total;
        let poisson = Poisson::new(jump_rate).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        Ok(DecompositionSampler {
            dimension: mu.dimension(),
            pairs,
            tables,
            table_of_pair,
            jump_rate,
            directions,
            poisson,
        })
    }

    /// Mean number of jumps larger than `t` during `[0, t]`; independent of `t`.
    pub fn jump_rate(&self) -> f64 {
        self.jump_rate
    }

    pub fn tables(&self) -> &[SmallJumpTable] {
        &self.tables
    }

    /// Adds `N_t^t` to `out` and returns the number of jumps.
    pub fn draw_large(&self, rng: &mut ChaCha8Rng, t: f64, out: &mut [f64]) -> usize {
        let count = self.poisson.sample(rng) as usize;
        for _ in 0..count {
            let u = rng::open_unit(rng);
            let j = self.directions.partition_point(|(_, c)| *c < u).min(self.directions.len() - 1);
            let radius = t / rng::open_unit(rng);
            for (o, th) in out.iter_mut().zip(&self.directions[j].0) {
                *o += radius * th;
            }
        }
        count
    }

    /// Adds `M_t^t` to `out`.
    pub fn draw_small(&self, rng: &mut ChaCha8Rng, t: f64, out: &mut [f64]) {
        for (p, &ti) in self.pairs.iter().zip(&self.table_of_pair) {
            let y = t * self.tables[ti].sample(rng::open_unit(rng));
            for (o, th) in out.iter_mut().zip(&p.dir) {
                *o += y * th;
            }
        }
    }
}

impl IncrementSampler for DecompositionSampler {
    fn dimension(&self) -> usize {
        self.dimension
    }

    #[inline]
    fn draw(&self, rng: &mut ChaCha8Rng, t: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        self.draw_small(rng, t, out);
        self.draw_large(rng, t, out);
    }
}

fn check_batch(t: f64, n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::EmptyBatch);
    }
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::InvalidParameter(format!("time {t} must be positive")));
    }
    Ok(())
}

fn batch(sampler: &dyn IncrementSampler, t: f64, n: usize, seed: u64, scheme: Scheme) -> IncrementBatch {
    let d = sampler.dimension();
    let samples = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, i);
            let mut out = vec![0.0; d];
            sampler.draw(&mut r, t, &mut out);
            out
        })
        .collect();
    IncrementBatch { dimension: d, t, scheme, seed, samples }
}

/// `n` i.i.d. draws of `Z_t` with the exact scheme.
pub fn sample_exact(mu: &SpectralMeasure, t: f64, n: usize, seed: u64) -> Result<IncrementBatch> {
    check_batch(t, n)?;
    Ok(batch(&ExactSampler::new(mu), t, n, seed, Scheme::ExactRay))
}

/// `n` i.i.d. draws of `Z_t = M_t^t + N_t^t`.
pub fn sample_decomposition(mu: &SpectralMeasure, t: f64, n: usize, seed: u64) -> Result<IncrementBatch> {
    check_batch(t, n)?;
    let sampler = DecompositionSampler::new(mu)?;
    Ok(batch(&sampler, t, n, seed, Scheme::Decomposition))
}

/// Draws of the large-jump part `N_t^t` alone, with the jump counts.
pub fn sample_large_jumps(mu: &SpectralMeasure, t: f64, n: usize, seed: u64) -> Result<(Vec<usize>, IncrementBatch)> {
    check_batch(t, n)?;
    let sampler = DecompositionSampler::new(mu)?;
    let d = mu.dimension();
    let (counts, samples): (Vec<usize>, Vec<Vec<f64>>) = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, i);
            let mut out = vec![0.0; d];
            let c = sampler.draw_large(&mut r, t, &mut out);
            (c, out)
        })
        .unzip();
    Ok((counts, IncrementBatch { dimension: d, t, scheme: Scheme::Decomposition, seed, samples }))
}

/// Boxed sampler for `scheme`.
pub fn make_sampler(mu: &SpectralMeasure, scheme: Scheme) -> Result<Box<dyn IncrementSampler>> {
    Ok(match scheme {
        Scheme::ExactRay => Box::new(ExactSampler::new(mu)),
        Scheme::Decomposition => Box::new(DecompositionSampler::new(mu)?),
    })
}
