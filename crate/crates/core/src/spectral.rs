//! Spectral measures on the unit sphere and the associated Lévy exponent.
//!
//! The measure `μ` supplied here is the one appearing in the exponent,
//! `E exp(i⟨λ, Z_1⟩) = exp(-∫ |⟨λ, θ⟩| μ(dθ))`. The Lévy measure of the
//! driving process is then `ν(dz) = (2/π) ρ⁻² dρ μ(dθ)` for `z = ρθ`, since
//! `∫_0^∞ (1 - cos(ρs)) ρ⁻² dρ = π|s|/2`.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Factor between the spectral measure and the angular part of the Lévy measure.
pub const LEVY_MEASURE_SCALE: f64 = std::f64::consts::FRAC_2_PI;

const MERGE_TOL: f64 = 1e-12;
const DEGENERACY_THRESHOLD: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub dir: Vec<f64>,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MeasureKind {
    Discrete { atoms: Vec<Atom> },
    Isotropic { total_mass: f64 },
}

/// A symmetric finite measure on `S^{d-1}`.
///
/// Discrete measures are only built through [`SpectralMeasure::symmetrize`],
/// so every atom `(θ, m)` has a partner `(-θ, m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralMeasure {
    dimension: usize,
    kind: MeasureKind,
}

/// One symmetric pair of atoms `(θ, m)`, `(-θ, m)` collapsed to a ray with
/// weight `2m`, so that it contributes `weight · |⟨λ, θ⟩|` to the exponent.
#[derive(Debug, Clone, PartialEq)]
pub struct RayPair {
    pub dir: Vec<f64>,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NondegeneracyReport {
    pub kappa: f64,
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub grid_points: usize,
}

fn normalize(v: &[f64]) -> Result<Vec<f64>> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !n.is_finite() || n == 0.0 {
        return Err(Error::InvalidDirection);
    }
    Ok(v.iter().map(|x| x / n).collect())
}

fn same_dir(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= MERGE_TOL)
}

/// Mean of `|θ_1|` under the uniform probability on `S^{d-1}`.
pub fn sphere_abs_mean(d: usize) -> f64 {
    // m_1 = 1, m_2 = 2/π, m_{k+2} = m_k · k/(k+1)
    let (mut m, mut k) = if d % 2 == 1 { (1.0, 1) } else { (std::f64::consts::FRAC_2_PI, 2) };
    while k < d {
        m *= k as f64 / (k + 1) as f64;
        k += 2;
    }
    m
}

impl SpectralMeasure {
    /// Builds `½(μ_raw + μ_raw∘(-id))` with normalized, merged directions.
    pub fn symmetrize(raw: &[(Vec<f64>, f64)]) -> Result<Self> {
        Self::symmetrize_tracked(raw).map(|(m, _)| m)
    }

    /// Like [`symmetrize`](Self::symmetrize), also reporting whether the
    /// result differs from the raw input.
    pub fn symmetrize_tracked(raw: &[(Vec<f64>, f64)]) -> Result<(Self, bool)> {
        let Some(first) = raw.first() else {
            return Err(Error::EmptyMeasure);
        };
        let dimension = first.0.len();
        if dimension == 0 {
            return Err(Error::InvalidDirection);
        }
        let mut atoms: Vec<Atom> = Vec::with_capacity(2 * raw.len());
        let mut push = |dir: Vec<f64>, mass: f64| {
            if let Some(a) = atoms.iter_mut().find(|a| same_dir(&a.dir, &dir)) {
                a.mass += mass;
            } else {
                atoms.push(Atom { dir, mass });
            }
        };
        for (dir, mass) in raw {
            if dir.len() != dimension {
                return Err(Error::DimensionError { expected: dimension, got: dir.len() });
            }
            if !(mass.is_finite() && *mass > 0.0) {
                return Err(Error::InvalidMass(*mass));
            }
            let u = normalize(dir)?;
            let neg: Vec<f64> = u.iter().map(|x| -x).collect();
            push(u, 0.5 * mass);
            push(neg, 0.5 * mass);
        }
        let changed = atoms.len() != raw.len()
            || raw.iter().any(|(dir, mass)| {
                !atoms
                    .iter()
                    .any(|a| same_dir(&a.dir, dir) && (a.mass - mass).abs() <= MERGE_TOL * mass.max(1.0))
            });
        Ok((SpectralMeasure { dimension, kind: MeasureKind::Discrete { atoms } }, changed))
    }

    pub fn isotropic(dimension: usize, total_mass: f64) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::UnsupportedDimension(0));
        }
        if !(total_mass.is_finite() && total_mass > 0.0) {
            return Err(Error::InvalidMass(total_mass));
        }
        Ok(SpectralMeasure { dimension, kind: MeasureKind::Isotropic { total_mass } })
    }

    /// `Σ_i ½(δ_{e_i} + δ_{-e_i})`: independent standard Cauchy coordinates.
    pub fn cylindrical(dimension: usize) -> Self {
        let raw: Vec<(Vec<f64>, f64)> = (0..dimension)
            .flat_map(|i| {
                let mut e = vec![0.0; dimension];
                e[i] = 1.0;
                let mut m = vec![0.0; dimension];
                m[i] = -1.0;
                [(e, 0.5), (m, 0.5)]
            })
            .collect();
        Self::symmetrize(&raw).expect("cylindrical measure is valid")
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn kind(&self) -> &MeasureKind {
        &self.kind
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self.kind, MeasureKind::Discrete { .. })
    }

    pub fn atoms(&self) -> Option<&[Atom]> {
        match &self.kind {
            MeasureKind::Discrete { atoms } => Some(atoms),
            MeasureKind::Isotropic { .. } => None,
        }
    }

    pub fn total_mass(&self) -> f64 {
        match &self.kind {
            MeasureKind::Discrete { atoms } => atoms.iter().map(|a| a.mass).sum(),
            MeasureKind::Isotropic { total_mass } => *total_mass,
        }
    }

    /// Constant `c` with `Φ̄(λ) = c|λ|` for the isotropic kind.
    pub fn isotropic_scale(&self) -> Option<f64> {
        match self.kind {
            MeasureKind::Isotropic { total_mass } => Some(total_mass * sphere_abs_mean(self.dimension)),
            MeasureKind::Discrete { .. } => None,
        }
    }

    /// Collapses each `±θ` pair into one ray; the representative has its
    /// first nonzero coordinate positive.
    pub fn pairs(&self) -> Vec<RayPair> {
        let Some(atoms) = self.atoms() else {
            return Vec::new();
        };
        atoms
            .iter()
            .filter(|a| a.dir.iter().find(|x| x.abs() > MERGE_TOL).is_some_and(|x| *x > 0.0))
            .map(|a| RayPair { dir: a.dir.clone(), weight: 2.0 * a.mass })
            .collect()
    }

    /// `Φ̄(λ) = ∫ |⟨λ, θ⟩| μ(dθ)`.
    pub fn levy_exponent(&self, lam: &[f64]) -> Result<f64> {
        if lam.len() != self.dimension {
            return Err(Error::DimensionError { expected: self.dimension, got: lam.len() });
        }
        Ok(self.exponent(lam))
    }

    /// Unchecked variant of [`levy_exponent`](Self::levy_exponent) for hot loops.
    #[inline]
    pub fn exponent(&self, lam: &[f64]) -> f64 {
        match &self.kind {
            MeasureKind::Discrete { atoms } => atoms
                .iter()
                .map(|a| a.mass * a.dir.iter().zip(lam).map(|(t, l)| t * l).sum::<f64>().abs())
                .sum(),
            MeasureKind::Isotropic { total_mass } => {
                total_mass * sphere_abs_mean(self.dimension) * lam.iter().map(|x| x * x).sum::<f64>().sqrt()
            }
        }
    }

    /// Law of `⟨u, Z⟩`: the one-dimensional measure `½Φ̄(u)(δ₁ + δ₋₁)`.
    pub fn project(&self, u: &[f64]) -> Result<SpectralMeasure> {
        let scale = self.levy_exponent(u)?;
        SpectralMeasure::symmetrize(&[(vec![1.0], scale)])
    }

    /// Estimates the constant `κ` of the two-sided comparison
    /// `κ⁻¹|λ| ≤ Φ̄(λ) ≤ κ|λ|`.
    pub fn nondegeneracy_kappa(&self, resolution: usize) -> Result<NondegeneracyReport> {
        if resolution < 8 {
            return Err(Error::InvalidParameter(format!("resolution {resolution} < 8")));
        }
        let (min_ratio, max_ratio, grid_points) = match (&self.kind, self.dimension) {
            (MeasureKind::Isotropic { .. }, _) => {
                let c = self.isotropic_scale().unwrap_or(0.0);
                (c, c, 1)
            }
            (_, 1) => {
                let r = self.exponent(&[1.0]);
                (r, r, 2)
            }
            (_, 2) => self.extremes_circle(resolution),
            (_, 3) => self.extremes_sphere(resolution),
            (_, d) => return Err(Error::UnsupportedDimension(d)),
        };
        if min_ratio <= DEGENERACY_THRESHOLD {
            return Err(Error::DegenerateMeasure { min_ratio });
        }
        Ok(NondegeneracyReport {
            kappa: max_ratio.max(1.0 / min_ratio),
            min_ratio,
            max_ratio,
            grid_points,
        })
    }

    fn circle_ratio(&self, phi: f64) -> f64 {
        self.exponent(&[phi.cos(), phi.sin()])
    }

    fn extremes_circle(&self, resolution: usize) -> (f64, f64, usize) {
        // Φ̄ is even, so half a circle covers every direction.
        let n = resolution.max(360);
        let step = std::f64::consts::PI / n as f64;
        let values: Vec<f64> = (0..n).map(|j| self.circle_ratio(j as f64 * step)).collect();
        let argmin = (0..n).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap_or(0);
        let argmax = (0..n).max_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap_or(0);
        let refine = |j: usize, sign: f64| {
            let c = j as f64 * step;
            let x = golden_section(|phi| sign * self.circle_ratio(phi), c - step, c + step, 1e-10);
            (sign * self.circle_ratio(x)).min(sign * values[j]) * sign
        };
        (refine(argmin, 1.0), refine(argmax, -1.0), n)
    }

    fn extremes_sphere(&self, resolution: usize) -> (f64, f64, usize) {
        let n = (resolution * resolution).max(2000);
        let pts = fibonacci_sphere(n);
        let values: Vec<f64> = pts.iter().map(|p| self.exponent(p)).collect();
        let argmin = (0..n).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap_or(0);
        let argmax = (0..n).max_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap_or(0);
        let h0 = (4.0 * std::f64::consts::PI / n as f64).sqrt();
        let refine = |j: usize, sign: f64| {
            let p = &pts[j];
            let start = [p[2].clamp(-1.0, 1.0).acos(), p[1].atan2(p[0])];
            let f = |a: [f64; 2]| {
                let (st, ct) = a[0].sin_cos();
                let (sp, cp) = a[1].sin_cos();
                sign * self.exponent(&[st * cp, st * sp, ct])
            };
            sign * coordinate_descent(f, start, h0, 1e-10)
        };
        (refine(argmin, 1.0), refine(argmax, -1.0), n)
    }

    /// Serializable form of the measure.
    pub fn to_file(&self) -> MeasureFile {
        match &self.kind {
            MeasureKind::Discrete { atoms } => MeasureFile {
                dimension: self.dimension,
                kind: MeasureFileKind::Discrete,
                atoms: atoms.clone(),
                total_mass: None,
            },
            MeasureKind::Isotropic { total_mass } => MeasureFile {
                dimension: self.dimension,
                kind: MeasureFileKind::Isotropic,
                atoms: Vec::new(),
                total_mass: Some(*total_mass),
            },
        }
    }

    /// SHA-256 of the canonical JSON encoding, hex encoded.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(&self.to_file()).unwrap_or_default();
        crate::hex_digest(&Sha256::digest(&json))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasureFileKind {
    Discrete,
    Isotropic,
}

/// On-disk JSON layout of a spectral measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureFile {
    pub dimension: usize,
    pub kind: MeasureFileKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub atoms: Vec<Atom>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_mass: Option<f64>,
}

/// A parsed measure file together with whether symmetrization altered it.
#[derive(Debug, Clone)]
pub struct LoadedMeasure {
    pub measure: SpectralMeasure,
    pub symmetrized: bool,
}

impl MeasureFile {
    pub fn into_measure(self) -> Result<LoadedMeasure> {
        match self.kind {
            MeasureFileKind::Isotropic => {
                let mass = self
                    .total_mass
                    .ok_or_else(|| Error::InvalidParameter("isotropic measure needs total_mass".into()))?;
                Ok(LoadedMeasure { measure: SpectralMeasure::isotropic(self.dimension, mass)?, symmetrized: false })
            }
            MeasureFileKind::Discrete => {
                let raw: Vec<(Vec<f64>, f64)> = self.atoms.into_iter().map(|a| (a.dir, a.mass)).collect();
                if let Some((dir, _)) = raw.iter().find(|(d, _)| d.len() != self.dimension) {
                    return Err(Error::DimensionError { expected: self.dimension, got: dir.len() });
                }
                let (measure, symmetrized) = SpectralMeasure::symmetrize_tracked(&raw)?;
                Ok(LoadedMeasure { measure, symmetrized })
            }
        }
    }

    pub fn parse(json: &str) -> Result<LoadedMeasure> {
        let file: MeasureFile =
            serde_json::from_str(json).map_err(|e| Error::InvalidParameter(format!("measure file: {e}")))?;
        file.into_measure()
    }
}

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

fn coordinate_descent(f: impl Fn([f64; 2]) -> f64, mut x: [f64; 2], mut step: f64, tol: f64) -> f64 {
    let mut fx = f(x);
    while step > tol {
        let mut improved = false;
        for k in 0..2 {
            for s in [step, -step] {
                let mut y = x;
                y[k] += s;
                let fy = f(y);
                if fy < fx {
                    x = y;
                    fx = fy;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    fx
}

/// Quasi-uniform points on `S^2`.
pub fn fibonacci_sphere(n: usize) -> Vec<Vec<f64>> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let (s, c) = (golden * i as f64).sin_cos();
            vec![r * c, r * s, z]
        })
        .collect()
}
