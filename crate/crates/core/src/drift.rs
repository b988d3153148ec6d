//! Bounded drift fields and their proxy split `b = b₀ + (b - b₀)`.

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridSpec;

/// Built-in drift profiles. Profiles act coordinatewise: `b_k(x) = g(x_k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DriftField {
    Constant { value: Vec<f64> },
    /// `amp · tanh(x_k / scale)`
    Tanh { amp: f64, scale: f64 },
    /// `amp · sin(x_k / scale)`
    Sin { amp: f64, scale: f64 },
    /// `amp · clamp(x_k / width, -1, 1)`, Lipschitz but not C¹.
    Ramp { amp: f64, width: f64 },
    /// Multilinear interpolation of per-component tables, clamped to the edge outside.
    Tabulated { grid: GridSpec, components: Vec<Vec<f64>> },
    /// `center + factor · (inner - center)`
    Scaled { inner: Box<DriftField>, center: Vec<f64>, factor: f64 },
}

#[derive(Debug, Clone, Deserialize)]
struct DriftTableFile {
    origin: Vec<f64>,
    spacing: Vec<f64>,
    shape: Vec<usize>,
    components: Vec<Vec<f64>>,
}

impl DriftField {
    /// Parses `tanh01`, `sin02`, `constant:a,b`, `tanh:AMP[:SCALE]`, `sin:AMP[:SCALE]`,
    /// `ramp:AMP[:WIDTH]`, `zero`. Tables are loaded with [`DriftField::from_table_json`].
    pub fn parse(name: &str, dimension: usize) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("unknown drift '{name}'"));
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
        let mut parts = name.split(':');
        let head = parts.next().unwrap_or("");
        let args: Vec<&str> = parts.collect();
        let amp_scale = |default_scale: f64| -> Result<(f64, f64)> {
            let amp = num(args.first().ok_or_else(bad)?)?;
            let scale = args.get(1).map(|s| num(s)).transpose()?.unwrap_or(default_scale);
            Ok((amp, scale))
        };
        let field = match head {
            "zero" => DriftField::Constant { value: vec![0.0; dimension] },
            "tanh01" => DriftField::Tanh { amp: 0.1, scale: 1.0 },
            "sin02" => DriftField::Sin { amp: 0.2, scale: 1.0 },
            "constant" => {
                let value = args.first().ok_or_else(bad)?.split(',').map(num).collect::<Result<Vec<_>>>()?;
                if value.len() != dimension {
                    return Err(Error::DimensionError { expected: dimension, got: value.len() });
                }
                DriftField::Constant { value }
            }
            "tanh" => {
                let (amp, scale) = amp_scale(1.0)?;
                DriftField::Tanh { amp, scale }
            }
            "sin" => {
                let (amp, scale) = amp_scale(1.0)?;
                DriftField::Sin { amp, scale }
            }
            "ramp" => {
                let (amp, width) = amp_scale(1.0)?;
                DriftField::Ramp { amp, width }
            }
            _ => return Err(bad()),
        };
        field.check()?;
        Ok(field)
    }

    /// Loads `{"origin", "spacing", "shape", "components": [[...], ...]}`.
    pub fn from_table_json(json: &str) -> Result<Self> {
        let f: DriftTableFile = serde_json::from_str(json).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        let grid = GridSpec::new(f.origin, f.spacing, f.shape)?;
        if f.components.len() != grid.dimension() {
            return Err(Error::DimensionError { expected: grid.dimension(), got: f.components.len() });
        }
        if f.components.iter().any(|c| c.len() != grid.len()) {
            return Err(Error::GridError("drift table length does not match its shape".into()));
        }
        if f.components.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::EvaluationError("non-finite drift table entry".into()));
        }
        Ok(DriftField::Tabulated { grid, components: f.components })
    }

    fn check(&self) -> Result<()> {
        let ok = match self {
            DriftField::Constant { value } => value.iter().all(|v| v.is_finite()),
            DriftField::Tanh { amp, scale } | DriftField::Sin { amp, scale } | DriftField::Ramp { amp, width: scale } => {
                amp.is_finite() && scale.is_finite() && *scale > 0.0
            }
            _ => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid drift parameters {self:?}")))
        }
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            DriftField::Constant { value } => out.copy_from_slice(value),
            DriftField::Tanh { amp, scale } => x.iter().zip(out).for_each(|(x, o)| *o = amp * (x / scale).tanh()),
            DriftField::Sin { amp, scale } => x.iter().zip(out).for_each(|(x, o)| *o = amp * (x / scale).sin()),
            DriftField::Ramp { amp, width } => {
                x.iter().zip(out).for_each(|(x, o)| *o = amp * (x / width).clamp(-1.0, 1.0))
            }
            DriftField::Tabulated { grid, components } => {
                let clamped: Vec<f64> = (0..grid.dimension())
                    .map(|k| x[k].clamp(grid.origin[k], grid.origin[k] + (grid.shape[k] - 1) as f64 * grid.spacing[k]))
                    .collect();
                for (k, o) in out.iter_mut().enumerate() {
                    // values exist for every in-range point
                    *o = multilinear(grid, &components[k], &clamped);
                }
            }
            DriftField::Scaled { inner, center, factor } => {
                inner.eval_into(x, out);
                out.iter_mut().zip(center).for_each(|(o, c)| *o = c + factor * (*o - c));
            }
        }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.eval_into(x, &mut out);
        out
    }

    /// An upper bound for `sup |b|`.
    pub fn bound(&self, dimension: usize) -> f64 {
        let sd = (dimension as f64).sqrt();
        match self {
            DriftField::Constant { value } => norm(value),
            DriftField::Tanh { amp, .. } | DriftField::Sin { amp, .. } | DriftField::Ramp { amp, .. } => amp.abs() * sd,
            DriftField::Tabulated { grid, components } => (0..grid.len())
                .map(|i| components.iter().map(|c| c[i] * c[i]).sum::<f64>().sqrt())
                .fold(0.0, f64::max),
            DriftField::Scaled { inner, center, factor } => {
                norm(center) * (1.0 - factor).abs() + factor.abs() * inner.bound(dimension)
            }
        }
    }
}

fn multilinear(grid: &GridSpec, values: &[f64], x: &[f64]) -> f64 {
    let d = grid.dimension();
    let strides = grid.strides();
    let mut base = 0usize;
    let mut frac = [0.0; 3];
    let mut step = [0usize; 3];
    for k in 0..d {
        let s = ((x[k] - grid.origin[k]) / grid.spacing[k]).max(0.0);
        let i = (s.floor() as usize).min(grid.shape[k].saturating_sub(2));
        frac[k] = if grid.shape[k] > 1 { (s - i as f64).clamp(0.0, 1.0) } else { 0.0 };
        step[k] = if grid.shape[k] > 1 { strides[k] } else { 0 };
        base += i * strides[k];
    }
    let mut acc = 0.0;
    for corner in 0..(1usize << d) {
        let mut w = 1.0;
        let mut idx = base;
        for k in 0..d {
            if corner >> k & 1 == 1 {
                w *= frac[k];
                idx += step[k];
            } else {
                w *= 1.0 - frac[k];
            }
        }
        if w != 0.0 {
            acc += w * values[idx];
        }
    }
    acc
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Drift together with its proxy `b₀` and oscillation `ε = sup |b - b₀|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftSpec {
    pub field: DriftField,
    pub dimension: usize,
    pub b0: Vec<f64>,
    pub epsilon: f64,
    pub bound: f64,
}

impl DriftSpec {
    /// `b₀` is the midpoint of the componentwise range of `b` over the grid points.
    pub fn from_grid(field: DriftField, grid: &GridSpec) -> Result<Self> {
        let d = grid.dimension();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        let mut x = vec![0.0; d];
        let mut b = vec![0.0; d];
        for i in 0..grid.len() {
            grid.point_into(i, &mut x);
            field.eval_into(&x, &mut b);
            for k in 0..d {
                lo[k] = lo[k].min(b[k]);
                hi[k] = hi[k].max(b[k]);
            }
        }
        let b0: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| 0.5 * (l + h)).collect();
        Self::with_proxy(field, b0, grid)
    }

    /// Uses the given `b₀`; `ε` is the sup deviation over the grid points.
    pub fn with_proxy(field: DriftField, b0: Vec<f64>, grid: &GridSpec) -> Result<Self> {
        let d = grid.dimension();
        if b0.len() != d {
            return Err(Error::DimensionError { expected: d, got: b0.len() });
        }
        let mut x = vec![0.0; d];
        let mut b = vec![0.0; d];
        let mut eps: f64 = 0.0;
        for i in 0..grid.len() {
            grid.point_into(i, &mut x);
            field.eval_into(&x, &mut b);
            if b.iter().any(|v| !v.is_finite()) {
                return Err(Error::EvaluationError(format!("drift is not finite at {x:?}")));
            }
            let dev: f64 = b.iter().zip(&b0).map(|(a, c)| (a - c).powi(2)).sum::<f64>().sqrt();
            eps = eps.max(dev);
        }
        let bound = field.bound(d);
        let spec = DriftSpec { field, dimension: d, b0, epsilon: eps, bound };
        spec.validate()?;
        Ok(spec)
    }

    /// Constant drift `b ≡ b₀`.
    pub fn constant(b0: Vec<f64>) -> Self {
        let bound = norm(&b0);
        DriftSpec { dimension: b0.len(), field: DriftField::Constant { value: b0.clone() }, b0, epsilon: 0.0, bound }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.field, DriftField::Constant { .. }) || self.epsilon == 0.0 && self.bound == norm(&self.b0)
    }

    #[inline]
    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        self.field.eval_into(x, out)
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.field.eval(x)
    }

    /// `b₀ + c (b - b₀)`, with `ε` scaled by `|c|`.
    pub fn scaled(&self, c: f64) -> Self {
        let field = DriftField::Scaled { inner: Box::new(self.field.clone()), center: self.b0.clone(), factor: c };
        let bound = field.bound(self.dimension);
        DriftSpec { field, dimension: self.dimension, b0: self.b0.clone(), epsilon: self.epsilon * c.abs(), bound }
    }

    /// Consistency checks plus a bound check on 10³ random probes.
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!("epsilon {} must be finite and nonnegative", self.epsilon)));
        }
        if self.epsilon <= 1.0 && norm(&self.b0) > 1.0 + self.bound + 1e-12 {
            return Err(Error::InvalidParameter("proxy b0 is inconsistent with the drift bound".into()));
        }
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed);
        let mut x = vec![0.0; self.dimension];
        let mut b = vec![0.0; self.dimension];
        for _ in 0..1000 {
            x.iter_mut().for_each(|v| *v = r.random_range(-50.0..50.0));
            self.eval_into(&x, &mut b);
            if b.iter().any(|v| !v.is_finite()) {
                return Err(Error::EvaluationError(format!("drift is not finite at {x:?}")));
            }
            if norm(&b) > self.bound * (1.0 + 1e-12) + 1e-15 {
                return Err(Error::InvalidParameter(format!("drift exceeds its declared bound at {x:?}")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_names() {
        assert_eq!(DriftField::parse("tanh01", 1).unwrap(), DriftField::Tanh { amp: 0.1, scale: 1.0 });
        assert_eq!(DriftField::parse("sin:0.3:2", 2).unwrap(), DriftField::Sin { amp: 0.3, scale: 2.0 });
        assert_eq!(
            DriftField::parse("constant:0.5,-1", 2).unwrap(),
            DriftField::Constant { value: vec![0.5, -1.0] }
        );
        assert!(DriftField::parse("constant:1", 2).is_err());
        assert!(DriftField::parse("wobble", 1).is_err());
        assert!(DriftField::parse("tanh:1:0", 1).is_err());
    }

    #[test]
    fn proxy_split() {
        let g = GridSpec::centered(1, 512, 0.1);
        let d = DriftSpec::from_grid(DriftField::Tanh { amp: 0.1, scale: 1.0 }, &g).unwrap();
        assert!(d.b0[0].abs() < 1e-12);
        assert!((d.epsilon - 0.1).abs() < 1e-6);
        let shifted = DriftSpec::from_grid(DriftField::parse("constant:0.3", 1).unwrap(), &g).unwrap();
        assert_eq!(shifted.epsilon, 0.0);
        assert_eq!(shifted.b0, vec![0.3]);
        let s = d.scaled(0.5);
        assert!((s.eval(&[3.0])[0] - 0.05 * 3f64.tanh()).abs() < 1e-15);
        assert!((s.epsilon - 0.05).abs() < 1e-6);
    }

    #[test]
    fn table_interpolates_and_clamps() {
        let json = r#"{"origin":[0.0],"spacing":[1.0],"shape":[3],"components":[[0.0,1.0,4.0]]}"#;
        let f = DriftField::from_table_json(json).unwrap();
        assert_eq!(f.eval(&[0.5]), vec![0.5]);
        assert_eq!(f.eval(&[1.5]), vec![2.5]);
        assert_eq!(f.eval(&[10.0]), vec![4.0]);
        assert_eq!(f.eval(&[-3.0]), vec![0.0]);
        assert_eq!(f.bound(1), 4.0);
        let two = r#"{"origin":[0.0,0.0],"spacing":[1.0,1.0],"shape":[2,2],"components":[[0,1,2,3],[0,0,0,0]]}"#;
        let f2 = DriftField::from_table_json(two).unwrap();
        assert!((f2.eval(&[0.5, 0.5])[0] - 1.5).abs() < 1e-15);
    }
}
