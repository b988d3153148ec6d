//! Regular grids in one to three dimensions and fields sampled on them.
//!
//! Storage is row-major: the last axis varies fastest.

use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin: Vec<f64>,
    pub spacing: Vec<f64>,
    pub shape: Vec<usize>,
}

impl GridSpec {
    pub fn new(origin: Vec<f64>, spacing: Vec<f64>, shape: Vec<usize>) -> Result<Self> {
        let d = shape.len();
        if !(1..=3).contains(&d) {
            return Err(Error::UnsupportedDimension(d));
        }
        if origin.len() != d || spacing.len() != d {
            return Err(Error::GridError("origin, spacing and shape lengths differ".into()));
        }
        if shape.contains(&0) {
            return Err(Error::GridError("shape entries must be positive".into()));
        }
        if spacing.iter().any(|h| !(h.is_finite() && *h > 0.0)) {
            return Err(Error::GridError("spacing entries must be positive".into()));
        }
        Ok(GridSpec { origin, spacing, shape })
    }

    /// `n` points per axis with spacing `h`, the origin of space at index `n/2`.
    pub fn centered(dimension: usize, n: usize, h: f64) -> Self {
        let o = -((n / 2) as f64) * h;
        GridSpec { origin: vec![o; dimension], spacing: vec![h; dimension], shape: vec![n; dimension] }
    }

    pub fn dimension(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.shape[axis] as f64 * self.spacing[axis]
    }

    /// Smallest per-axis Nyquist frequency `π/h`.
    pub fn nyquist(&self) -> f64 {
        self.spacing.iter().map(|h| std::f64::consts::PI / h).fold(f64::INFINITY, f64::min)
    }

    pub fn strides(&self) -> Vec<usize> {
        let d = self.dimension();
        let mut s = vec![1; d];
        for k in (0..d.saturating_sub(1)).rev() {
            s[k] = s[k + 1] * self.shape[k + 1];
        }
        s
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dimension()];
        for k in (0..self.dimension()).rev() {
            idx[k] = flat % self.shape[k];
            flat /= self.shape[k];
        }
        idx
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        let mut p = vec![0.0; self.dimension()];
        self.point_into(flat, &mut p);
        p
    }

    pub fn point_into(&self, mut flat: usize, out: &mut [f64]) {
        for k in (0..self.dimension()).rev() {
            let i = flat % self.shape[k];
            flat /= self.shape[k];
            out[k] = self.origin[k] + i as f64 * self.spacing[k];
        }
    }

    /// Angular frequencies along `axis` in FFT order (0, 1, ..., -1).
    pub fn frequencies(&self, axis: usize) -> Vec<f64> {
        let n = self.shape[axis];
        let dp = 2.0 * std::f64::consts::PI / self.extent(axis);
        (0..n)
            .map(|k| {
                let s = if k <= n / 2 { k as i64 } else { k as i64 - n as i64 };
                s as f64 * dp
            })
            .collect()
    }

    /// The grid with every coordinate multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        GridSpec {
            origin: self.origin.iter().map(|o| o * factor).collect(),
            spacing: self.spacing.iter().map(|h| h * factor).collect(),
            shape: self.shape.clone(),
        }
    }

    /// Whether `flat` lies at least `margin` (fraction of the extent) away from every face.
    pub fn is_interior(&self, flat: usize, margin: f64) -> bool {
        self.multi_index(flat).iter().zip(&self.shape).all(|(&i, &n)| {
            let m = (margin * n as f64).ceil() as usize;
            i >= m && i + m < n
        })
    }
}

/// A field sampled on a [`GridSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridField<T = f64> {
    pub spec: GridSpec,
    pub values: Vec<T>,
}

impl<T: Copy> GridField<T> {
    pub fn new(spec: GridSpec, values: Vec<T>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(Error::GridError(format!("{} values for {} grid points", values.len(), spec.len())));
        }
        Ok(GridField { spec, values })
    }

    pub fn from_fn(spec: GridSpec, f: impl Fn(&[f64]) -> T) -> Self {
        let mut p = vec![0.0; spec.dimension()];
        let values = (0..spec.len())
            .map(|i| {
                spec.point_into(i, &mut p);
                f(&p)
            })
            .collect();
        GridField { spec, values }
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> GridField<U> {
        GridField { spec: self.spec.clone(), values: self.values.iter().map(|&v| f(v)).collect() }
    }
}

impl GridField<f64> {
    pub fn zeros(spec: GridSpec) -> Self {
        let n = spec.len();
        GridField { spec, values: vec![0.0; n] }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Discrete `L^p` norm `(Σ |v|^p h^d)^{1/p}`; `p = ∞` gives the sup norm.
    pub fn norm(&self, p: f64) -> f64 {
        if p.is_infinite() {
            return self.sup_norm();
        }
        let s: f64 = self.values.iter().map(|v| v.abs().powf(p)).sum();
        (s * self.spec.cell_volume()).powf(1.0 / p)
    }

    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.spec.cell_volume()
    }

    /// Largest absolute value on the outermost layer of cells.
    pub fn boundary_max(&self) -> f64 {
        let spec = &self.spec;
        (0..spec.len())
            .filter(|&i| spec.multi_index(i).iter().zip(&spec.shape).any(|(&k, &n)| k == 0 || k + 1 == n))
            .fold(0.0, |m, i| m.max(self.values[i].abs()))
    }

    pub fn same_grid(&self, other: &GridField) -> Result<()> {
        if self.spec != other.spec {
            return Err(Error::GridError("fields live on different grids".into()));
        }
        Ok(())
    }

    fn locate(&self, x: &[f64]) -> Option<Vec<(usize, f64)>> {
        if x.len() != self.spec.dimension() {
            return None;
        }
        let mut out = Vec::with_capacity(x.len());
        for k in 0..x.len() {
            let s = (x[k] - self.spec.origin[k]) / self.spec.spacing[k];
            let n = self.spec.shape[k];
            if !(s >= 0.0 && s <= (n - 1) as f64) {
                return None;
            }
            let i = (s.floor() as usize).min(n.saturating_sub(2));
            out.push((i, s - i as f64));
        }
        Some(out)
    }

    /// Multilinear interpolation; `None` outside the grid.
    pub fn interpolate_linear(&self, x: &[f64]) -> Option<f64> {
        let loc = self.locate(x)?;
        let strides = self.spec.strides();
        let d = loc.len();
        let mut acc = 0.0;
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut flat = 0;
            for k in 0..d {
                let (i, f) = loc[k];
                let up = (corner >> k) & 1 == 1 && self.spec.shape[k] > 1;
                w *= if up { f } else { 1.0 - f };
                flat += (i + usize::from(up)) * strides[k];
            }
            acc += w * self.values[flat];
        }
        Some(acc)
    }

    /// Tensor-product Catmull–Rom interpolation, falling back to linear
    /// within one cell of the boundary.
    pub fn interpolate_cubic(&self, x: &[f64]) -> Option<f64> {
        let loc = self.locate(x)?;
        if loc.iter().zip(&self.spec.shape).any(|(&(i, _), &n)| i == 0 || i + 2 >= n) {
            return self.interpolate_linear(x);
        }
        let strides = self.spec.strides();
        let d = loc.len();
        let weights: Vec<[f64; 4]> = loc.iter().map(|&(_, t)| catmull_rom(t)).collect();
        let mut acc = 0.0;
        for combo in 0..4usize.pow(d as u32) {
            let mut w = 1.0;
            let mut flat = 0;
            let mut c = combo;
            for k in 0..d {
                let j = c % 4;
                c /= 4;
                w *= weights[k][j];
                flat += (loc[k].0 + j - 1) * strides[k];
            }
            acc += w * self.values[flat];
        }
        Some(acc)
    }

    /// Cubic interpolant at every node translated by `offset`, with zero
    /// outside the grid. The stencil weights are shared by all nodes; nodes
    /// whose stencil leaves the grid fall back to [`Self::interpolate_cubic`].
    pub fn shifted_cubic(&self, offset: &[f64]) -> Vec<f64> {
        let d = self.spec.dimension();
        let strides = self.spec.strides();
        let mut base = Vec::with_capacity(d);
        let mut weights = Vec::with_capacity(d);
        for k in 0..d {
            let s = offset[k] / self.spec.spacing[k];
            let m = s.floor();
            base.push(m as i64);
            weights.push(catmull_rom(s - m));
        }
        (0..self.spec.len())
            .into_par_iter()
            .map(|flat| {
                let mut inside = true;
                let mut anchor = 0usize;
                let mut rem = flat;
                for k in 0..d {
                    let idx = (rem / strides[k]) as i64;
                    rem %= strides[k];
                    let i = idx + base[k];
                    if i < 1 || i + 2 >= self.spec.shape[k] as i64 {
                        inside = false;
                        break;
                    }
                    anchor += (i as usize - 1) * strides[k];
                }
                if !inside {
                    let x: Vec<f64> = self.spec.point(flat).iter().zip(offset).map(|(a, b)| a + b).collect();
                    return self.interpolate_cubic(&x).unwrap_or(0.0);
                }
                let mut acc = 0.0;
                for combo in 0..4usize.pow(d as u32) {
                    let mut w = 1.0;
                    let mut at = anchor;
                    let mut c = combo;
                    for k in 0..d {
                        let j = c % 4;
                        c /= 4;
                        w *= weights[k][j];
                        at += j * strides[k];
                    }
                    acc += w * self.values[at];
                }
                acc
            })
            .collect()
    }

    /// JSON header describing the binary payload.
    pub fn header(&self) -> GridHeader {
        GridHeader {
            origin: self.spec.origin.clone(),
            spacing: self.spec.spacing.clone(),
            shape: self.spec.shape.clone(),
            dtype: "f64le".into(),
        }
    }

    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.values.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    /// Writes `<stem>.bin` (little-endian f64) and `<stem>.json` (header).
    pub fn write_binary(&self, stem: &Path) -> std::io::Result<()> {
        let mut bin = std::fs::File::create(stem.with_extension("bin"))?;
        bin.write_all(&self.to_le_bytes())?;
        let header = serde_json::to_string_pretty(&self.header())?;
        std::fs::write(stem.with_extension("json"), header)
    }

    pub fn read_binary(stem: &Path) -> Result<Self> {
        let io = |e: std::io::Error| Error::GridError(e.to_string());
        let header: GridHeader = serde_json::from_str(&std::fs::read_to_string(stem.with_extension("json")).map_err(io)?)
            .map_err(|e| Error::GridError(e.to_string()))?;
        let spec = GridSpec::new(header.origin, header.spacing, header.shape)?;
        let mut bytes = Vec::new();
        std::fs::File::open(stem.with_extension("bin")).map_err(io)?.read_to_end(&mut bytes).map_err(io)?;
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        GridField::new(spec, values)
    }

    /// Two-column `x,value` CSV for one-dimensional fields.
    pub fn to_csv(&self) -> Result<String> {
        if self.spec.dimension() != 1 {
            return Err(Error::UnsupportedDimension(self.spec.dimension()));
        }
        let mut s = String::from("x,value\n");
        for (i, v) in self.values.iter().enumerate() {
            s.push_str(&format!("{},{}\n", self.spec.point(i)[0], v));
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridHeader {
    pub origin: Vec<f64>,
    pub spacing: Vec<f64>,
    pub shape: Vec<usize>,
    pub dtype: String,
}

fn catmull_rom(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        0.5 * (-t3 + 2.0 * t2 - t),
        0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
        0.5 * (-3.0 * t3 + 4.0 * t2 + t),
        0.5 * (t3 - t2),
    ]
}

#[cfg(test)]
mod tests {
    #[test]
    fn shifted_cubic_agrees_with_pointwise_interpolation() {
        let spec = super::GridSpec::centered(2, 24, 0.3);
        let values: Vec<f64> = (0..spec.len()).map(|i| {
            let p = spec.point(i);
            (-(p[0] * p[0] + 0.5 * p[1] * p[1])).exp() * (1.0 + p[0].sin())
        }).collect();
        let field = super::GridField::new(spec.clone(), values).unwrap();
        for offset in [[0.17, -0.52], [-1.31, 0.07], [4.01, 2.26]] {
            let moved = field.shifted_cubic(&offset);
            for i in 0..spec.len() {
                let p = spec.point(i);
                let x = [p[0] + offset[0], p[1] + offset[1]];
                let direct = field.interpolate_cubic(&x).unwrap_or(0.0);
                assert!((moved[i] - direct).abs() < 1e-12, "node {i}: {} vs {direct}", moved[i]);
            }
        }
    }

    use super::*;

    #[test]
    fn spec_validation() {
        assert!(GridSpec::new(vec![0.0], vec![0.1], vec![0]).is_err());
        assert!(GridSpec::new(vec![0.0], vec![-0.1], vec![4]).is_err());
        assert!(GridSpec::new(vec![0.0; 4], vec![0.1; 4], vec![2; 4]).is_err());
        assert!(GridField::new(GridSpec::centered(1, 4, 1.0), vec![0.0; 3]).is_err());
    }

    #[test]
    fn centered_grid_contains_origin() {
        let g = GridSpec::centered(2, 8, 0.5);
        let flat = 4 * 8 + 4;
        assert_eq!(g.point(flat), vec![0.0, 0.0]);
        assert_eq!(g.multi_index(flat), vec![4, 4]);
        assert_eq!(g.frequencies(0)[1], 2.0 * std::f64::consts::PI / 4.0);
        assert!(g.frequencies(0)[7] < 0.0);
    }

    #[test]
    fn interpolation_reproduces_polynomials() {
        let g = GridSpec::new(vec![-1.0, -2.0], vec![0.1, 0.2], vec![21, 21]).unwrap();
        let lin = GridField::from_fn(g.clone(), |p| 2.0 * p[0] - p[1] + 0.5);
        let x = [0.237, 0.711];
        assert!((lin.interpolate_linear(&x).unwrap() - (2.0 * x[0] - x[1] + 0.5)).abs() < 1e-12);
        let cub = GridField::from_fn(g, |p| p[0].powi(3) + p[1] * p[1]);
        let exact = x[0].powi(3) + x[1] * x[1];
        // Catmull–Rom is exact up to quadratics and O(h^3) beyond
        assert!((cub.interpolate_cubic(&x).unwrap() - exact).abs() < 1e-3);
        assert!(cub.interpolate_cubic(&[5.0, 0.0]).is_none());
    }

    #[test]
    fn norms_and_binary_round_trip() {
        let g = GridSpec::centered(1, 100, 0.1);
        let f = GridField::from_fn(g, |p| (-p[0] * p[0]).exp());
        let l2 = f.norm(2.0);
        assert!((l2 - (std::f64::consts::PI / 2.0).sqrt().sqrt()).abs() < 1e-6);
        assert!((f.integral() - std::f64::consts::PI.sqrt()).abs() < 1e-6);
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("field");
        f.write_binary(&stem).unwrap();
        assert_eq!(GridField::read_binary(&stem).unwrap(), f);
    }
}
