//! Separable multi-dimensional FFTs on row-major buffers.

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{FftDirection, FftPlanner};

/// In-place unnormalized transform along every axis of `shape`.
pub fn transform(data: &mut [Complex64], shape: &[usize], direction: FftDirection) {
    let total: usize = shape.iter().product();
    assert_eq!(data.len(), total, "buffer does not match shape");
    let mut planner = FftPlanner::<f64>::new();
    let d = shape.len();
    for axis in 0..d {
        let n = shape[axis];
        if n == 1 {
            continue;
        }
        let fft = planner.plan_fft(n, direction);
        let stride: usize = shape[axis + 1..].iter().product();
        if stride == 1 {
            data.par_chunks_mut(n).for_each(|line| fft.process(line));
            continue;
        }
        // gather strided lines, transform, scatter back; blocks of n*stride are independent
        data.par_chunks_mut(n * stride).for_each(|block| {
            let mut line = vec![Complex64::new(0.0, 0.0); n];
            for offset in 0..stride {
                for (j, v) in line.iter_mut().enumerate() {
                    *v = block[offset + j * stride];
                }
                fft.process(&mut line);
                for (j, v) in line.iter().enumerate() {
                    block[offset + j * stride] = *v;
                }
            }
        });
    }
}

pub fn forward(data: &mut [Complex64], shape: &[usize]) {
    transform(data, shape, FftDirection::Forward);
}

/// Inverse transform including the `1/N` normalization.
pub fn inverse(data: &mut [Complex64], shape: &[usize]) {
    transform(data, shape, FftDirection::Inverse);
    let scale = 1.0 / data.len() as f64;
    data.par_iter_mut().for_each(|v| *v *= scale);
}
