//! Centered, unitary discrete Fourier transforms.
//!
//! DC sits at index `n / 2` (zero-indexed) on both sides of the transform and
//! every transformed axis is scaled by `1 / sqrt(n)`, so `ifftc` is the exact
//! adjoint and inverse of `fftc`.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftDirection, FftPlanner};

use crate::error::{Error, Result};
use crate::tensor::{Dim, KTensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

impl From<Direction> for FftDirection {
    fn from(d: Direction) -> Self {
        match d {
            Direction::Forward => FftDirection::Forward,
            Direction::Inverse => FftDirection::Inverse,
        }
    }
}

/// Transforms `data` (first axis fastest, extents `shape`) along `axis`.
pub fn fftc_axis(data: &mut [Complex64], shape: &[usize], axis: usize, dir: Direction) {
    let n = shape[axis];
    if n <= 1 || data.is_empty() {
        return;
    }
    let stride: usize = shape[..axis].iter().product();
    let block = n * stride;
    debug_assert_eq!(data.len() % block, 0);

    let plan: Arc<dyn Fft<f64>> = FftPlanner::new().plan_fft(n, dir.into());
    let scale = 1.0 / (n as f64).sqrt();
    let center = n / 2;

    let scratch_len = plan.get_inplace_scratch_len();
    data.par_chunks_mut(block).for_each_init(
        || (vec![Complex64::default(); n], vec![Complex64::default(); scratch_len]),
        |(buf, scratch), chunk| {
            for i in 0..stride {
                for (k, slot) in buf.iter_mut().enumerate() {
                    *slot = chunk[i + ((k + center) % n) * stride];
                }
                plan.process_with_scratch(buf, scratch);
                for (k, v) in buf.iter().enumerate() {
                    chunk[i + ((k + center) % n) * stride] = v * scale;
                }
            }
        },
    );
}

/// 2D transform over the leading `[nx, ny]` plane of every trailing slice.
pub fn fft2c(data: &mut [Complex64], nx: usize, ny: usize, dir: Direction) {
    let rest = data.len() / (nx * ny);
    let shape = [nx, ny, rest];
    fftc_axis(data, &shape, 0, dir);
    fftc_axis(data, &shape, 1, dir);
}

fn transform(t: &KTensor, dims: &[Dim], dir: Direction) -> Result<KTensor> {
    let axes = dims
        .iter()
        .map(|&d| t.axis(d).ok_or(Error::UnknownDim(d)))
        .collect::<Result<Vec<_>>>()?;
    let shape = t.shape();
    let mut work = t.to_c64();
    for axis in axes {
        fftc_axis(&mut work, &shape, axis, dir);
    }
    KTensor::from_c64(t.dims().to_vec(), &work)
}

/// Forward centered unitary DFT along the named dimensions.
pub fn fftc(t: &KTensor, dims: &[Dim]) -> Result<KTensor> {
    transform(t, dims, Direction::Forward)
}

/// Inverse of [`fftc`].
pub fn ifftc(t: &KTensor, dims: &[Dim]) -> Result<KTensor> {
    transform(t, dims, Direction::Inverse)
}

/// Index of `-k` for a centered index `k` on an even grid of extent `n`.
#[inline]
pub fn flip_index(k: usize, n: usize) -> usize {
    (n - k) % n
}
