#![allow(dead_code)]

use std::f64::consts::PI;

use faer::{Mat, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vccrecon::espirit::CalibSubspace;
use vccrecon::num_complex::{Complex32, Complex64};
use vccrecon::{Dim, KTensor};

pub fn random_complex(len: usize, seed: u64) -> Vec<Complex32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len)
        .map(|_| Complex32::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect()
}

pub fn random_tensor(dims: Vec<(Dim, usize)>, seed: u64) -> KTensor {
    let len = dims.iter().map(|d| d.1).product();
    KTensor::new(dims, random_complex(len, seed)).unwrap()
}

pub fn coil_tensor(nx: usize, ny: usize, nc: usize, seed: u64) -> KTensor {
    random_tensor(vec![(Dim::X, nx), (Dim::Y, ny), (Dim::Coil, nc)], seed)
}

/// Per-pixel operator built by explicit DFT sums, no FFT involved.
pub fn dense_operator(sub: &CalibSubspace, nx: usize, ny: usize, q: (usize, usize)) -> Mat<Complex64> {
    let k = sub.kernel_size();
    let nc = sub.ncoils();
    let (x0, y0) = (nx / 2 - k / 2, ny / 2 - k / 2);
    let (cx, cy) = (nx as f64 / 2.0, ny as f64 / 2.0);
    let (qx, qy) = (q.0 as f64 - cx, q.1 as f64 - cy);
    let mut g = Mat::<Complex64>::zeros(nc, nc);
    for r in 0..sub.nkernels() {
        let kernel = sub.kernel(r);
        let mut u = vec![Complex64::default(); nc];
        for (c, uc) in u.iter_mut().enumerate() {
            for ky in 0..k {
                for kx in 0..k {
                    let px = (x0 + kx) as f64 - cx;
                    let py = (y0 + ky) as f64 - cy;
                    let ang = 2.0 * PI * (px * qx / nx as f64 + py * qy / ny as f64);
                    *uc += kernel[kx + k * (ky + k * c)] * Complex64::from_polar(1.0, ang);
                }
            }
            *uc /= k as f64;
        }
        for i in 0..nc {
            for j in 0..nc {
                g[(i, j)] += u[i] * u[j].conj();
            }
        }
    }
    g
}

/// Eigenpairs of a Hermitian matrix, largest first.
pub fn dense_eigen(g: &Mat<Complex64>) -> Vec<(f64, Vec<Complex64>)> {
    let n = g.nrows();
    let e = g.self_adjoint_eigen(Side::Lower).unwrap();
    let s = e.S().column_vector();
    let u = e.U();
    let mut out: Vec<(f64, Vec<Complex64>)> =
        (0..n).map(|i| (s[i].re, (0..n).map(|r| u[(r, i)]).collect())).collect();
    out.sort_by(|a, b| b.0.total_cmp(&a.0));
    out
}

/// Angle between the lines spanned by two complex vectors.
pub fn principal_angle(a: &[Complex64], b: &[Complex64]) -> f64 {
    let dot: Complex64 = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
    let na: f64 = a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    (dot.norm() / (na * nb)).clamp(0.0, 1.0).acos()
}

pub fn real_dot(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
}
