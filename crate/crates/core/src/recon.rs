//! SENSE-type reconstruction with optional phase constraints.
//!
//! The encoding operator maps `S` component images (one per map set) to
//! undersampled coil k-space:
//!
//! ```text
//! y_j = M . fftc( sum_s c_{s,j} x_s )
//! ```
//!
//! The regularized normal equations are solved with a conjugate-residual
//! Krylov iteration. All three modes are symmetric with respect to the real
//! inner product `Re <a, b>`, which is what the iteration uses:
//!
//! * `Complex`: `A^H A x + l_t x = A^H y`
//! * `RealConstrained`: `x` real, `Re(A^H A x) + l_t x = Re(A^H y)`
//! * `ImagRegularized`: `A^H A x + l_t x + i l_i Im(x) = A^H y`
//!
//! Regularization weights are relative to a power-iteration estimate of
//! `||A^H A||`.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::{fft2c, Direction};
use crate::maps::SensitivityMaps;
use crate::pattern::SamplingPattern;
use crate::tensor::{Dim, KTensor};

pub const DEFAULT_LAMBDA_TIKHONOV: f64 = 1e-4;
pub const DEFAULT_LAMBDA_IMAG: f64 = 1e-2;
pub const DEFAULT_MAX_ITER: usize = 100;
pub const DEFAULT_TOL: f64 = 1e-6;

const POWER_ITERATIONS: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveMode {
    Complex,
    RealConstrained,
    ImagRegularized,
}

impl SolveMode {
    pub fn name(self) -> &'static str {
        match self {
            SolveMode::Complex => "complex",
            SolveMode::RealConstrained => "real",
            SolveMode::ImagRegularized => "imagreg",
        }
    }
}

impl fmt::Display for SolveMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SolveMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "complex" => Ok(SolveMode::Complex),
            "real" | "real_constrained" => Ok(SolveMode::RealConstrained),
            "imagreg" | "imag_regularized" => Ok(SolveMode::ImagRegularized),
            _ => Err(Error::param(format!("unknown solver mode `{s}`"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ForwardModel {
    maps: SensitivityMaps,
    coil_maps: Vec<Complex64>,
    pattern: SamplingPattern,
    mode: SolveMode,
    lambda_tikhonov: f64,
    lambda_imag: f64,
}

impl ForwardModel {
    pub fn new(
        maps: SensitivityMaps,
        pattern: SamplingPattern,
        mode: SolveMode,
        lambda_tikhonov: f64,
        lambda_imag: f64,
    ) -> Result<Self> {
        let (nx, ny) = pattern.grid();
        maps.check_same_grid(nx, ny)?;
        for (name, v) in [("lambda", lambda_tikhonov), ("lambda_imag", lambda_imag)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::param(format!("{name} = {v} must be finite and non-negative")));
            }
        }
        let coil_maps = maps.maps().to_c64();
        Ok(ForwardModel {
            maps,
            coil_maps,
            pattern,
            mode,
            lambda_tikhonov,
            lambda_imag,
        })
    }

    /// Complex mode with default regularization.
    pub fn complex(maps: SensitivityMaps, pattern: SamplingPattern) -> Result<Self> {
        ForwardModel::new(maps, pattern, SolveMode::Complex, DEFAULT_LAMBDA_TIKHONOV, 0.0)
    }

    pub fn maps(&self) -> &SensitivityMaps {
        &self.maps
    }

    pub fn pattern(&self) -> &SamplingPattern {
        &self.pattern
    }

    pub fn mode(&self) -> SolveMode {
        self.mode
    }

    pub fn lambda_tikhonov(&self) -> f64 {
        self.lambda_tikhonov
    }

    pub fn lambda_imag(&self) -> f64 {
        self.lambda_imag
    }

    fn dims(&self) -> (usize, usize, usize, usize) {
        let (nx, ny) = self.maps.grid();
        (nx, ny, self.maps.ncoils(), self.maps.nsets())
    }

    fn image_dims(&self) -> Vec<(Dim, usize)> {
        let (nx, ny, _, ns) = self.dims();
        vec![(Dim::X, nx), (Dim::Y, ny), (Dim::Set, ns)]
    }

    fn ksp_dims(&self) -> Vec<(Dim, usize)> {
        let (nx, ny, nc, _) = self.dims();
        vec![(Dim::X, nx), (Dim::Y, ny), (Dim::Coil, nc)]
    }

    fn project_variable(&self, x: &mut [Complex64]) {
        if self.mode == SolveMode::RealConstrained {
            x.iter_mut().for_each(|v| v.im = 0.0);
        }
    }

    fn mask_in_place(&self, y: &mut [Complex64]) {
        let plane = self.maps.plane();
        let mask = self.pattern.mask();
        for (i, v) in y.iter_mut().enumerate() {
            if !mask[i % plane] {
                *v = Complex64::default();
            }
        }
    }

    /// Coil images `sum_s c_{s,j} x_s`.
    fn combine(&self, x: &[Complex64]) -> Vec<Complex64> {
        let (nx, ny, nc, ns) = self.dims();
        let plane = nx * ny;
        let mut coils = vec![Complex64::default(); plane * nc];
        for s in 0..ns {
            for c in 0..nc {
                let m = &self.coil_maps[plane * (c + nc * s)..plane * (c + nc * s + 1)];
                let img = &x[plane * s..plane * (s + 1)];
                let out = &mut coils[plane * c..plane * (c + 1)];
                for q in 0..plane {
                    out[q] += m[q] * img[q];
                }
            }
        }
        coils
    }

    /// `x_s = sum_j conj(c_{s,j}) m_j`.
    fn decombine(&self, coils: &[Complex64]) -> Vec<Complex64> {
        let (nx, ny, nc, ns) = self.dims();
        let plane = nx * ny;
        let mut x = vec![Complex64::default(); plane * ns];
        for s in 0..ns {
            for c in 0..nc {
                let m = &self.coil_maps[plane * (c + nc * s)..plane * (c + nc * s + 1)];
                let src = &coils[plane * c..plane * (c + 1)];
                let out = &mut x[plane * s..plane * (s + 1)];
                for q in 0..plane {
                    out[q] += m[q].conj() * src[q];
                }
            }
        }
        x
    }

    fn forward_raw(&self, x: &[Complex64]) -> Vec<Complex64> {
        let (nx, ny, _, _) = self.dims();
        let mut y = self.combine(x);
        fft2c(&mut y, nx, ny, Direction::Forward);
        self.mask_in_place(&mut y);
        y
    }

    fn adjoint_raw(&self, y: &[Complex64]) -> Vec<Complex64> {
        let (nx, ny, _, _) = self.dims();
        let mut k = y.to_vec();
        self.mask_in_place(&mut k);
        fft2c(&mut k, nx, ny, Direction::Inverse);
        let mut x = self.decombine(&k);
        self.project_variable(&mut x);
        x
    }

    /// `A^H A x` restricted to the variable space of the mode.
    fn gram(&self, x: &[Complex64]) -> Vec<Complex64> {
        self.adjoint_raw(&self.forward_raw(x))
    }

    fn check_image(&self, image: &KTensor) -> Result<()> {
        image.expect_layout(&[Dim::X, Dim::Y, Dim::Set])?;
        if image.dims() != self.image_dims().as_slice() {
            return Err(Error::shape(format!(
                "image {:?} does not match model {:?}",
                image.dims(),
                self.image_dims()
            )));
        }
        Ok(())
    }

    fn check_ksp(&self, ksp: &KTensor) -> Result<()> {
        ksp.expect_layout(&[Dim::X, Dim::Y, Dim::Coil])?;
        if ksp.dims() != self.ksp_dims().as_slice() {
            return Err(Error::shape(format!(
                "k-space {:?} does not match model {:?}",
                ksp.dims(),
                self.ksp_dims()
            )));
        }
        Ok(())
    }

    /// `y_j = M . fftc(sum_s c_{s,j} x_s)`; in the real-constrained mode
    /// only the real part of `x` enters.
    pub fn forward(&self, image: &KTensor) -> Result<KTensor> {
        self.check_image(image)?;
        let mut x = image.to_c64();
        self.project_variable(&mut x);
        KTensor::from_c64(self.ksp_dims(), &self.forward_raw(&x))
    }

    /// Adjoint of [`forward`](Self::forward) under the mode's inner product.
    pub fn adjoint(&self, ksp: &KTensor) -> Result<KTensor> {
        self.check_ksp(ksp)?;
        KTensor::from_c64(self.image_dims(), &self.adjoint_raw(&ksp.to_c64()))
    }

    /// Power-iteration estimate of the largest eigenvalue of `A^H A`.
    pub fn operator_norm(&self) -> f64 {
        let (nx, ny, _, ns) = self.dims();
        let mut x = vec![Complex64::new(1.0, 0.0); nx * ny * ns];
        let mut estimate = 0.0;
        for _ in 0..POWER_ITERATIONS {
            let norm = norm(&x);
            if norm == 0.0 {
                return 0.0;
            }
            x.iter_mut().for_each(|v| *v /= norm);
            let y = self.gram(&x);
            estimate = dot(&x, &y);
            x = y;
        }
        estimate
    }
}

#[derive(Clone, Debug)]
pub struct ReconResult {
    /// `[x, y, set]` component images.
    pub image: KTensor,
    pub iterations: usize,
    /// Relative residual `||b - N x_k|| / ||b||`, starting at `k = 0`.
    pub residual_history: Vec<f64>,
    /// False when `max_iter` was reached before the tolerance.
    pub converged: bool,
}

fn dot(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
}

fn norm(a: &[Complex64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[Complex64], y: &mut [Complex64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += xi * alpha;
    }
}

/// Solves the mode's regularized normal equations for `ksp`.
pub fn solve(model: &ForwardModel, ksp: &KTensor, max_iter: usize, tol: f64) -> Result<ReconResult> {
    model.check_ksp(ksp)?;
    if tol.is_nan() || tol < 0.0 {
        return Err(Error::param(format!("tolerance {tol} must be non-negative")));
    }
    let scale = model.operator_norm();
    let lt = model.lambda_tikhonov * scale;
    let li = match model.mode {
        SolveMode::ImagRegularized => model.lambda_imag * scale,
        _ => 0.0,
    };
    let normal = |x: &[Complex64]| {
        let mut y = model.gram(x);
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi += xi * lt + Complex64::new(0.0, li * xi.im);
        }
        y
    };

    let b = model.adjoint_raw(&ksp.to_c64());
    let bnorm = norm(&b);
    let mut x = vec![Complex64::default(); b.len()];
    let mut history = vec![1.0];
    if bnorm == 0.0 {
        return Ok(ReconResult {
            image: KTensor::from_c64(model.image_dims(), &x)?,
            iterations: 0,
            residual_history: vec![0.0],
            converged: true,
        });
    }

    // Conjugate residual: minimizes ||b - N x|| over the Krylov space, so
    // the recorded residuals never increase.
    let mut r = b.clone();
    let mut ar = normal(&r);
    let mut p = r.clone();
    let mut ap = ar.clone();
    let mut rar = dot(&r, &ar);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        let apap = dot(&ap, &ap);
        if apap == 0.0 || rar == 0.0 {
            converged = true;
            break;
        }
        let alpha = rar / apap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        iterations += 1;
        let rel = norm(&r) / bnorm;
        history.push(rel);
        if rel < tol {
            converged = true;
            break;
        }
        ar = normal(&r);
        let rar_next = dot(&r, &ar);
        let beta = rar_next / rar;
        rar = rar_next;
        for i in 0..p.len() {
            p[i] = r[i] + p[i] * beta;
            ap[i] = ar[i] + ap[i] * beta;
        }
    }
    model.project_variable(&mut x);
    Ok(ReconResult {
        image: KTensor::from_c64(model.image_dims(), &x)?,
        iterations,
        residual_history: history,
        converged,
    })
}

/// Reconstruction of data that also carries a partial-Fourier cut. The
/// solver is the same; the real-constrained and imaginary-regularized modes
/// are what fill in the missing half of k-space.
pub fn partial_fourier_recon(
    model: &ForwardModel,
    ksp: &KTensor,
    max_iter: usize,
    tol: f64,
) -> Result<ReconResult> {
    solve(model, ksp, max_iter, tol)
}

/// Coil images `m_j = sum_s c_{s,j} x_s` from `[x, y, set]` components.
pub fn synthesize_coil_images(image: &KTensor, maps: &SensitivityMaps) -> Result<KTensor> {
    image.expect_layout(&[Dim::X, Dim::Y, Dim::Set])?;
    let (nx, ny) = maps.grid();
    let d = image.dims();
    if (d[0].1, d[1].1, d[2].1) != (nx, ny, maps.nsets()) {
        return Err(Error::shape(format!(
            "image {:?} vs maps {nx}x{ny} with {} sets",
            d,
            maps.nsets()
        )));
    }
    let plane = nx * ny;
    let nc = maps.ncoils();
    let x = image.to_c64();
    let m = maps.maps().to_c64();
    let mut out = vec![Complex64::default(); plane * nc];
    for s in 0..maps.nsets() {
        for c in 0..nc {
            for q in 0..plane {
                out[q + plane * c] += m[q + plane * (c + nc * s)] * x[q + plane * s];
            }
        }
    }
    KTensor::from_c64(vec![(Dim::X, nx), (Dim::Y, ny), (Dim::Coil, nc)], &out)
}
