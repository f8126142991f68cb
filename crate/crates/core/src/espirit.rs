//! ESPIRiT calibration.
//!
//! Sliding `k x k` patches of the calibration region form the rows of the
//! calibration matrix. Its dominant right-singular vectors span the signal
//! subspace of local k-space patches. Each basis patch is then taken to the
//! image domain, and at every pixel the operator
//!
//! ```text
//! G(x) = (nx * ny / k^2) * sum_r u_r(x) u_r(x)^H,   u_r = ifftc(zero-padded kernel r)
//! ```
//!
//! is eigendecomposed. Sensitivities are the eigenvectors whose eigenvalue
//! is (close to) one.

use faer::Mat;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::eig::hermitian_eigen;
use crate::error::{Error, Result};
use crate::fft::{fft2c, Direction};
use crate::maps::SensitivityMaps;
use crate::pattern::centered_range;
use crate::tensor::KTensor;

pub const DEFAULT_KERNEL: usize = 6;
pub const DEFAULT_THRESHOLD: f64 = 0.001;
pub const DEFAULT_CROP: f64 = 0.85;

/// Basis of the patch signal subspace.
#[derive(Clone, Debug)]
pub struct CalibSubspace {
    kernel_size: usize,
    ncoils: usize,
    /// Each kernel holds `k * k * ncoils` values indexed `kx + k * (ky + k * coil)`.
    kernels: Vec<Vec<Complex64>>,
    singular_values: Vec<f64>,
}

impl CalibSubspace {
    pub fn kernel_size(&self) -> usize {
        self.kernel_size
    }

    pub fn ncoils(&self) -> usize {
        self.ncoils
    }

    pub fn nkernels(&self) -> usize {
        self.kernels.len()
    }

    pub fn kernel(&self, r: usize) -> &[Complex64] {
        &self.kernels[r]
    }

    pub fn kernels(&self) -> &[Vec<Complex64>] {
        &self.kernels
    }

    /// All singular values of the calibration matrix, descending.
    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }
}

/// One row per `k x k` window of the calibration region (stride 1, no
/// wrap), one column per `(kx, ky, coil)`.
pub fn build_calib_matrix(acs: &KTensor, k: usize) -> Result<Mat<Complex64>> {
    let (ax, ay, nc) = acs.coil_shape()?;
    if k == 0 {
        return Err(Error::param("kernel size must be positive"));
    }
    if ax < k || ay < k {
        return Err(Error::param(format!("calibration region {ax}x{ay} is smaller than kernel {k}")));
    }
    let (wx, wy) = (ax - k + 1, ay - k + 1);
    let data = acs.data();
    Ok(Mat::from_fn(wx * wy, k * k * nc, |row, col| {
        let (px, py) = (row % wx, row / wx);
        let kx = col % k;
        let ky = (col / k) % k;
        let c = col / (k * k);
        let v = data[(px + kx) + ax * ((py + ky) + ay * c)];
        Complex64::new(v.re as f64, v.im as f64)
    }))
}

/// SVD of the calibration matrix; keeps right-singular vectors whose
/// singular value is at least `thresh * sigma_max`.
pub fn calibrate(acs: &KTensor, k: usize, thresh: f64) -> Result<CalibSubspace> {
    if !thresh.is_finite() || thresh < 0.0 {
        return Err(Error::param(format!("threshold {thresh} must be finite and non-negative")));
    }
    let (_, _, nc) = acs.coil_shape()?;
    let a = build_calib_matrix(acs, k)?;
    let svd = a
        .thin_svd()
        .map_err(|e| Error::param(format!("calibration SVD did not converge: {e:?}")))?;
    let s = svd.S().column_vector();
    let singular_values: Vec<f64> = (0..s.nrows()).map(|i| s[i].re).collect();
    let sigma_max = singular_values.first().copied().unwrap_or(0.0);
    if sigma_max <= 0.0 {
        return Err(Error::ZeroCalibration);
    }
    let cutoff = thresh * sigma_max;
    let keep = singular_values.iter().take_while(|&&v| v >= cutoff).count();
    if keep == 0 {
        return Err(Error::EmptySubspace);
    }
    // Rows of the calibration matrix are transposed patches, so the patch
    // subspace is spanned by the conjugated right-singular vectors.
    let v = svd.V();
    let kernels = (0..keep)
        .map(|r| (0..v.nrows()).map(|i| v[(i, r)].conj()).collect())
        .collect();
    Ok(CalibSubspace {
        kernel_size: k,
        ncoils: nc,
        kernels,
        singular_values,
    })
}

/// Image-domain coil vectors of one kernel: `ncoils` planes of `nx * ny`.
fn kernel_images(sub: &CalibSubspace, r: usize, nx: usize, ny: usize) -> Vec<Complex64> {
    let k = sub.kernel_size;
    let nc = sub.ncoils;
    let plane = nx * ny;
    let (x0, _) = centered_range(nx, k);
    let (y0, _) = centered_range(ny, k);
    let mut img = vec![Complex64::default(); plane * nc];
    let kernel = &sub.kernels[r];
    for c in 0..nc {
        for ky in 0..k {
            for kx in 0..k {
                img[c * plane + (x0 + kx) + nx * (y0 + ky)] = kernel[kx + k * (ky + k * c)];
            }
        }
    }
    fft2c(&mut img, nx, ny, Direction::Inverse);
    let scale = (plane as f64).sqrt() / k as f64;
    img.iter_mut().for_each(|v| *v *= scale);
    img
}

/// Per-pixel ESPIRiT operator, row-major `ncoils x ncoils` blocks with the
/// upper triangle filled.
pub fn pixel_operators(sub: &CalibSubspace, nx: usize, ny: usize) -> Vec<Complex64> {
    let nc = sub.ncoils;
    let plane = nx * ny;
    let mut g = vec![Complex64::default(); plane * nc * nc];
    for r in 0..sub.nkernels() {
        let img = kernel_images(sub, r, nx, ny);
        g.par_chunks_mut(nc * nc).enumerate().for_each(|(q, block)| {
            for i in 0..nc {
                let ui = img[i * plane + q];
                for j in i..nc {
                    block[i * nc + j] += ui * img[j * plane + q].conj();
                }
            }
        });
    }
    g
}

/// Top `nsets` eigenpairs of the ESPIRiT operator at every pixel.
///
/// Each eigenvector is rotated so that coil 0 is real and non-negative;
/// where coil 0 is negligible (below `1e-8` of the largest entry) the
/// largest-magnitude coil is the phase reference instead.
pub fn eigen_maps(sub: &CalibSubspace, nx: usize, ny: usize, nsets: usize) -> Result<SensitivityMaps> {
    let nc = sub.ncoils;
    let k = sub.kernel_size;
    if nsets == 0 || nsets > nc {
        return Err(Error::param(format!("cannot extract {nsets} map sets from {nc} coils")));
    }
    if nx < k || ny < k {
        return Err(Error::param(format!("grid {nx}x{ny} is smaller than kernel {k}")));
    }
    let plane = nx * ny;
    let mut g = pixel_operators(sub, nx, ny);
    let per_pixel: Vec<(Vec<f64>, Vec<Complex64>)> = g
        .par_chunks_mut(nc * nc)
        .map(|block| {
            let e = hermitian_eigen(block, nc);
            let mut vecs = Vec::with_capacity(nsets * nc);
            for s in 0..nsets {
                vecs.extend(reference_phase(e.vector(s)));
            }
            (e.values[..nsets].to_vec(), vecs)
        })
        .collect();

    let mut maps = vec![Complex64::default(); plane * nc * nsets];
    let mut eig = vec![0.0f32; plane * nsets];
    for (q, (vals, vecs)) in per_pixel.iter().enumerate() {
        for s in 0..nsets {
            eig[q + plane * s] = vals[s] as f32;
            for c in 0..nc {
                maps[q + plane * (c + nc * s)] = vecs[s * nc + c];
            }
        }
    }
    SensitivityMaps::from_parts_c64(nx, ny, nc, nsets, &maps, eig)
}

/// Rotates a coil vector so its reference entry is real and non-negative.
pub fn reference_phase(v: &[Complex64]) -> Vec<Complex64> {
    let max = v.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    if max == 0.0 {
        return v.to_vec();
    }
    let reference = if v[0].norm() >= 1e-8 * max {
        v[0]
    } else {
        *v.iter().max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap()
    };
    let rot = reference.conj() / reference.norm();
    v.iter().map(|z| z * rot).collect()
}

/// S-curve weight: 0 at or below `lo`, 1 at or above 1, smoothstep between.
pub fn smoothstep_weight(lambda: f64, lo: f64) -> f64 {
    let t = ((lambda - lo) / (1.0 - lo)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Scales every pixel and set of the maps by the S-curve of its eigenvalue.
pub fn soft_weight(maps: &SensitivityMaps, lo: f64) -> Result<SensitivityMaps> {
    if lo.is_nan() || lo >= 1.0 {
        return Err(Error::param(format!("crop threshold {lo} must be below 1")));
    }
    let plane = maps.plane();
    let nc = maps.ncoils();
    let data: Vec<_> = maps
        .maps()
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let q = i % plane;
            let s = i / (plane * nc);
            v * smoothstep_weight(maps.eigenvalue(q, s) as f64, lo) as f32
        })
        .collect();
    let t = KTensor::new(maps.maps().dims().to_vec(), data)?;
    SensitivityMaps::new(t, maps.eigenvalues().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Dim;
    use num_complex::Complex32;

    fn constant_acs(n: usize, nc: usize) -> KTensor {
        KTensor::new(
            vec![(Dim::X, n), (Dim::Y, n), (Dim::Coil, nc)],
            vec![Complex32::new(1.0, 0.0); n * n * nc],
        )
        .unwrap()
    }

    #[test]
    fn calib_matrix_shapes() {
        let m = build_calib_matrix(&constant_acs(8, 2), 3).unwrap();
        assert_eq!((m.nrows(), m.ncols()), (36, 18));
        let m = build_calib_matrix(&constant_acs(24, 8), 6).unwrap();
        assert_eq!((m.nrows(), m.ncols()), (361, 288));
        assert!(build_calib_matrix(&constant_acs(4, 1), 5).is_err());
    }

    #[test]
    fn constant_acs_is_rank_one() {
        let m = build_calib_matrix(&constant_acs(8, 1), 3).unwrap();
        let s = m.singular_values().unwrap();
        assert!(s[1] / s[0] < 1e-6);
        let sub = calibrate(&constant_acs(8, 1), 3, DEFAULT_THRESHOLD).unwrap();
        assert_eq!(sub.nkernels(), 1);
    }

    #[test]
    fn threshold_above_one_is_empty() {
        let err = calibrate(&constant_acs(8, 1), 3, 1.0 + 1e-9).unwrap_err();
        assert!(matches!(err, Error::EmptySubspace));
    }

    #[test]
    fn zero_acs_is_rejected() {
        let acs = KTensor::zeros(vec![(Dim::X, 8), (Dim::Y, 8), (Dim::Coil, 2)]).unwrap();
        assert!(matches!(calibrate(&acs, 3, 0.001), Err(Error::ZeroCalibration)));
    }

    #[test]
    fn too_many_sets_is_rejected() {
        let sub = calibrate(&constant_acs(8, 2), 3, 0.001).unwrap();
        assert!(eigen_maps(&sub, 16, 16, 3).is_err());
    }

    #[test]
    fn smoothstep_endpoints() {
        assert_eq!(smoothstep_weight(0.85, 0.85), 0.0);
        assert_eq!(smoothstep_weight(0.5, 0.85), 0.0);
        assert_eq!(smoothstep_weight(1.0, 0.85), 1.0);
        assert_eq!(smoothstep_weight(1.02, 0.85), 1.0);
        assert!((smoothstep_weight(0.925, 0.85) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn reference_phase_rules() {
        let v = vec![Complex64::new(0.0, 2.0), Complex64::new(1.0, 0.0)];
        let r = reference_phase(&v);
        assert!(r[0].im.abs() < 1e-15 && r[0].re > 0.0);
        let v = vec![Complex64::new(0.0, 1e-12), Complex64::new(0.0, -3.0)];
        let r = reference_phase(&v);
        assert!(r[1].im.abs() < 1e-15 && r[1].re > 0.0);
    }

    #[test]
    fn soft_weight_rejects_lo_one() {
        let maps = SensitivityMaps::from_coil_maps(&constant_acs(4, 1)).unwrap();
        assert!(soft_weight(&maps, 1.0).is_err());
    }
}
