//! Map validation: a direct low-resolution map estimate for comparison,
//! projection of fully-sampled coil images onto the span of the maps (or of
//! their real multiples), residual error maps and NRMSE.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::{fft2c, Direction};
use crate::maps::SensitivityMaps;
use crate::pattern::centered_range;
use crate::tensor::{Dim, KTensor};

/// Pixels whose map norm is below this fraction of the largest norm are not
/// projected.
pub const PROJECTION_THRESHOLD: f64 = 1e-8;
/// Relative RSS below which direct maps are left at zero.
pub const DIRECT_MAP_THRESHOLD: f64 = 1e-6;
/// Display gain applied to exported error maps.
pub const ERROR_DISPLAY_GAIN: f64 = 5.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProjectionMode {
    Complex,
    Real,
}

impl std::str::FromStr for ProjectionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "complex" => Ok(ProjectionMode::Complex),
            "real" => Ok(ProjectionMode::Real),
            _ => Err(Error::param(format!("unknown projection mode `{s}`"))),
        }
    }
}

/// Residual coil images, their root-sum-of-squares and a scalar summary.
#[derive(Clone, Debug)]
pub struct ErrorMap {
    pub per_coil: KTensor,
    pub combined: Vec<f32>,
    /// RMS of `combined` relative to the RSS of the reference, over the
    /// mask. Falls back to the absolute RMS when the reference is zero.
    pub scalar: f64,
}

impl ErrorMap {
    /// Builds the error map of `residual` measured against `reference`.
    pub fn new(residual: KTensor, reference: &KTensor, mask: Option<&[bool]>) -> Result<Self> {
        let (nx, ny, _) = residual.coil_shape()?;
        if residual.dims() != reference.dims() {
            return Err(Error::shape("residual and reference shapes differ"));
        }
        let combined = rss(&residual)?;
        let reference_rss = rss(reference)?;
        let plane = nx * ny;
        let mask = mask.unwrap_or(&[]);
        if !mask.is_empty() && mask.len() != plane {
            return Err(Error::shape(format!("mask has {} pixels, grid {plane}", mask.len())));
        }
        let selected = |q: usize| mask.is_empty() || mask[q];
        let (mut num, mut den, mut count) = (0.0f64, 0.0f64, 0usize);
        for q in (0..plane).filter(|&q| selected(q)) {
            num += (combined[q] as f64).powi(2);
            den += (reference_rss[q] as f64).powi(2);
            count += 1;
        }
        let scalar = if den > 0.0 {
            (num / den).sqrt()
        } else if count > 0 {
            (num / count as f64).sqrt()
        } else {
            0.0
        };
        Ok(ErrorMap {
            per_coil: residual,
            combined,
            scalar,
        })
    }

    /// Writes `combined`, amplified by the display gain, as an 8-bit PGM
    /// where `full_scale` maps to 255.
    pub fn write_pgm(&self, path: impl AsRef<Path>, full_scale: f64) -> Result<()> {
        let (nx, ny, _) = self.per_coil.coil_shape()?;
        let scaled: Vec<f64> = self.combined.iter().map(|&v| v as f64 * ERROR_DISPLAY_GAIN).collect();
        write_pgm(path, &scaled, nx, ny, full_scale)
    }
}

/// Root-sum-of-squares over coils of an `[x, y, coil]` tensor.
pub fn rss(coils: &KTensor) -> Result<Vec<f32>> {
    let (nx, ny, nc) = coils.coil_shape()?;
    let plane = nx * ny;
    let d = coils.data();
    Ok((0..plane)
        .map(|q| {
            (0..nc)
                .map(|c| d[q + plane * c].norm_sqr() as f64)
                .sum::<f64>()
                .sqrt() as f32
        })
        .collect())
}

fn taper(i: usize, n: usize) -> f64 {
    // Tukey window tapering the outer quarter of the block on each side.
    let t = (i as f64 + 0.5) / n as f64;
    let edge = 0.25;
    if t < edge {
        0.5 * (1.0 - (PI * t / edge).cos())
    } else if t > 1.0 - edge {
        0.5 * (1.0 - (PI * (1.0 - t) / edge).cos())
    } else {
        1.0
    }
}

/// Low-resolution maps straight from the k-space center: apodized ACS,
/// zero-filled inverse FFT per coil, normalized by the RSS across coils.
pub fn direct_maps(ksp: &KTensor, acs: usize) -> Result<SensitivityMaps> {
    let (nx, ny, nc) = ksp.coil_shape()?;
    if acs == 0 || acs > nx || acs > ny {
        return Err(Error::param(format!("ACS {acs} does not fit grid {nx}x{ny}")));
    }
    let plane = nx * ny;
    let (x0, x1) = centered_range(nx, acs);
    let (y0, y1) = centered_range(ny, acs);
    let src = ksp.data();
    let mut work = vec![Complex64::default(); plane * nc];
    for c in 0..nc {
        for y in y0..y1 {
            for x in x0..x1 {
                let i = x + nx * y + plane * c;
                let w = taper(x - x0, acs) * taper(y - y0, acs);
                work[i] = Complex64::new(src[i].re as f64, src[i].im as f64) * w;
            }
        }
    }
    fft2c(&mut work, nx, ny, Direction::Inverse);
    let norms: Vec<f64> = (0..plane)
        .map(|q| (0..nc).map(|c| work[q + plane * c].norm_sqr()).sum::<f64>().sqrt())
        .collect();
    let max = norms.iter().cloned().fold(0.0, f64::max);
    let mut eig = vec![0.0f32; plane];
    for q in 0..plane {
        let valid = max > 0.0 && norms[q] > DIRECT_MAP_THRESHOLD * max;
        for c in 0..nc {
            let v = &mut work[q + plane * c];
            *v = if valid { *v / norms[q] } else { Complex64::default() };
        }
        eig[q] = valid as u8 as f32;
    }
    SensitivityMaps::from_parts_c64(nx, ny, nc, 1, &work, eig)
}

/// Orthogonal projection of coil images onto the span of the map sets at
/// every pixel: complex linear combinations, or real ones in
/// [`ProjectionMode::Real`]. For a single set this is
/// `c (c^H m) / |c|^2` (real part of `c^H m` in real mode); several sets are
/// orthonormalized per pixel first, so the result is a true projector even
/// when the sets are not mutually orthogonal.
pub fn project(
    m: &KTensor,
    maps: &SensitivityMaps,
    mode: ProjectionMode,
    mask: Option<&[bool]>,
) -> Result<(KTensor, ErrorMap)> {
    let (nx, ny, nc) = m.coil_shape()?;
    maps.check_same_grid(nx, ny)?;
    if maps.ncoils() != nc {
        return Err(Error::shape(format!("{} map channels for {nc} coil images", maps.ncoils())));
    }
    let plane = nx * ny;
    let data = m.to_c64();
    let ns = maps.nsets();
    let max_norm = (0..plane)
        .flat_map(|q| (0..ns).map(move |s| (q, s)))
        .map(|(q, s)| maps.coil_vector(q, s).iter().map(|z| z.norm_sqr()).sum::<f64>())
        .fold(0.0, f64::max);
    let threshold = PROJECTION_THRESHOLD * max_norm;
    let inner = |a: &[Complex64], b: &[Complex64]| -> Complex64 {
        let z: Complex64 = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
        match mode {
            ProjectionMode::Complex => z,
            ProjectionMode::Real => Complex64::new(z.re, 0.0),
        }
    };
    let mut projected = vec![Complex64::default(); plane * nc];
    for q in 0..plane {
        let mut basis: Vec<Vec<Complex64>> = Vec::with_capacity(ns);
        for s in 0..ns {
            let mut v = maps.coil_vector(q, s);
            let n0: f64 = v.iter().map(|z| z.norm_sqr()).sum();
            if n0 <= threshold || n0 == 0.0 {
                continue;
            }
            // Two passes of Gram-Schmidt against the accepted directions.
            for _ in 0..2 {
                for u in &basis {
                    let a = inner(u, &v);
                    v.iter_mut().zip(u).for_each(|(vi, ui)| *vi -= ui * a);
                }
            }
            let n: f64 = v.iter().map(|z| z.norm_sqr()).sum();
            if n > 1e-12 * n0 {
                let scale = n.sqrt().recip();
                basis.push(v.iter().map(|z| z * scale).collect());
            }
        }
        let mq: Vec<Complex64> = (0..nc).map(|j| data[q + plane * j]).collect();
        for u in &basis {
            let a = inner(u, &mq);
            for j in 0..nc {
                projected[q + plane * j] += u[j] * a;
            }
        }
    }
    let residual: Vec<Complex64> = data.iter().zip(&projected).map(|(a, b)| a - b).collect();
    let dims = m.dims().to_vec();
    let projected = KTensor::from_c64(dims.clone(), &projected)?;
    let err = ErrorMap::new(KTensor::from_c64(dims, &residual)?, m, mask)?;
    Ok((projected, err))
}

/// Difference of reconstructed and reference coil images, combined by RSS.
pub fn diff_image(recon_coils: &KTensor, reference_coils: &KTensor, mask: Option<&[bool]>) -> Result<ErrorMap> {
    recon_coils.coil_shape()?;
    if recon_coils.dims() != reference_coils.dims() {
        return Err(Error::shape(format!(
            "recon {:?} vs reference {:?}",
            recon_coils.dims(),
            reference_coils.dims()
        )));
    }
    let diff: Vec<Complex64> = recon_coils
        .to_c64()
        .iter()
        .zip(reference_coils.to_c64())
        .map(|(a, b)| a - b)
        .collect();
    ErrorMap::new(KTensor::from_c64(recon_coils.dims().to_vec(), &diff)?, reference_coils, mask)
}

/// `||a - b|| / ||b||` over the masked pixels of every trailing slice.
pub fn nrmse(a: &KTensor, b: &KTensor, mask: &[bool]) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::shape(format!("{:?} vs {:?}", a.dims(), b.dims())));
    }
    if a.axis(Dim::X) != Some(0) || a.axis(Dim::Y) != Some(1) {
        return Err(Error::shape("tensors must have x then y leading"));
    }
    let plane = a.dims()[0].1 * a.dims()[1].1;
    if mask.len() != plane {
        return Err(Error::shape(format!("mask has {} pixels, grid {plane}", mask.len())));
    }
    let (mut num, mut den) = (0.0f64, 0.0f64);
    for (i, (x, y)) in a.data().iter().zip(b.data()).enumerate() {
        if mask[i % plane] {
            num += (x - y).norm_sqr() as f64;
            den += y.norm_sqr() as f64;
        }
    }
    if den == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok((num / den).sqrt())
}

/// 8-bit binary PGM, linear scaling with `full_scale -> 255`.
pub fn write_pgm(path: impl AsRef<Path>, values: &[f64], nx: usize, ny: usize, full_scale: f64) -> Result<()> {
    if values.len() != nx * ny {
        return Err(Error::shape(format!("{} values for a {nx}x{ny} image", values.len())));
    }
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "P5\n{nx} {ny}\n255\n")?;
    let scale = if full_scale > 0.0 { 255.0 / full_scale } else { 0.0 };
    let bytes: Vec<u8> = values
        .iter()
        .map(|&v| (v * scale).round().clamp(0.0, 255.0) as u8)
        .collect();
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}
