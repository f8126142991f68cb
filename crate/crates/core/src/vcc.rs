//! Virtual conjugate coils and phase centering.
//!
//! Appending `y_j^*(-k)` to the physical channels gives ESPIRiT a channel
//! set whose sensitivities come in conjugate pairs. The unknown per-pixel
//! phase of the resulting eigenvectors then cancels in
//! `sum_j c_j c_{j*}`, leaving twice the phase that has to be removed to
//! obtain maps carrying the absolute image phase (up to sign).

use num_complex::{Complex32, Complex64};

use crate::error::{Error, Result};
use crate::fft::flip_index;
use crate::maps::SensitivityMaps;
use crate::tensor::{Dim, KTensor};

/// Relative magnitude below which the conjugate-pair product is treated as
/// carrying no phase information.
pub const PHASE_VALID_THRESHOLD: f64 = 1e-8;

/// K-space with physical channels `0..N` followed by their virtual
/// conjugates `N..2N`.
#[derive(Clone, Debug, PartialEq)]
pub struct VccKSpace {
    data: KTensor,
    n_physical: usize,
}

impl VccKSpace {
    pub fn data(&self) -> &KTensor {
        &self.data
    }

    pub fn into_data(self) -> KTensor {
        self.data
    }

    pub fn n_physical(&self) -> usize {
        self.n_physical
    }
}

/// Appends the flip-conjugated copy of every channel.
pub fn make_vcc(ksp: &KTensor) -> Result<VccKSpace> {
    ksp.require(Dim::Coil)?;
    let (nx, ny, nc) = ksp.coil_shape()?;
    ksp.check_even_grid()?;
    let plane = nx * ny;
    let src = ksp.data();
    let mut out = Vec::with_capacity(2 * src.len());
    out.extend_from_slice(src);
    for c in 0..nc {
        for y in 0..ny {
            for x in 0..nx {
                out.push(src[c * plane + flip_index(x, nx) + nx * flip_index(y, ny)].conj());
            }
        }
    }
    let data = KTensor::new(vec![(Dim::X, nx), (Dim::Y, ny), (Dim::Coil, 2 * nc)], out)?;
    Ok(VccKSpace { data, n_physical: nc })
}

/// Per-pixel phase removed by [`center_phase`], in `(-pi/2, pi/2]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseMap {
    nx: usize,
    ny: usize,
    phi: Vec<f64>,
    valid: Vec<bool>,
}

impl PhaseMap {
    pub fn grid(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn valid_mask(&self) -> &[bool] {
        &self.valid
    }

    /// `[x, y]` tensor of the phase in radians (real part).
    pub fn to_tensor(&self) -> Result<KTensor> {
        KTensor::from_real(vec![(Dim::X, self.nx), (Dim::Y, self.ny)], &self.phi)
    }
}

fn require_pairs(maps: &SensitivityMaps) -> Result<usize> {
    let nc = maps.ncoils();
    if !nc.is_multiple_of(2) {
        return Err(Error::param(format!(
            "phase centering needs paired physical/virtual channels, got {nc}"
        )));
    }
    Ok(nc / 2)
}

/// `phi(x) = 1/2 * arg sum_{j<N} c_j(x) c_{N+j}(x)` for one map set.
pub fn estimate_phase(maps: &SensitivityMaps, set: usize) -> Result<PhaseMap> {
    let n = require_pairs(maps)?;
    if set >= maps.nsets() {
        return Err(Error::param(format!("set {set} not available in {} sets", maps.nsets())));
    }
    let (nx, ny) = maps.grid();
    let plane = nx * ny;
    let sums: Vec<Complex64> = (0..plane)
        .map(|q| {
            let v = maps.coil_vector(q, set);
            (0..n).map(|j| v[j] * v[n + j]).sum()
        })
        .collect();
    let max = sums.iter().fold(0.0f64, |m, s| m.max(s.norm()));
    let mut phi = vec![0.0; plane];
    let mut valid = vec![false; plane];
    for (q, s) in sums.iter().enumerate() {
        if max > 0.0 && s.norm() >= PHASE_VALID_THRESHOLD * max {
            phi[q] = 0.5 * s.arg();
            valid[q] = true;
        }
    }
    Ok(PhaseMap { nx, ny, phi, valid })
}

/// Multiplies every channel of `set` by `e^{-i phi}` (unchanged where the
/// phase is invalid).
fn rotate_set(maps: &SensitivityMaps, set: usize, phase: &PhaseMap, out: &mut [Complex32]) {
    let plane = maps.plane();
    for c in 0..maps.ncoils() {
        for q in 0..plane {
            if phase.valid[q] {
                let i = maps.index(q, c, set);
                let rot = Complex64::from_polar(1.0, -phase.phi[q]);
                let v = maps.maps().data()[i];
                let r = Complex64::new(v.re as f64, v.im as f64) * rot;
                out[i] = Complex32::new(r.re as f32, r.im as f32);
            }
        }
    }
}

/// Phase-centers every set of `2N`-channel maps, keeping all channels.
pub fn center_all_channels(maps: &SensitivityMaps) -> Result<(Vec<PhaseMap>, SensitivityMaps)> {
    require_pairs(maps)?;
    let mut data = maps.maps().data().to_vec();
    let mut phases = Vec::with_capacity(maps.nsets());
    for s in 0..maps.nsets() {
        let p = estimate_phase(maps, s)?;
        rotate_set(maps, s, &p, &mut data);
        phases.push(p);
    }
    let t = KTensor::new(maps.maps().dims().to_vec(), data)?;
    Ok((phases, SensitivityMaps::new(t, maps.eigenvalues().to_vec())?))
}

fn physical_half(maps: &SensitivityMaps) -> Result<SensitivityMaps> {
    let n = maps.ncoils() / 2;
    let (nx, ny) = maps.grid();
    let plane = maps.plane();
    let mut data = Vec::with_capacity(plane * n * maps.nsets());
    for s in 0..maps.nsets() {
        let start = maps.index(0, 0, s);
        data.extend_from_slice(&maps.maps().data()[start..start + plane * n]);
    }
    let t = KTensor::new(
        vec![(Dim::X, nx), (Dim::Y, ny), (Dim::Coil, n), (Dim::Set, maps.nsets())],
        data,
    )?;
    SensitivityMaps::new(t, maps.eigenvalues().to_vec())
}

/// Removes the conjugate-pair phase from one set and drops the virtual
/// channels.
pub fn center_phase(maps: &SensitivityMaps, set: usize) -> Result<(PhaseMap, SensitivityMaps)> {
    require_pairs(maps)?;
    let single = maps.set(set)?;
    let (mut phases, centered) = center_all_channels(&single)?;
    Ok((phases.remove(0), physical_half(&centered)?))
}

/// [`center_phase`] applied to every set independently.
pub fn center_phase_all(maps: &SensitivityMaps) -> Result<(Vec<PhaseMap>, SensitivityMaps)> {
    let (phases, centered) = center_all_channels(maps)?;
    Ok((phases, physical_half(&centered)?))
}

/// Flips the sign of each pixel's coil vector whose real inner product
/// with the reference is negative. Set `s` is compared with reference set
/// `min(s, reference_sets - 1)`.
pub fn align_sign(maps: &SensitivityMaps, reference: &SensitivityMaps) -> Result<SensitivityMaps> {
    if maps.grid() != reference.grid() || maps.ncoils() != reference.ncoils() {
        return Err(Error::shape(format!(
            "maps {:?}x{} vs reference {:?}x{}",
            maps.grid(),
            maps.ncoils(),
            reference.grid(),
            reference.ncoils()
        )));
    }
    let plane = maps.plane();
    let mut data = maps.maps().data().to_vec();
    for s in 0..maps.nsets() {
        let rs = s.min(reference.nsets() - 1);
        for q in 0..plane {
            let a = maps.coil_vector(q, s);
            let b = reference.coil_vector(q, rs);
            let inner: f64 = a.iter().zip(&b).map(|(x, y)| (x.conj() * y).re).sum();
            if inner < 0.0 {
                for c in 0..maps.ncoils() {
                    let i = maps.index(q, c, s);
                    data[i] = -data[i];
                }
            }
        }
    }
    let t = KTensor::new(maps.maps().dims().to_vec(), data)?;
    SensitivityMaps::new(t, maps.eigenvalues().to_vec())
}

/// Largest relative deviation from `c_{N+j} = conj(c_j)` over the masked
/// pixels of one set of centered `2N`-channel maps.
pub fn check_conjugate_pairing(maps: &SensitivityMaps, set: usize, mask: &[bool]) -> Result<f64> {
    let n = require_pairs(maps)?;
    if mask.len() != maps.plane() {
        return Err(Error::shape(format!("mask has {} pixels, maps {}", mask.len(), maps.plane())));
    }
    let mut worst = 0.0f64;
    for q in (0..maps.plane()).filter(|&q| mask[q]) {
        let v = maps.coil_vector(q, set);
        let norm: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let dev: f64 = (0..n).map(|j| (v[n + j] - v[j].conj()).norm_sqr()).sum::<f64>().sqrt();
        worst = worst.max(dev / norm);
    }
    Ok(worst)
}
