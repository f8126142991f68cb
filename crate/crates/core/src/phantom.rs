//! Synthetic multi-coil phantom with known image phase.
//!
//! Magnitude is a Shepp-Logan-style ellipse phantom. Phase is split into a
//! smooth part (a first-order trigonometric polynomial, exactly band-limited)
//! and a high-frequency part made of small discs carrying steep linear
//! ramps. Coil sensitivities are Gaussian-weighted first-order complex
//! polynomials centered on a ring around the field of view.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fft::{fft2c, Direction};
use crate::tensor::{Dim, KTensor};

/// Diameter, in pixels, of each high-frequency phase disc.
pub const BLOB_DIAMETER: f64 = 6.0;
/// Phase swing of the linear ramp across one disc.
pub const BLOB_RAMP: f64 = 1.25 * PI;
/// Constant offset keeping the disc phase away from zero.
pub const BLOB_OFFSET: f64 = 0.25 * PI;

const PHANTOM_SCALE: f64 = 0.85;
const COIL_RING_RADIUS: f64 = 1.1;
const COIL_WIDTH: f64 = 0.7;

/// (intensity, semi-axis a, semi-axis b, center x, center y, rotation deg)
const ELLIPSES: [(f64, f64, f64, f64, f64, f64); 10] = [
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    (-0.1, 0.11, 0.31, 0.22, 0.0, -18.0),
    (-0.1, 0.16, 0.41, -0.22, 0.0, 18.0),
    (0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    (0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    (0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    (0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
    (0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
    (0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhantomParams {
    pub grid: usize,
    pub ncoils: usize,
    pub hf_blobs: usize,
    pub seed: u64,
}

impl Default for PhantomParams {
    fn default() -> Self {
        PhantomParams {
            grid: 96,
            ncoils: 8,
            hf_blobs: 0,
            seed: 42,
        }
    }
}

/// Center (pixel coordinates, half-pixel aligned) and ramp direction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Blob {
    pub cx: f64,
    pub cy: f64,
    pub direction: f64,
}

impl Blob {
    pub fn contains(&self, x: usize, y: usize) -> bool {
        let dx = x as f64 - self.cx;
        let dy = y as f64 - self.cy;
        dx * dx + dy * dy <= (BLOB_DIAMETER / 2.0).powi(2)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhantomTruth {
    pub n: usize,
    pub magnitude: Vec<f64>,
    pub smooth_phase: Vec<f64>,
    pub hf_phase: Vec<f64>,
    /// Physical sensitivities `c_j`, laid out `[x, y, coil]`.
    pub coils: KTensor,
    pub support: Vec<bool>,
    pub blobs: Vec<Blob>,
}

impl PhantomTruth {
    pub fn ncoils(&self) -> usize {
        self.coils.dims()[2].1
    }

    pub fn phase(&self, i: usize) -> f64 {
        self.smooth_phase[i] + self.hf_phase[i]
    }

    /// `|rho| e^{i psi}`.
    pub fn image(&self) -> Vec<Complex64> {
        (0..self.n * self.n)
            .map(|i| Complex64::from_polar(self.magnitude[i], self.phase(i)))
            .collect()
    }

    /// Sensitivities with the smooth image phase absorbed, `e^{i psi_s} c_j`.
    pub fn phased_maps(&self) -> Result<KTensor> {
        let plane = self.n * self.n;
        let c = self.coils.to_c64();
        let out: Vec<Complex64> = c
            .iter()
            .enumerate()
            .map(|(i, v)| v * Complex64::from_polar(1.0, self.smooth_phase[i % plane]))
            .collect();
        KTensor::from_c64(self.coils.dims().to_vec(), &out)
    }

    /// Coil images `|rho| e^{i psi} c_j`.
    pub fn coil_images(&self) -> Result<KTensor> {
        let plane = self.n * self.n;
        let img = self.image();
        let c = self.coils.to_c64();
        let out: Vec<Complex64> = c.iter().enumerate().map(|(i, v)| v * img[i % plane]).collect();
        KTensor::from_c64(self.coils.dims().to_vec(), &out)
    }

    /// Pixels where the high-frequency phase is non-zero.
    pub fn blob_mask(&self) -> Vec<bool> {
        self.hf_phase.iter().map(|&p| p != 0.0).collect()
    }

    /// Support pixels farther than `margin` pixels from any blob disc.
    pub fn smooth_support(&self, margin: usize) -> Vec<bool> {
        let near = dilate(&self.blob_mask(), self.n, margin);
        self.support.iter().zip(&near).map(|(&s, &b)| s && !b).collect()
    }
}

/// Square (Chebyshev) dilation of a mask on an `n x n` grid.
pub fn dilate(mask: &[bool], n: usize, radius: usize) -> Vec<bool> {
    let r = radius as isize;
    let mut out = vec![false; n * n];
    for y in 0..n as isize {
        for x in 0..n as isize {
            if !mask[(x + n as isize * y) as usize] {
                continue;
            }
            for dy in -r..=r {
                for dx in -r..=r {
                    let (xx, yy) = (x + dx, y + dy);
                    if xx >= 0 && yy >= 0 && xx < n as isize && yy < n as isize {
                        out[(xx + n as isize * yy) as usize] = true;
                    }
                }
            }
        }
    }
    out
}

fn normalized_coords(n: usize, x: usize, y: usize) -> (f64, f64) {
    let h = (n / 2) as f64;
    ((x as f64 - h) / h, (y as f64 - h) / h)
}

fn ellipse_value(u: f64, v: f64) -> (f64, bool) {
    let mut value = 0.0;
    let mut inside_outer = false;
    for (k, &(amp, a, b, x0, y0, deg)) in ELLIPSES.iter().enumerate() {
        let (a, b, x0, y0) = (a * PHANTOM_SCALE, b * PHANTOM_SCALE, x0 * PHANTOM_SCALE, y0 * PHANTOM_SCALE);
        let t = deg.to_radians();
        let (du, dv) = (u - x0, v - y0);
        let ru = du * t.cos() + dv * t.sin();
        let rv = -du * t.sin() + dv * t.cos();
        if (ru / a).powi(2) + (rv / b).powi(2) <= 1.0 {
            value += amp;
            if k == 0 {
                inside_outer = true;
            }
        }
    }
    (value.max(0.0), inside_outer)
}

fn inside_inner(u: f64, v: f64, margin: f64) -> bool {
    let (_, a, b, x0, y0, _) = ELLIPSES[1];
    let (a, b) = (a * PHANTOM_SCALE - margin, b * PHANTOM_SCALE - margin);
    let (x0, y0) = (x0 * PHANTOM_SCALE, y0 * PHANTOM_SCALE);
    a > 0.0 && b > 0.0 && ((u - x0) / a).powi(2) + ((v - y0) / b).powi(2) <= 1.0
}

pub fn make_phantom(params: &PhantomParams) -> Result<PhantomTruth> {
    let PhantomParams { grid: n, ncoils, hf_blobs, seed } = *params;
    if n % 2 != 0 {
        return Err(Error::OddExtent { dim: Dim::X, extent: n });
    }
    if n < 32 {
        return Err(Error::param(format!("grid {n} is below the minimum of 32")));
    }
    if ncoils < 2 {
        return Err(Error::param(format!("need at least 2 coils, got {ncoils}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let plane = n * n;

    let mut magnitude = vec![0.0; plane];
    let mut support = vec![false; plane];
    for y in 0..n {
        for x in 0..n {
            let (u, v) = normalized_coords(n, x, y);
            let (m, s) = ellipse_value(u, v);
            magnitude[x + n * y] = m;
            support[x + n * y] = s;
        }
    }

    // Smooth phase: random combination of the first-order Fourier terms,
    // scaled so its peak magnitude over the grid is pi/2.
    let coeffs: [f64; 6] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
    let mut smooth_phase = vec![0.0; plane];
    for y in 0..n {
        for x in 0..n {
            let (u, v) = normalized_coords(n, x, y);
            let (pu, pv) = (PI * u, PI * v);
            smooth_phase[x + n * y] = coeffs[0] * pu.cos()
                + coeffs[1] * pu.sin()
                + coeffs[2] * pv.cos()
                + coeffs[3] * pv.sin()
                + coeffs[4] * pu.sin() * pv.sin()
                + coeffs[5] * pu.cos() * pv.cos();
        }
    }
    let peak = smooth_phase.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        smooth_phase.iter_mut().for_each(|p| *p *= (PI / 2.0) / peak);
    }

    let blobs = place_blobs(n, hf_blobs, &mut rng)?;
    let mut hf_phase = vec![0.0; plane];
    let radius = BLOB_DIAMETER / 2.0;
    for blob in &blobs {
        let (dc, ds) = (blob.direction.cos(), blob.direction.sin());
        for y in 0..n {
            for x in 0..n {
                if blob.contains(x, y) {
                    let t = ((x as f64 - blob.cx) * dc + (y as f64 - blob.cy) * ds) / radius;
                    hf_phase[x + n * y] = BLOB_OFFSET + BLOB_RAMP * (t.clamp(-1.0, 1.0) + 1.0) / 2.0;
                }
            }
        }
    }

    let mut coils = Vec::with_capacity(plane * ncoils);
    let mut coil_params = Vec::with_capacity(ncoils);
    for j in 0..ncoils {
        let angle = 2.0 * PI * j as f64 / ncoils as f64 + rng.random_range(-0.1..0.1);
        let center = (COIL_RING_RADIUS * angle.cos(), COIL_RING_RADIUS * angle.sin());
        let mut small = || Complex64::from_polar(rng.random_range(0.0..0.15), rng.random_range(0.0..2.0 * PI));
        let (a, b) = (small(), small());
        let rot = Complex64::from_polar(1.0, rng.random_range(0.0..2.0 * PI));
        coil_params.push((center, a, b, rot));
    }
    for &((px, py), a, b, rot) in &coil_params {
        for y in 0..n {
            for x in 0..n {
                let (u, v) = normalized_coords(n, x, y);
                let (du, dv) = (u - px, v - py);
                let g = (-(du * du + dv * dv) / (2.0 * COIL_WIDTH * COIL_WIDTH)).exp();
                coils.push(rot * g * (Complex64::new(1.0, 0.0) + a * du + b * dv));
            }
        }
    }
    let coils = KTensor::from_c64(vec![(Dim::X, n), (Dim::Y, n), (Dim::Coil, ncoils)], &coils)?;

    Ok(PhantomTruth {
        n,
        magnitude,
        smooth_phase,
        hf_phase,
        coils,
        support,
        blobs,
    })
}

fn place_blobs(n: usize, count: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Blob>> {
    let h = (n / 2) as f64;
    let margin = (BLOB_DIAMETER / 2.0 + 2.0) / h;
    let min_sep = BLOB_DIAMETER + 4.0;
    let mut blobs: Vec<Blob> = Vec::with_capacity(count);
    let mut attempts = 0;
    while blobs.len() < count {
        attempts += 1;
        if attempts > 10_000 {
            return Err(Error::param(format!("cannot place {count} separated blobs on a {n} grid")));
        }
        let cx = rng.random_range(0..n) as f64 + 0.5;
        let cy = rng.random_range(0..n) as f64 + 0.5;
        if !inside_inner((cx - h) / h, (cy - h) / h, margin) {
            continue;
        }
        if blobs.iter().any(|b| (b.cx - cx).hypot(b.cy - cy) < min_sep) {
            continue;
        }
        blobs.push(Blob {
            cx,
            cy,
            direction: rng.random_range(0.0..2.0 * PI),
        });
    }
    Ok(blobs)
}

/// `y_j = fftc(|rho| e^{i psi} c_j)` for every coil.
pub fn simulate_kspace(t: &PhantomTruth) -> Result<KTensor> {
    let plane = t.n * t.n;
    let (nx, ny, _) = t.coils.coil_shape()?;
    if nx != t.n || ny != t.n {
        return Err(Error::shape(format!("coils are {nx}x{ny}, truth grid is {}", t.n)));
    }
    for (name, len) in [
        ("magnitude", t.magnitude.len()),
        ("smooth_phase", t.smooth_phase.len()),
        ("hf_phase", t.hf_phase.len()),
        ("support", t.support.len()),
    ] {
        if len != plane {
            return Err(Error::shape(format!("{name} has {len} pixels, expected {plane}")));
        }
    }
    let img = t.image();
    let mut data: Vec<Complex64> = t
        .coils
        .to_c64()
        .iter()
        .enumerate()
        .map(|(i, c)| c * img[i % plane])
        .collect();
    fft2c(&mut data, nx, ny, Direction::Forward);
    KTensor::from_c64(t.coils.dims().to_vec(), &data)
}
