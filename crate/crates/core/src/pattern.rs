//! Cartesian undersampling masks.
//!
//! Acceleration acts along `y` (every R-th line, counted from the k-space
//! center), the partial-Fourier cut along `x`. The ACS block is centered and
//! always fully sampled.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex32;

use crate::error::{Error, Result};
use crate::tensor::{Dim, KTensor};

/// Fraction of the partial-Fourier dimension that is acquired, in (1/2, 1].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PartialFourier {
    num: u32,
    den: u32,
}

impl PartialFourier {
    pub const FULL: PartialFourier = PartialFourier { num: 1, den: 1 };

    pub fn new(num: u32, den: u32) -> Result<Self> {
        if den == 0 || 2 * num <= den || num > den {
            return Err(Error::param(format!(
                "partial Fourier fraction {num}/{den} must lie in (1/2, 1]"
            )));
        }
        Ok(PartialFourier { num, den })
    }

    pub fn is_full(self) -> bool {
        self.num == self.den
    }

    /// `ceil(p * n)`.
    pub fn kept(self, n: usize) -> usize {
        (self.num as usize * n).div_ceil(self.den as usize)
    }

    pub fn value(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl fmt::Display for PartialFourier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl FromStr for PartialFourier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::param(format!("cannot parse partial Fourier fraction `{s}`"));
        match s.split_once('/') {
            Some((a, b)) => PartialFourier::new(
                a.trim().parse().map_err(|_| bad())?,
                b.trim().parse().map_err(|_| bad())?,
            ),
            None if s.trim() == "1" => Ok(PartialFourier::FULL),
            None => Err(bad()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplingPattern {
    nx: usize,
    ny: usize,
    mask: Vec<bool>,
    accel: usize,
    acs: (usize, usize),
    partial_fourier: PartialFourier,
}

impl SamplingPattern {
    /// Builds the mask for acceleration `accel` along y, a centered
    /// `acs = (width, height)` block and a partial-Fourier cut along x that
    /// keeps the `ceil(p * nx)` lowest indices (the `-kx` side plus center).
    pub fn new(
        nx: usize,
        ny: usize,
        accel: usize,
        acs: (usize, usize),
        partial_fourier: PartialFourier,
    ) -> Result<Self> {
        if accel == 0 {
            return Err(Error::param("acceleration must be positive"));
        }
        if nx == 0 || ny == 0 || !nx.is_multiple_of(2) || !ny.is_multiple_of(2) {
            return Err(Error::param(format!("grid {nx}x{ny} must have even, positive extents")));
        }
        let (aw, ah) = acs;
        if aw > nx || ah > ny {
            return Err(Error::param(format!("ACS {aw}x{ah} exceeds grid {nx}x{ny}")));
        }
        let kept = partial_fourier.kept(nx);
        let (_, x1) = centered_range(nx, aw);
        if aw > 0 && x1 > kept {
            return Err(Error::param(format!(
                "ACS block reaches x index {} but partial Fourier keeps only {kept}",
                x1 - 1
            )));
        }
        let (y0, y1) = centered_range(ny, ah);
        let cy = ny / 2;
        let mut mask = vec![false; nx * ny];
        // ACS lines are read out over the whole kept range like any other line.
        for y in 0..ny {
            let acquired = (y + accel * ny - cy).is_multiple_of(accel) || (y0..y1).contains(&y);
            for x in 0..kept {
                mask[x + nx * y] = acquired;
            }
        }
        Ok(SamplingPattern {
            nx,
            ny,
            mask,
            accel,
            acs,
            partial_fourier,
        })
    }

    pub fn full(nx: usize, ny: usize) -> Result<Self> {
        SamplingPattern::new(nx, ny, 1, (nx, ny), PartialFourier::FULL)
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn accel(&self) -> usize {
        self.accel
    }

    pub fn acs(&self) -> (usize, usize) {
        self.acs
    }

    pub fn partial_fourier(&self) -> PartialFourier {
        self.partial_fourier
    }

    pub fn is_sampled(&self, x: usize, y: usize) -> bool {
        self.mask[x + self.nx * y]
    }

    pub fn sample_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Number of `y` lines carrying at least one sample.
    pub fn line_count(&self) -> usize {
        (0..self.ny)
            .filter(|&y| (0..self.nx).any(|x| self.is_sampled(x, y)))
            .count()
    }

    /// The mask as a real `[x, y]` tensor of zeros and ones.
    pub fn to_tensor(&self) -> Result<KTensor> {
        let data: Vec<f64> = self.mask.iter().map(|&m| m as u8 as f64).collect();
        KTensor::from_real(vec![(Dim::X, self.nx), (Dim::Y, self.ny)], &data)
    }
}

/// Half-open index range of a centered block of `width` on an axis of `n`.
pub fn centered_range(n: usize, width: usize) -> (usize, usize) {
    let start = n / 2 - width / 2;
    (start, start + width)
}

/// Zeroes unsampled k-space entries, broadcasting the mask over every
/// trailing dimension.
pub fn apply_pattern(ksp: &KTensor, p: &SamplingPattern) -> Result<KTensor> {
    let nx = ksp.require(Dim::X)?;
    let ny = ksp.require(Dim::Y)?;
    if ksp.axis(Dim::X) != Some(0) || ksp.axis(Dim::Y) != Some(1) {
        return Err(Error::shape("k-space must be laid out with x then y leading"));
    }
    if (nx, ny) != p.grid() {
        return Err(Error::shape(format!(
            "mask is {}x{}, k-space is {nx}x{ny}",
            p.nx, p.ny
        )));
    }
    let plane = nx * ny;
    let data = ksp
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| if p.mask[i % plane] { v } else { Complex32::new(0.0, 0.0) })
        .collect();
    KTensor::new(ksp.dims().to_vec(), data)
}

/// Copies the centered `w x h` block of a `[x, y, ...]` tensor.
pub fn extract_center(ksp: &KTensor, w: usize, h: usize) -> Result<KTensor> {
    let nx = ksp.require(Dim::X)?;
    let ny = ksp.require(Dim::Y)?;
    if ksp.axis(Dim::X) != Some(0) || ksp.axis(Dim::Y) != Some(1) {
        return Err(Error::shape("tensor must be laid out with x then y leading"));
    }
    if w > nx || h > ny || w == 0 || h == 0 {
        return Err(Error::param(format!("block {w}x{h} does not fit grid {nx}x{ny}")));
    }
    let (x0, _) = centered_range(nx, w);
    let (y0, _) = centered_range(ny, h);
    let rest = ksp.len() / (nx * ny);
    let src = ksp.data();
    let mut out = Vec::with_capacity(w * h * rest);
    for r in 0..rest {
        for y in 0..h {
            let row = r * nx * ny + (y0 + y) * nx + x0;
            out.extend_from_slice(&src[row..row + w]);
        }
    }
    let mut dims = ksp.dims().to_vec();
    dims[0].1 = w;
    dims[1].1 = h;
    KTensor::new(dims, out)
}
