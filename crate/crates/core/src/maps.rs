use num_complex::{Complex32, Complex64};

use crate::error::{Error, Result};
use crate::tensor::{Dim, KTensor};

/// Per-pixel coil sensitivities, one or more sets, with the eigenvalue that
/// accompanies every set.
#[derive(Clone, Debug, PartialEq)]
pub struct SensitivityMaps {
    /// `[x, y, coil, set]`
    maps: KTensor,
    /// `[x, y, set]`, first dimension fastest.
    eigenvalues: Vec<f32>,
}

impl SensitivityMaps {
    pub fn new(maps: KTensor, eigenvalues: Vec<f32>) -> Result<Self> {
        maps.expect_layout(&[Dim::X, Dim::Y, Dim::Coil, Dim::Set])?;
        let d = maps.dims();
        let expected = d[0].1 * d[1].1 * d[3].1;
        if eigenvalues.len() != expected {
            return Err(Error::shape(format!(
                "{} eigenvalues for {expected} pixel-sets",
                eigenvalues.len()
            )));
        }
        if eigenvalues.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(SensitivityMaps { maps, eigenvalues })
    }

    /// Wraps `[x, y, coil]` maps as a single set with unit eigenvalue.
    pub fn from_coil_maps(coils: &KTensor) -> Result<Self> {
        let (nx, ny, nc) = coils.coil_shape()?;
        let maps = KTensor::new(
            vec![(Dim::X, nx), (Dim::Y, ny), (Dim::Coil, nc), (Dim::Set, 1)],
            coils.data().to_vec(),
        )?;
        SensitivityMaps::new(maps, vec![1.0; nx * ny])
    }

    pub(crate) fn from_parts_c64(
        nx: usize,
        ny: usize,
        ncoils: usize,
        nsets: usize,
        maps: &[Complex64],
        eigenvalues: Vec<f32>,
    ) -> Result<Self> {
        let maps = KTensor::from_c64(
            vec![(Dim::X, nx), (Dim::Y, ny), (Dim::Coil, ncoils), (Dim::Set, nsets)],
            maps,
        )?;
        SensitivityMaps::new(maps, eigenvalues)
    }

    pub fn maps(&self) -> &KTensor {
        &self.maps
    }

    pub fn eigenvalues(&self) -> &[f32] {
        &self.eigenvalues
    }

    /// Eigenvalues as an `[x, y, set]` tensor with zero imaginary part.
    pub fn eigenvalue_tensor(&self) -> Result<KTensor> {
        let (nx, ny) = self.grid();
        KTensor::new(
            vec![(Dim::X, nx), (Dim::Y, ny), (Dim::Set, self.nsets())],
            self.eigenvalues.iter().map(|&v| Complex32::new(v, 0.0)).collect(),
        )
    }

    pub fn from_tensors(maps: KTensor, eigenvalues: &KTensor) -> Result<Self> {
        eigenvalues.expect_layout(&[Dim::X, Dim::Y, Dim::Set])?;
        SensitivityMaps::new(maps, eigenvalues.data().iter().map(|v| v.re).collect())
    }

    pub fn grid(&self) -> (usize, usize) {
        let d = self.maps.dims();
        (d[0].1, d[1].1)
    }

    pub fn ncoils(&self) -> usize {
        self.maps.dims()[2].1
    }

    pub fn nsets(&self) -> usize {
        self.maps.dims()[3].1
    }

    pub fn plane(&self) -> usize {
        let (nx, ny) = self.grid();
        nx * ny
    }

    /// Flat index of `(pixel, coil, set)` into [`maps`](Self::maps).
    #[inline]
    pub fn index(&self, pixel: usize, coil: usize, set: usize) -> usize {
        pixel + self.plane() * (coil + self.ncoils() * set)
    }

    pub fn eigenvalue(&self, pixel: usize, set: usize) -> f32 {
        self.eigenvalues[pixel + self.plane() * set]
    }

    /// Coil vector of one pixel and set, widened to double precision.
    pub fn coil_vector(&self, pixel: usize, set: usize) -> Vec<Complex64> {
        let d = self.maps.data();
        (0..self.ncoils())
            .map(|c| {
                let v = d[self.index(pixel, c, set)];
                Complex64::new(v.re as f64, v.im as f64)
            })
            .collect()
    }

    /// A single set as its own map collection.
    pub fn set(&self, s: usize) -> Result<SensitivityMaps> {
        self.select_sets(&[s])
    }

    /// The first `count` sets.
    pub fn first_sets(&self, count: usize) -> Result<SensitivityMaps> {
        let sets: Vec<usize> = (0..count).collect();
        self.select_sets(&sets)
    }

    pub fn select_sets(&self, sets: &[usize]) -> Result<SensitivityMaps> {
        let ns = self.nsets();
        if sets.is_empty() || sets.iter().any(|&s| s >= ns) {
            return Err(Error::param(format!("sets {sets:?} not available in {ns} sets")));
        }
        let (nx, ny) = self.grid();
        let block = self.plane() * self.ncoils();
        let plane = self.plane();
        let mut maps = Vec::with_capacity(block * sets.len());
        let mut eig = Vec::with_capacity(plane * sets.len());
        for &s in sets {
            maps.extend_from_slice(&self.maps.data()[s * block..(s + 1) * block]);
            eig.extend_from_slice(&self.eigenvalues[s * plane..(s + 1) * plane]);
        }
        let maps = KTensor::new(
            vec![(Dim::X, nx), (Dim::Y, ny), (Dim::Coil, self.ncoils()), (Dim::Set, sets.len())],
            maps,
        )?;
        SensitivityMaps::new(maps, eig)
    }

    pub fn check_same_grid(&self, nx: usize, ny: usize) -> Result<()> {
        if self.grid() != (nx, ny) {
            let (mx, my) = self.grid();
            return Err(Error::shape(format!("maps are {mx}x{my}, data is {nx}x{ny}")));
        }
        Ok(())
    }
}
