//! Named-dimension complex arrays.
//!
//! Storage is single precision, first dimension fastest. Numerical kernels
//! elsewhere in the crate widen to `Complex64` for their inner loops and
//! narrow again when they hand a tensor back.

use std::fmt;

use num_complex::{Complex32, Complex64};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Dim {
    X,
    Y,
    Coil,
    Set,
}

impl Dim {
    pub const ALL: [Dim; 4] = [Dim::X, Dim::Y, Dim::Coil, Dim::Set];

    /// Tag used by the KSP1 file format.
    pub fn tag(self) -> u8 {
        match self {
            Dim::X => 0,
            Dim::Y => 1,
            Dim::Coil => 2,
            Dim::Set => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Dim> {
        Dim::ALL.get(tag as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Dim::X => "x",
            Dim::Y => "y",
            Dim::Coil => "coil",
            Dim::Set => "set",
        }
    }
}

impl fmt::Display for Dim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KTensor {
    dims: Vec<(Dim, usize)>,
    data: Vec<Complex32>,
}

impl KTensor {
    pub fn new(dims: Vec<(Dim, usize)>, data: Vec<Complex32>) -> Result<Self> {
        let expected = checked_len(&dims)?;
        if expected != data.len() {
            return Err(Error::shape(format!(
                "extents {:?} describe {} elements, data has {}",
                dims,
                expected,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(KTensor { dims, data })
    }

    pub fn zeros(dims: Vec<(Dim, usize)>) -> Result<Self> {
        let len = checked_len(&dims)?;
        Ok(KTensor {
            dims,
            data: vec![Complex32::new(0.0, 0.0); len],
        })
    }

    /// Narrows double-precision values into a new tensor.
    pub fn from_c64(dims: Vec<(Dim, usize)>, data: &[Complex64]) -> Result<Self> {
        let narrowed = data
            .iter()
            .map(|v| Complex32::new(v.re as f32, v.im as f32))
            .collect();
        KTensor::new(dims, narrowed)
    }

    /// Real-valued data stored with zero imaginary part.
    pub fn from_real(dims: Vec<(Dim, usize)>, data: &[f64]) -> Result<Self> {
        let narrowed = data.iter().map(|&v| Complex32::new(v as f32, 0.0)).collect();
        KTensor::new(dims, narrowed)
    }

    pub fn to_c64(&self) -> Vec<Complex64> {
        self.data
            .iter()
            .map(|v| Complex64::new(v.re as f64, v.im as f64))
            .collect()
    }

    pub fn dims(&self) -> &[(Dim, usize)] {
        &self.dims
    }

    pub fn shape(&self) -> Vec<usize> {
        self.dims.iter().map(|&(_, n)| n).collect()
    }

    pub fn axis(&self, dim: Dim) -> Option<usize> {
        self.dims.iter().position(|&(d, _)| d == dim)
    }

    pub fn extent(&self, dim: Dim) -> Option<usize> {
        self.axis(dim).map(|a| self.dims[a].1)
    }

    /// Extent of `dim`, or an error naming the missing dimension.
    pub fn require(&self, dim: Dim) -> Result<usize> {
        self.extent(dim).ok_or(Error::UnknownDim(dim))
    }

    /// Element stride of the given axis.
    pub fn stride(&self, axis: usize) -> usize {
        self.dims[..axis].iter().map(|&(_, n)| n).product()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[Complex32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<Complex32> {
        self.data
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr() as f64).sum()
    }

    pub fn scaled(&self, factor: f32) -> Result<KTensor> {
        KTensor::new(
            self.dims.clone(),
            self.data.iter().map(|v| v * factor).collect(),
        )
    }

    /// Checks that the dimension list is exactly `layout`, in order.
    pub fn expect_layout(&self, layout: &[Dim]) -> Result<()> {
        let names: Vec<Dim> = self.dims.iter().map(|&(d, _)| d).collect();
        if names != layout {
            return Err(Error::shape(format!(
                "expected dimensions {:?}, found {:?}",
                layout, names
            )));
        }
        Ok(())
    }

    /// `(nx, ny, ncoils)` of a tensor laid out as `[x, y, coil]`.
    pub fn coil_shape(&self) -> Result<(usize, usize, usize)> {
        self.expect_layout(&[Dim::X, Dim::Y, Dim::Coil])?;
        Ok((self.dims[0].1, self.dims[1].1, self.dims[2].1))
    }

    /// Rejects odd spatial extents; the `-k` flip relies on even grids.
    pub fn check_even_grid(&self) -> Result<()> {
        for &(d, n) in &self.dims {
            if matches!(d, Dim::X | Dim::Y) && n % 2 != 0 {
                return Err(Error::OddExtent { dim: d, extent: n });
            }
        }
        Ok(())
    }
}

pub(crate) fn checked_len(dims: &[(Dim, usize)]) -> Result<usize> {
    for (i, &(d, _)) in dims.iter().enumerate() {
        if dims[..i].iter().any(|&(e, _)| e == d) {
            return Err(Error::DuplicateDim(d));
        }
    }
    dims.iter()
        .try_fold(1usize, |acc, &(_, n)| acc.checked_mul(n))
        .ok_or(Error::ExtentOverflow)
}
