//! KSP1 binary tensor files.
//!
//! Little-endian layout:
//!
//! ```text
//! b"KSP1" | u32 ndims | ndims x { u8 tag, u64 extent } | (f32 re, f32 im) ...
//! ```
//!
//! Tags: 0 = x, 1 = y, 2 = coil, 3 = set. Values are stored first
//! dimension fastest.

use std::fs;
use std::path::Path;

use num_complex::Complex32;

use crate::error::{Error, Result};
use crate::tensor::{checked_len, Dim, KTensor};

pub const MAGIC: [u8; 4] = *b"KSP1";

pub fn encode_ktensor(t: &KTensor) -> Result<Vec<u8>> {
    t.check_even_grid()?;
    let mut out = Vec::with_capacity(8 + 9 * t.dims().len() + 8 * t.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&(t.dims().len() as u32).to_le_bytes());
    for &(d, n) in t.dims() {
        out.push(d.tag());
        out.extend_from_slice(&(n as u64).to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.re.to_le_bytes());
        out.extend_from_slice(&v.im.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_ktensor(bytes: &[u8]) -> Result<KTensor> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic: [u8; 4] = cur.take(4)?.try_into().unwrap();
    if magic != MAGIC {
        return Err(Error::BadMagic(magic));
    }
    let ndims = u32::from_le_bytes(cur.take(4)?.try_into().unwrap()) as usize;
    // Each header entry needs 9 bytes; reject absurd counts before allocating.
    if ndims > (bytes.len() - cur.pos) / 9 {
        return Err(Error::Truncated {
            expected: cur.pos + ndims.saturating_mul(9),
            found: bytes.len(),
        });
    }
    let mut dims = Vec::with_capacity(ndims);
    for _ in 0..ndims {
        let tag = cur.take(1)?[0];
        let dim = Dim::from_tag(tag).ok_or(Error::BadDimTag(tag))?;
        let extent = u64::from_le_bytes(cur.take(8)?.try_into().unwrap());
        let extent = usize::try_from(extent).map_err(|_| Error::ExtentOverflow)?;
        dims.push((dim, extent));
    }
    let count = checked_len(&dims)?;
    let payload = count.checked_mul(8).ok_or(Error::ExtentOverflow)?;
    let remaining = bytes.len() - cur.pos;
    if remaining < payload {
        return Err(Error::Truncated {
            expected: cur.pos + payload,
            found: bytes.len(),
        });
    }
    if remaining > payload {
        return Err(Error::TrailingBytes(remaining - payload));
    }
    let data = cur.bytes[cur.pos..]
        .chunks_exact(8)
        .map(|c| {
            Complex32::new(
                f32::from_le_bytes(c[..4].try_into().unwrap()),
                f32::from_le_bytes(c[4..].try_into().unwrap()),
            )
        })
        .collect();
    let t = KTensor::new(dims, data)?;
    t.check_even_grid()?;
    Ok(t)
}

pub fn write_ktensor(path: impl AsRef<Path>, t: &KTensor) -> Result<()> {
    fs::write(path, encode_ktensor(t)?)?;
    Ok(())
}

pub fn read_ktensor(path: impl AsRef<Path>) -> Result<KTensor> {
    decode_ktensor(&fs::read(path)?)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::Truncated {
                expected: end,
                found: self.bytes.len(),
            });
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn header(dims: &[(u8, u64)]) -> Vec<u8> {
        let mut b = MAGIC.to_vec();
        b.extend_from_slice(&(dims.len() as u32).to_le_bytes());
        for &(tag, n) in dims {
            b.push(tag);
            b.extend_from_slice(&n.to_le_bytes());
        }
        b
    }

    #[test]
    fn round_trip_4x4x2_is_bit_exact() {
        let data: Vec<Complex32> = (0..32)
            .map(|i| Complex32::new((i as f32).sin() * 1e3, (i as f32 * 0.7).cos() / 3.0))
            .collect();
        let t = KTensor::new(vec![(Dim::X, 4), (Dim::Y, 4), (Dim::Coil, 2)], data).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.ksp1");
        write_ktensor(&path, &t).unwrap();
        let back = read_ktensor(&path).unwrap();
        assert_eq!(back.dims(), t.dims());
        for (a, b) in t.data().iter().zip(back.data()) {
            assert_eq!(a.re.to_bits(), b.re.to_bits());
            assert_eq!(a.im.to_bits(), b.im.to_bits());
        }
    }

    #[test]
    fn bad_magic() {
        let mut b = header(&[(0, 2)]);
        b[..4].copy_from_slice(b"XXXX");
        b.extend_from_slice(&[0u8; 16]);
        assert!(matches!(decode_ktensor(&b), Err(Error::BadMagic(m)) if &m == b"XXXX"));
    }

    #[test]
    fn truncated_payload() {
        let mut b = header(&[(0, 4), (1, 4)]);
        b.extend_from_slice(&[0u8; 15 * 8]);
        assert!(matches!(decode_ktensor(&b), Err(Error::Truncated { .. })));
    }

    #[test]
    fn extent_overflow() {
        let b = header(&[(0, u64::MAX / 2), (1, 4)]);
        assert!(matches!(decode_ktensor(&b), Err(Error::ExtentOverflow)));
    }

    #[test]
    fn truncated_header() {
        let b = header(&[(0, 4)]);
        assert!(matches!(decode_ktensor(&b[..7]), Err(Error::Truncated { .. })));
    }

    #[test]
    fn unknown_tag_and_odd_grid() {
        let mut b = header(&[(9, 2)]);
        b.extend_from_slice(&[0u8; 16]);
        assert!(matches!(decode_ktensor(&b), Err(Error::BadDimTag(9))));

        let mut b = header(&[(0, 3)]);
        b.extend_from_slice(&[0u8; 24]);
        assert!(matches!(decode_ktensor(&b), Err(Error::OddExtent { dim: Dim::X, extent: 3 })));
    }

    #[test]
    fn odd_coil_count_is_fine() {
        let t = KTensor::zeros(vec![(Dim::X, 2), (Dim::Coil, 3)]).unwrap();
        let back = decode_ktensor(&encode_ktensor(&t).unwrap()).unwrap();
        assert_eq!(back, t);
    }

    fn arb_tensor() -> impl Strategy<Value = KTensor> {
        (1usize..=4)
            .prop_flat_map(|ndims| {
                let extents = proptest::collection::vec(1usize..=3, ndims);
                extents.prop_flat_map(move |ext| {
                    let dims: Vec<(Dim, usize)> = ext
                        .iter()
                        .enumerate()
                        .map(|(i, &e)| (Dim::ALL[i], if i < 2 { 2 * e } else { e }))
                        .collect();
                    let len: usize = dims.iter().map(|d| d.1).product();
                    (
                        Just(dims),
                        proptest::collection::vec(
                            (-1e6f32..1e6, -1e6f32..1e6).prop_map(|(a, b)| Complex32::new(a, b)),
                            len,
                        ),
                    )
                })
            })
            .prop_map(|(dims, data)| KTensor::new(dims, data).unwrap())
    }

    proptest! {
        #[test]
        fn encode_decode_is_bit_exact(t in arb_tensor()) {
            let bytes = encode_ktensor(&t).unwrap();
            let back = decode_ktensor(&bytes).unwrap();
            prop_assert_eq!(back.dims(), t.dims());
            prop_assert_eq!(encode_ktensor(&back).unwrap(), bytes);
        }
    }
}
