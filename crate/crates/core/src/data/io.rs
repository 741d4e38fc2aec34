//! Binary tensor files.
//!
//! Layout (little-endian): magic `A3TN`, `u32` version 1, `u32` rank, rank
//! `u64` extents, `u8` dtype (1 = f32, 2 = f64), then the row-major payload.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, FormatError, Result};
use crate::tensor::Tensor;

pub const TENSOR_MAGIC: [u8; 4] = *b"A3TN";
pub const TENSOR_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dtype {
    F32 = 1,
    F64 = 2,
}

impl Dtype {
    fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

pub fn encode_tensor(t: &Tensor, dtype: Dtype) -> Vec<u8> {
    let mut out = Vec::with_capacity(17 + 8 * t.rank() + dtype.width() * t.len());
    out.extend_from_slice(&TENSOR_MAGIC);
    out.extend_from_slice(&TENSOR_VERSION.to_le_bytes());
    out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
    for &e in t.shape() {
        out.extend_from_slice(&(e as u64).to_le_bytes());
    }
    out.push(dtype as u8);
    match dtype {
        Dtype::F32 => t
            .data()
            .iter()
            .for_each(|&v| out.extend_from_slice(&(v as f32).to_le_bytes())),
        Dtype::F64 => t.data().iter().for_each(|&v| out.extend_from_slice(&v.to_le_bytes())),
    }
    out
}

pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pub(crate) pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(FormatError::Truncated {
                offset: self.pos,
                needed: n,
            });
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub(crate) fn u8(&mut self) -> Result<u8, FormatError> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn magic(&mut self, expected: [u8; 4]) -> Result<(), FormatError> {
        let found: [u8; 4] = self.take(4)?.try_into().unwrap();
        if found != expected {
            return Err(FormatError::BadMagic { found, expected });
        }
        Ok(())
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    /// One tensor record starting at the current position.
    pub(crate) fn tensor(&mut self) -> Result<Tensor, FormatError> {
        self.magic(TENSOR_MAGIC)?;
        let version = self.u32()?;
        if version != TENSOR_VERSION {
            return Err(FormatError::UnsupportedVersion(version));
        }
        let rank = self.u32()? as usize;
        let mut extents = Vec::new();
        for _ in 0..rank {
            extents.push(self.u64()?);
        }
        let dtype = match self.u8()? {
            1 => Dtype::F32,
            2 => Dtype::F64,
            other => return Err(FormatError::UnknownDtype(other)),
        };
        if extents.contains(&0) {
            return Err(FormatError::ZeroExtent(extents));
        }
        let count = extents
            .iter()
            .try_fold(1u64, |acc, &e| acc.checked_mul(e))
            .and_then(|n| usize::try_from(n).ok())
            .filter(|n| n.checked_mul(dtype.width()).is_some());
        let Some(count) = count else {
            return Err(FormatError::ExtentOverflow(extents));
        };
        let payload = self.take(count * dtype.width())?;
        let data: Vec<f64> = match dtype {
            Dtype::F32 => payload
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
                .collect(),
            Dtype::F64 => payload
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                .collect(),
        };
        let shape = extents.iter().map(|&e| e as usize).collect();
        Ok(Tensor::from_parts(shape, data))
    }
}

/// Parses exactly one tensor; trailing bytes are an error.
pub fn decode_tensor(bytes: &[u8]) -> Result<Tensor, FormatError> {
    let mut r = Reader::new(bytes);
    let t = r.tensor()?;
    if r.remaining() > 0 {
        return Err(FormatError::TrailingBytes(r.remaining()));
    }
    Ok(t)
}

/// Writes through a temporary file in the target directory, then renames.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn save_tensor(path: impl AsRef<Path>, t: &Tensor) -> Result<()> {
    save_tensor_as(path, t, Dtype::F64)
}

pub fn save_tensor_as(path: impl AsRef<Path>, t: &Tensor, dtype: Dtype) -> Result<()> {
    write_atomic(path.as_ref(), &encode_tensor(t, dtype))
}

pub fn load_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(decode_tensor(&bytes)?)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    /// Byte layout written field by field from the format description.
    fn reference_bytes(shape: &[u64], values: &[f64]) -> Vec<u8> {
        let mut b = b"A3TN".to_vec();
        b.extend([1, 0, 0, 0]);
        b.extend((shape.len() as u32).to_le_bytes());
        for e in shape {
            b.extend(e.to_le_bytes());
        }
        b.push(2);
        for v in values {
            b.extend(v.to_bits().to_le_bytes());
        }
        b
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.a3t");
        let t = Tensor::random_normal(&[3, 4, 5], 1.0, &mut ChaCha8Rng::seed_from_u64(1));
        save_tensor(&path, &t).unwrap();
        let back = load_tensor(&path).unwrap();
        assert_eq!(back.shape(), t.shape());
        assert!(back
            .data()
            .iter()
            .zip(t.data())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn independent_writer_parses_identically() {
        let values = [1.5, -0.0, f64::MIN_POSITIVE, 1e300, -7.25, 0.1];
        let bytes = reference_bytes(&[2, 3], &values);
        let t = decode_tensor(&bytes).unwrap();
        assert_eq!(t.shape(), &[2, 3]);
        assert_eq!(t.data(), &values);
        assert_eq!(encode_tensor(&t, Dtype::F64), bytes);
    }

    #[test]
    fn f32_payload() {
        let t = Tensor::from_vec(vec![0.5, -2.0, 3.25]);
        let bytes = encode_tensor(&t, Dtype::F32);
        assert_eq!(bytes.len(), 4 + 4 + 4 + 8 + 1 + 12);
        assert_eq!(decode_tensor(&bytes).unwrap().data(), t.data());
    }

    #[test]
    fn distinct_error_codes() {
        let good = reference_bytes(&[2], &[1.0, 2.0]);
        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        let mut bad_version = good.clone();
        bad_version[4] = 9;
        let mut bad_dtype = good.clone();
        bad_dtype[20] = 7;
        let zero = reference_bytes(&[2, 0], &[]);
        let overflow = reference_bytes(&[u64::MAX, 4], &[]);
        let mut trailing = good.clone();
        trailing.push(0);
        let cases = [
            (bad_magic, 1),
            (bad_version, 2),
            (bad_dtype, 3),
            (good[..good.len() - 3].to_vec(), 4),
            (overflow, 5),
            (zero, 6),
            (trailing, 7),
        ];
        for (bytes, code) in cases {
            assert_eq!(decode_tensor(&bytes).unwrap_err().code(), code);
        }
    }

    #[test]
    fn failed_load_leaves_nothing_and_names_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("missing.a3t");
        let err = load_tensor(&path).unwrap_err();
        assert!(err.to_string().contains("missing.a3t"));
        std::fs::write(&path, b"A3TX....").unwrap();
        assert!(matches!(
            load_tensor(&path),
            Err(Error::Format(FormatError::BadMagic { .. }))
        ));
    }

    proptest! {
        #[test]
        fn round_trip_any_shape(shape in prop::collection::vec(1usize..5, 0..4), seed in any::<u64>()) {
            let t = Tensor::random_normal(&shape, 3.0, &mut ChaCha8Rng::seed_from_u64(seed));
            let back = decode_tensor(&encode_tensor(&t, Dtype::F64)).unwrap();
            prop_assert_eq!(back.shape(), t.shape());
            prop_assert_eq!(back.data(), t.data());
        }

        #[test]
        fn truncation_never_panics(cut in 0usize..60) {
            let bytes = reference_bytes(&[2, 3], &[1.0; 6]);
            let cut = cut.min(bytes.len() - 1);
            prop_assert_eq!(decode_tensor(&bytes[..cut]).unwrap_err().code(), 4);
        }
    }
}
