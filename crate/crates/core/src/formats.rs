//! Little-endian binary containers for signals (`.sphs`), spectral
//! coefficients (`SPHC` variant of the signal container) and label maps
//! (`.sphl`).
//!
//! ```text
//! SPHS | u32 version=1 | u32 B | u32 C | u8 dtype | C x 2B x 2B samples
//! SPHC | u32 version=1 | u32 B | u32 C | u8 dtype | C x B^2 entries
//! SPHL | u32 version=1 | u32 B | u32 num_classes | 2B x 2B u16 labels
//! ```

use std::fs;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, FormatError, Result};
use crate::harmonics::SpectralCoeffs;
use crate::sphgrid::{make_grid, FeatureMap, LabelMap};

pub const FORMAT_VERSION: u32 = 1;
pub const SIGNAL_MAGIC: &[u8; 4] = b"SPHS";
pub const COEFFS_MAGIC: &[u8; 4] = b"SPHC";
pub const LABELS_MAGIC: &[u8; 4] = b"SPHL";

/// Largest bandlimit accepted from a file header.
pub const MAX_FILE_BANDLIMIT: u32 = 1 << 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn code(self) -> u8 {
        match self {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
        }
    }

    pub fn from_code(code: u8) -> Result<Self, FormatError> {
        match code {
            0 => Ok(Dtype::F32),
            1 => Ok(Dtype::F64),
            other => Err(FormatError::UnknownDtype(other)),
        }
    }

    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

/// Cursor over a byte slice that reports truncation instead of panicking.
pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        let available = self.bytes.len() - self.pos;
        if n > available {
            return Err(FormatError::Truncated {
                needed: n,
                available,
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub(crate) fn magic(&mut self, expected: &[u8; 4]) -> Result<(), FormatError> {
        let found = self.take(4)?;
        if found != expected {
            return Err(FormatError::BadMagic {
                expected: String::from_utf8_lossy(expected).into_owned(),
                found: String::from_utf8_lossy(found).into_owned(),
            });
        }
        Ok(())
    }

    pub(crate) fn u8(&mut self) -> Result<u8, FormatError> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u16(&mut self) -> Result<u16, FormatError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub(crate) fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn version(&mut self) -> Result<(), FormatError> {
        let found = self.u32()?;
        if found != FORMAT_VERSION {
            return Err(FormatError::VersionMismatch {
                expected: FORMAT_VERSION,
                found,
            });
        }
        Ok(())
    }

    pub(crate) fn floats(&mut self, dtype: Dtype, count: usize) -> Result<Vec<f64>, FormatError> {
        let len = count
            .checked_mul(dtype.size())
            .ok_or_else(|| FormatError::DimensionOverflow(format!("{count} values")))?;
        let raw = self.take(len)?;
        Ok(match dtype {
            Dtype::F32 => raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect(),
            Dtype::F64 => raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        })
    }

    pub(crate) fn finish(&self) -> Result<(), FormatError> {
        if self.pos != self.bytes.len() {
            return Err(FormatError::Invalid(format!(
                "{} trailing bytes",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

pub(crate) fn put_floats(out: &mut Vec<u8>, values: &[f64], dtype: Dtype) {
    match dtype {
        Dtype::F32 => values
            .iter()
            .for_each(|v| out.extend_from_slice(&(*v as f32).to_le_bytes())),
        Dtype::F64 => values
            .iter()
            .for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
    }
}

fn header_bandlimit(b: u32) -> Result<usize, FormatError> {
    if b == 0 || b > MAX_FILE_BANDLIMIT {
        return Err(FormatError::DimensionOverflow(format!(
            "bandlimit {b} outside 1..={MAX_FILE_BANDLIMIT}"
        )));
    }
    Ok(b as usize)
}

fn checked_count(channels: u32, per_channel: usize) -> Result<usize, FormatError> {
    (channels as usize)
        .checked_mul(per_channel)
        .filter(|n| *n <= isize::MAX as usize / 8)
        .ok_or_else(|| FormatError::DimensionOverflow(format!("{channels} x {per_channel} values")))
}

pub fn encode_signal(map: &FeatureMap, dtype: Dtype) -> Vec<u8> {
    let mut out = Vec::with_capacity(17 + map.values().len() * dtype.size());
    out.extend_from_slice(SIGNAL_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(map.bandlimit() as u32).to_le_bytes());
    out.extend_from_slice(&(map.channels() as u32).to_le_bytes());
    out.push(dtype.code());
    put_floats(&mut out, map.values(), dtype);
    out
}

pub fn decode_signal(bytes: &[u8]) -> Result<(FeatureMap, Dtype)> {
    let mut r = Reader::new(bytes);
    r.magic(SIGNAL_MAGIC)?;
    r.version()?;
    let b = header_bandlimit(r.u32()?)?;
    let channels = r.u32()?;
    if channels == 0 {
        return Err(FormatError::Invalid("zero channels".into()).into());
    }
    let dtype = Dtype::from_code(r.u8()?)?;
    let count = checked_count(channels, 4 * b * b)?;
    let values = r.floats(dtype, count)?;
    r.finish()?;
    let map = FeatureMap::new(make_grid(b)?, channels as usize, values)?;
    Ok((map, dtype))
}

pub fn write_signal(map: &FeatureMap, dtype: Dtype, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_signal(map, dtype)).map_err(|e| Error::io(path, e))
}

pub fn read_signal(path: impl AsRef<Path>) -> Result<FeatureMap> {
    read_signal_with_dtype(path).map(|(m, _)| m)
}

pub fn read_signal_with_dtype(path: impl AsRef<Path>) -> Result<(FeatureMap, Dtype)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_signal(&bytes)
}

pub fn encode_labels(map: &LabelMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 2 * map.labels().len());
    out.extend_from_slice(LABELS_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(map.bandlimit() as u32).to_le_bytes());
    out.extend_from_slice(&(map.num_classes() as u32).to_le_bytes());
    for l in map.labels() {
        out.extend_from_slice(&l.to_le_bytes());
    }
    out
}

pub fn decode_labels(bytes: &[u8]) -> Result<LabelMap> {
    let mut r = Reader::new(bytes);
    r.magic(LABELS_MAGIC)?;
    r.version()?;
    let b = header_bandlimit(r.u32()?)?;
    let num_classes = r.u32()?;
    if num_classes == 0 || num_classes > 1 << 16 {
        return Err(FormatError::DimensionOverflow(format!("{num_classes} classes")).into());
    }
    let count = 4 * b * b;
    let raw = r.take(count * 2)?;
    r.finish()?;
    let labels = raw
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]))
        .collect();
    LabelMap::new(make_grid(b)?, num_classes as usize, labels)
        .map_err(|e| FormatError::Invalid(e.to_string()).into())
}

pub fn write_labels(map: &LabelMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_labels(map)).map_err(|e| Error::io(path, e))
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<LabelMap> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_labels(&bytes)
}

/// Coefficient dump: two planes (real, imaginary) of `B^2` degree-major entries.
pub fn encode_coeffs(c: &SpectralCoeffs, dtype: Dtype) -> Vec<u8> {
    let mut out = Vec::with_capacity(17 + 2 * c.as_slice().len() * dtype.size());
    out.extend_from_slice(COEFFS_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(c.bandlimit() as u32).to_le_bytes());
    out.extend_from_slice(&2u32.to_le_bytes());
    out.push(dtype.code());
    let re: Vec<f64> = c.as_slice().iter().map(|z| z.re).collect();
    let im: Vec<f64> = c.as_slice().iter().map(|z| z.im).collect();
    put_floats(&mut out, &re, dtype);
    put_floats(&mut out, &im, dtype);
    out
}

pub fn decode_coeffs(bytes: &[u8]) -> Result<SpectralCoeffs> {
    let mut r = Reader::new(bytes);
    r.magic(COEFFS_MAGIC)?;
    r.version()?;
    let b = header_bandlimit(r.u32()?)?;
    let planes = r.u32()?;
    if planes != 2 {
        return Err(FormatError::Invalid(format!("coefficient dump with {planes} planes")).into());
    }
    let dtype = Dtype::from_code(r.u8()?)?;
    let re = r.floats(dtype, b * b)?;
    let im = r.floats(dtype, b * b)?;
    r.finish()?;
    let data = re
        .into_iter()
        .zip(im)
        .map(|(a, b)| Complex64::new(a, b))
        .collect();
    SpectralCoeffs::from_vec(b, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_map(b: usize, c: usize, seed: u64) -> FeatureMap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = make_grid(b).unwrap();
        let v = (0..c * g.len()).map(|_| rng.random_range(-3.0..3.0)).collect();
        FeatureMap::new(g, c, v).unwrap()
    }

    #[test]
    fn signal_round_trip_is_bit_exact() {
        let m = random_map(4, 3, 1);
        let bytes = encode_signal(&m, Dtype::F64);
        let (back, dtype) = decode_signal(&bytes).unwrap();
        assert_eq!(dtype, Dtype::F64);
        assert_eq!(back, m);
        assert_eq!(encode_signal(&back, Dtype::F64), bytes);

        let bytes32 = encode_signal(&m, Dtype::F32);
        let (back32, _) = decode_signal(&bytes32).unwrap();
        assert_eq!(encode_signal(&back32, Dtype::F32), bytes32);
    }

    #[test]
    fn header_layout_is_little_endian() {
        let m = random_map(2, 1, 2);
        let bytes = encode_signal(&m, Dtype::F32);
        assert_eq!(&bytes[0..4], b"SPHS");
        assert_eq!(&bytes[4..8], &[1, 0, 0, 0]);
        assert_eq!(&bytes[8..12], &[2, 0, 0, 0]);
        assert_eq!(&bytes[12..16], &[1, 0, 0, 0]);
        assert_eq!(bytes[16], 0);
        assert_eq!(bytes.len(), 17 + 16 * 4);
    }

    #[test]
    fn distinct_decode_errors() {
        let m = random_map(4, 3, 3);
        let mut bytes = encode_signal(&m, Dtype::F64);

        let mut bad = bytes.clone();
        bad[0..4].copy_from_slice(b"XXXX");
        assert!(matches!(
            decode_signal(&bad),
            Err(Error::Format(FormatError::BadMagic { .. }))
        ));

        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(matches!(
            decode_signal(&bad),
            Err(Error::Format(FormatError::VersionMismatch { found: 2, .. }))
        ));

        let mut bad = bytes.clone();
        bad[8..12].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(matches!(
            decode_signal(&bad),
            Err(Error::Format(FormatError::DimensionOverflow(_)))
        ));

        bytes.truncate(bytes.len() - 5);
        assert!(matches!(
            decode_signal(&bytes),
            Err(Error::Format(FormatError::Truncated { .. }))
        ));
    }

    #[test]
    fn labels_round_trip_and_validate() {
        let g = make_grid(4).unwrap();
        let labels: Vec<u16> = (0..g.len()).map(|i| (i % 5) as u16).collect();
        let map = LabelMap::new(g, 5, labels).unwrap();
        let bytes = encode_labels(&map);
        let back = decode_labels(&bytes).unwrap();
        assert_eq!(back, map);
        assert_eq!(encode_labels(&back), bytes);

        let mut bad = bytes.clone();
        bad[12..16].copy_from_slice(&3u32.to_le_bytes());
        assert!(decode_labels(&bad).is_err());
        assert!(matches!(
            decode_labels(&bytes[..bytes.len() - 1]),
            Err(Error::Format(FormatError::Truncated { .. }))
        ));
    }

    #[test]
    fn coefficient_dump_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let data = (0..25)
            .map(|_| Complex64::new(rng.random(), rng.random()))
            .collect();
        let c = SpectralCoeffs::from_vec(5, data).unwrap();
        let bytes = encode_coeffs(&c, Dtype::F64);
        assert_eq!(&bytes[0..4], b"SPHC");
        let back = decode_coeffs(&bytes).unwrap();
        assert_eq!(back, c);
        assert!(decode_signal(&bytes).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = random_map(3, 2, 4);
        let p = dir.path().join("x.sphs");
        write_signal(&m, Dtype::F64, &p).unwrap();
        assert_eq!(read_signal(&p).unwrap(), m);
        assert!(matches!(
            read_signal(dir.path().join("missing.sphs")),
            Err(Error::Io { .. })
        ));
    }
}
