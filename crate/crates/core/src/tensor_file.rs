//! Minimal binary tensor container.
//!
//! Layout (all little-endian):
//!
//! | bytes          | content                                  |
//! |----------------|------------------------------------------|
//! | 4              | magic `SPDK`                             |
//! | 4              | version, `u32` = 1                       |
//! | 4              | `ndim`, `u32`                            |
//! | 8 * ndim       | dims, `u64` each                         |
//! | 8 * prod(dims) | payload, `f64`, row-major (last fastest) |
//!
//! NaN in the payload marks nodata.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SPDK";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct TensorFile {
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl TensorFile {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected = element_count(&dims)?;
        if expected != data.len() {
            return Err(Error::DimensionMismatch {
                expected,
                found: data.len(),
            });
        }
        Ok(Self { dims, data })
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        let ndim = u32::try_from(self.dims.len())
            .map_err(|_| Error::Format("too many dimensions".into()))?;
        w.write_all(&ndim.to_le_bytes())?;
        for &d in &self.dims {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 8 * (self.dims.len() + self.data.len()));
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    /// Reads a whole tensor; trailing bytes after the payload are an error.
    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut head = [0u8; 12];
        read_exact(&mut r, &mut head, "header")?;
        if &head[..4] != MAGIC {
            return Err(Error::Format(format!("bad magic {:?}", &head[..4])));
        }
        let version = u32::from_le_bytes(head[4..8].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let ndim = u32::from_le_bytes(head[8..12].try_into().expect("4 bytes")) as usize;
        let mut dims = Vec::with_capacity(ndim.min(64));
        let mut buf = [0u8; 8];
        for _ in 0..ndim {
            read_exact(&mut r, &mut buf, "dims")?;
            let d = u64::from_le_bytes(buf);
            dims.push(usize::try_from(d).map_err(|_| Error::Format(format!("dimension {d} too large")))?);
        }
        let count = element_count(&dims)?;
        let mut payload = Vec::new();
        r.read_to_end(&mut payload)?;
        let expected = count
            .checked_mul(8)
            .ok_or_else(|| Error::Format("payload size overflows".into()))?;
        if payload.len() != expected {
            return Err(Error::Format(format!(
                "payload has {} bytes, dims {:?} need {expected}",
                payload.len(),
                dims
            )));
        }
        let data = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok(Self { dims, data })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::read_from(bytes)
    }

    pub fn read_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }

    pub fn write_path(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }
}

fn element_count(dims: &[usize]) -> Result<usize> {
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Format(format!("element count of {dims:?} overflows")))
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format(format!("truncated {what}")),
        _ => Error::Io(e),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_layout() {
        let t = TensorFile::new(vec![2], vec![1.0, f64::NAN]).unwrap();
        let b = t.to_bytes();
        assert_eq!(&b[..4], b"SPDK");
        assert_eq!(&b[4..8], &[1, 0, 0, 0]);
        assert_eq!(&b[8..12], &[1, 0, 0, 0]);
        assert_eq!(&b[12..20], &2u64.to_le_bytes());
        assert_eq!(&b[20..28], &1.0f64.to_le_bytes());
        assert_eq!(b.len(), 36);
        let back = TensorFile::from_bytes(&b).unwrap();
        assert!(back.data[1].is_nan());
    }

    #[test]
    fn malformed_inputs() {
        let good = TensorFile::new(vec![1, 2], vec![1.0, 2.0]).unwrap().to_bytes();
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(TensorFile::from_bytes(&bad), Err(Error::Format(_))));
        let mut bad = good.clone();
        bad[4] = 2;
        assert!(matches!(TensorFile::from_bytes(&bad), Err(Error::Format(_))));
        assert!(matches!(TensorFile::from_bytes(&good[..good.len() - 1]), Err(Error::Format(_))));
        let mut bad = good.clone();
        bad.push(0);
        assert!(matches!(TensorFile::from_bytes(&bad), Err(Error::Format(_))));
        assert!(matches!(TensorFile::from_bytes(&good[..6]), Err(Error::Format(_))));
        assert!(TensorFile::new(vec![2, 2], vec![0.0; 3]).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            dims in proptest::collection::vec(0usize..4, 0..4),
            seed in any::<u64>(),
        ) {
            let count: usize = dims.iter().product();
            let data: Vec<f64> = (0..count)
                .map(|i| f64::from_bits(crate::seed::splitmix64(seed ^ i as u64)))
                .collect();
            let t = TensorFile::new(dims, data).unwrap();
            let back = TensorFile::from_bytes(&t.to_bytes()).unwrap();
            prop_assert_eq!(&back.dims, &t.dims);
            let a: Vec<u64> = back.data.iter().map(|v| v.to_bits()).collect();
            let b: Vec<u64> = t.data.iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
        }
    }
}
