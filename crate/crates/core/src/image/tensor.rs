//! `DTN1` lossless float interchange.
//!
//! Layout: `DTN1` magic, 4 zero bytes, `H`, `W`, `C` as little-endian `u64`,
//! then `H*W*C` little-endian `f32` samples, row-major and channel-interleaved.

use std::fs;
use std::path::Path;

use super::ImageF;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"DTN1";
const HEADER_LEN: usize = 32;

/// Raw `f32` tensor as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: [usize; 3],
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: [usize; 3], data: Vec<f32>) -> Result<Self> {
        let n = element_count(dims)?;
        if n != data.len() {
            return Err(Error::DimMismatch(format!(
                "tensor {dims:?} needs {n} elements, got {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn from_image(image: &ImageF) -> Self {
        Self {
            dims: [image.height(), image.width(), image.channels()],
            data: image.data().iter().map(|&v| v as f32).collect(),
        }
    }

    /// A flat vector stored as `N x 1 x 1`.
    pub fn from_vector(values: &[f64]) -> Self {
        Self {
            dims: [values.len(), 1, 1],
            data: values.iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn to_image(&self) -> Result<ImageF> {
        ImageF::new(
            self.dims[0],
            self.dims[1],
            self.dims[2],
            self.data.iter().map(|&v| f64::from(v)).collect(),
        )
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&[0u8; 4]);
        for d in self.dims {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Format(format!(
                "truncated header: {} bytes",
                bytes.len()
            )));
        }
        if &bytes[0..4] != MAGIC {
            return Err(Error::Format("bad magic, expected DTN1".into()));
        }
        if bytes[4..8] != [0, 0, 0, 0] {
            return Err(Error::Format("reserved header bytes must be zero".into()));
        }
        let mut dims = [0usize; 3];
        for (i, d) in dims.iter_mut().enumerate() {
            let off = 8 + 8 * i;
            let raw = u64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
            *d = usize::try_from(raw)
                .map_err(|_| Error::Format(format!("dimension {raw} overflows")))?;
        }
        let n = element_count(dims)?;
        let payload = n
            .checked_mul(4)
            .ok_or_else(|| Error::Format("payload size overflows".into()))?;
        let body = &bytes[HEADER_LEN..];
        if body.len() < payload {
            return Err(Error::Format(format!(
                "truncated payload: need {payload} bytes, have {}",
                body.len()
            )));
        }
        if body.len() > payload {
            return Err(Error::Format(format!(
                "{} trailing bytes after payload",
                body.len() - payload
            )));
        }
        let data = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self { dims, data })
    }
}

fn element_count(dims: [usize; 3]) -> Result<usize> {
    dims[0]
        .checked_mul(dims[1])
        .and_then(|n| n.checked_mul(dims[2]))
        .ok_or_else(|| Error::Format(format!("dimensions {dims:?} overflow")))
}

pub fn write_tensor(tensor: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, tensor.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Tensor::from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_by_two_round_trip() {
        let t = Tensor::new([2, 2, 1], vec![0.0, 0.25, 0.5, 1.0]).unwrap();
        let bytes = t.to_bytes();
        assert_eq!(bytes.len(), 32 + 16);
        assert_eq!(Tensor::from_bytes(&bytes).unwrap(), t);
    }

    #[test]
    fn two_by_two_file_layout() {
        // 4 f32 samples = 16 payload bytes; header is 32.
        let t = Tensor::new([2, 2, 1], vec![0.0, 0.25, 0.5, 1.0]).unwrap();
        let b = t.to_bytes();
        assert_eq!(&b[0..4], b"DTN1");
        assert_eq!(&b[8..16], &2u64.to_le_bytes());
        assert_eq!(&b[24..32], &1u64.to_le_bytes());
        assert_eq!(&b[32 + 4..32 + 8], &0.25f32.to_le_bytes());
    }

    #[test]
    fn empty_tensor_is_valid() {
        let t = Tensor::new([0, 0, 1], vec![]).unwrap();
        let b = t.to_bytes();
        assert_eq!(b.len(), 32);
        assert_eq!(Tensor::from_bytes(&b).unwrap(), t);
    }

    #[test]
    fn corrupted_magic_rejected() {
        let mut b = Tensor::new([1, 1, 1], vec![0.5]).unwrap().to_bytes();
        b[0] = b'X';
        assert!(matches!(Tensor::from_bytes(&b), Err(Error::Format(_))));
    }

    #[test]
    fn truncated_and_overflowing_rejected() {
        let b = Tensor::new([1, 2, 1], vec![0.5, 0.25]).unwrap().to_bytes();
        assert!(Tensor::from_bytes(&b[..b.len() - 1]).is_err());
        assert!(Tensor::from_bytes(&b[..20]).is_err());
        let mut huge = b.clone();
        huge[8..16].copy_from_slice(&u64::MAX.to_le_bytes());
        huge[16..24].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(matches!(Tensor::from_bytes(&huge), Err(Error::Format(_))));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.dtn");
        let t = Tensor::new([1, 3, 2], vec![1.0, -2.0, 3.5, 0.0, 1e-30, 7.0]).unwrap();
        write_tensor(&t, &p).unwrap();
        assert_eq!(read_tensor(&p).unwrap(), t);
    }

    proptest! {
        #[test]
        fn write_read_bit_identical(
            h in 0usize..5, w in 0usize..5, c in 1usize..4,
            seed in proptest::collection::vec(any::<f32>().prop_filter("finite", |v| v.is_finite()), 64)
        ) {
            let n = h * w * c;
            let data: Vec<f32> = (0..n).map(|i| seed[i % seed.len()]).collect();
            let t = Tensor::new([h, w, c], data).unwrap();
            let back = Tensor::from_bytes(&t.to_bytes()).unwrap();
            prop_assert_eq!(back.dims, t.dims);
            for (a, b) in back.data.iter().zip(&t.data) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
