//! Dense image and mask containers plus the elementary operations shared by
//! the rest of the pipeline.

mod morphology;
mod noise;
mod png_io;
mod tensor;

pub use morphology::erode;
pub use noise::{gaussian_noise_fill, gaussian_samples, NoiseParams};
pub use png_io::{load_mask_png, load_png, save_mask_png, save_png};
pub use tensor::{read_tensor, write_tensor, Tensor};

use crate::error::{Error, Result};

/// Row-major, channel-interleaved image of `f64` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageF {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImageF {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 {
            return Err(Error::Contract("image must have at least one channel".into()));
        }
        let expected = height
            .checked_mul(width)
            .and_then(|n| n.checked_mul(channels))
            .ok_or_else(|| Error::Format("image dimensions overflow".into()))?;
        if data.len() != expected {
            return Err(Error::DimMismatch(format!(
                "{height}x{width}x{channels} image needs {expected} samples, got {}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("image sample {i} is {}", data[i])));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self::filled(height, width, channels, 0.0)
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Self {
        assert!(channels > 0 && value.is_finite());
        Self {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(y, x, c));
                }
            }
        }
        Self::new(height, width, channels, data).expect("from_fn produced non-finite sample")
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// `(height, width)`
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Mutable access to the samples. Callers must keep them finite.
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, y: usize, x: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[self.index(y, x, c)]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f64) {
        let i = self.index(y, x, c);
        self.data[i] = v;
    }

    pub fn pixel(&self, p: usize) -> &[f64] {
        &self.data[p * self.channels..(p + 1) * self.channels]
    }

    pub fn pixel_mut(&mut self, p: usize) -> &mut [f64] {
        &mut self.data[p * self.channels..(p + 1) * self.channels]
    }

    pub fn clamp01(&self) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        out
    }

    /// Copies the image and zeroes every pixel where `mask` is zero.
    pub fn masked(&self, mask: &MaskF) -> Result<Self> {
        crate::error::ensure_same_dims("masked image", self.dims(), mask.dims())?;
        let mut out = self.clone();
        let c = self.channels;
        for (p, m) in mask.data().iter().enumerate() {
            for v in &mut out.data[p * c..(p + 1) * c] {
                *v *= m;
            }
        }
        Ok(out)
    }

    /// Single-channel copy holding channel `c`.
    pub fn channel(&self, c: usize) -> Self {
        assert!(c < self.channels);
        let data = self
            .data
            .chunks(self.channels)
            .map(|px| px[c])
            .collect::<Vec<_>>();
        Self {
            height: self.height,
            width: self.width,
            channels: 1,
            data,
        }
    }

    pub(crate) fn ensure_same_shape(&self, other: &ImageF, what: &str) -> Result<()> {
        if self.height != other.height
            || self.width != other.width
            || self.channels != other.channels
        {
            return Err(Error::DimMismatch(format!(
                "{what}: {}x{}x{} vs {}x{}x{}",
                self.height, self.width, self.channels, other.height, other.width, other.channels
            )));
        }
        Ok(())
    }
}

/// Single-channel map in `[0,1]`. The `binary` flag asserts every element is
/// exactly 0 or 1, and is checked on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskF {
    height: usize,
    width: usize,
    data: Vec<f64>,
    binary: bool,
}

impl MaskF {
    /// Builds a soft mask. Values must lie in `[0,1]`. The binary flag is set
    /// automatically when every value is exactly 0 or 1.
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::DimMismatch(format!(
                "{height}x{width} mask needs {} samples, got {}",
                height * width,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Contract(format!(
                "mask value {} at {i} outside [0,1]",
                data[i]
            )));
        }
        let binary = data.iter().all(|&v| v == 0.0 || v == 1.0);
        Ok(Self {
            height,
            width,
            data,
            binary,
        })
    }

    pub fn from_bools(height: usize, width: usize, bits: impl IntoIterator<Item = bool>) -> Self {
        let data: Vec<f64> = bits
            .into_iter()
            .map(|b| if b { 1.0 } else { 0.0 })
            .collect();
        assert_eq!(data.len(), height * width, "mask bit count");
        Self {
            height,
            width,
            data,
            binary: true,
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(y, x));
            }
        }
        Self::from_bools(height, width, bits)
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::from_bools(height, width, std::iter::repeat(false).take(height * width))
    }

    pub fn ones(height: usize, width: usize) -> Self {
        Self::from_bools(height, width, std::iter::repeat(true).take(height * width))
    }

    /// Binarizes `values` at `threshold` (`v >= threshold` becomes 1).
    pub fn threshold(height: usize, width: usize, values: &[f64], threshold: f64) -> Result<Self> {
        if values.len() != height * width {
            return Err(Error::DimMismatch(format!(
                "{height}x{width} mask needs {} samples, got {}",
                height * width,
                values.len()
            )));
        }
        Ok(Self::from_bools(
            height,
            width,
            values.iter().map(|&v| v >= threshold),
        ))
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_binary(&self) -> bool {
        self.binary
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn is_set(&self, y: usize, x: usize) -> bool {
        self.get(y, x) != 0.0
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0.0).count()
    }

    pub fn complement(&self) -> Self {
        let data: Vec<f64> = self.data.iter().map(|v| 1.0 - v).collect();
        Self {
            height: self.height,
            width: self.width,
            data,
            binary: self.binary,
        }
    }

    /// True when every set pixel of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &MaskF) -> bool {
        self.dims() == other.dims()
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(&a, &b)| a <= b)
    }

    pub fn to_image(&self) -> ImageF {
        ImageF {
            height: self.height,
            width: self.width,
            channels: 1,
            data: self.data.clone(),
        }
    }

    pub(crate) fn require_binary(&self, what: &str) -> Result<()> {
        if !self.binary {
            return Err(Error::Contract(format!("{what} must be a binary mask")));
        }
        Ok(())
    }
}
