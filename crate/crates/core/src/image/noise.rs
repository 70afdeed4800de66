use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{ImageF, MaskF};
use crate::error::{ensure_same_dims, Error, Result};

/// Gaussian fill parameters. The defaults center the noise at mid-gray so
/// clamping rarely triggers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseParams {
    pub mean: f64,
    pub stddev: f64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self {
            mean: 0.5,
            stddev: 0.2,
        }
    }
}

/// `n` unclamped draws from `N(mean, stddev²)`, in the exact order
/// [`gaussian_noise_fill`] consumes them.
pub fn gaussian_samples(n: usize, params: NoiseParams, seed: u64) -> Result<Vec<f64>> {
    let dist = Normal::new(params.mean, params.stddev)
        .map_err(|e| Error::Contract(format!("noise parameters {params:?}: {e}")))?;
    if !params.mean.is_finite() {
        return Err(Error::Contract("noise mean must be finite".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n).map(|_| dist.sample(&mut rng)).collect())
}

/// Replaces every sample under `region` with clamped Gaussian noise.
/// Samples are drawn in row-major, channel-interleaved order over the region
/// pixels only.
pub fn gaussian_noise_fill(
    image: &ImageF,
    region: &MaskF,
    params: NoiseParams,
    seed: u64,
) -> Result<ImageF> {
    ensure_same_dims("noise region", image.dims(), region.dims())?;
    region.require_binary("noise region")?;
    let c = image.channels();
    let noise = gaussian_samples(region.count() * c, params, seed)?;
    let mut out = image.clone();
    let mut next = noise.into_iter();
    for (p, &m) in region.data().iter().enumerate() {
        if m != 0.0 {
            for v in out.pixel_mut(p) {
                *v = next.next().unwrap().clamp(0.0, 1.0);
            }
        }
    }
    Ok(out)
}
