use super::LossReport;
use crate::error::{Error, Result};
use crate::image::ImageF;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Face-recognition style feature extractor with unit-norm outputs.
pub trait EmbeddingProvider: Sync {
    fn dim(&self) -> usize;

    /// Unit-norm embedding of `image`.
    fn embed(&self, image: &ImageF) -> Result<Vec<f64>>;

    /// Gradient of `cos(F(image), reference)` with respect to `image`, where
    /// `reference` is a unit vector.
    fn cosine_gradient(&self, image: &ImageF, reference: &[f64]) -> Result<Vec<f64>>;
}

/// Fixed random linear projection of the 32×32 gray downsample, normalized.
#[derive(Debug, Clone)]
pub struct ToyEmbedder {
    projection: Vec<f64>,
    seed: u64,
}

impl ToyEmbedder {
    pub const DIM: usize = 128;
    pub const GRID: usize = 32;

    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = Self::GRID * Self::GRID;
        let scale = 1.0 / (n as f64).sqrt();
        let projection = (0..Self::DIM * n)
            .map(|_| {
                let v: f64 = StandardNormal.sample(&mut rng);
                v * scale
            })
            .collect();
        Self { projection, seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Row-major `DIM × GRID²` projection matrix.
    pub fn projection(&self) -> &[f64] {
        &self.projection
    }

    /// Source row/column span of grid cell `i` along an axis of length `n`.
    pub fn cell_span(i: usize, n: usize) -> (usize, usize) {
        let lo = i * n / Self::GRID;
        let hi = ((i + 1) * n / Self::GRID).max(lo + 1).min(n);
        (lo, hi)
    }

    /// Box-averaged gray image on the 32×32 grid (channel mean).
    pub fn downsample(image: &ImageF) -> Vec<f64> {
        let (h, w, c) = (image.height(), image.width(), image.channels());
        let g = Self::GRID;
        let mut out = vec![0.0; g * g];
        for i in 0..g {
            let (y0, y1) = Self::cell_span(i, h);
            for j in 0..g {
                let (x0, x1) = Self::cell_span(j, w);
                let mut acc = 0.0;
                for y in y0..y1 {
                    for x in x0..x1 {
                        acc += image.pixel(y * w + x).iter().sum::<f64>();
                    }
                }
                out[i * g + j] = acc / ((y1 - y0) * (x1 - x0) * c) as f64;
            }
        }
        out
    }

    fn raw(&self, image: &ImageF) -> Result<(Vec<f64>, f64)> {
        if image.pixel_count() == 0 {
            return Err(Error::Contract("cannot embed an empty image".into()));
        }
        let g = Self::downsample(image);
        let n = g.len();
        let z: Vec<f64> = self
            .projection
            .chunks_exact(n)
            .map(|row| row.iter().zip(&g).map(|(a, b)| a * b).sum())
            .collect();
        let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 1e-300) {
            return Err(Error::Contract("embedding has zero norm".into()));
        }
        Ok((z, norm))
    }
}

impl EmbeddingProvider for ToyEmbedder {
    fn dim(&self) -> usize {
        Self::DIM
    }

    fn embed(&self, image: &ImageF) -> Result<Vec<f64>> {
        let (z, norm) = self.raw(image)?;
        Ok(z.into_iter().map(|v| v / norm).collect())
    }

    fn cosine_gradient(&self, image: &ImageF, reference: &[f64]) -> Result<Vec<f64>> {
        if reference.len() != Self::DIM {
            return Err(Error::DimMismatch(format!(
                "reference embedding has {} entries, expected {}",
                reference.len(),
                Self::DIM
            )));
        }
        let (z, norm) = self.raw(image)?;
        let cos: f64 = z.iter().zip(reference).map(|(a, b)| a * b).sum::<f64>() / norm;
        // d cos / dz = (r − cos·e) / ‖z‖
        let dz: Vec<f64> = z
            .iter()
            .zip(reference)
            .map(|(zi, ri)| (ri - cos * zi / norm) / norm)
            .collect();
        let n = Self::GRID * Self::GRID;
        let mut dg = vec![0.0; n];
        for (row, d) in self.projection.chunks_exact(n).zip(&dz) {
            for (acc, p) in dg.iter_mut().zip(row) {
                *acc += d * p;
            }
        }
        Ok(Self::downsample_adjoint(&dg, image))
    }
}

impl ToyEmbedder {
    /// Adjoint of [`ToyEmbedder::downsample`] for an image shaped like `like`.
    pub(crate) fn downsample_adjoint(dg: &[f64], like: &ImageF) -> Vec<f64> {
        let (h, w, c) = (like.height(), like.width(), like.channels());
        let mut grad = vec![0.0; like.data().len()];
        let g = Self::GRID;
        for i in 0..g {
            let (y0, y1) = Self::cell_span(i, h);
            for j in 0..g {
                let (x0, x1) = Self::cell_span(j, w);
                let share = dg[i * g + j] / ((y1 - y0) * (x1 - x0) * c) as f64;
                for y in y0..y1 {
                    for x in x0..x1 {
                        for k in 0..c {
                            grad[(y * w + x) * c + k] += share;
                        }
                    }
                }
            }
        }
        grad
    }
}

/// `1 − cos(F(Î), F(I_f))`, differentiated with respect to `Î`.
pub fn identity_loss(
    i_hat: &ImageF,
    i_f: &ImageF,
    embed: &dyn EmbeddingProvider,
) -> Result<LossReport> {
    i_hat.ensure_same_shape(i_f, "identity loss")?;
    let a = embed.embed(i_hat)?;
    let b = embed.embed(i_f)?;
    let cos: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
    let gradient = embed
        .cosine_gradient(i_hat, &b)?
        .into_iter()
        .map(|g| -g)
        .collect();
    Ok(LossReport::new(1.0 - cos, gradient))
}
