use super::{LossReport, ToyEmbedder, EPS};
use crate::error::{Error, Result};
use crate::image::ImageF;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Probability that an image is real, clamped to `[ε, 1−ε]`.
pub trait DiscriminatorProvider: Sync {
    fn probability(&self, image: &ImageF) -> Result<f64>;

    /// `∂D/∂image`; zero where the clamp is active.
    fn gradient(&self, image: &ImageF) -> Result<Vec<f64>>;
}

/// Always 0.5, zero gradient.
#[derive(Debug, Clone, Copy, Default)]
pub struct NullDiscriminator;

impl DiscriminatorProvider for NullDiscriminator {
    fn probability(&self, _image: &ImageF) -> Result<f64> {
        Ok(0.5)
    }

    fn gradient(&self, image: &ImageF) -> Result<Vec<f64>> {
        Ok(vec![0.0; image.data().len()])
    }
}

/// `σ(b + v·g(x))` with `g` the 32×32 gray downsample and `v` seeded.
#[derive(Debug, Clone)]
pub struct LogisticDiscriminator {
    weights: Vec<f64>,
    bias: f64,
}

impl LogisticDiscriminator {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = ToyEmbedder::GRID * ToyEmbedder::GRID;
        let scale = 4.0 / (n as f64).sqrt();
        let weights = (0..n)
            .map(|_| {
                let v: f64 = StandardNormal.sample(&mut rng);
                v * scale
            })
            .collect();
        Self { weights, bias: 0.0 }
    }

    fn logit(&self, image: &ImageF) -> Result<f64> {
        if image.pixel_count() == 0 {
            return Err(Error::Contract("cannot score an empty image".into()));
        }
        let g = ToyEmbedder::downsample(image);
        Ok(self.bias + self.weights.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>())
    }
}

fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

impl DiscriminatorProvider for LogisticDiscriminator {
    fn probability(&self, image: &ImageF) -> Result<f64> {
        Ok(sigmoid(self.logit(image)?).clamp(EPS, 1.0 - EPS))
    }

    fn gradient(&self, image: &ImageF) -> Result<Vec<f64>> {
        let s = sigmoid(self.logit(image)?);
        if !(EPS..=1.0 - EPS).contains(&s) {
            return Ok(vec![0.0; image.data().len()]);
        }
        let scale = s * (1.0 - s);
        let dg: Vec<f64> = self.weights.iter().map(|w| w * scale).collect();
        Ok(ToyEmbedder::downsample_adjoint(&dg, image))
    }
}

fn clamp_prob(d: f64) -> (f64, bool) {
    let c = d.clamp(EPS, 1.0 - EPS);
    (c, c == d)
}

/// `−mean(log D)`, differentiated with respect to the probabilities.
pub fn adversarial_g_loss(d_out: &[f64]) -> Result<LossReport> {
    if d_out.is_empty() {
        return Err(Error::Contract("empty discriminator batch".into()));
    }
    let n = d_out.len() as f64;
    let mut value = 0.0;
    let mut gradient = Vec::with_capacity(d_out.len());
    for &d in d_out {
        let (c, free) = clamp_prob(d);
        value -= c.ln() / n;
        gradient.push(if free { -1.0 / (n * c) } else { 0.0 });
    }
    Ok(LossReport::new(value, gradient))
}

/// `−log D(Î)`, differentiated with respect to the image.
pub fn adversarial_g_image(disc: &dyn DiscriminatorProvider, image: &ImageF) -> Result<LossReport> {
    let d = disc.probability(image)?.clamp(EPS, 1.0 - EPS);
    let gradient = disc.gradient(image)?.into_iter().map(|g| -g / d).collect();
    Ok(LossReport::new(-d.ln(), gradient))
}

/// Discriminator BCE `−(mean log D(real) + mean log(1 − D(fake)))`, to be
/// minimized. The gradient covers `real` followed by `fake`.
pub fn adversarial_d_loss(d_real: &[f64], d_fake: &[f64]) -> Result<LossReport> {
    if d_real.is_empty() || d_fake.is_empty() {
        return Err(Error::Contract("empty discriminator batch".into()));
    }
    let (nr, nf) = (d_real.len() as f64, d_fake.len() as f64);
    let mut value = 0.0;
    let mut gradient = Vec::with_capacity(d_real.len() + d_fake.len());
    for &d in d_real {
        let (c, free) = clamp_prob(d);
        value -= c.ln() / nr;
        gradient.push(if free { -1.0 / (nr * c) } else { 0.0 });
    }
    for &d in d_fake {
        let (c, free) = clamp_prob(d);
        value -= (1.0 - c).ln() / nf;
        gradient.push(if free { 1.0 / (nf * (1.0 - c)) } else { 0.0 });
    }
    Ok(LossReport::new(value, gradient))
}
