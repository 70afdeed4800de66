//! Training losses, each returning its value together with the analytic
//! gradient with respect to its primary input.
//!
//! Gradients are flat vectors in the memory layout of the differentiated
//! input (`ImageF::data`, `MaskF::data`, coefficient order, ...).

mod adversarial;
mod identity;
mod inpainting;
mod reconstruction;
mod segmentation;
mod ssim;

pub use adversarial::{
    adversarial_d_loss, adversarial_g_image, adversarial_g_loss, DiscriminatorProvider,
    LogisticDiscriminator, NullDiscriminator,
};
pub use identity::{identity_loss, EmbeddingProvider, ToyEmbedder};
pub use inpainting::{
    background_loss, evaluate_generator, generator_objective, pixel_l1_face, ssim_ohem_loss,
    tv_loss, GeneratorEvaluation, GeneratorParts, GeneratorTargets, GeneratorWeights,
};
pub use reconstruction::{
    coef_loss, landmark_loss, masked_pixel_l2, reconstruction_objective, ReconstructionParts,
    ReconstructionReport, ReconstructionWeights,
};
pub use segmentation::{bce_ohem_loss, dice_loss};
pub use ssim::{ssim_map, ssim_map_vjp, SsimParams};

/// Probability / log clamp.
pub const EPS: f64 = 1e-7;

/// Default kept fraction for online hard example mining.
pub const DEFAULT_OHEM_FRACTION: f64 = 0.25;

#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub value: f64,
    /// Same length and layout as the differentiated input.
    pub gradient: Vec<f64>,
    /// Optional per-pixel map (per-pixel BCE, SSIM map, ...).
    pub aux: Option<Vec<f64>>,
    /// Element indices kept by hard example mining, in selection order.
    pub selected: Option<Vec<usize>>,
}

impl LossReport {
    pub fn new(value: f64, gradient: Vec<f64>) -> Self {
        Self {
            value,
            gradient,
            aux: None,
            selected: None,
        }
    }

    pub fn zero(len: usize) -> Self {
        Self::new(0.0, vec![0.0; len])
    }
}

/// Number of elements OHEM keeps out of `n`: `⌈fraction · n⌉`, at least one.
/// A 1e-9 slack absorbs representation error such as `0.1 · 30`.
pub fn ohem_count(fraction: f64, n: usize) -> usize {
    if n == 0 {
        return 0;
    }
    (((fraction * n as f64) - 1e-9).ceil() as usize).clamp(1, n)
}

/// Indices of the `k` hardest candidates. With `largest_is_hardest` the
/// largest values win, otherwise the smallest; ties go to the lower index.
pub fn ohem_select(
    values: &[f64],
    candidates: impl IntoIterator<Item = usize>,
    k: usize,
    largest_is_hardest: bool,
) -> Vec<usize> {
    let mut idx: Vec<usize> = candidates.into_iter().collect();
    idx.sort_by(|&a, &b| {
        let ord = values[a].total_cmp(&values[b]);
        let ord = if largest_is_hardest { ord.reverse() } else { ord };
        ord.then(a.cmp(&b))
    });
    idx.truncate(k);
    idx
}

pub(crate) fn check_fraction(fraction: f64) -> crate::Result<()> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(crate::Error::Contract(format!(
            "OHEM fraction must be in (0, 1], got {fraction}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ohem_count_rounds_up() {
        assert_eq!(ohem_count(0.25, 4), 1);
        assert_eq!(ohem_count(0.5, 4), 2);
        assert_eq!(ohem_count(0.1, 30), 3);
        assert_eq!(ohem_count(0.26, 4), 2);
        assert_eq!(ohem_count(1.0, 7), 7);
        assert_eq!(ohem_count(1e-6, 7), 1);
    }

    #[test]
    fn ohem_ties_prefer_lower_index() {
        let v = [1.0, 3.0, 3.0, 0.5];
        assert_eq!(ohem_select(&v, 0..4, 2, true), vec![1, 2]);
        assert_eq!(ohem_select(&v, 0..4, 1, false), vec![3]);
        let w = [2.0, 2.0, 2.0];
        assert_eq!(ohem_select(&w, [2, 0, 1], 2, true), vec![0, 1]);
    }
}
