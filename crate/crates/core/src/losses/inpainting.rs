use super::reconstruction::require_mask_sum;
use super::{
    adversarial_g_image, check_fraction, identity_loss, ohem_count, ohem_select, ssim_map,
    ssim_map_vjp, DiscriminatorProvider, EmbeddingProvider, LossReport, SsimParams,
};
use crate::error::{ensure_same_dims, Error, Result};
use crate::image::{ImageF, MaskF};

fn masked_l1(i_hat: &ImageF, target: &ImageF, m: &MaskF, what: &str) -> Result<LossReport> {
    i_hat.ensure_same_shape(target, what)?;
    ensure_same_dims(what, i_hat.dims(), m.dims())?;
    let total = require_mask_sum(m, what)?;
    let c = i_hat.channels();
    let mut value = 0.0;
    let mut gradient = vec![0.0; i_hat.data().len()];
    for (p, &w) in m.data().iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        for k in 0..c {
            let d = i_hat.data()[p * c + k] - target.data()[p * c + k];
            value += w * d.abs();
            if d != 0.0 {
                gradient[p * c + k] = w * d.signum() / total;
            }
        }
    }
    Ok(LossReport::new(value / total, gradient))
}

/// `(1/ΣM) Σ M⊙|Î − I_f|`, summed over channels.
pub fn pixel_l1_face(i_hat: &ImageF, i_f: &ImageF, m: &MaskF) -> Result<LossReport> {
    masked_l1(i_hat, i_f, m, "face pixel loss")
}

/// `(1/ΣM_bg) Σ M_bg⊙|Î − I|`, summed over channels.
pub fn background_loss(i_hat: &ImageF, i: &ImageF, m_bg: &MaskF) -> Result<LossReport> {
    masked_l1(i_hat, i, m_bg, "background loss")
}

/// Squared forward differences over all channels, divided by `W·H·C`.
pub fn tv_loss(i_hat: &ImageF) -> Result<LossReport> {
    let (h, w, c) = (i_hat.height(), i_hat.width(), i_hat.channels());
    if h * w < 2 || c == 0 {
        return Err(Error::Degenerate(format!(
            "total variation needs at least two pixels, got {h}x{w}"
        )));
    }
    let n = (h * w * c) as f64;
    let data = i_hat.data();
    let mut value = 0.0;
    let mut gradient = vec![0.0; data.len()];
    let mut edge = |p: usize, q: usize| {
        let d = data[q] - data[p];
        value += d * d;
        gradient[q] += 2.0 * d / n;
        gradient[p] -= 2.0 * d / n;
    };
    for y in 0..h {
        for x in 0..w {
            for k in 0..c {
                let p = (y * w + x) * c + k;
                if x + 1 < w {
                    edge(p, p + c);
                }
                if y + 1 < h {
                    edge(p, p + w * c);
                }
            }
        }
    }
    Ok(LossReport::new(value / n, gradient))
}

/// Negated mean SSIM between `Î⊙M̄` and `I_p⊙M̄` over the `⌈fraction·ΣM̄⌉`
/// masked pixels with the lowest similarity. `aux` holds the SSIM map.
pub fn ssim_ohem_loss(i_hat: &ImageF, i_p: &ImageF, m_bar: &MaskF, fraction: f64) -> Result<LossReport> {
    i_hat.ensure_same_shape(i_p, "SSIM loss")?;
    ensure_same_dims("SSIM loss mask", i_hat.dims(), m_bar.dims())?;
    check_fraction(fraction)?;
    require_mask_sum(m_bar, "eroded face mask")?;
    let params = SsimParams::default();
    let x = i_hat.masked(m_bar)?;
    let y = i_p.masked(m_bar)?;
    let map = ssim_map(&x, &y, &params)?.into_data();
    let candidates: Vec<usize> = (0..map.len()).filter(|&p| m_bar.data()[p] != 0.0).collect();
    let k = ohem_count(fraction, candidates.len());
    let selected = ohem_select(&map, candidates, k, false);
    let value = -selected.iter().map(|&p| map[p]).sum::<f64>() / k as f64;
    let mut weights = vec![0.0; map.len()];
    for &p in &selected {
        weights[p] = -1.0 / k as f64;
    }
    let mut gradient = ssim_map_vjp(&x, &y, &weights, &params)?;
    let c = i_hat.channels();
    for (p, &m) in m_bar.data().iter().enumerate() {
        if m == 0.0 {
            gradient[p * c..(p + 1) * c].iter_mut().for_each(|g| *g = 0.0);
        }
    }
    Ok(LossReport {
        value,
        gradient,
        aux: Some(map),
        selected: Some(selected),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GeneratorWeights {
    pub pix: f64,
    pub sm: f64,
    pub bg: f64,
    pub id: f64,
    pub tv: f64,
    pub adv: f64,
}

impl Default for GeneratorWeights {
    fn default() -> Self {
        Self {
            pix: 10.0,
            sm: 5.0,
            bg: 5.0,
            id: 0.2,
            tv: 0.1,
            adv: 0.01,
        }
    }
}

/// Component reports, every gradient taken with respect to the same `Î`.
#[derive(Debug, Clone)]
pub struct GeneratorParts {
    pub pix: LossReport,
    pub sm: LossReport,
    pub bg: LossReport,
    pub id: LossReport,
    pub tv: LossReport,
    pub adv: LossReport,
}

impl GeneratorParts {
    pub fn named(&self) -> [(&'static str, &LossReport); 6] {
        [
            ("pix", &self.pix),
            ("sm", &self.sm),
            ("bg", &self.bg),
            ("id", &self.id),
            ("tv", &self.tv),
            ("adv", &self.adv),
        ]
    }
}

/// `λ_pix L_pix + λ_sm L_sm + λ_bg L_bg + λ_id L_id + λ_tv L_tv + λ_adv L_adv`.
pub fn generator_objective(parts: &GeneratorParts, w: &GeneratorWeights) -> Result<LossReport> {
    let terms = [
        (w.pix, &parts.pix),
        (w.sm, &parts.sm),
        (w.bg, &parts.bg),
        (w.id, &parts.id),
        (w.tv, &parts.tv),
        (w.adv, &parts.adv),
    ];
    let n = parts.pix.gradient.len();
    if terms.iter().any(|(_, r)| r.gradient.len() != n) {
        return Err(Error::DimMismatch("generator loss gradients differ in size".into()));
    }
    let mut value = 0.0;
    let mut gradient = vec![0.0; n];
    for (lambda, r) in terms {
        value += lambda * r.value;
        for (g, d) in gradient.iter_mut().zip(&r.gradient) {
            *g += lambda * d;
        }
    }
    Ok(LossReport::new(value, gradient))
}

/// Fixed inputs of the generator objective.
#[derive(Debug, Clone)]
pub struct GeneratorTargets {
    /// Input image `I`.
    pub image: ImageF,
    /// Visible face `I_f = I⊙M_f`.
    pub i_f: ImageF,
    /// Poisson blending target `I_p`.
    pub i_p: ImageF,
    /// Face supervision mask for the pixel term.
    pub m_sup: MaskF,
    /// Eroded render mask `M̄_m` for the SSIM term.
    pub m_bar: MaskF,
    /// Eroded background mask `M_bg`.
    pub m_bg: MaskF,
    /// Region of `Î` seen by the identity embedder (the visible face).
    pub m_id: MaskF,
    pub ohem_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct GeneratorEvaluation {
    pub parts: GeneratorParts,
    pub total: LossReport,
}

/// Evaluates every component of the generator objective at `Î`.
pub fn evaluate_generator(
    targets: &GeneratorTargets,
    i_hat: &ImageF,
    embed: &dyn EmbeddingProvider,
    disc: &dyn DiscriminatorProvider,
    weights: &GeneratorWeights,
) -> Result<GeneratorEvaluation> {
    let pix = pixel_l1_face(i_hat, &targets.i_f, &targets.m_sup)?;
    let sm = ssim_ohem_loss(i_hat, &targets.i_p, &targets.m_bar, targets.ohem_fraction)?;
    let bg = background_loss(i_hat, &targets.image, &targets.m_bg)?;
    let mut id = identity_loss(&i_hat.masked(&targets.m_id)?, &targets.i_f, embed)?;
    let c = i_hat.channels();
    for (p, &m) in targets.m_id.data().iter().enumerate() {
        id.gradient[p * c..(p + 1) * c].iter_mut().for_each(|g| *g *= m);
    }
    let tv = tv_loss(i_hat)?;
    let adv = adversarial_g_image(disc, i_hat)?;
    let parts = GeneratorParts {
        pix,
        sm,
        bg,
        id,
        tv,
        adv,
    };
    let total = generator_objective(&parts, weights)?;
    Ok(GeneratorEvaluation { parts, total })
}
