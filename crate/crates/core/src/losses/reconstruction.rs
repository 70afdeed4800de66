use super::LossReport;
use crate::error::{ensure_same_dims, Error, Result};
use crate::image::{ImageF, MaskF};
use crate::morphable::{CoeffVector, Vec3, COEFF_LEN};

/// Mean absolute coefficient error; subgradient `sign(ĉ − c)/N`, 0 at ties.
pub fn coef_loss(c_hat: &CoeffVector, c_gt: &CoeffVector) -> LossReport {
    let n = COEFF_LEN as f64;
    let diff: Vec<f64> = c_hat
        .as_slice()
        .iter()
        .zip(c_gt.as_slice())
        .map(|(a, b)| a - b)
        .collect();
    let value = diff.iter().map(|d| d.abs()).sum::<f64>() / n;
    let gradient = diff
        .iter()
        .map(|&d| if d == 0.0 { 0.0 } else { d.signum() / n })
        .collect();
    LossReport::new(value, gradient)
}

pub(crate) fn require_mask_sum(m: &MaskF, what: &str) -> Result<f64> {
    m.require_binary(what)?;
    let s = m.sum();
    if s == 0.0 {
        return Err(Error::Degenerate(format!("{what} is empty")));
    }
    Ok(s)
}

/// `(1/ΣM) Σ_p M(p)·‖Î(p) − I_f(p)‖₂`, the Euclidean norm taken across the
/// channels of each pixel.
pub fn masked_pixel_l2(i_hat: &ImageF, i_f: &ImageF, m: &MaskF) -> Result<LossReport> {
    i_hat.ensure_same_shape(i_f, "masked pixel L2")?;
    ensure_same_dims("masked pixel L2 mask", i_hat.dims(), m.dims())?;
    let total = require_mask_sum(m, "pixel loss mask")?;
    let c = i_hat.channels();
    let mut value = 0.0;
    let mut gradient = vec![0.0; i_hat.data().len()];
    for (p, &w) in m.data().iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let a = i_hat.pixel(p);
        let b = i_f.pixel(p);
        let dist = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        value += w * dist;
        if dist > 0.0 {
            for k in 0..c {
                gradient[p * c + k] = w * (a[k] - b[k]) / (dist * total);
            }
        }
    }
    Ok(LossReport::new(value / total, gradient))
}

/// `(1/n) Σ ω_i ‖q̂_i − q_i‖²`; gradient w.r.t. `q̂` flattened `[x0,y0,z0,x1,...]`.
pub fn landmark_loss(q_hat: &[Vec3], q: &[Vec3], weights: &[f64]) -> Result<LossReport> {
    if q_hat.len() != q.len() || q.len() != weights.len() {
        return Err(Error::DimMismatch(format!(
            "landmarks: {} predicted, {} target, {} weights",
            q_hat.len(),
            q.len(),
            weights.len()
        )));
    }
    if q.is_empty() {
        return Ok(LossReport::zero(0));
    }
    let n = q.len() as f64;
    let mut value = 0.0;
    let mut gradient = Vec::with_capacity(3 * q.len());
    for ((a, b), &w) in q_hat.iter().zip(q).zip(weights) {
        let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
        value += w * (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
        gradient.extend(d.iter().map(|di| 2.0 * w * di / n));
    }
    Ok(LossReport::new(value / n, gradient))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconstructionWeights {
    pub pix: f64,
    pub id: f64,
    pub ldmk: f64,
}

impl Default for ReconstructionWeights {
    fn default() -> Self {
        Self {
            pix: 1.92,
            id: 0.2,
            ldmk: 1.6e-3,
        }
    }
}

/// Component reports: `coef` w.r.t. the coefficients, `pix` and `id` w.r.t.
/// the rendered image, `ldmk` w.r.t. the landmarks.
#[derive(Debug, Clone)]
pub struct ReconstructionParts {
    pub coef: LossReport,
    pub pix: LossReport,
    pub id: LossReport,
    pub ldmk: LossReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionReport {
    pub value: f64,
    pub grad_coeffs: Vec<f64>,
    pub grad_image: Vec<f64>,
    pub grad_landmarks: Vec<f64>,
}

/// `L_coef + λ_pix L_pix + λ_id L_id + λ_ldmk L_ldmk`.
pub fn reconstruction_objective(
    parts: &ReconstructionParts,
    w: &ReconstructionWeights,
) -> Result<ReconstructionReport> {
    if parts.pix.gradient.len() != parts.id.gradient.len() {
        return Err(Error::DimMismatch(
            "pixel and identity gradients differ in size".into(),
        ));
    }
    let value = parts.coef.value + w.pix * parts.pix.value + w.id * parts.id.value + w.ldmk * parts.ldmk.value;
    let grad_image = parts
        .pix
        .gradient
        .iter()
        .zip(&parts.id.gradient)
        .map(|(p, i)| w.pix * p + w.id * i)
        .collect();
    Ok(ReconstructionReport {
        value,
        grad_coeffs: parts.coef.gradient.clone(),
        grad_image,
        grad_landmarks: parts.ldmk.gradient.iter().map(|g| w.ldmk * g).collect(),
    })
}
