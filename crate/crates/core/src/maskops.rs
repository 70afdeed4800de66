//! Mask algebra relating the rendered-face mask `M_m`, the visible-face mask
//! `M_f` and the masks derived from them.

use crate::error::{ensure_same_dims, Error, Result};
use crate::image::{erode, MaskF};

/// Default erosion radius (pixels) for the eroded render mask and the
/// background mask.
pub const DEFAULT_EROSION_RADIUS: usize = 3;

fn check_pair(m_m: &MaskF, m_f: &MaskF, what: &str) -> Result<()> {
    ensure_same_dims(what, m_m.dims(), m_f.dims())?;
    m_m.require_binary("render mask")?;
    m_f.require_binary("face mask")?;
    Ok(())
}

/// `M_o = M_m − M_m ⊙ M_f`: rendered-face pixels the segmentation did not
/// see as face.
pub fn occlusion_mask(m_m: &MaskF, m_f: &MaskF) -> Result<MaskF> {
    check_pair(m_m, m_f, "occlusion mask")?;
    let data: Vec<f64> = m_m
        .data()
        .iter()
        .zip(m_f.data())
        .map(|(&m, &f)| m - m * f)
        .collect();
    MaskF::new(m_m.height(), m_m.width(), data)
}

/// `M = M_m ⊙ M_f`, the region where both the render and the visible face
/// agree.
pub fn supervision_mask(m_m: &MaskF, m_f: &MaskF) -> Result<MaskF> {
    check_pair(m_m, m_f, "supervision mask")?;
    let data: Vec<f64> = m_m
        .data()
        .iter()
        .zip(m_f.data())
        .map(|(&m, &f)| m * f)
        .collect();
    MaskF::new(m_m.height(), m_m.width(), data)
}

/// `erode(1 − M_m, radius)`.
pub fn background_mask(m_m: &MaskF, erosion_radius: usize) -> Result<MaskF> {
    m_m.require_binary("render mask")?;
    erode(&m_m.complement(), erosion_radius)
}

/// `Σ(M_m ⊙ M_f) / ΣM_m`, the visible fraction of the rendered face.
pub fn overlap_rate(m_m: &MaskF, m_f: &MaskF) -> Result<f64> {
    let overlap = supervision_mask(m_m, m_f)?.sum();
    let total = m_m.sum();
    if total == 0.0 {
        return Err(Error::Degenerate("render mask is empty".into()));
    }
    Ok(overlap / total)
}
