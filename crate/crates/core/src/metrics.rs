//! Region-restricted evaluation metrics in the layout of the comparison table.

use crate::error::{ensure_same_dims, Error, Result};
use crate::image::{ImageF, MaskF};
use crate::losses::{ssim_map, EmbeddingProvider, SsimParams};

/// Reported PSNR when the region is reproduced exactly.
pub const PSNR_CAP: f64 = 99.0;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct RegionMetrics {
    pub l1: f64,
    pub ssim: f64,
    pub psnr: f64,
    pub id: f64,
}

impl RegionMetrics {
    pub const HEADER: &'static str = "Method\tL1\tSSIM\tPSNR\tID";

    pub fn to_row(&self, method: &str) -> String {
        format!(
            "{method}\t{:.3}\t{:.3}\t{:.3}\t{:.3}",
            self.l1, self.ssim, self.psnr, self.id
        )
    }
}

/// `10·log10(1/mse)`, capped at [`PSNR_CAP`].
pub fn psnr(mse: f64) -> f64 {
    if mse <= 0.0 {
        return PSNR_CAP;
    }
    (10.0 * (1.0 / mse).log10()).min(PSNR_CAP)
}

/// L1, SSIM and PSNR restricted to `region`; ID is the embedding cosine of
/// the full images.
pub fn region_metrics(
    i_hat: &ImageF,
    i_gt: &ImageF,
    region: &MaskF,
    embed: &dyn EmbeddingProvider,
) -> Result<RegionMetrics> {
    i_hat.ensure_same_shape(i_gt, "metrics")?;
    ensure_same_dims("metrics region", i_hat.dims(), region.dims())?;
    region.require_binary("metrics region")?;
    let count = region.count();
    if count == 0 {
        return Err(Error::Degenerate("metrics region is empty".into()));
    }
    let c = i_hat.channels();
    let (mut abs, mut sq) = (0.0, 0.0);
    for p in (0..region.len()).filter(|&p| region.data()[p] == 1.0) {
        for (a, b) in i_hat.pixel(p).iter().zip(i_gt.pixel(p)) {
            abs += (a - b).abs();
            sq += (a - b) * (a - b);
        }
    }
    let n = (count * c) as f64;
    let map = ssim_map(i_hat, i_gt, &SsimParams::default())?;
    let ssim = map
        .data()
        .iter()
        .zip(region.data())
        .filter(|(_, &m)| m == 1.0)
        .map(|(v, _)| v)
        .sum::<f64>()
        / count as f64;
    let a = embed.embed(i_hat)?;
    let b = embed.embed(i_gt)?;
    Ok(RegionMetrics {
        l1: abs / n,
        ssim,
        psnr: psnr(sq / n),
        id: a.iter().zip(&b).map(|(x, y)| x * y).sum(),
    })
}
