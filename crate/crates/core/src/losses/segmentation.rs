use super::{check_fraction, ohem_count, ohem_select, LossReport, EPS};
use crate::error::{ensure_same_dims, Error, Result};
use crate::image::MaskF;

/// `1 − 2Σ(p⊙g) / (Σp + Σg)`.
pub fn dice_loss(pred: &MaskF, gt: &MaskF) -> Result<LossReport> {
    ensure_same_dims("dice", pred.dims(), gt.dims())?;
    let s: f64 = pred.sum() + gt.sum();
    if s == 0.0 {
        return Err(Error::Degenerate(
            "dice loss undefined when both masks are empty".into(),
        ));
    }
    let inter: f64 = pred.data().iter().zip(gt.data()).map(|(p, g)| p * g).sum();
    let value = 1.0 - 2.0 * inter / s;
    let gradient = gt
        .data()
        .iter()
        .map(|&g| -2.0 * (g * s - inter) / (s * s))
        .collect();
    Ok(LossReport::new(value, gradient))
}

/// Per-pixel binary cross-entropy averaged over the `⌈fraction·WH⌉` largest
/// terms. Predictions are clamped to `[ε, 1−ε]`; the gradient is zero where
/// the clamp is active and outside the kept set.
pub fn bce_ohem_loss(pred: &MaskF, gt: &MaskF, fraction: f64) -> Result<LossReport> {
    ensure_same_dims("bce", pred.dims(), gt.dims())?;
    check_fraction(fraction)?;
    let n = pred.len();
    if n == 0 {
        return Err(Error::Degenerate("empty mask".into()));
    }
    let clamped: Vec<f64> = pred.data().iter().map(|p| p.clamp(EPS, 1.0 - EPS)).collect();
    let per_pixel: Vec<f64> = clamped
        .iter()
        .zip(gt.data())
        .map(|(&p, &g)| -(g * p.ln() + (1.0 - g) * (1.0 - p).ln()))
        .collect();
    let k = ohem_count(fraction, n);
    let selected = ohem_select(&per_pixel, 0..n, k, true);
    let value = selected.iter().map(|&i| per_pixel[i]).sum::<f64>() / k as f64;
    let mut gradient = vec![0.0; n];
    for &i in &selected {
        let raw = pred.data()[i];
        if raw < EPS || raw > 1.0 - EPS {
            continue;
        }
        let (p, g) = (clamped[i], gt.data()[i]);
        gradient[i] = -(g / p - (1.0 - g) / (1.0 - p)) / k as f64;
    }
    Ok(LossReport {
        value,
        gradient,
        aux: Some(per_pixel),
        selected: Some(selected),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(v: &[f64]) -> MaskF {
        MaskF::new(1, v.len(), v.to_vec()).unwrap()
    }

    #[test]
    fn dice_examples() {
        let g = mask(&[1.0, 0.0, 1.0, 1.0]);
        assert_eq!(dice_loss(&g, &g).unwrap().value, 0.0);
        let d = mask(&[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(dice_loss(&d, &g).unwrap().value, 1.0);
        let r = dice_loss(&mask(&[0.5, 0.5]), &mask(&[1.0, 0.0])).unwrap();
        assert!((r.value - 0.5).abs() < 1e-15);
        assert!(matches!(
            dice_loss(&mask(&[0.0, 0.0]), &mask(&[0.0, 0.0])),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn bce_examples() {
        let gt = mask(&[0.0, 1.0, 1.0, 0.0]);
        let pred = mask(&[EPS, 1.0 - EPS, 1.0 - EPS, EPS]);
        let r = bce_ohem_loss(&pred, &gt, 1.0).unwrap();
        assert!((r.value - (-(1.0 - EPS).ln())).abs() < 1e-15);
        assert!((r.value - 1e-7).abs() < 1e-12);

        let half = mask(&[0.5; 6]);
        let r = bce_ohem_loss(&half, &mask(&[1.0, 0.0, 1.0, 0.0, 1.0, 1.0]), 1.0).unwrap();
        assert!((r.value - 2f64.ln()).abs() < 1e-15);

        let pred = MaskF::new(2, 2, vec![0.9, 0.1, 0.6, 0.4]).unwrap();
        let gt = MaskF::new(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let r = bce_ohem_loss(&pred, &gt, 0.5).unwrap();
        assert!((r.value - (-(0.4f64).ln())).abs() < 1e-15);
        assert_eq!(r.selected.as_deref(), Some(&[2, 3][..]));
        assert_eq!(r.gradient[0], 0.0);
        assert_eq!(r.gradient[1], 0.0);
    }

    #[test]
    fn bce_rejects_bad_fraction() {
        let m = mask(&[0.5]);
        assert!(bce_ohem_loss(&m, &m, 0.0).is_err());
        assert!(bce_ohem_loss(&m, &m, 1.5).is_err());
    }

    #[test]
    fn ohem_monotone_in_fraction() {
        let pred = MaskF::new(1, 8, vec![0.9, 0.2, 0.7, 0.35, 0.5, 0.05, 0.66, 0.81]).unwrap();
        let gt = MaskF::from_bools(1, 8, [true, true, false, false, true, false, true, false]);
        let mut last = f64::INFINITY;
        for f in [0.125, 0.25, 0.5, 0.75, 1.0] {
            let v = bce_ohem_loss(&pred, &gt, f).unwrap().value;
            assert!(v <= last + 1e-15);
            last = v;
        }
    }

    #[test]
    fn permutation_equivariance() {
        let p = [0.2, 0.7, 0.9, 0.4, 0.55];
        let g = [0.0, 1.0, 1.0, 0.0, 1.0];
        let perm = [3, 0, 4, 1, 2];
        let pp: Vec<f64> = perm.iter().map(|&i| p[i]).collect();
        let gp: Vec<f64> = perm.iter().map(|&i| g[i]).collect();
        let (a, b) = (mask(&p), mask(&g));
        let (ap, bp) = (mask(&pp), mask(&gp));
        assert!((dice_loss(&a, &b).unwrap().value - dice_loss(&ap, &bp).unwrap().value).abs() < 1e-15);
        for f in [0.4, 1.0] {
            let x = bce_ohem_loss(&a, &b, f).unwrap().value;
            let y = bce_ohem_loss(&ap, &bp, f).unwrap().value;
            assert!((x - y).abs() < 1e-15);
        }
    }
}
