use super::MaskF;
use crate::error::Result;

/// Binary erosion by the disk `{(dx,dy) : dx² + dy² <= radius²}`.
///
/// Pixels outside the image count as 0, so anything within `radius` of the
/// border is cleared.
pub fn erode(mask: &MaskF, radius: usize) -> Result<MaskF> {
    mask.require_binary("erode input")?;
    if radius == 0 {
        return Ok(mask.clone());
    }
    let (h, w) = mask.dims();
    let r = radius as isize;
    let r2 = r * r;
    let offsets: Vec<(isize, isize)> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dy, dx)))
        .filter(|(dy, dx)| dy * dy + dx * dx <= r2)
        .collect();
    let out = MaskF::from_fn(h, w, |y, x| {
        if !mask.is_set(y, x) {
            return false;
        }
        offsets.iter().all(|&(dy, dx)| {
            let yy = y as isize + dy;
            let xx = x as isize + dx;
            yy >= 0
                && xx >= 0
                && (yy as usize) < h
                && (xx as usize) < w
                && mask.is_set(yy as usize, xx as usize)
        })
    });
    Ok(out)
}
