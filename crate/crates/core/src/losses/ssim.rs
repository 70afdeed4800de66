use crate::error::{Error, Result};
use crate::image::ImageF;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimParams {
    pub window_size: usize,
    pub sigma: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window_size: 11,
            sigma: 1.5,
            c1: 0.01 * 0.01,
            c2: 0.03 * 0.03,
        }
    }
}

impl SsimParams {
    fn validate(&self) -> Result<()> {
        if self.window_size == 0 || self.window_size % 2 == 0 {
            return Err(Error::Contract(format!(
                "SSIM window size must be odd, got {}",
                self.window_size
            )));
        }
        if !(self.sigma > 0.0) || !(self.c1 > 0.0) || !(self.c2 > 0.0) {
            return Err(Error::Contract("SSIM sigma and constants must be positive".into()));
        }
        Ok(())
    }

    /// Normalized 1-D Gaussian taps.
    pub fn kernel(&self) -> Vec<f64> {
        let r = (self.window_size / 2) as f64;
        let taps: Vec<f64> = (0..self.window_size)
            .map(|i| {
                let d = i as f64 - r;
                (-d * d / (2.0 * self.sigma * self.sigma)).exp()
            })
            .collect();
        let s: f64 = taps.iter().sum();
        taps.into_iter().map(|t| t / s).collect()
    }
}

/// Mirror index without edge repetition: `-1 → 1`, `n → n-2`.
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// Separable Gaussian blur of a single-channel `h×w` plane. With `transpose`
/// the adjoint operator is applied instead.
struct Blur {
    h: usize,
    w: usize,
    kernel: Vec<f64>,
    /// Mirrored source index per (position, tap), for rows and columns.
    rows: Vec<usize>,
    cols: Vec<usize>,
}

impl Blur {
    fn new(h: usize, w: usize, kernel: Vec<f64>) -> Self {
        let r = (kernel.len() / 2) as isize;
        let table = |n: usize| -> Vec<usize> {
            (0..n)
                .flat_map(|i| (0..kernel.len()).map(move |t| reflect(i as isize + t as isize - r, n)))
                .collect()
        };
        let (rows, cols) = (table(h), table(w));
        Self {
            h,
            w,
            kernel,
            rows,
            cols,
        }
    }

    fn pass(&self, src: &[f64], horizontal: bool, transpose: bool) -> Vec<f64> {
        let (h, w) = (self.h, self.w);
        let k = self.kernel.len();
        let mut out = vec![0.0; h * w];
        for y in 0..h {
            for x in 0..w {
                let taps = if horizontal {
                    &self.cols[x * k..(x + 1) * k]
                } else {
                    &self.rows[y * k..(y + 1) * k]
                };
                let q = |s: usize| if horizontal { y * w + s } else { s * w + x };
                if transpose {
                    let v = src[y * w + x];
                    for (&kt, &s) in self.kernel.iter().zip(taps) {
                        out[q(s)] += kt * v;
                    }
                } else {
                    out[y * w + x] = self.kernel.iter().zip(taps).map(|(&kt, &s)| kt * src[q(s)]).sum();
                }
            }
        }
        out
    }

    fn apply(&self, src: &[f64]) -> Vec<f64> {
        let tmp = self.pass(src, true, false);
        self.pass(&tmp, false, false)
    }

    fn apply_t(&self, src: &[f64]) -> Vec<f64> {
        let tmp = self.pass(src, false, true);
        self.pass(&tmp, true, true)
    }
}

struct Stats {
    mu_x: Vec<f64>,
    mu_y: Vec<f64>,
    a1: Vec<f64>,
    a2: Vec<f64>,
    b1: Vec<f64>,
    b2: Vec<f64>,
}

fn channel_stats(blur: &Blur, x: &[f64], y: &[f64], p: &SsimParams) -> Stats {
    let prod = |f: &dyn Fn(usize) -> f64| -> Vec<f64> { (0..x.len()).map(f).collect() };
    let mu_x = blur.apply(x);
    let mu_y = blur.apply(y);
    let exx = blur.apply(&prod(&|i| x[i] * x[i]));
    let eyy = blur.apply(&prod(&|i| y[i] * y[i]));
    let exy = blur.apply(&prod(&|i| x[i] * y[i]));
    let n = x.len();
    let mut s = Stats {
        a1: vec![0.0; n],
        a2: vec![0.0; n],
        b1: vec![0.0; n],
        b2: vec![0.0; n],
        mu_x,
        mu_y,
    };
    for i in 0..n {
        let (mx, my) = (s.mu_x[i], s.mu_y[i]);
        s.a1[i] = 2.0 * mx * my + p.c1;
        s.a2[i] = 2.0 * (exy[i] - mx * my) + p.c2;
        s.b1[i] = mx * mx + my * my + p.c1;
        s.b2[i] = (exx[i] - mx * mx) + (eyy[i] - my * my) + p.c2;
    }
    s
}

fn split_channel(img: &ImageF, c: usize) -> Vec<f64> {
    img.data().iter().skip(c).step_by(img.channels()).copied().collect()
}

fn setup(x: &ImageF, y: &ImageF, p: &SsimParams) -> Result<Blur> {
    x.ensure_same_shape(y, "SSIM")?;
    p.validate()?;
    let (h, w) = x.dims();
    Ok(Blur::new(h, w, p.kernel()))
}

/// Per-pixel SSIM averaged over channels, as a single-channel image.
pub fn ssim_map(x: &ImageF, y: &ImageF, params: &SsimParams) -> Result<ImageF> {
    let blur = setup(x, y, params)?;
    let (h, w) = x.dims();
    let c = x.channels();
    let mut map = vec![0.0; h * w];
    for ch in 0..c {
        let st = channel_stats(&blur, &split_channel(x, ch), &split_channel(y, ch), params);
        for (i, m) in map.iter_mut().enumerate() {
            *m += st.a1[i] * st.a2[i] / (st.b1[i] * st.b2[i]);
        }
    }
    map.iter_mut().for_each(|m| *m /= c as f64);
    ImageF::new(h, w, 1, map)
}

/// Gradient of `Σ_p weights(p)·ssim_map(x, y)(p)` with respect to `x`.
pub fn ssim_map_vjp(x: &ImageF, y: &ImageF, weights: &[f64], params: &SsimParams) -> Result<Vec<f64>> {
    let blur = setup(x, y, params)?;
    let (h, w) = x.dims();
    if weights.len() != h * w {
        return Err(Error::DimMismatch(format!(
            "SSIM weights: expected {} values, got {}",
            h * w,
            weights.len()
        )));
    }
    let c = x.channels();
    let mut grad = vec![0.0; x.data().len()];
    for ch in 0..c {
        let xs = split_channel(x, ch);
        let ys = split_channel(y, ch);
        let st = channel_stats(&blur, &xs, &ys, params);
        let n = h * w;
        let (mut g_mu, mut g_xx, mut g_xy) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        for i in 0..n {
            if weights[i] == 0.0 {
                continue;
            }
            let d = st.b1[i] * st.b2[i];
            let s = st.a1[i] * st.a2[i] / d;
            let (mx, my) = (st.mu_x[i], st.mu_y[i]);
            let ds_dmu = (2.0 * my * st.a2[i] - 2.0 * my * st.a1[i]) / d
                - s * (2.0 * mx / st.b1[i] - 2.0 * mx / st.b2[i]);
            let wc = weights[i] / c as f64;
            g_mu[i] = wc * ds_dmu;
            g_xx[i] = wc * (-s / st.b2[i]);
            g_xy[i] = wc * (2.0 * st.a1[i] / d);
        }
        let t_mu = blur.apply_t(&g_mu);
        let t_xx = blur.apply_t(&g_xx);
        let t_xy = blur.apply_t(&g_xy);
        for i in 0..n {
            grad[i * c + ch] = t_mu[i] + 2.0 * xs[i] * t_xx[i] + ys[i] * t_xy[i];
        }
    }
    Ok(grad)
}
