//! Central finite-difference checks of every analytic loss gradient.

use crate::error::Result;
use crate::image::{ImageF, MaskF};
use crate::losses::{
    adversarial_d_loss, adversarial_g_image, adversarial_g_loss, bce_ohem_loss, dice_loss,
    evaluate_generator, identity_loss, landmark_loss, masked_pixel_l2, pixel_l1_face,
    background_loss, ssim_ohem_loss, tv_loss, GeneratorTargets, GeneratorWeights,
    LogisticDiscriminator, LossReport, ToyEmbedder,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckConfig {
    pub step: f64,
    pub probes: usize,
    pub size: usize,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-4,
            probes: 200,
            size: 32,
            tolerance: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckRow {
    pub name: String,
    pub probes: usize,
    pub skipped: usize,
    pub max_rel_error: f64,
    pub passed: bool,
}

impl GradcheckRow {
    pub const HEADER: &'static str = "loss\tprobes\tskipped\tmax_rel_error\tresult";

    pub fn to_tsv(&self) -> String {
        format!(
            "{}\t{}\t{}\t{:.3e}\t{}",
            self.name,
            self.probes,
            self.skipped,
            self.max_rel_error,
            if self.passed { "PASS" } else { "FAIL" }
        )
    }
}

/// `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

type Eval<'a> = Box<dyn Fn(&[f64]) -> Result<LossReport> + 'a>;
type Kink<'a> = Box<dyn Fn(usize, &LossReport, &LossReport) -> bool + 'a>;

/// Checks `eval` at `x` on up to `cfg.probes` random coordinates, skipping
/// those for which `kink` reports a non-smooth point inside the stencil.
pub fn check_gradient(
    name: &str,
    x: &[f64],
    eval: &dyn Fn(&[f64]) -> Result<LossReport>,
    kink: &dyn Fn(usize, &LossReport, &LossReport) -> bool,
    cfg: &GradcheckConfig,
    rng: &mut ChaCha8Rng,
) -> Result<GradcheckRow> {
    let base = eval(x)?;
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.shuffle(rng);
    let (mut probes, mut skipped, mut worst) = (0, 0, 0.0f64);
    let mut buf = x.to_vec();
    for i in order {
        if probes == cfg.probes {
            break;
        }
        buf[i] = x[i] + cfg.step;
        let plus = eval(&buf)?;
        buf[i] = x[i] - cfg.step;
        let minus = eval(&buf)?;
        buf[i] = x[i];
        if kink(i, &plus, &minus) {
            skipped += 1;
            continue;
        }
        let numeric = (plus.value - minus.value) / (2.0 * cfg.step);
        worst = worst.max(relative_error(base.gradient[i], numeric));
        probes += 1;
    }
    Ok(GradcheckRow {
        name: name.to_string(),
        probes,
        skipped,
        max_rel_error: worst,
        passed: worst < cfg.tolerance && probes > 0,
    })
}

fn no_kink() -> Kink<'static> {
    Box::new(|_, _, _| false)
}

/// L1 kink: the target lies within `2h` of the probed value.
fn l1_kink<'a>(x: &'a [f64], target: &'a [f64], h: f64) -> Kink<'a> {
    Box::new(move |i, _, _| (x[i] - target[i]).abs() < 2.0 * h)
}

fn selection_changed(a: &LossReport, b: &LossReport) -> bool {
    a.selected != b.selected
}

fn image(data: &[f64], s: usize) -> Result<ImageF> {
    ImageF::new(s, s, 3, data.to_vec())
}

fn mask(data: &[f64], s: usize) -> Result<MaskF> {
    MaskF::new(s, s, data.to_vec())
}

/// Runs every loss through [`check_gradient`] on seeded random inputs.
pub fn run_gradcheck(cfg: &GradcheckConfig) -> Result<Vec<GradcheckRow>> {
    let s = cfg.size;
    let h = cfg.step;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut uniform = |n: usize, lo: f64, hi: f64| -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(lo..hi)).collect()
    };
    let px = s * s * 3;
    let x = uniform(px, 0.05, 0.95);
    let target = uniform(px, 0.05, 0.95);
    let soft = uniform(s * s, 0.05, 0.95);
    let probs = uniform(s * s, 0.05, 0.95);
    let fake = uniform(s * s, 0.05, 0.95);
    let gt_bits: Vec<bool> = uniform(s * s, 0.0, 1.0).iter().map(|v| *v < 0.5).collect();
    let gt = MaskF::from_bools(s, s, gt_bits);
    let face = MaskF::from_fn(s, s, |y, x| {
        let (dy, dx) = (y as f64 - s as f64 / 2.0, x as f64 - s as f64 / 2.0);
        dy * dy + dx * dx < (s as f64 * 0.35).powi(2)
    });
    let inner = crate::image::erode(&face, 2)?;
    let outside = crate::image::erode(&face.complement(), 1)?;
    let n_pt = 68;
    let q_hat = uniform(3 * n_pt, -1.0, 1.0);
    let q: Vec<[f64; 3]> = uniform(3 * n_pt, -1.0, 1.0).chunks(3).map(|c| [c[0], c[1], c[2]]).collect();
    let lw: Vec<f64> = (0..n_pt).map(|i| if i % 7 == 0 { 20.0 } else { 1.0 }).collect();

    let embed = ToyEmbedder::new(cfg.seed ^ 0x5eed);
    let disc = LogisticDiscriminator::new(cfg.seed ^ 0xd15c);
    let target_img = image(&target, s)?;
    let i_f = target_img.masked(&face)?;
    let generator = GeneratorTargets {
        image: target_img.clone(),
        i_f: i_f.clone(),
        i_p: image(&uniform(px, 0.05, 0.95), s)?,
        m_sup: face.clone(),
        m_bar: inner.clone(),
        m_bg: outside.clone(),
        m_id: face.clone(),
        ohem_fraction: 0.25,
    };
    let weights = GeneratorWeights::default();
    let i_f_data = i_f.data().to_vec();

    let mut cases: Vec<(&str, Vec<f64>, Eval, Kink)> = vec![
        (
            "dice",
            soft.clone(),
            Box::new(|v| dice_loss(&mask(v, s)?, &gt)),
            no_kink(),
        ),
        (
            "bce_ohem(f=1)",
            soft.clone(),
            Box::new(|v| bce_ohem_loss(&mask(v, s)?, &gt, 1.0)),
            no_kink(),
        ),
        (
            "bce_ohem(f=0.25)",
            soft.clone(),
            Box::new(|v| bce_ohem_loss(&mask(v, s)?, &gt, 0.25)),
            Box::new(|_, a, b| selection_changed(a, b)),
        ),
        (
            "masked_pixel_l2",
            x.clone(),
            Box::new(|v| masked_pixel_l2(&image(v, s)?, &target_img, &face)),
            no_kink(),
        ),
        (
            "identity",
            x.clone(),
            Box::new(|v| identity_loss(&image(v, s)?, &i_f, &embed)),
            no_kink(),
        ),
        (
            "landmark",
            q_hat.clone(),
            Box::new(|v| {
                let pts: Vec<[f64; 3]> = v.chunks(3).map(|c| [c[0], c[1], c[2]]).collect();
                landmark_loss(&pts, &q, &lw)
            }),
            no_kink(),
        ),
        (
            "pixel_l1_face",
            x.clone(),
            Box::new(|v| pixel_l1_face(&image(v, s)?, &i_f, &face)),
            l1_kink(&x, &i_f_data, h),
        ),
        (
            "ssim_ohem",
            x.clone(),
            Box::new(|v| ssim_ohem_loss(&image(v, s)?, &generator.i_p, &inner, 0.25)),
            Box::new(|_, a, b| selection_changed(a, b)),
        ),
        (
            "background",
            x.clone(),
            Box::new(|v| background_loss(&image(v, s)?, &target_img, &outside)),
            l1_kink(&x, &target, h),
        ),
        ("tv", x.clone(), Box::new(|v| tv_loss(&image(v, s)?)), no_kink()),
        (
            "adversarial_g",
            probs.clone(),
            Box::new(adversarial_g_loss),
            no_kink(),
        ),
        (
            "adversarial_g_image",
            x.clone(),
            Box::new(|v| adversarial_g_image(&disc, &image(v, s)?)),
            no_kink(),
        ),
        (
            "adversarial_d",
            [probs.clone(), fake.clone()].concat(),
            Box::new(|v| adversarial_d_loss(&v[..s * s], &v[s * s..])),
            no_kink(),
        ),
    ];

    // The objective carries the SSIM selection through `selected`.
    let gen_eval: Eval = Box::new(|v| {
        let e = evaluate_generator(&generator, &image(v, s)?, &embed, &disc, &weights)?;
        let mut total = e.total;
        total.selected = e.parts.sm.selected;
        Ok(total)
    });
    let (xg, ig, tg) = (&x, &i_f_data, &target);
    let gen_kink: Kink = Box::new(move |i, a, b| {
        selection_changed(a, b) || (xg[i] - ig[i]).abs() < 2.0 * h || (xg[i] - tg[i]).abs() < 2.0 * h
    });
    cases.push(("generator_objective", x.clone(), gen_eval, gen_kink));

    let mut rows = Vec::with_capacity(cases.len());
    for (name, input, eval, kink) in &cases {
        rows.push(check_gradient(name, input, eval.as_ref(), kink.as_ref(), cfg, &mut rng)?);
    }
    Ok(rows)
}
