//! Direct minimization of the generator objective over pixel values.
//!
//! Instead of training an inpainting network, the objective is minimized
//! for one image with Adam, projecting onto `[0,1]` after every step.

use crate::blend::{poisson_blend, DEFAULT_TOLERANCE};
use crate::error::{ensure_same_dims, Error, Result};
use crate::image::{erode, gaussian_noise_fill, ImageF, MaskF, NoiseParams};
use crate::losses::{
    evaluate_generator, DiscriminatorProvider, EmbeddingProvider, GeneratorEvaluation,
    GeneratorTargets, GeneratorWeights, DEFAULT_OHEM_FRACTION,
};
use crate::maskops::{self, DEFAULT_EROSION_RADIUS};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub iterations: usize,
    /// Cosine-anneal the step size from `learning_rate` to zero.
    pub cosine_decay: bool,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            beta1: 0.5,
            beta2: 0.999,
            epsilon: 1e-8,
            iterations: 500,
            cosine_decay: true,
        }
    }
}

impl AdamParams {
    /// Step size for the zero-based step `k`.
    pub fn step_size(&self, k: usize) -> f64 {
        if !self.cosine_decay || self.iterations == 0 {
            return self.learning_rate;
        }
        let t = k as f64 / self.iterations as f64;
        0.5 * self.learning_rate * (1.0 + (std::f64::consts::PI * t).cos())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrepareOptions {
    pub noise: NoiseParams,
    pub seed: u64,
    pub erosion_radius: usize,
    pub blend_tolerance: f64,
    pub blend_max_iterations: Option<usize>,
    pub ohem_fraction: f64,
    pub weights: GeneratorWeights,
    pub adam: AdamParams,
}

impl Default for PrepareOptions {
    fn default() -> Self {
        Self {
            noise: NoiseParams::default(),
            seed: 0,
            erosion_radius: DEFAULT_EROSION_RADIUS,
            blend_tolerance: DEFAULT_TOLERANCE,
            blend_max_iterations: None,
            ohem_fraction: DEFAULT_OHEM_FRACTION,
            weights: GeneratorWeights::default(),
            adam: AdamParams::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct InpaintProblem {
    pub image: ImageF,
    pub m_f: MaskF,
    pub i_m: ImageF,
    pub m_m: MaskF,
    pub m_o: MaskF,
    /// Input with the occluded region replaced by noise.
    pub i_n: ImageF,
    /// Poisson blend of the visible face into the render.
    pub i_p: ImageF,
    pub targets: GeneratorTargets,
    pub weights: GeneratorWeights,
    pub adam: AdamParams,
}

/// Builds every derived input of the objective.
pub fn prepare(
    image: &ImageF,
    m_f: &MaskF,
    i_m: &ImageF,
    m_m: &MaskF,
    opts: &PrepareOptions,
) -> Result<InpaintProblem> {
    image.ensure_same_shape(i_m, "inpaint images")?;
    ensure_same_dims("inpaint face mask", image.dims(), m_f.dims())?;
    ensure_same_dims("inpaint render mask", image.dims(), m_m.dims())?;
    if m_m.count() == 0 {
        return Err(Error::Degenerate("render mask is empty: no face prior".into()));
    }
    let m_o = maskops::occlusion_mask(m_m, m_f)?;
    let i_n = gaussian_noise_fill(image, &m_o, opts.noise, opts.seed)?;
    let i_p = poisson_blend(image, m_f, i_m, m_m, opts.blend_tolerance, opts.blend_max_iterations)?;
    let targets = GeneratorTargets {
        image: image.clone(),
        i_f: image.masked(m_f)?,
        i_p: i_p.clone(),
        m_sup: maskops::supervision_mask(m_m, m_f)?,
        m_bar: erode(m_m, opts.erosion_radius)?,
        m_bg: maskops::background_mask(m_m, opts.erosion_radius)?,
        m_id: m_f.clone(),
        ohem_fraction: opts.ohem_fraction,
    };
    Ok(InpaintProblem {
        image: image.clone(),
        m_f: m_f.clone(),
        i_m: i_m.clone(),
        m_m: m_m.clone(),
        m_o,
        i_n,
        i_p,
        targets,
        weights: opts.weights,
        adam: opts.adam,
    })
}

impl InpaintProblem {
    /// `Î₀ = I_n⊙(1−M_o) + I_m⊙M_o`.
    pub fn initial_estimate(&self) -> ImageF {
        let c = self.image.channels();
        let mut out = self.i_n.clone();
        for (p, &m) in self.m_o.data().iter().enumerate() {
            if m != 0.0 {
                out.pixel_mut(p).copy_from_slice(&self.i_m.data()[p * c..(p + 1) * c]);
            }
        }
        out
    }

    pub fn evaluate(
        &self,
        i_hat: &ImageF,
        embed: &dyn EmbeddingProvider,
        disc: &dyn DiscriminatorProvider,
    ) -> Result<GeneratorEvaluation> {
        let e = evaluate_generator(&self.targets, i_hat, embed, disc, &self.weights)?;
        if !e.total.value.is_finite() || e.total.gradient.iter().any(|g| !g.is_finite()) {
            let parts: Vec<String> = e
                .parts
                .named()
                .iter()
                .map(|(n, r)| format!("{n}={}", r.value))
                .collect();
            return Err(Error::NonFinite(format!(
                "generator objective {} ({})",
                e.total.value,
                parts.join(", ")
            )));
        }
        Ok(e)
    }
}

/// Adam state over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub iterate: ImageF,
    m: Vec<f64>,
    v: Vec<f64>,
    pub steps: usize,
    /// Objective value before each step.
    pub trace: Vec<f64>,
}

impl OptimizerState {
    pub fn new(init: ImageF) -> Self {
        let n = init.data().len();
        Self {
            iterate: init,
            m: vec![0.0; n],
            v: vec![0.0; n],
            steps: 0,
            trace: Vec::new(),
        }
    }

    /// One bias-corrected Adam update followed by projection onto `[0,1]`.
    pub fn step(&mut self, value: f64, grad: &[f64], p: &AdamParams) {
        let lr = p.step_size(self.steps);
        self.steps += 1;
        self.trace.push(value);
        let t = self.steps as i32;
        let c1 = 1.0 - p.beta1.powi(t);
        let c2 = 1.0 - p.beta2.powi(t);
        let x = self.iterate.data_mut();
        for i in 0..x.len() {
            self.m[i] = p.beta1 * self.m[i] + (1.0 - p.beta1) * grad[i];
            self.v[i] = p.beta2 * self.v[i] + (1.0 - p.beta2) * grad[i] * grad[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            x[i] = (x[i] - lr * mh / (vh.sqrt() + p.epsilon)).clamp(0.0, 1.0);
        }
    }
}

#[derive(Debug, Clone)]
pub struct InpaintResult {
    /// Lowest-objective iterate seen.
    pub image: ImageF,
    pub best_value: f64,
    pub best_step: usize,
    /// Last iterate and its objective.
    pub final_image: ImageF,
    pub final_value: f64,
    /// Objective at `Î_k` for `k = 0..iterations`; `final_value` follows.
    pub trace: Vec<f64>,
}

impl InpaintResult {
    /// Objective values including the final iterate.
    pub fn full_trace(&self) -> Vec<f64> {
        let mut t = self.trace.clone();
        t.push(self.final_value);
        t
    }

    /// Running minimum of [`InpaintResult::full_trace`].
    pub fn best_so_far(&self) -> Vec<f64> {
        self.full_trace()
            .into_iter()
            .scan(f64::INFINITY, |best, v| {
                *best = best.min(v);
                Some(*best)
            })
            .collect()
    }
}

/// Runs `problem.adam.iterations` Adam steps from [`InpaintProblem::initial_estimate`].
pub fn solve(
    problem: &InpaintProblem,
    embed: &dyn EmbeddingProvider,
    disc: &dyn DiscriminatorProvider,
) -> Result<InpaintResult> {
    solve_with(problem, embed, disc, |_, _| {})
}

/// As [`solve`], calling `observe(step, value)` after each evaluation.
pub fn solve_with(
    problem: &InpaintProblem,
    embed: &dyn EmbeddingProvider,
    disc: &dyn DiscriminatorProvider,
    mut observe: impl FnMut(usize, f64),
) -> Result<InpaintResult> {
    let mut state = OptimizerState::new(problem.initial_estimate());
    let mut best = (f64::INFINITY, 0, state.iterate.clone());
    for k in 0..problem.adam.iterations {
        let e = problem.evaluate(&state.iterate, embed, disc)?;
        observe(k, e.total.value);
        if e.total.value < best.0 {
            best = (e.total.value, k, state.iterate.clone());
        }
        state.step(e.total.value, &e.total.gradient, &problem.adam);
    }
    let k = problem.adam.iterations;
    let final_value = problem.evaluate(&state.iterate, embed, disc)?.total.value;
    observe(k, final_value);
    if final_value < best.0 {
        best = (final_value, k, state.iterate.clone());
    }
    Ok(InpaintResult {
        image: best.2,
        best_value: best.0,
        best_step: best.1,
        final_image: state.iterate,
        final_value,
        trace: state.trace,
    })
}

/// Synthetic de-occlusion scene built from the toy morphable model.
#[derive(Debug, Clone)]
pub struct DemoScene {
    /// Un-occluded render over the background.
    pub ground_truth: ImageF,
    /// Ground truth with the square patch pasted on.
    pub image: ImageF,
    /// Visible face: render mask minus the patch.
    pub m_f: MaskF,
    /// Prior render with perturbed texture and lighting.
    pub i_m: ImageF,
    pub m_m: MaskF,
}

/// Renders the toy face at `size×size`, covers a `patch×patch` square above
/// the face center with an opaque striped occluder and renders a prior whose
/// albedo and lighting differ from the ground truth.
pub fn demo_scene(size: usize, patch: usize, seed: u64) -> Result<DemoScene> {
    use crate::morphable::{toy_model, CoeffVector};
    use crate::render::{render_from_coeffs, Camera};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    let model = toy_model(16, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xface);
    let mut normal = move || -> f64 { StandardNormal.sample(&mut rng) };
    let mut c_gt = CoeffVector::toy_default();
    c_gt.rotation_mut().copy_from_slice(&[0.05, -0.1, 0.0]);
    c_gt.shape_mut().iter_mut().for_each(|v| *v = 0.5 * normal());
    c_gt.texture_mut().iter_mut().for_each(|v| *v = 0.5 * normal());
    c_gt.illumination_mut()[2] = -0.3;
    let mut c_prior = c_gt.clone();
    c_prior.texture_mut().iter_mut().for_each(|v| *v += 0.5 * normal());
    c_prior.illumination_mut()[0] *= 1.1;
    c_prior.illumination_mut()[1] = 0.2;

    let camera = Camera::default_for(size, size);
    let (gt, _) = render_from_coeffs(&model, &c_gt, &camera)?;
    let (prior, _) = render_from_coeffs(&model, &c_prior, &camera)?;
    let background = |y: usize, x: usize, c: usize| -> f64 {
        let (u, v) = (x as f64 / size as f64, y as f64 / size as f64);
        [0.2 + 0.3 * u, 0.35, 0.45 + 0.2 * v][c]
    };
    let over = |r: &crate::render::RenderOutput| {
        ImageF::from_fn(size, size, 3, |y, x, c| {
            if r.mask.is_set(y, x) {
                r.image.get(y, x, c)
            } else {
                background(y, x, c)
            }
        })
    };
    let ground_truth = over(&gt);
    let i_m = over(&prior);
    let half = patch / 2;
    let (cy, cx) = ((size / 2).saturating_sub(size / 16), size / 2);
    let inside = |y: usize, x: usize| {
        y + half >= cy && y < cy + patch - half && x + half >= cx && x < cx + patch - half
    };
    let mut image = ground_truth.clone();
    for y in 0..size {
        for x in 0..size {
            if inside(y, x) {
                let v = if (x + y) / 4 % 2 == 0 { 0.1 } else { 0.25 };
                for c in 0..3 {
                    image.set(y, x, c, v + 0.05 * c as f64);
                }
            }
        }
    }
    let m_f = MaskF::from_fn(size, size, |y, x| gt.mask.is_set(y, x) && !inside(y, x));
    Ok(DemoScene {
        ground_truth,
        image,
        m_f,
        i_m,
        m_m: prior.mask,
    })
}
