//! Browser bindings: pose/light the toy face, Poisson-blend the prior into the
//! occluded scene, and step the pixel-space inpainting solver.

use deocclude::blend::{poisson_blend, DEFAULT_TOLERANCE};
use deocclude::inpaint::{demo_scene, prepare, DemoScene, InpaintProblem, OptimizerState, PrepareOptions};
use deocclude::losses::{NullDiscriminator, ToyEmbedder};
use deocclude::morphable::{toy_model, CoeffVector, MorphableModel};
use deocclude::render::{render_from_coeffs, Camera};
use deocclude::ImageF;
use wasm_bindgen::prelude::*;

fn err(e: deocclude::Error) -> JsValue {
    JsValue::from_str(&e.to_string())
}

fn rgba(img: &ImageF) -> Vec<u8> {
    let mut out = Vec::with_capacity(img.pixel_count() * 4);
    for p in 0..img.pixel_count() {
        let px = img.pixel(p);
        for c in 0..3 {
            let v = if img.channels() == 1 { px[0] } else { px[c] };
            out.push((v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8);
        }
        out.push(255);
    }
    out
}

#[wasm_bindgen]
pub struct Demo {
    size: usize,
    model: MorphableModel,
    scene: DemoScene,
    problem: InpaintProblem,
    state: OptimizerState,
    embed: ToyEmbedder,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(size: usize, seed: u64) -> Result<Demo, JsValue> {
        let scene = demo_scene(size, size / 4, seed).map_err(err)?;
        let opts = PrepareOptions {
            seed,
            ..PrepareOptions::default()
        };
        let problem = prepare(&scene.image, &scene.m_f, &scene.i_m, &scene.m_m, &opts).map_err(err)?;
        let state = OptimizerState::new(problem.initial_estimate());
        Ok(Demo {
            size,
            model: toy_model(16, seed).map_err(err)?,
            scene,
            problem,
            state,
            embed: ToyEmbedder::new(seed),
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Renders the mean toy face. Angles in radians; `sh` holds the first
    /// four lighting coefficients (DC, y, z, x).
    pub fn render(&self, yaw: f64, pitch: f64, roll: f64, sh: &[f64]) -> Result<Vec<u8>, JsValue> {
        let mut c = CoeffVector::toy_default();
        c.rotation_mut().copy_from_slice(&[pitch, yaw, roll]);
        for (dst, src) in c.illumination_mut().iter_mut().zip(sh) {
            *dst = *src;
        }
        let camera = Camera::default_for(self.size, self.size);
        let (out, _) = render_from_coeffs(&self.model, &c, &camera).map_err(err)?;
        Ok(rgba(&out.image))
    }

    /// `"image"`, `"truth"`, `"prior"`, `"hole"` or `"noised"`.
    pub fn scene(&self, which: &str) -> Result<Vec<u8>, JsValue> {
        let img = match which {
            "image" => self.scene.image.clone(),
            "truth" => self.scene.ground_truth.clone(),
            "prior" => self.scene.i_m.clone(),
            "hole" => self.problem.m_o.to_image(),
            "noised" => self.problem.i_n.clone(),
            _ => return Err(JsValue::from_str(&format!("unknown scene layer '{which}'"))),
        };
        Ok(rgba(&img))
    }

    /// Poisson blend of the prior into the occluded image.
    pub fn blend(&self, tolerance: f64) -> Result<Vec<u8>, JsValue> {
        let tol = if tolerance > 0.0 { tolerance } else { DEFAULT_TOLERANCE };
        let s = &self.scene;
        let out = poisson_blend(&s.image, &s.m_f, &s.i_m, &s.m_m, tol, None).map_err(err)?;
        Ok(rgba(&out))
    }

    /// Restarts the solver from its initial estimate.
    pub fn reset(&mut self) {
        self.state = OptimizerState::new(self.problem.initial_estimate());
    }

    /// Runs `n` Adam steps and returns the objective before the last one.
    pub fn step(&mut self, n: usize) -> Result<f64, JsValue> {
        let mut value = f64::NAN;
        for _ in 0..n {
            if self.state.steps >= self.problem.adam.iterations {
                break;
            }
            let e = self
                .problem
                .evaluate(&self.state.iterate, &self.embed, &NullDiscriminator)
                .map_err(err)?;
            value = e.total.value;
            self.state.step(value, &e.total.gradient, &self.problem.adam);
        }
        Ok(value)
    }

    pub fn steps(&self) -> usize {
        self.state.steps
    }

    pub fn iterations(&self) -> usize {
        self.problem.adam.iterations
    }

    pub fn estimate(&self) -> Vec<u8> {
        rgba(&self.state.iterate)
    }
}
