//! Computational core for mask-guided face de-occlusion.
//!
//! The pipeline turns a face image, its visible-face segmentation and a
//! rendered morphable-model prior into an occlusion-free estimate:
//!
//! * [`image`]: dense float images/masks, PNG and `DTN1` tensor I/O, erosion, noise fill
//! * [`maskops`]: occlusion / supervision / background mask algebra
//! * [`synth`]: occlusion-patch compositing for training-pair synthesis
//! * [`morphable`]: linear 3D morphable model and its coefficient vector
//! * [`render`]: z-buffered rasterizer with 9-coefficient spherical-harmonics shading
//! * [`blend`]: Poisson blending through a conjugate-gradient solve
//! * [`losses`]: every training loss with analytic gradients
//! * [`inpaint`]: direct pixel-space minimization of the composite generator objective
//! * [`metrics`]: region-restricted L1 / SSIM / PSNR / identity metrics
//! * [`gradcheck`]: finite-difference verification of every loss gradient

pub mod blend;
pub mod error;
pub mod gradcheck;
pub mod image;
pub mod inpaint;
pub mod losses;
pub mod maskops;
pub mod metrics;
pub mod morphable;
pub mod render;
pub mod synth;

mod par;

pub use error::{Error, Result};
pub use image::{ImageF, MaskF};
