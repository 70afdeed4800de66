use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use deocclude::blend::{poisson_blend, DEFAULT_TOLERANCE};
use deocclude::gradcheck::{run_gradcheck, GradcheckConfig, GradcheckRow};
use deocclude::image::{
    erode, gaussian_noise_fill, load_mask_png, load_png, read_tensor, save_mask_png, save_png,
    write_tensor, NoiseParams, Tensor,
};
use deocclude::inpaint::{demo_scene, prepare, solve_with, AdamParams, PrepareOptions};
use deocclude::losses::{self, GeneratorWeights, LossReport, NullDiscriminator, ToyEmbedder};
use deocclude::maskops::{self, DEFAULT_EROSION_RADIUS};
use deocclude::metrics::{region_metrics, RegionMetrics};
use deocclude::morphable::{toy_model, CoeffVector, MorphableModel, COEFF_LEN};
use deocclude::render::{render_from_coeffs, Camera};
use deocclude::synth::{generate_pairs, AssetLibrary, GenerateOptions, PlacementRanges};
use deocclude::{Error, ImageF, MaskF, Result};

#[derive(Parser, Debug)]
#[command(name = "deocclude", version, about = "Face de-occlusion pipeline stages")]
struct Cli {
    /// Worker threads (0 = all cores, 1 = serial)
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// Seed threaded through every stochastic operation
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Increase log verbosity (-v info, -vv debug)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Composite occluders onto faces and write training pairs plus manifest.jsonl
    Synth(SynthArgs),
    /// Render a morphable-model face
    Render(RenderArgs),
    /// Write the procedural toy morphable model
    Toymodel(ToymodelArgs),
    /// Mask algebra on PNG masks
    Maskops(MaskopsArgs),
    /// Poisson-blend the visible face into a rendered face
    Blend(BlendArgs),
    /// Fill a masked region with clamped Gaussian noise
    Noise(NoiseArgs),
    /// Minimize the generator objective for one image
    Inpaint(InpaintArgs),
    /// Evaluate one loss and write its gradient as DTN1
    Loss(LossArgs),
    /// Finite-difference check of every loss gradient
    Gradcheck(GradcheckArgs),
    /// Region-restricted L1 / SSIM / PSNR / ID as a TSV row
    Metrics(MetricsArgs),
    /// Write the synthetic occluded toy-face scene used by the demos
    Scene(SceneArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Directory of `<name>.png` faces with `<name>.mask.png` face masks
    #[arg(long)]
    faces: PathBuf,
    /// Directory of `<name>.png` occluders with `<name>.mask.png` alpha masks
    #[arg(long)]
    occlusions: PathBuf,
    /// Directory of texture swatch PNGs
    #[arg(long)]
    swatches: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 100)]
    count: usize,
    /// Occluders composited per sample
    #[arg(long, default_value_t = 1)]
    patches: usize,
    /// Probability of replacing an occluder's texture with a swatch
    #[arg(long, default_value_t = 0.5)]
    swatch_prob: f64,
    /// Smallest transformed patch width as a fraction of the face width
    #[arg(long, default_value_t = 0.3)]
    min_width: f64,
    /// Largest transformed patch width as a fraction of the face width
    #[arg(long, default_value_t = 1.2)]
    max_width: f64,
    /// Largest absolute rotation in degrees
    #[arg(long, default_value_t = 30.0)]
    max_rotation: f64,
    /// Minimum on-image fraction of the patch alpha
    #[arg(long, default_value_t = 0.25)]
    min_visible: f64,
}

#[derive(Args, Debug)]
struct RenderArgs {
    /// DMM1 model file (default: toy model with --rings)
    #[arg(long)]
    model: Option<PathBuf>,
    /// Toy model ring count when --model is absent
    #[arg(long, default_value_t = 16)]
    rings: usize,
    /// Coefficients as a 239-entry JSON array or DTN1 vector (default: toy pose)
    #[arg(long)]
    coeffs: Option<PathBuf>,
    #[arg(long, default_value_t = 256)]
    width: usize,
    #[arg(long, default_value_t = 256)]
    height: usize,
    /// Focal length in pixels (default: 1100·width/256)
    #[arg(long)]
    focal: Option<f64>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    mask_out: Option<PathBuf>,
    /// Depth map as DTN1 (empty pixels are +inf)
    #[arg(long)]
    depth_out: Option<PathBuf>,
    /// Posed landmarks and weights as JSON
    #[arg(long)]
    landmarks_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ToymodelArgs {
    #[arg(long, default_value_t = 16)]
    rings: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum MaskOp {
    /// M_m − M_m⊙M_f
    Occlusion,
    /// M_m⊙M_f
    Supervision,
    /// erode(1 − M_m, radius)
    Background,
    /// erode(M_m, radius)
    Eroded,
    /// Σ(M_m⊙M_f)/ΣM_m, printed to standard output
    Overlap,
}

#[derive(Args, Debug)]
struct MaskopsArgs {
    #[arg(value_enum)]
    op: MaskOp,
    /// Render mask M_m
    #[arg(long)]
    mm: PathBuf,
    /// Visible-face mask M_f
    #[arg(long)]
    mf: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_EROSION_RADIUS)]
    radius: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BlendArgs {
    /// Input image I (its M_f region is the visible face)
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    face_mask: PathBuf,
    /// Rendered face I_m
    #[arg(long)]
    render: PathBuf,
    #[arg(long)]
    render_mask: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
    tol: f64,
    /// Conjugate-gradient iteration cap (default: 10 per unknown)
    #[arg(long)]
    max_iter: Option<usize>,
    /// Output image; a PNG also gets an unquantized `.dtn` twin
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct NoiseArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    mask: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    mean: f64,
    #[arg(long, default_value_t = 0.2)]
    stddev: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct InpaintArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    face_mask: PathBuf,
    #[arg(long)]
    render: PathBuf,
    #[arg(long)]
    render_mask: PathBuf,
    /// Output directory for inpainted.png, occlusion_mask.png, noised.png, poisson.png, trace.csv
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 500)]
    iters: usize,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 0.5)]
    beta1: f64,
    #[arg(long, default_value_t = 0.999)]
    beta2: f64,
    /// Keep the step size constant instead of cosine-annealing it to zero
    #[arg(long)]
    constant_lr: bool,
    #[arg(long, default_value_t = 0.25)]
    ohem: f64,
    #[arg(long, default_value_t = DEFAULT_EROSION_RADIUS)]
    erosion: usize,
    #[arg(long, default_value_t = 0.5)]
    noise_mean: f64,
    #[arg(long, default_value_t = 0.2)]
    noise_stddev: f64,
    #[arg(long, default_value_t = 10.0)]
    lambda_pix: f64,
    #[arg(long, default_value_t = 5.0)]
    lambda_sm: f64,
    #[arg(long, default_value_t = 5.0)]
    lambda_bg: f64,
    #[arg(long, default_value_t = 0.2)]
    lambda_id: f64,
    #[arg(long, default_value_t = 0.1)]
    lambda_tv: f64,
    #[arg(long, default_value_t = 0.01)]
    lambda_adv: f64,
    /// Seed of the toy identity embedder
    #[arg(long, default_value_t = 0)]
    embed_seed: u64,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum LossName {
    Dice,
    Bce,
    Coef,
    PixelL2,
    Identity,
    Landmark,
    PixelL1,
    Ssim,
    Background,
    Tv,
    AdversarialG,
}

#[derive(Args, Debug)]
struct LossArgs {
    #[arg(value_enum)]
    name: LossName,
    /// Differentiated input (PNG or DTN1; JSON array for coef)
    #[arg(long)]
    input: PathBuf,
    /// Target of the same shape
    #[arg(long)]
    target: Option<PathBuf>,
    /// Binary mask restricting the loss
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Landmark weights (DTN1 vector; default all ones)
    #[arg(long)]
    weights: Option<PathBuf>,
    /// OHEM kept fraction for bce and ssim
    #[arg(long, default_value_t = 0.25)]
    fraction: f64,
    #[arg(long, default_value_t = 0)]
    embed_seed: u64,
    /// Gradient output (DTN1, shaped like the input)
    #[arg(long)]
    grad_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 200)]
    probes: usize,
    /// Side of the square test images
    #[arg(long, default_value_t = 32)]
    size: usize,
    #[arg(long, default_value_t = 1e-4)]
    step: f64,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
}

#[derive(Args, Debug)]
struct MetricsArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    region: PathBuf,
    #[arg(long, default_value = "ours")]
    method: String,
    /// Print the column header first
    #[arg(long)]
    header: bool,
    #[arg(long, default_value_t = 0)]
    embed_seed: u64,
}

#[derive(Args, Debug)]
struct SceneArgs {
    #[arg(long, default_value_t = 128)]
    size: usize,
    /// Side of the square occluder
    #[arg(long, default_value_t = 32)]
    patch: usize,
    /// Output directory for ground_truth.png, image.png, face_mask.png, render.png, render_mask.png
    #[arg(long)]
    out_dir: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();
    if let Err(e) = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
    {
        log::warn!("could not configure thread pool: {e}");
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    let seed = cli.seed;
    match &cli.command {
        Command::Synth(a) => synth(a, seed),
        Command::Render(a) => render(a, seed),
        Command::Toymodel(a) => {
            toy_model(a.rings, seed)?.save(&a.out)?;
            log::info!("wrote {}", a.out.display());
            Ok(())
        }
        Command::Maskops(a) => mask_ops(a),
        Command::Blend(a) => {
            require_files(&[&a.image, &a.face_mask, &a.render, &a.render_mask])?;
            let out = poisson_blend(
                &load_png(&a.image)?,
                &load_mask_png(&a.face_mask)?,
                &load_png(&a.render)?,
                &load_mask_png(&a.render_mask)?,
                a.tol,
                a.max_iter,
            )?;
            save_image(&out, &a.out)?;
            if !is_tensor(&a.out) {
                let twin = a.out.with_extension("dtn");
                write_tensor(&Tensor::from_image(&out), &twin)?;
                log::info!("wrote {}", twin.display());
            }
            Ok(())
        }
        Command::Noise(a) => {
            require_files(&[&a.image, &a.mask])?;
            let params = NoiseParams {
                mean: a.mean,
                stddev: a.stddev,
            };
            let out = gaussian_noise_fill(&load_png(&a.image)?, &load_mask_png(&a.mask)?, params, seed)?;
            save_image(&out, &a.out)
        }
        Command::Inpaint(a) => inpaint(a, seed),
        Command::Loss(a) => loss(a),
        Command::Gradcheck(a) => gradcheck(a, seed),
        Command::Metrics(a) => {
            require_files(&[&a.pred, &a.gt, &a.region])?;
            let m = region_metrics(
                &load_image(&a.pred)?,
                &load_image(&a.gt)?,
                &load_mask_png(&a.region)?,
                &ToyEmbedder::new(a.embed_seed),
            )?;
            if a.header {
                println!("{}", RegionMetrics::HEADER);
            }
            println!("{}", m.to_row(&a.method));
            Ok(())
        }
        Command::Scene(a) => {
            let s = demo_scene(a.size, a.patch, seed)?;
            create_dir(&a.out_dir)?;
            save_png(&s.ground_truth, a.out_dir.join("ground_truth.png"))?;
            save_png(&s.image, a.out_dir.join("image.png"))?;
            save_mask_png(&s.m_f, a.out_dir.join("face_mask.png"))?;
            save_png(&s.i_m, a.out_dir.join("render.png"))?;
            save_mask_png(&s.m_m, a.out_dir.join("render_mask.png"))
        }
    }
}

fn require_files(paths: &[&Path]) -> Result<()> {
    for p in paths {
        if !p.is_file() {
            return Err(Error::Contract(format!("input file {} does not exist", p.display())));
        }
    }
    Ok(())
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn is_tensor(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "dtn")
}

fn load_image(path: &Path) -> Result<ImageF> {
    if is_tensor(path) {
        read_tensor(path)?.to_image()
    } else {
        load_png(path)
    }
}

fn save_image(image: &ImageF, path: &Path) -> Result<()> {
    if is_tensor(path) {
        write_tensor(&Tensor::from_image(image), path)
    } else {
        save_png(image, path)
    }
}

/// Soft mask from a single-channel PNG or DTN1 tensor.
fn load_soft_mask(path: &Path) -> Result<MaskF> {
    let img = load_image(path)?;
    if img.channels() != 1 {
        return Err(Error::Contract(format!("{} must have one channel", path.display())));
    }
    MaskF::new(img.height(), img.width(), img.into_data())
}

fn load_vector(path: &Path) -> Result<Vec<f64>> {
    if is_tensor(path) {
        return Ok(read_tensor(path)?.data.iter().map(|&v| f64::from(v)).collect());
    }
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

fn synth(a: &SynthArgs, seed: u64) -> Result<()> {
    let lib = AssetLibrary::load(&a.faces, &a.occlusions, &a.swatches)?;
    let mut opts = GenerateOptions::new(a.count, seed);
    opts.patches_per_sample = a.patches;
    opts.swatch_probability = a.swatch_prob;
    opts.ranges = PlacementRanges {
        width_fraction: (a.min_width, a.max_width),
        rotation: (-a.max_rotation.to_radians(), a.max_rotation.to_radians()),
        min_visible: a.min_visible,
    };
    let records = generate_pairs(&lib, &a.out, &opts)?;
    log::info!("wrote {} samples to {}", records.len(), a.out.display());
    Ok(())
}

fn render(a: &RenderArgs, seed: u64) -> Result<()> {
    let model = match &a.model {
        Some(p) => MorphableModel::load(p)?,
        None => toy_model(a.rings, seed)?,
    };
    let c = match &a.coeffs {
        Some(p) => CoeffVector::new(load_vector(p)?)?,
        None => CoeffVector::toy_default(),
    };
    let mut camera = Camera::default_for(a.width, a.height);
    if let Some(f) = a.focal {
        camera = Camera::new(f, camera.cx, camera.cy, a.width, a.height, camera.z_near)?;
    }
    let (out, landmarks) = render_from_coeffs(&model, &c, &camera)?;
    save_image(&out.image, &a.out)?;
    if let Some(p) = &a.mask_out {
        save_mask_png(&out.mask, p)?;
    }
    if let Some(p) = &a.depth_out {
        let t = Tensor::new(
            [a.height, a.width, 1],
            out.depth.iter().map(|&d| d as f32).collect(),
        )?;
        write_tensor(&t, p)?;
    }
    if let Some(p) = &a.landmarks_out {
        let json = serde_json::json!({
            "points": landmarks.points,
            "weights": landmarks.weights,
        });
        write_file(p, json.to_string().as_bytes())?;
    }
    Ok(())
}

fn mask_ops(a: &MaskopsArgs) -> Result<()> {
    require_files(&[&a.mm])?;
    let m_m = load_mask_png(&a.mm)?;
    let m_f = || -> Result<MaskF> {
        let p = a
            .mf
            .as_ref()
            .ok_or_else(|| Error::Contract("--mf is required for this operation".into()))?;
        require_files(&[p])?;
        load_mask_png(p)
    };
    let out = match a.op {
        MaskOp::Occlusion => maskops::occlusion_mask(&m_m, &m_f()?)?,
        MaskOp::Supervision => maskops::supervision_mask(&m_m, &m_f()?)?,
        MaskOp::Background => maskops::background_mask(&m_m, a.radius)?,
        MaskOp::Eroded => erode(&m_m, a.radius)?,
        MaskOp::Overlap => {
            println!("{}", maskops::overlap_rate(&m_m, &m_f()?)?);
            return Ok(());
        }
    };
    let path = a
        .out
        .as_ref()
        .ok_or_else(|| Error::Contract("--out is required for mask outputs".into()))?;
    save_mask_png(&out, path)
}

fn inpaint(a: &InpaintArgs, seed: u64) -> Result<()> {
    require_files(&[&a.image, &a.face_mask, &a.render, &a.render_mask])?;
    let opts = PrepareOptions {
        noise: NoiseParams {
            mean: a.noise_mean,
            stddev: a.noise_stddev,
        },
        seed,
        erosion_radius: a.erosion,
        ohem_fraction: a.ohem,
        weights: GeneratorWeights {
            pix: a.lambda_pix,
            sm: a.lambda_sm,
            bg: a.lambda_bg,
            id: a.lambda_id,
            tv: a.lambda_tv,
            adv: a.lambda_adv,
        },
        adam: AdamParams {
            learning_rate: a.lr,
            beta1: a.beta1,
            beta2: a.beta2,
            iterations: a.iters,
            cosine_decay: !a.constant_lr,
            ..AdamParams::default()
        },
        ..PrepareOptions::default()
    };
    let problem = prepare(
        &load_png(&a.image)?,
        &load_mask_png(&a.face_mask)?,
        &load_png(&a.render)?,
        &load_mask_png(&a.render_mask)?,
        &opts,
    )?;
    create_dir(&a.out_dir)?;
    save_mask_png(&problem.m_o, a.out_dir.join("occlusion_mask.png"))?;
    save_png(&problem.i_n, a.out_dir.join("noised.png"))?;
    save_png(&problem.i_p, a.out_dir.join("poisson.png"))?;
    let result = solve_with(&problem, &ToyEmbedder::new(a.embed_seed), &NullDiscriminator, |k, v| {
        if k % 50 == 0 {
            log::info!("step {k}: objective {v:.6}");
        }
    })?;
    save_png(&result.image, a.out_dir.join("inpainted.png"))?;
    let mut csv = String::from("step,objective\n");
    for (k, v) in result.full_trace().iter().enumerate() {
        csv.push_str(&format!("{k},{v:e}\n"));
    }
    write_file(&a.out_dir.join("trace.csv"), csv.as_bytes())?;
    log::info!(
        "best objective {:.6} at step {} (final {:.6})",
        result.best_value,
        result.best_step,
        result.final_value
    );
    Ok(())
}

fn loss(a: &LossArgs) -> Result<()> {
    let mut files = vec![a.input.as_path()];
    files.extend(a.target.as_deref());
    files.extend(a.mask.as_deref());
    files.extend(a.weights.as_deref());
    require_files(&files)?;
    let target = || -> Result<&Path> {
        a.target
            .as_deref()
            .ok_or_else(|| Error::Contract("--target is required for this loss".into()))
    };
    let mask = || -> Result<MaskF> {
        load_mask_png(
            a.mask
                .as_deref()
                .ok_or_else(|| Error::Contract("--mask is required for this loss".into()))?,
        )
    };
    // Gradient tensors keep the input's shape.
    let (report, dims): (LossReport, [usize; 3]) = match a.name {
        LossName::Dice | LossName::Bce => {
            let pred = load_soft_mask(&a.input)?;
            let gt = load_mask_png(target()?)?;
            let dims = [pred.height(), pred.width(), 1];
            let r = match a.name {
                LossName::Dice => losses::dice_loss(&pred, &gt)?,
                _ => losses::bce_ohem_loss(&pred, &gt, a.fraction)?,
            };
            (r, dims)
        }
        LossName::Coef => {
            let c = CoeffVector::new(load_vector(&a.input)?)?;
            let g = CoeffVector::new(load_vector(target()?)?)?;
            (losses::coef_loss(&c, &g), [COEFF_LEN, 1, 1])
        }
        LossName::Landmark => {
            let q_hat = load_vector(&a.input)?;
            let q = load_vector(target()?)?;
            let points = |v: &[f64]| -> Vec<[f64; 3]> {
                v.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect()
            };
            if q_hat.len() % 3 != 0 {
                return Err(Error::Contract("landmarks must be n x 3".into()));
            }
            let n = q_hat.len() / 3;
            let w = match &a.weights {
                Some(p) => load_vector(p)?,
                None => vec![1.0; n],
            };
            (losses::landmark_loss(&points(&q_hat), &points(&q), &w)?, [n, 3, 1])
        }
        LossName::AdversarialG => {
            let d = load_vector(&a.input)?;
            let n = d.len();
            (losses::adversarial_g_loss(&d)?, [n, 1, 1])
        }
        _ => {
            let x = load_image(&a.input)?;
            let dims = [x.height(), x.width(), x.channels()];
            let r = match a.name {
                LossName::Tv => losses::tv_loss(&x)?,
                LossName::PixelL2 => losses::masked_pixel_l2(&x, &load_image(target()?)?, &mask()?)?,
                LossName::PixelL1 => losses::pixel_l1_face(&x, &load_image(target()?)?, &mask()?)?,
                LossName::Background => losses::background_loss(&x, &load_image(target()?)?, &mask()?)?,
                LossName::Ssim => losses::ssim_ohem_loss(&x, &load_image(target()?)?, &mask()?, a.fraction)?,
                LossName::Identity => {
                    losses::identity_loss(&x, &load_image(target()?)?, &ToyEmbedder::new(a.embed_seed))?
                }
                _ => unreachable!("handled above"),
            };
            (r, dims)
        }
    };
    println!("{}", report.value);
    if let Some(p) = &a.grad_out {
        let t = Tensor::new(dims, report.gradient.iter().map(|&g| g as f32).collect())?;
        write_tensor(&t, p)?;
    }
    Ok(())
}

fn gradcheck(a: &GradcheckArgs, seed: u64) -> Result<()> {
    let cfg = GradcheckConfig {
        step: a.step,
        probes: a.probes,
        size: a.size,
        tolerance: a.tolerance,
        seed,
    };
    let rows = run_gradcheck(&cfg)?;
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{}", GradcheckRow::HEADER);
    for r in &rows {
        let _ = writeln!(out, "{}", r.to_tsv());
    }
    let failed: Vec<&str> = rows.iter().filter(|r| !r.passed).map(|r| r.name.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::Contract(format!("gradient check failed for {}", failed.join(", "))))
    }
}
