//! Occlusion synthesis: paste occluder patches onto clean faces to produce
//! `(I, M_gt, M_o)` training triples with
//! `I = I_f ⊙ (1 − M_o) + I_o ⊙ M_o` and `M_gt = M_f ⊙ (1 − M_o)`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_same_dims, Error, Result};
use crate::image::{load_mask_png, load_png, save_mask_png, save_png, write_tensor, ImageF, MaskF, Tensor};
use crate::par;

pub const MIN_SCALE: f64 = 0.05;
pub const MAX_SCALE: f64 = 4.0;

/// An occluder: RGB texture plus binary alpha of the same size.
#[derive(Debug, Clone, PartialEq)]
pub struct OcclusionPatch {
    texture: ImageF,
    alpha: MaskF,
    name: String,
}

impl OcclusionPatch {
    pub fn new(texture: ImageF, alpha: MaskF, name: impl Into<String>) -> Result<Self> {
        if texture.channels() != 3 {
            return Err(Error::Contract("occlusion texture must be RGB".into()));
        }
        ensure_same_dims("occlusion alpha", texture.dims(), alpha.dims())?;
        alpha.require_binary("occlusion alpha")?;
        if alpha.count() == 0 {
            return Err(Error::Contract("occlusion alpha is empty".into()));
        }
        Ok(Self {
            texture,
            alpha,
            name: name.into(),
        })
    }

    pub fn texture(&self) -> &ImageF {
        &self.texture
    }
    pub fn alpha(&self) -> &MaskF {
        &self.alpha
    }
    pub fn name(&self) -> &str {
        &self.name
    }
}

/// Similarity transform placing a patch in the face frame: scale and
/// rotate about the patch center, then shift by `(dx, dy)` pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlacementParams {
    pub scale: f64,
    pub rotation: f64,
    pub dx: f64,
    pub dy: f64,
    pub seed: u64,
}

impl PlacementParams {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            rotation: 0.0,
            dx: 0.0,
            dy: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(MIN_SCALE..=MAX_SCALE).contains(&self.scale) {
            return Err(Error::Contract(format!(
                "placement scale {} outside [{MIN_SCALE}, {MAX_SCALE}]",
                self.scale
            )));
        }
        if !(self.rotation.is_finite() && self.dx.is_finite() && self.dy.is_finite()) {
            return Err(Error::NonFinite("placement parameters".into()));
        }
        Ok(())
    }

    /// Patch coordinates of the face-frame point `(fx, fy)`.
    fn to_patch(&self, patch: (usize, usize), fx: f64, fy: f64) -> (f64, f64) {
        let (cx, cy) = (patch.1 as f64 / 2.0, patch.0 as f64 / 2.0);
        let (s, c) = self.rotation.sin_cos();
        let (ux, uy) = (fx - cx - self.dx, fy - cy - self.dy);
        (
            cx + (c * ux + s * uy) / self.scale,
            cy + (-s * ux + c * uy) / self.scale,
        )
    }

    /// Face-frame coordinates of the patch point `(px, py)`.
    fn to_face(&self, patch: (usize, usize), px: f64, py: f64) -> (f64, f64) {
        let (cx, cy) = (patch.1 as f64 / 2.0, patch.0 as f64 / 2.0);
        let (s, c) = self.rotation.sin_cos();
        let (ux, uy) = ((px - cx) * self.scale, (py - cy) * self.scale);
        (cx + self.dx + c * ux - s * uy, cy + self.dy + s * ux + c * uy)
    }
}

/// Randomization ranges for [`sample_placement`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlacementRanges {
    /// Transformed patch width as a fraction of the face-image width.
    pub width_fraction: (f64, f64),
    /// Rotation range in radians.
    pub rotation: (f64, f64),
    /// Minimum fraction of the alpha that must land on the image.
    pub min_visible: f64,
}

impl Default for PlacementRanges {
    fn default() -> Self {
        Self {
            width_fraction: (0.3, 1.2),
            rotation: (-30f64.to_radians(), 30f64.to_radians()),
            min_visible: 0.25,
        }
    }
}

/// Fraction of the patch alpha whose transformed pixel centers fall on a
/// `face_dims` image.
pub fn visible_fraction(patch: &OcclusionPatch, placement: &PlacementParams, face_dims: (usize, usize)) -> f64 {
    let (ph, pw) = patch.alpha.dims();
    let (fh, fw) = face_dims;
    let mut on = 0usize;
    let mut total = 0usize;
    for y in 0..ph {
        for x in 0..pw {
            if patch.alpha.is_set(y, x) {
                total += 1;
                let (fx, fy) = placement.to_face((ph, pw), x as f64 + 0.5, y as f64 + 0.5);
                if fx >= 0.0 && fy >= 0.0 && fx < fw as f64 && fy < fh as f64 {
                    on += 1;
                }
            }
        }
    }
    on as f64 / total.max(1) as f64
}

/// Draws a random placement. Translation is retried until at least
/// `min_visible` of the alpha is on-image; after 100 misses the patch is
/// centered.
pub fn sample_placement(
    patch: &OcclusionPatch,
    face_dims: (usize, usize),
    ranges: &PlacementRanges,
    rng: &mut impl Rng,
    seed: u64,
) -> PlacementParams {
    let (fh, fw) = face_dims;
    let (ph, pw) = patch.alpha.dims();
    let frac = rng.gen_range(ranges.width_fraction.0..=ranges.width_fraction.1);
    let scale = (frac * fw as f64 / pw as f64).clamp(MIN_SCALE, MAX_SCALE);
    let rotation = rng.gen_range(ranges.rotation.0..=ranges.rotation.1);
    let centered = |cx: f64, cy: f64| PlacementParams {
        scale,
        rotation,
        dx: cx - pw as f64 / 2.0,
        dy: cy - ph as f64 / 2.0,
        seed,
    };
    for _ in 0..100 {
        let cx = rng.gen_range(0.0..fw as f64);
        let cy = rng.gen_range(0.0..fh as f64);
        let p = centered(cx, cy);
        if visible_fraction(patch, &p, face_dims) >= ranges.min_visible {
            return p;
        }
    }
    centered(fw as f64 / 2.0, fh as f64 / 2.0)
}

/// Result of pasting one or more patches.
#[derive(Debug, Clone, PartialEq)]
pub struct Composite {
    /// Occluded image `I`.
    pub image: ImageF,
    /// Visible-face mask of the occluded image, `M_f ⊙ (1 − M_o)`.
    pub m_gt: MaskF,
    /// Transformed occluder alpha in the face frame.
    pub m_o: MaskF,
}

fn bilinear_clamped(img: &ImageF, x: f64, y: f64, c: usize) -> f64 {
    let (h, w) = img.dims();
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let (tx, ty) = (x - x0 as f64, y - y0 as f64);
    let top = img.get(y0, x0, c) * (1.0 - tx) + img.get(y0, x1, c) * tx;
    let bottom = img.get(y1, x0, c) * (1.0 - tx) + img.get(y1, x1, c) * tx;
    top * (1.0 - ty) + bottom * ty
}

/// Pastes `patch` onto `face`. Alpha is resampled nearest-neighbour and
/// re-binarized at 0.5; texture is resampled bilinearly.
pub fn composite(
    face: &ImageF,
    m_f: &MaskF,
    patch: &OcclusionPatch,
    placement: &PlacementParams,
) -> Result<Composite> {
    if face.channels() != 3 {
        return Err(Error::Contract("face image must be RGB".into()));
    }
    ensure_same_dims("face mask", face.dims(), m_f.dims())?;
    m_f.require_binary("face mask")?;
    placement.validate()?;
    let (fh, fw) = face.dims();
    let pdims = patch.alpha.dims();
    let (ph, pw) = pdims;
    let mut image = face.clone();
    let mut occ = Vec::with_capacity(fh * fw);
    for y in 0..fh {
        for x in 0..fw {
            let (px, py) = placement.to_patch(pdims, x as f64 + 0.5, y as f64 + 0.5);
            let (ix, iy) = (px.floor(), py.floor());
            let a = if ix >= 0.0 && iy >= 0.0 && ix < pw as f64 && iy < ph as f64 {
                patch.alpha.get(iy as usize, ix as usize)
            } else {
                0.0
            };
            let hit = a >= 0.5;
            occ.push(hit);
            if hit {
                for c in 0..3 {
                    let v = bilinear_clamped(&patch.texture, px - 0.5, py - 0.5, c);
                    image.set(y, x, c, v);
                }
            }
        }
    }
    let m_o = MaskF::from_bools(fh, fw, occ);
    if m_o.count() == 0 {
        return Err(Error::Placement(format!(
            "patch '{}' lands entirely off-image",
            patch.name
        )));
    }
    let m_gt = MaskF::from_bools(
        fh,
        fw,
        m_f.data().iter().zip(m_o.data()).map(|(&f, &o)| f != 0.0 && o == 0.0),
    );
    Ok(Composite { image, m_gt, m_o })
}

/// Replaces the patch texture by `swatch`, tiled from `offset = (ox, oy)`:
/// `texture(y, x) = swatch((y + oy) mod h, (x + ox) mod w)`.
pub fn substitute_texture_at(
    patch: &OcclusionPatch,
    swatch: &ImageF,
    offset: (usize, usize),
) -> Result<OcclusionPatch> {
    if swatch.channels() != 3 || swatch.pixel_count() == 0 {
        return Err(Error::Contract("swatch must be a non-empty RGB image".into()));
    }
    let (sh, sw) = swatch.dims();
    let (h, w) = patch.alpha.dims();
    let texture = ImageF::from_fn(h, w, 3, |y, x, c| {
        swatch.get((y + offset.1) % sh, (x + offset.0) % sw, c)
    });
    Ok(OcclusionPatch {
        texture,
        alpha: patch.alpha.clone(),
        name: patch.name.clone(),
    })
}

/// [`substitute_texture_at`] with an offset drawn from `seed`.
pub fn substitute_texture(patch: &OcclusionPatch, swatch: &ImageF, seed: u64) -> Result<OcclusionPatch> {
    if swatch.pixel_count() == 0 {
        return Err(Error::Contract("swatch must be non-empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ox = rng.gen_range(0..swatch.width());
    let oy = rng.gen_range(0..swatch.height());
    substitute_texture_at(patch, swatch, (ox, oy))
}

// ---------------------------------------------------------------------------
// Batch generation
// ---------------------------------------------------------------------------

/// Loaded face, occluder and swatch assets, each sorted by file name.
#[derive(Debug, Clone)]
pub struct AssetLibrary {
    pub faces: Vec<(String, ImageF, MaskF)>,
    pub occlusions: Vec<OcclusionPatch>,
    pub swatches: Vec<(String, ImageF)>,
}

fn png_stems(dir: &Path) -> Result<Vec<String>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut stems = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(stem) = name.strip_suffix(".png") {
            if !stem.ends_with(".mask") {
                stems.push(stem.to_string());
            }
        }
    }
    stems.sort();
    Ok(stems)
}

fn load_pair(dir: &Path, stem: &str) -> Result<(ImageF, MaskF)> {
    let img = load_png(dir.join(format!("{stem}.png")))?;
    let mask = load_mask_png(dir.join(format!("{stem}.mask.png")))?;
    ensure_same_dims(stem, img.dims(), mask.dims())?;
    if img.channels() != 3 {
        return Err(Error::Format(format!("{stem}.png must be RGB")));
    }
    Ok((img, mask))
}

impl AssetLibrary {
    /// Faces and occluders are `<name>.png` + `<name>.mask.png`; swatches are
    /// any other RGB `*.png`.
    pub fn load(faces_dir: &Path, occlusions_dir: &Path, swatches_dir: &Path) -> Result<Self> {
        let mut faces = Vec::new();
        for stem in png_stems(faces_dir)? {
            let (img, mask) = load_pair(faces_dir, &stem)?;
            faces.push((stem, img, mask));
        }
        let mut occlusions = Vec::new();
        for stem in png_stems(occlusions_dir)? {
            let (img, mask) = load_pair(occlusions_dir, &stem)?;
            occlusions.push(OcclusionPatch::new(img, mask, stem)?);
        }
        let mut swatches = Vec::new();
        for stem in png_stems(swatches_dir)? {
            let img = load_png(swatches_dir.join(format!("{stem}.png")))?;
            if img.channels() != 3 {
                return Err(Error::Format(format!("swatch {stem}.png must be RGB")));
            }
            swatches.push((stem, img));
        }
        for (what, n, dir) in [
            ("face", faces.len(), faces_dir),
            ("occlusion", occlusions.len(), occlusions_dir),
            ("swatch", swatches.len(), swatches_dir),
        ] {
            if n == 0 {
                return Err(Error::Contract(format!(
                    "no {what} assets in {}",
                    dir.display()
                )));
            }
        }
        Ok(Self {
            faces,
            occlusions,
            swatches,
        })
    }
}

/// One extra patch beyond the first, when more than one is pasted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtraPatch {
    pub occlusion: String,
    pub swatch: Option<String>,
    pub scale: f64,
    pub rotation: f64,
    pub dx: f64,
    pub dy: f64,
    pub seed: u64,
}

/// One JSON-lines manifest row; enough to regenerate the sample exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub index: usize,
    pub face: String,
    pub occlusion: String,
    pub swatch: Option<String>,
    pub scale: f64,
    pub rotation: f64,
    pub dx: f64,
    pub dy: f64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub extra: Vec<ExtraPatch>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerateOptions {
    pub count: usize,
    pub seed: u64,
    pub patches_per_sample: usize,
    /// Probability that an occluder's texture is replaced by a swatch.
    pub swatch_probability: f64,
    pub ranges: PlacementRanges,
}

impl GenerateOptions {
    pub fn new(count: usize, seed: u64) -> Self {
        Self {
            count,
            seed,
            patches_per_sample: 1,
            swatch_probability: 0.5,
            ranges: PlacementRanges::default(),
        }
    }
}

/// SplitMix64 finalizer; derives independent per-sample seeds.
pub fn sub_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Draws the random choices for sample `index`.
pub fn sample_record(lib: &AssetLibrary, opts: &GenerateOptions, index: usize) -> ManifestRecord {
    let seed = sub_seed(opts.seed, index as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let face = rng.gen_range(0..lib.faces.len());
    let dims = lib.faces[face].1.dims();
    let mut patches = Vec::with_capacity(opts.patches_per_sample.max(1));
    for k in 0..opts.patches_per_sample.max(1) {
        let occ = rng.gen_range(0..lib.occlusions.len());
        let swatch = if rng.gen_bool(opts.swatch_probability) {
            Some(rng.gen_range(0..lib.swatches.len()))
        } else {
            None
        };
        let patch_seed = sub_seed(seed, k as u64);
        let p = sample_placement(&lib.occlusions[occ], dims, &opts.ranges, &mut rng, patch_seed);
        patches.push(ExtraPatch {
            occlusion: lib.occlusions[occ].name.clone(),
            swatch: swatch.map(|s| lib.swatches[s].0.clone()),
            scale: p.scale,
            rotation: p.rotation,
            dx: p.dx,
            dy: p.dy,
            seed: patch_seed,
        });
    }
    let first = patches.remove(0);
    ManifestRecord {
        index,
        face: lib.faces[face].0.clone(),
        occlusion: first.occlusion,
        swatch: first.swatch,
        scale: first.scale,
        rotation: first.rotation,
        dx: first.dx,
        dy: first.dy,
        seed: first.seed,
        extra: patches,
    }
}

/// Regenerates a sample from its manifest record.
pub fn render_record(lib: &AssetLibrary, record: &ManifestRecord) -> Result<Composite> {
    let (_, face, m_f) = lib
        .faces
        .iter()
        .find(|(n, _, _)| *n == record.face)
        .ok_or_else(|| Error::Contract(format!("unknown face asset '{}'", record.face)))?;
    let first = ExtraPatch {
        occlusion: record.occlusion.clone(),
        swatch: record.swatch.clone(),
        scale: record.scale,
        rotation: record.rotation,
        dx: record.dx,
        dy: record.dy,
        seed: record.seed,
    };
    let mut image = face.clone();
    let mut m_gt = m_f.clone();
    let mut occ_union = MaskF::zeros(face.height(), face.width());
    for p in std::iter::once(&first).chain(&record.extra) {
        let mut patch = lib
            .occlusions
            .iter()
            .find(|o| o.name == p.occlusion)
            .ok_or_else(|| Error::Contract(format!("unknown occlusion asset '{}'", p.occlusion)))?
            .clone();
        if let Some(s) = &p.swatch {
            let (_, swatch) = lib
                .swatches
                .iter()
                .find(|(n, _)| n == s)
                .ok_or_else(|| Error::Contract(format!("unknown swatch '{s}'")))?;
            patch = substitute_texture(&patch, swatch, p.seed)?;
        }
        let placement = PlacementParams {
            scale: p.scale,
            rotation: p.rotation,
            dx: p.dx,
            dy: p.dy,
            seed: p.seed,
        };
        let c = composite(&image, &m_gt, &patch, &placement)?;
        occ_union = MaskF::from_bools(
            face.height(),
            face.width(),
            occ_union.data().iter().zip(c.m_o.data()).map(|(&a, &b)| a != 0.0 || b != 0.0),
        );
        image = c.image;
        m_gt = c.m_gt;
    }
    Ok(Composite {
        image,
        m_gt,
        m_o: occ_union,
    })
}

/// File stem for sample `index` inside the output directory.
pub fn sample_stem(out_dir: &Path, index: usize) -> PathBuf {
    out_dir.join(format!("{index:06}"))
}

/// Generates `opts.count` samples into `out_dir`: for each, `NNNNNN.png`
/// (`I`), `NNNNNN.mgt.png`, `NNNNNN.mo.png` and DTN1 twins, plus
/// `manifest.jsonl`. Samples are computed in parallel and written in
/// order; output bytes do not depend on the thread count.
pub fn generate_pairs(lib: &AssetLibrary, out_dir: &Path, opts: &GenerateOptions) -> Result<Vec<ManifestRecord>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let indices: Vec<usize> = (0..opts.count).collect();
    let results = par::map_collect(indices, |i| {
        let record = sample_record(lib, opts, i);
        render_record(lib, &record).map(|c| (record, c))
    });
    let manifest_path = out_dir.join("manifest.jsonl");
    let mut manifest = Vec::new();
    let mut records = Vec::with_capacity(opts.count);
    for res in results {
        let (record, c) = res?;
        let stem = sample_stem(out_dir, record.index);
        let with = |suffix: &str| PathBuf::from(format!("{}{suffix}", stem.display()));
        save_png(&c.image, with(".png"))?;
        save_mask_png(&c.m_gt, with(".mgt.png"))?;
        save_mask_png(&c.m_o, with(".mo.png"))?;
        write_tensor(&Tensor::from_image(&c.image), with(".dtn"))?;
        write_tensor(&Tensor::from_image(&c.m_gt.to_image()), with(".mgt.dtn"))?;
        write_tensor(&Tensor::from_image(&c.m_o.to_image()), with(".mo.dtn"))?;
        serde_json::to_writer(&mut manifest, &record)
            .map_err(|e| Error::Format(format!("manifest: {e}")))?;
        manifest.push(b'\n');
        records.push(record);
    }
    let mut f = fs::File::create(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    f.write_all(&manifest).map_err(|e| Error::io(&manifest_path, e))?;
    Ok(records)
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::Format(format!("manifest line: {e}"))))
        .collect()
}
