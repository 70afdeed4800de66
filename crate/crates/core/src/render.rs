//! Z-buffered software rasterizer with 9-coefficient spherical-harmonics
//! diffuse shading.
//!
//! Projected vertices are snapped to a 1/256-pixel grid and coverage is
//! decided with exact integer edge functions and a top-left fill rule, so
//! triangles that share an edge never both claim, nor both miss, a pixel.
//! The same 9 lighting coefficients are applied to all three color channels.

use crate::error::{Error, Result};
use crate::image::{ImageF, MaskF};
use crate::morphable::{self, CoeffVector, Landmarks, MorphableModel, PosedMesh, Vec3};
use crate::par;

/// `1 / (2√π)`
pub const SH_Y0: f64 = 0.282_094_791_773_878_14;
/// `√3 / (2√π)`
pub const SH_Y1: f64 = 0.488_602_511_902_919_9;
/// `√15 / (2√π)`
pub const SH_Y4: f64 = 1.092_548_430_592_079_2;
/// `√5 / (4√π)`
pub const SH_Y6: f64 = 0.315_391_565_252_520_05;
/// `√15 / (4√π)`
pub const SH_Y8: f64 = 0.546_274_215_296_039_6;

const SUBPIXEL: i64 = 256;
const BAND_ROWS: usize = 16;
/// Projected coordinates beyond this many pixels are treated as clipped.
const MAX_SCREEN: f64 = 1.0e7;

/// Real SH basis `Y_0..Y_8` at a unit normal.
pub fn sh_basis(n: Vec3) -> Result<[f64; 9]> {
    let len = morphable::norm(n);
    if !((len - 1.0).abs() <= 1e-6) {
        return Err(Error::Contract(format!("SH normal has length {len}, expected 1")));
    }
    Ok(sh_basis_unchecked(n))
}

#[inline]
fn sh_basis_unchecked([x, y, z]: Vec3) -> [f64; 9] {
    [
        SH_Y0,
        SH_Y1 * y,
        SH_Y1 * z,
        SH_Y1 * x,
        SH_Y4 * x * y,
        SH_Y4 * y * z,
        SH_Y6 * (3.0 * z * z - 1.0),
        SH_Y4 * x * z,
        SH_Y8 * (x * x - y * y),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub focal: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub z_near: f64,
}

impl Camera {
    pub fn new(focal: f64, cx: f64, cy: f64, width: usize, height: usize, z_near: f64) -> Result<Self> {
        if !(focal > 0.0 && focal.is_finite()) {
            return Err(Error::Contract(format!("focal length must be positive, got {focal}")));
        }
        if !(z_near > 0.0 && z_near.is_finite()) {
            return Err(Error::Contract(format!("z_near must be positive, got {z_near}")));
        }
        if !(cx.is_finite() && cy.is_finite()) {
            return Err(Error::NonFinite("principal point".into()));
        }
        Ok(Self {
            focal,
            cx,
            cy,
            width,
            height,
            z_near,
        })
    }

    /// Focal length 1100 px at 256 px width (scaled linearly with width),
    /// principal point at the image center.
    pub fn default_for(width: usize, height: usize) -> Self {
        Self {
            focal: 1100.0 * width as f64 / 256.0,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            width,
            height,
            z_near: 0.1,
        }
    }

    /// Continuous pixel coordinates `(u, v)` of a camera-space point.
    pub fn project(&self, p: Vec3) -> (f64, f64) {
        (
            self.focal * p[0] / p[2] + self.cx,
            self.focal * p[1] / p[2] + self.cy,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderOutput {
    pub image: ImageF,
    pub mask: MaskF,
    /// Camera-space depth per pixel; `+∞` where nothing was drawn.
    pub depth: Vec<f64>,
}

/// Triangle in fixed-point screen space, positively oriented.
struct ScreenTri {
    verts: [usize; 3],
    p: [(i64, i64); 3],
    area: i128,
    x0: usize,
    x1: usize,
    y0: usize,
    y1: usize,
}

fn edge(a: (i64, i64), b: (i64, i64), p: (i64, i64)) -> i128 {
    i128::from(b.0 - a.0) * i128::from(p.1 - a.1) - i128::from(b.1 - a.1) * i128::from(p.0 - a.0)
}

/// Tie rule for samples exactly on an edge. For the two orientations of a
/// shared edge exactly one returns true.
fn owns_edge(a: (i64, i64), b: (i64, i64)) -> bool {
    let dy = b.1 - a.1;
    let dx = b.0 - a.0;
    dy > 0 || (dy == 0 && dx < 0)
}

fn setup(mesh: &PosedMesh, camera: &Camera) -> Vec<ScreenTri> {
    let snapped: Vec<Option<(i64, i64)>> = mesh
        .positions
        .iter()
        .map(|&p| {
            if !(p[2] > camera.z_near) {
                return None;
            }
            let (u, v) = camera.project(p);
            if !(u.abs() < MAX_SCREEN && v.abs() < MAX_SCREEN) {
                return None;
            }
            Some((
                (u * SUBPIXEL as f64).round() as i64,
                (v * SUBPIXEL as f64).round() as i64,
            ))
        })
        .collect();
    let mut tris = Vec::with_capacity(mesh.triangles.len());
    for t in &mesh.triangles {
        let mut verts = t.map(|i| i as usize);
        let (Some(mut a), Some(mut b), Some(c)) =
            (snapped[verts[0]], snapped[verts[1]], snapped[verts[2]])
        else {
            continue;
        };
        let mut area = edge(a, b, c);
        if area == 0 {
            continue;
        }
        if area < 0 {
            std::mem::swap(&mut a, &mut b);
            verts.swap(0, 1);
            area = -area;
        }
        let p = [a, b, c];
        let min_x = p.iter().map(|q| q.0).min().unwrap();
        let max_x = p.iter().map(|q| q.0).max().unwrap();
        let min_y = p.iter().map(|q| q.1).min().unwrap();
        let max_y = p.iter().map(|q| q.1).max().unwrap();
        // pixel x covers sample x*S + S/2
        let to_px_lo = |v: i64| ((v - SUBPIXEL / 2) as f64 / SUBPIXEL as f64).ceil().max(0.0);
        let to_px_hi = |v: i64, n: usize| {
            ((v - SUBPIXEL / 2) as f64 / SUBPIXEL as f64)
                .floor()
                .min(n as f64 - 1.0)
        };
        let (x0, x1) = (to_px_lo(min_x), to_px_hi(max_x, camera.width));
        let (y0, y1) = (to_px_lo(min_y), to_px_hi(max_y, camera.height));
        if x1 < x0 || y1 < y0 {
            continue;
        }
        tris.push(ScreenTri {
            verts,
            p,
            area,
            x0: x0 as usize,
            x1: x1 as usize,
            y0: y0 as usize,
            y1: y1 as usize,
        });
    }
    tris
}

/// Calls `f(x, y, [w0, w1, w2])` for every pixel sample inside `t` on rows
/// `rows`. Weights are screen-space barycentrics summing to one.
fn scan(t: &ScreenTri, rows: std::ops::Range<usize>, mut f: impl FnMut(usize, usize, [f64; 3])) {
    let y_start = t.y0.max(rows.start);
    let y_end = (t.y1 + 1).min(rows.end);
    let [a, b, c] = t.p;
    let own = [owns_edge(b, c), owns_edge(c, a), owns_edge(a, b)];
    let area = t.area as f64;
    for y in y_start..y_end {
        let sy = y as i64 * SUBPIXEL + SUBPIXEL / 2;
        for x in t.x0..=t.x1 {
            let s = (x as i64 * SUBPIXEL + SUBPIXEL / 2, sy);
            let w = [edge(b, c, s), edge(c, a, s), edge(a, b, s)];
            let inside = w
                .iter()
                .zip(own)
                .all(|(&wi, o)| wi > 0 || (wi == 0 && o));
            if inside {
                f(x, y, [w[0] as f64 / area, w[1] as f64 / area, w[2] as f64 / area]);
            }
        }
    }
}

/// Number of triangles whose coverage includes each pixel, ignoring depth.
pub fn coverage(mesh: &PosedMesh, camera: &Camera) -> Vec<u32> {
    let mut counts = vec![0u32; camera.width * camera.height];
    for t in setup(mesh, camera) {
        scan(&t, 0..camera.height, |x, y, _| counts[y * camera.width + x] += 1);
    }
    counts
}

pub fn render(mesh: &PosedMesh, camera: &Camera, sh: &[f64; 9]) -> Result<RenderOutput> {
    if sh.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("SH coefficients".into()));
    }
    let (w, h) = (camera.width, camera.height);
    let tris = setup(mesh, camera);
    let bands: Vec<usize> = (0..h.div_ceil(BAND_ROWS)).collect();
    let parts = par::map_collect(bands, |band| {
        let rows = band * BAND_ROWS..((band + 1) * BAND_ROWS).min(h);
        let n = rows.len() * w;
        let mut color = vec![0.0f64; 3 * n];
        let mut depth = vec![f64::INFINITY; n];
        for t in &tris {
            let zs = t.verts.map(|i| mesh.positions[i][2]);
            scan(t, rows.clone(), |x, y, b| {
                let q = [b[0] / zs[0], b[1] / zs[1], b[2] / zs[2]];
                let s = q[0] + q[1] + q[2];
                let z = 1.0 / s;
                let k = (y - rows.start) * w + x;
                if !(z < depth[k]) {
                    return;
                }
                depth[k] = z;
                let lam = [q[0] / s, q[1] / s, q[2] / s];
                let interp = |attr: &[Vec3], ch: usize| {
                    lam[0] * attr[t.verts[0]][ch]
                        + lam[1] * attr[t.verts[1]][ch]
                        + lam[2] * attr[t.verts[2]][ch]
                };
                let mut nrm = [
                    interp(&mesh.normals, 0),
                    interp(&mesh.normals, 1),
                    interp(&mesh.normals, 2),
                ];
                let len = morphable::norm(nrm);
                nrm = if len > 0.0 {
                    [nrm[0] / len, nrm[1] / len, nrm[2] / len]
                } else {
                    [0.0, 0.0, 1.0]
                };
                let basis = sh_basis_unchecked(nrm);
                let shading: f64 = basis.iter().zip(sh).map(|(y, c)| y * c).sum();
                for ch in 0..3 {
                    color[3 * k + ch] = (interp(&mesh.albedo, ch) * shading).clamp(0.0, 1.0);
                }
            });
        }
        (color, depth)
    });
    let mut color = Vec::with_capacity(3 * w * h);
    let mut depth = Vec::with_capacity(w * h);
    for (c, d) in parts {
        color.extend(c);
        depth.extend(d);
    }
    let mask = MaskF::from_bools(h, w, depth.iter().map(|d| d.is_finite()));
    Ok(RenderOutput {
        image: ImageF::new(h, w, 3, color)?,
        mask,
        depth,
    })
}

/// `synthesize` then `render`, plus the posed landmarks.
pub fn render_from_coeffs(
    model: &MorphableModel,
    c: &CoeffVector,
    camera: &Camera,
) -> Result<(RenderOutput, Landmarks)> {
    let mesh = morphable::synthesize(model, c);
    let out = render(&mesh, camera, &c.sh())?;
    Ok((out, morphable::landmarks3d(&mesh, model)))
}
