//! Linear 3D morphable face model and its 239-entry coefficient vector.
//!
//! A face is `mean + basis · weights` for both shape and albedo. The pose
//! (Euler rotation then translation) places it in camera space.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub const N_ROTATION: usize = 3;
pub const N_TRANSLATION: usize = 3;
pub const N_SHAPE: usize = 144;
pub const N_TEXTURE: usize = 80;
pub const N_ILLUMINATION: usize = 9;
pub const COEFF_LEN: usize = N_ROTATION + N_TRANSLATION + N_SHAPE + N_TEXTURE + N_ILLUMINATION;

const SHAPE_START: usize = N_ROTATION + N_TRANSLATION;
const TEXTURE_START: usize = SHAPE_START + N_SHAPE;
const ILLUM_START: usize = TEXTURE_START + N_TEXTURE;

/// Default number of landmarks.
pub const N_LANDMARKS: usize = 68;

/// Distance from the camera at which the toy model sits by default.
pub const TOY_DEPTH: f64 = 10.0;

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

/// Reconstruction parameters laid out as
/// `[rotation(3) | translation(3) | shape(144) | texture(80) | illumination(9)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffVector(Vec<f64>);

impl CoeffVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() != COEFF_LEN {
            return Err(Error::DimMismatch(format!(
                "coefficient vector needs {COEFF_LEN} entries, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("coefficient {i} is {}", values[i])));
        }
        Ok(Self(values))
    }

    pub fn zeros() -> Self {
        Self(vec![0.0; COEFF_LEN])
    }

    /// Identity pose pushed to `z = TOY_DEPTH`, zero shape/texture, and unit
    /// ambient lighting (shading ≡ 1).
    pub fn toy_default() -> Self {
        let mut c = Self::zeros();
        c.translation_mut()[2] = TOY_DEPTH;
        c.illumination_mut()[0] = 1.0 / crate::render::SH_Y0;
        c
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn rotation(&self) -> &[f64] {
        &self.0[..N_ROTATION]
    }
    pub fn rotation_mut(&mut self) -> &mut [f64] {
        &mut self.0[..N_ROTATION]
    }
    pub fn translation(&self) -> &[f64] {
        &self.0[N_ROTATION..SHAPE_START]
    }
    pub fn translation_mut(&mut self) -> &mut [f64] {
        &mut self.0[N_ROTATION..SHAPE_START]
    }
    pub fn shape(&self) -> &[f64] {
        &self.0[SHAPE_START..TEXTURE_START]
    }
    pub fn shape_mut(&mut self) -> &mut [f64] {
        &mut self.0[SHAPE_START..TEXTURE_START]
    }
    pub fn texture(&self) -> &[f64] {
        &self.0[TEXTURE_START..ILLUM_START]
    }
    pub fn texture_mut(&mut self) -> &mut [f64] {
        &mut self.0[TEXTURE_START..ILLUM_START]
    }
    pub fn illumination(&self) -> &[f64] {
        &self.0[ILLUM_START..]
    }
    pub fn illumination_mut(&mut self) -> &mut [f64] {
        &mut self.0[ILLUM_START..]
    }

    pub fn sh(&self) -> [f64; 9] {
        self.illumination().try_into().unwrap()
    }
}

/// `R = R_z(γ) · R_y(β) · R_x(α)` for angles `(α, β, γ)`.
pub fn rotation_matrix(angles: &[f64]) -> Mat3 {
    let (sa, ca) = angles[0].sin_cos();
    let (sb, cb) = angles[1].sin_cos();
    let (sg, cg) = angles[2].sin_cos();
    let rx = [[1.0, 0.0, 0.0], [0.0, ca, -sa], [0.0, sa, ca]];
    let ry = [[cb, 0.0, sb], [0.0, 1.0, 0.0], [-sb, 0.0, cb]];
    let rz = [[cg, -sg, 0.0], [sg, cg, 0.0], [0.0, 0.0, 1.0]];
    mat_mul(&rz, &mat_mul(&ry, &rx))
}

fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    out
}

#[inline]
fn mat_vec(m: &Mat3, v: Vec3) -> Vec3 {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

#[inline]
pub(crate) fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub(crate) fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub(crate) fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub(crate) fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

/// Linear face model. Bases are stored column-major: column `k` occupies
/// `[k·3V, (k+1)·3V)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MorphableModel {
    vertex_count: usize,
    mean_shape: Vec<f64>,
    shape_basis: Vec<f64>,
    mean_albedo: Vec<f64>,
    albedo_basis: Vec<f64>,
    triangles: Vec<[u32; 3]>,
    landmark_indices: Vec<u32>,
    landmark_weights: Vec<f64>,
}

impl MorphableModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        vertex_count: usize,
        mean_shape: Vec<f64>,
        shape_basis: Vec<f64>,
        mean_albedo: Vec<f64>,
        albedo_basis: Vec<f64>,
        triangles: Vec<[u32; 3]>,
        landmark_indices: Vec<u32>,
        landmark_weights: Vec<f64>,
    ) -> Result<Self> {
        let n3 = 3 * vertex_count;
        let check = |name: &str, got: usize, want: usize| {
            if got != want {
                Err(Error::DimMismatch(format!("{name}: expected {want} values, got {got}")))
            } else {
                Ok(())
            }
        };
        check("mean shape", mean_shape.len(), n3)?;
        check("shape basis", shape_basis.len(), n3 * N_SHAPE)?;
        check("mean albedo", mean_albedo.len(), n3)?;
        check("albedo basis", albedo_basis.len(), n3 * N_TEXTURE)?;
        check("landmark weights", landmark_weights.len(), landmark_indices.len())?;
        let v = vertex_count as u64;
        if triangles.iter().flatten().any(|&i| u64::from(i) >= v) {
            return Err(Error::Contract("triangle index out of range".into()));
        }
        if landmark_indices.iter().any(|&i| u64::from(i) >= v) {
            return Err(Error::Contract("landmark index out of range".into()));
        }
        if mean_albedo.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::Contract("mean albedo outside [0,1]".into()));
        }
        let all_finite = [&mean_shape, &shape_basis, &albedo_basis, &landmark_weights]
            .iter()
            .all(|v| v.iter().all(|x| x.is_finite()));
        if !all_finite {
            return Err(Error::NonFinite("model contains non-finite values".into()));
        }
        Ok(Self {
            vertex_count,
            mean_shape,
            shape_basis,
            mean_albedo,
            albedo_basis,
            triangles,
            landmark_indices,
            landmark_weights,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }
    pub fn mean_shape(&self) -> &[f64] {
        &self.mean_shape
    }
    pub fn shape_basis(&self) -> &[f64] {
        &self.shape_basis
    }
    pub fn mean_albedo(&self) -> &[f64] {
        &self.mean_albedo
    }
    pub fn albedo_basis(&self) -> &[f64] {
        &self.albedo_basis
    }
    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }
    pub fn landmark_indices(&self) -> &[u32] {
        &self.landmark_indices
    }
    pub fn landmark_weights(&self) -> &[f64] {
        &self.landmark_weights
    }

    /// Column `k` of the shape basis.
    pub fn shape_column(&self, k: usize) -> &[f64] {
        let n3 = 3 * self.vertex_count;
        &self.shape_basis[k * n3..(k + 1) * n3]
    }

    pub fn albedo_column(&self, k: usize) -> &[f64] {
        let n3 = 3 * self.vertex_count;
        &self.albedo_basis[k * n3..(k + 1) * n3]
    }

    /// Unposed geometry `mean + shape_basis · weights`.
    pub fn shape_instance(&self, weights: &[f64]) -> Vec<f64> {
        combine(&self.mean_shape, &self.shape_basis, weights)
    }

    /// Unclamped albedo `mean + albedo_basis · weights`.
    pub fn albedo_instance(&self, weights: &[f64]) -> Vec<f64> {
        combine(&self.mean_albedo, &self.albedo_basis, weights)
    }
}

fn combine(mean: &[f64], basis: &[f64], weights: &[f64]) -> Vec<f64> {
    let mut out = mean.to_vec();
    let n = mean.len();
    for (k, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        for (o, b) in out.iter_mut().zip(&basis[k * n..(k + 1) * n]) {
            *o += w * b;
        }
    }
    out
}

/// Camera-space mesh produced by [`synthesize`].
#[derive(Debug, Clone, PartialEq)]
pub struct PosedMesh {
    pub positions: Vec<Vec3>,
    pub albedo: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
}

impl PosedMesh {
    /// Area-weighted unit vertex normals; isolated or degenerate vertices get
    /// `(0, 0, 1)`.
    pub fn compute_normals(positions: &[Vec3], triangles: &[[u32; 3]]) -> Vec<Vec3> {
        let mut acc = vec![[0.0f64; 3]; positions.len()];
        for t in triangles {
            let [a, b, c] = t.map(|i| positions[i as usize]);
            let n = cross(sub(b, a), sub(c, a));
            for &i in t {
                let e = &mut acc[i as usize];
                e[0] += n[0];
                e[1] += n[1];
                e[2] += n[2];
            }
        }
        acc.into_iter()
            .map(|n| {
                let l = norm(n);
                if l > 0.0 && l.is_finite() {
                    [n[0] / l, n[1] / l, n[2] / l]
                } else {
                    [0.0, 0.0, 1.0]
                }
            })
            .collect()
    }
}

/// Builds the posed, colored mesh for `c`.
pub fn synthesize(model: &MorphableModel, c: &CoeffVector) -> PosedMesh {
    let shape = model.shape_instance(c.shape());
    let albedo = model.albedo_instance(c.texture());
    let r = rotation_matrix(c.rotation());
    let t = c.translation();
    let positions: Vec<Vec3> = shape
        .chunks_exact(3)
        .map(|p| {
            let q = mat_vec(&r, [p[0], p[1], p[2]]);
            [q[0] + t[0], q[1] + t[1], q[2] + t[2]]
        })
        .collect();
    let albedo = albedo
        .chunks_exact(3)
        .map(|a| [a[0].clamp(0.0, 1.0), a[1].clamp(0.0, 1.0), a[2].clamp(0.0, 1.0)])
        .collect();
    let normals = PosedMesh::compute_normals(&positions, model.triangles());
    PosedMesh {
        positions,
        albedo,
        normals,
        triangles: model.triangles().to_vec(),
    }
}

/// Camera-space landmark positions paired with their loss weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Landmarks {
    pub points: Vec<Vec3>,
    pub weights: Vec<f64>,
}

pub fn landmarks3d(mesh: &PosedMesh, model: &MorphableModel) -> Landmarks {
    Landmarks {
        points: model
            .landmark_indices()
            .iter()
            .map(|&i| mesh.positions[i as usize])
            .collect(),
        weights: model.landmark_weights().to_vec(),
    }
}

/// Deterministic synthetic face: an ellipsoid with a nose bump and painted
/// eyes/lips, plus random bases orthogonalized and scaled so that a unit
/// weight moves no vertex by more than 5% of the bounding-box diagonal.
pub fn toy_model(ring_count: usize, seed: u64) -> Result<MorphableModel> {
    if ring_count < 4 {
        return Err(Error::Contract(format!(
            "toy model needs at least 4 rings, got {ring_count}"
        )));
    }
    let segments = (2 * ring_count).max(32);
    let (ax, ay, az) = (0.75, 1.0, 0.8);

    // Unit directions; the front of the face looks down -z towards the camera.
    let mut dirs: Vec<Vec3> = Vec::new();
    dirs.push([0.0, -1.0, 0.0]);
    for i in 1..ring_count {
        let theta = std::f64::consts::PI * i as f64 / ring_count as f64;
        for j in 0..segments {
            let phi = 2.0 * std::f64::consts::PI * j as f64 / segments as f64;
            dirs.push([
                theta.sin() * phi.sin(),
                -theta.cos(),
                -theta.sin() * phi.cos(),
            ]);
        }
    }
    dirs.push([0.0, 1.0, 0.0]);
    let v = dirs.len();

    let bump = |d: Vec3, cx: f64, cy: f64, s: f64| {
        (-((d[0] - cx).powi(2) + (d[1] - cy).powi(2)) / s).exp()
    };

    let mut mean_shape = Vec::with_capacity(3 * v);
    let mut mean_albedo = Vec::with_capacity(3 * v);
    for &d in &dirs {
        let front = (-d[2]).max(0.0);
        let nose = 0.3 * front * bump(d, 0.0, 0.05, 0.02);
        mean_shape.extend_from_slice(&[ax * d[0], ay * d[1], az * d[2] - nose]);

        let skin = [0.86, 0.67, 0.56];
        let eyes = front * (bump(d, -0.32, -0.22, 0.006) + bump(d, 0.32, -0.22, 0.006));
        let lips = front * bump(d, 0.0, 0.42, 0.012);
        let brows = front * (bump(d, -0.32, -0.4, 0.004) + bump(d, 0.32, -0.4, 0.004));
        let e = eyes.min(1.0);
        let l = lips.min(1.0) * (1.0 - e);
        let b = brows.min(1.0) * (1.0 - e) * (1.0 - l);
        let mix = |s: f64, eye: f64, lip: f64, brow: f64| {
            (s * (1.0 - e - l - b) + eye * e + lip * l + brow * b).clamp(0.0, 1.0)
        };
        mean_albedo.extend_from_slice(&[
            mix(skin[0], 0.15, 0.72, 0.3),
            mix(skin[1], 0.12, 0.3, 0.22),
            mix(skin[2], 0.1, 0.32, 0.18),
        ]);
    }

    let mut triangles: Vec<[u32; 3]> = Vec::new();
    let ring = |i: usize, j: usize| (1 + (i - 1) * segments + j % segments) as u32;
    let south = (v - 1) as u32;
    for j in 0..segments {
        triangles.push([0, ring(1, j), ring(1, j + 1)]);
    }
    for i in 1..ring_count - 1 {
        for j in 0..segments {
            let (a, b, c, d) = (ring(i, j), ring(i, j + 1), ring(i + 1, j), ring(i + 1, j + 1));
            triangles.push([a, c, b]);
            triangles.push([b, c, d]);
        }
    }
    for j in 0..segments {
        triangles.push([ring(ring_count - 1, j), south, ring(ring_count - 1, j + 1)]);
    }
    // Orient every triangle outward.
    let pos = |i: u32| -> Vec3 {
        let k = 3 * i as usize;
        [mean_shape[k], mean_shape[k + 1], mean_shape[k + 2]]
    };
    for t in &mut triangles {
        let [a, b, c] = t.map(pos);
        let n = cross(sub(b, a), sub(c, a));
        let centroid = [
            (a[0] + b[0] + c[0]) / 3.0,
            (a[1] + b[1] + c[1]) / 3.0,
            (a[2] + b[2] + c[2]) / 3.0,
        ];
        if dot(n, centroid) < 0.0 {
            t.swap(1, 2);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let diag = bbox_diagonal(&mean_shape);
    let shape_basis = random_basis(&mut rng, 3 * v, N_SHAPE, |col| {
        col.chunks_exact(3)
            .map(|p| norm([p[0], p[1], p[2]]))
            .fold(0.0, f64::max)
            / (0.05 * diag)
    });
    let albedo_basis = random_basis(&mut rng, 3 * v, N_TEXTURE, |col| {
        col.iter().map(|a| a.abs()).fold(0.0, f64::max) / 0.05
    });

    // Landmarks: evenly spaced over the strongly frontal vertices; the ten
    // nearest the nose tip get weight 20.
    let frontal: Vec<usize> = (0..v).filter(|&i| dirs[i][2] < -0.3).collect();
    let landmark_indices: Vec<u32> = (0..N_LANDMARKS)
        .map(|k| frontal[k * frontal.len() / N_LANDMARKS] as u32)
        .collect();
    let mut order: Vec<usize> = (0..N_LANDMARKS).collect();
    let nose_dist = |k: usize| {
        let d = dirs[landmark_indices[k] as usize];
        d[0].powi(2) + (d[1] - 0.05).powi(2)
    };
    order.sort_by(|&a, &b| nose_dist(a).total_cmp(&nose_dist(b)).then(a.cmp(&b)));
    let mut landmark_weights = vec![1.0; N_LANDMARKS];
    for &k in order.iter().take(10) {
        landmark_weights[k] = 20.0;
    }

    MorphableModel::new(
        v,
        mean_shape,
        shape_basis,
        mean_albedo,
        albedo_basis,
        triangles,
        landmark_indices,
        landmark_weights,
    )
}

fn bbox_diagonal(flat: &[f64]) -> f64 {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in flat.chunks_exact(3) {
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    norm(sub(hi, lo))
}

/// Gaussian columns, orthonormalized with two passes of modified
/// Gram–Schmidt, then uniformly rescaled so the largest `excursion(col)` is 1.
fn random_basis(
    rng: &mut ChaCha8Rng,
    rows: usize,
    cols: usize,
    excursion: impl Fn(&[f64]) -> f64,
) -> Vec<f64> {
    let mut basis: Vec<f64> = (0..rows * cols)
        .map(|_| StandardNormal.sample(rng))
        .collect();
    for k in 0..cols {
        for _pass in 0..2 {
            for j in 0..k {
                let (done, rest) = basis.split_at_mut(k * rows);
                let prev = &done[j * rows..(j + 1) * rows];
                let col = &mut rest[..rows];
                let d: f64 = prev.iter().zip(col.iter()).map(|(a, b)| a * b).sum();
                col.iter_mut().zip(prev).for_each(|(c, p)| *c -= d * p);
            }
        }
        let col = &mut basis[k * rows..(k + 1) * rows];
        let n = col.iter().map(|x| x * x).sum::<f64>().sqrt();
        col.iter_mut().for_each(|x| *x /= n);
    }
    let worst = basis
        .chunks_exact(rows)
        .map(&excursion)
        .fold(0.0, f64::max);
    basis.iter_mut().for_each(|x| *x /= worst);
    basis
}

// ---------------------------------------------------------------------------
// DMM1 model files
// ---------------------------------------------------------------------------

const DMM_MAGIC: &[u8; 4] = b"DMM1";

impl MorphableModel {
    /// `DMM1` encoding: magic, then `V, T, n_shape, n_tex, n_pt` as LE `u64`,
    /// then LE `f32`/`u32` arrays in declaration order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(DMM_MAGIC);
        for n in [
            self.vertex_count,
            self.triangles.len(),
            N_SHAPE,
            N_TEXTURE,
            self.landmark_indices.len(),
        ] {
            out.extend_from_slice(&(n as u64).to_le_bytes());
        }
        let put_f = |xs: &[f64], out: &mut Vec<u8>| {
            for &x in xs {
                out.extend_from_slice(&(x as f32).to_le_bytes());
            }
        };
        put_f(&self.mean_shape, &mut out);
        put_f(&self.shape_basis, &mut out);
        put_f(&self.mean_albedo, &mut out);
        put_f(&self.albedo_basis, &mut out);
        for i in self.triangles.iter().flatten().chain(&self.landmark_indices) {
            out.extend_from_slice(&i.to_le_bytes());
        }
        put_f(&self.landmark_weights, &mut out);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(4)? != DMM_MAGIC {
            return Err(Error::Format("bad magic, expected DMM1".into()));
        }
        let mut hdr = [0usize; 5];
        for h in &mut hdr {
            *h = usize::try_from(cur.u64()?)
                .map_err(|_| Error::Format("header field overflows".into()))?;
        }
        let [v, t, ns, nt, npt] = hdr;
        if ns != N_SHAPE || nt != N_TEXTURE {
            return Err(Error::Format(format!(
                "expected {N_SHAPE} shape / {N_TEXTURE} texture bases, got {ns} / {nt}"
            )));
        }
        let n3 = v
            .checked_mul(3)
            .ok_or_else(|| Error::Format("vertex count overflows".into()))?;
        let mean_shape = cur.f32s(n3)?;
        let shape_basis = cur.f32s(n3.checked_mul(ns).ok_or_else(overflow)?)?;
        let mean_albedo = cur.f32s(n3)?;
        let albedo_basis = cur.f32s(n3.checked_mul(nt).ok_or_else(overflow)?)?;
        let tri_flat = cur.u32s(t.checked_mul(3).ok_or_else(overflow)?)?;
        let landmark_indices = cur.u32s(npt)?;
        let landmark_weights = cur.f32s(npt)?;
        if cur.pos != bytes.len() {
            return Err(Error::Format("trailing bytes after model".into()));
        }
        let triangles = tri_flat
            .chunks_exact(3)
            .map(|c| [c[0], c[1], c[2]])
            .collect();
        Self::new(
            v,
            mean_shape,
            shape_basis,
            mean_albedo,
            albedo_basis,
            triangles,
            landmark_indices,
            landmark_weights,
        )
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn overflow() -> Error {
    Error::Format("array size overflows".into())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format("truncated model file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(4).ok_or_else(overflow)?)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
            .collect())
    }

    fn u32s(&mut self, n: usize) -> Result<Vec<u32>> {
        let raw = self.take(n.checked_mul(4).ok_or_else(overflow)?)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> MorphableModel {
        toy_model(16, 3).unwrap()
    }

    #[test]
    fn layout_counts() {
        assert_eq!(COEFF_LEN, 239);
        let mut c = CoeffVector::zeros();
        c.illumination_mut()[8] = 2.0;
        assert_eq!(c.as_slice()[238], 2.0);
        c.shape_mut()[0] = 1.0;
        assert_eq!(c.as_slice()[6], 1.0);
        c.texture_mut()[0] = 3.0;
        assert_eq!(c.as_slice()[150], 3.0);
        assert!(CoeffVector::new(vec![0.0; 238]).is_err());
        let mut bad = vec![0.0; 239];
        bad[3] = f64::INFINITY;
        assert!(CoeffVector::new(bad).is_err());
    }

    #[test]
    fn zero_coefficients_reproduce_mean() {
        let m = model();
        let mesh = synthesize(&m, &CoeffVector::zeros());
        let flat: Vec<f64> = mesh.positions.iter().flatten().copied().collect();
        assert_eq!(flat, m.mean_shape());
        let alb: Vec<f64> = mesh.albedo.iter().flatten().copied().collect();
        assert_eq!(alb, m.mean_albedo());
    }

    #[test]
    fn pure_translation_offsets_vertices() {
        let m = model();
        let mut c = CoeffVector::zeros();
        c.translation_mut().copy_from_slice(&[1.0, 2.0, 3.0]);
        let mesh = synthesize(&m, &c);
        for (p, q) in mesh.positions.iter().zip(m.mean_shape().chunks_exact(3)) {
            assert_eq!(p[0], q[0] + 1.0);
            assert_eq!(p[1], q[1] + 2.0);
            assert_eq!(p[2], q[2] + 3.0);
        }
    }

    #[test]
    fn unit_shape_weight_adds_basis_column() {
        let m = model();
        for k in [0, 17, 143] {
            let mut c = CoeffVector::zeros();
            c.shape_mut()[k] = 1.0;
            let mesh = synthesize(&m, &c);
            // dense matrix-vector oracle over the column-major basis
            let n3 = 3 * m.vertex_count();
            let w: Vec<f64> = (0..N_SHAPE).map(|j| if j == k { 1.0 } else { 0.0 }).collect();
            for r in 0..n3 {
                let dense: f64 = (0..N_SHAPE).map(|j| m.shape_basis()[j * n3 + r] * w[j]).sum();
                let expected = m.mean_shape()[r] + dense;
                assert!((mesh.positions[r / 3][r % 3] - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn landmarks_follow_pose() {
        let m = model();
        let mesh0 = synthesize(&m, &CoeffVector::zeros());
        let l0 = landmarks3d(&mesh0, &m);
        assert_eq!(l0.points.len(), 68);
        for (p, &i) in l0.points.iter().zip(m.landmark_indices()) {
            let k = 3 * i as usize;
            assert_eq!(p, &[m.mean_shape()[k], m.mean_shape()[k + 1], m.mean_shape()[k + 2]]);
        }
        let mut c = CoeffVector::zeros();
        c.translation_mut().copy_from_slice(&[0.5, -1.0, 4.0]);
        let l1 = landmarks3d(&synthesize(&m, &c), &m);
        for (a, b) in l0.points.iter().zip(&l1.points) {
            assert!((b[0] - a[0] - 0.5).abs() < 1e-12);
            assert!((b[1] - a[1] + 1.0).abs() < 1e-12);
            assert!((b[2] - a[2] - 4.0).abs() < 1e-12);
        }
        let mut r = CoeffVector::zeros();
        r.rotation_mut().copy_from_slice(&[0.3, -0.7, 1.1]);
        let l2 = landmarks3d(&synthesize(&m, &r), &m);
        let centered = |pts: &[Vec3]| -> Vec<f64> {
            let n = pts.len() as f64;
            let c = pts.iter().fold([0.0; 3], |a, p| [a[0] + p[0], a[1] + p[1], a[2] + p[2]]);
            let c = [c[0] / n, c[1] / n, c[2] / n];
            pts.iter().map(|p| norm(sub(*p, c))).collect()
        };
        for (a, b) in centered(&l0.points).iter().zip(centered(&l2.points)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn toy_model_properties() {
        let a = toy_model(16, 7).unwrap();
        let b = toy_model(16, 7).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
        assert!(a.vertex_count() > 400 && a.vertex_count() < 600);
        assert!(a.mean_albedo().iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(a.landmark_weights().iter().filter(|&&w| w == 20.0).count(), 10);
        assert_eq!(a.landmark_weights().iter().filter(|&&w| w == 1.0).count(), 58);
        // Gram matrix oracle
        for i in 0..N_SHAPE {
            for j in 0..i {
                let d: f64 = a.shape_column(i).iter().zip(a.shape_column(j)).map(|(x, y)| x * y).sum();
                assert!(d.abs() < 1e-9, "columns {i},{j}: {d}");
            }
        }
        for i in 0..N_TEXTURE {
            for j in 0..i {
                let d: f64 = a.albedo_column(i).iter().zip(a.albedo_column(j)).map(|(x, y)| x * y).sum();
                assert!(d.abs() < 1e-9);
            }
        }
        // unit weights stay within 5% of the bounding-box diagonal
        let diag = bbox_diagonal(a.mean_shape());
        for k in 0..N_SHAPE {
            let worst = a
                .shape_column(k)
                .chunks_exact(3)
                .map(|p| norm([p[0], p[1], p[2]]))
                .fold(0.0, f64::max);
            assert!(worst <= 0.05 * diag + 1e-12);
        }
        assert!(toy_model(3, 0).is_err());
        let small = toy_model(4, 0).unwrap();
        assert_eq!(small.landmark_indices().len(), 68);
    }

    #[test]
    fn normals_are_unit_and_outward() {
        let m = model();
        let mesh = synthesize(&m, &CoeffVector::zeros());
        for (n, p) in mesh.normals.iter().zip(&mesh.positions) {
            assert!((norm(*n) - 1.0).abs() < 1e-9);
            assert!(dot(*n, *p) > 0.0);
        }
        let lonely = PosedMesh::compute_normals(&[[0.0; 3]], &[]);
        assert_eq!(lonely, vec![[0.0, 0.0, 1.0]]);
    }

    #[test]
    fn dmm_round_trip_and_errors() {
        let m = model();
        let bytes = m.to_bytes();
        let back = MorphableModel::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back.triangles(), m.triangles());
        assert!(MorphableModel::from_bytes(&bytes[..bytes.len() - 2]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(MorphableModel::from_bytes(&bad).is_err());
    }
}
