//! Poisson blending of the visible face into the rendered prior.
//!
//! Inside the unknown region `Ω = M_m ∧ ¬M_f` each channel solves the
//! 5-point discrete Poisson equation whose guidance field is the gradient of
//! the rendered face; pixels bordering `Ω` are Dirichlet data taken from the
//! visible face where available and from the render otherwise.

use crate::error::{ensure_same_dims, Error, Result};
use crate::image::{ImageF, MaskF};
use crate::maskops;
use crate::par;

pub const DEFAULT_TOLERANCE: f64 = 1e-8;

/// Outcome of a conjugate-gradient solve.
#[derive(Debug, Clone, PartialEq)]
pub struct CgSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Final relative residual `‖Ax − b‖ / ‖b‖` (from the recurrence).
    pub residual: f64,
}

/// Plain conjugate gradient for a symmetric positive-definite operator
/// given as `apply(x, out)` computing `out = A x`. Starts from zero.
pub fn cg_solve(
    apply: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<CgSolution> {
    if !(tol > 0.0) {
        return Err(Error::Contract(format!("CG tolerance must be positive, got {tol}")));
    }
    let n = b.len();
    let b_norm = dot(b, b).sqrt();
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return Ok(CgSolution {
            x,
            iterations: 0,
            residual: 0.0,
        });
    }
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr = dot(&r, &r);
    let mut iterations = 0;
    while iterations < max_iter {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::Contract(
                "CG operator is not positive definite".into(),
            ));
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        iterations += 1;
        let rr_new = dot(&r, &r);
        if rr_new.sqrt() / b_norm <= tol {
            return Ok(CgSolution {
                x,
                iterations,
                residual: rr_new.sqrt() / b_norm,
            });
        }
        let beta = rr_new / rr;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
    }
    Err(Error::NonConvergence {
        iterations,
        residual: rr.sqrt() / b_norm,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Unknown-region Poisson system for a single channel.
#[derive(Debug, Clone)]
pub struct PoissonProblem {
    /// Unknown region `Ω`.
    pub region: MaskF,
    /// Dirichlet values, read at pixels bordering `Ω`.
    pub boundary: ImageF,
    /// Guidance image whose discrete Laplacian is reproduced inside `Ω`.
    pub guidance: ImageF,
    pub tolerance: f64,
    pub max_iterations: usize,
}

const N4: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];

impl PoissonProblem {
    fn validate(&self) -> Result<()> {
        self.region.require_binary("Poisson region")?;
        ensure_same_dims("Poisson boundary", self.region.dims(), self.boundary.dims())?;
        ensure_same_dims("Poisson guidance", self.region.dims(), self.guidance.dims())?;
        if self.boundary.channels() != 1 || self.guidance.channels() != 1 {
            return Err(Error::Contract("Poisson problem is per channel".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Contract("Poisson tolerance must be positive".into()));
        }
        let (h, w) = self.region.dims();
        for y in 0..h {
            for x in 0..w {
                if self.region.is_set(y, x) && (y == 0 || x == 0 || y + 1 == h || x + 1 == w) {
                    return Err(Error::Contract(format!(
                        "unknown region touches the image border at ({x}, {y})"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Solves for the unknowns and returns the full channel with `Ω`
    /// replaced (unclamped) and everything else copied from `boundary`.
    pub fn solve(&self) -> Result<(Vec<f64>, CgSolution)> {
        self.validate()?;
        let (h, w) = self.region.dims();
        let mut slot = vec![usize::MAX; h * w];
        let mut pixels = Vec::new();
        for (p, &m) in self.region.data().iter().enumerate() {
            if m != 0.0 {
                slot[p] = pixels.len();
                pixels.push(p);
            }
        }
        let g = self.guidance.data();
        let f = self.boundary.data();
        let neighbours = |p: usize| {
            let (y, x) = ((p / w) as isize, (p % w) as isize);
            N4.iter()
                .map(move |&(dy, dx)| ((y + dy) as usize) * w + (x + dx) as usize)
        };
        let rhs: Vec<f64> = pixels
            .iter()
            .map(|&p| {
                neighbours(p)
                    .map(|q| {
                        let guide = g[p] - g[q];
                        if slot[q] == usize::MAX {
                            guide + f[q]
                        } else {
                            guide
                        }
                    })
                    .sum()
            })
            .collect();
        let apply = |v: &[f64], out: &mut [f64]| {
            for (i, &p) in pixels.iter().enumerate() {
                let mut acc = 4.0 * v[i];
                for q in neighbours(p) {
                    if slot[q] != usize::MAX {
                        acc -= v[slot[q]];
                    }
                }
                out[i] = acc;
            }
        };
        let sol = cg_solve(apply, &rhs, self.tolerance, self.max_iterations)?;
        let mut out = f.to_vec();
        for (i, &p) in pixels.iter().enumerate() {
            out[p] = sol.x[i];
        }
        Ok((out, sol))
    }
}

/// Default iteration cap: ten sweeps per unknown.
pub fn default_max_iterations(region: &MaskF) -> usize {
    (10 * region.count()).max(1)
}

/// Seamlessly merges the visible face `i_f` (under `m_f`) into the rendered
/// face `i_m` (under `m_m`). Outside `Ω` the result is `i_f`; the output is
/// clamped to `[0,1]`.
pub fn poisson_blend(
    i_f: &ImageF,
    m_f: &MaskF,
    i_m: &ImageF,
    m_m: &MaskF,
    tol: f64,
    max_iter: Option<usize>,
) -> Result<ImageF> {
    i_f.ensure_same_shape(i_m, "Poisson blend images")?;
    ensure_same_dims("Poisson face mask", i_f.dims(), m_f.dims())?;
    let omega = maskops::occlusion_mask(m_m, m_f)?;
    if omega.count() == 0 {
        return Ok(i_f.clamp01());
    }
    let max_iter = max_iter.unwrap_or_else(|| default_max_iterations(&omega));
    // Dirichlet data: the visible face where M_f = 1, the render elsewhere.
    let boundary = ImageF::from_fn(i_f.height(), i_f.width(), i_f.channels(), |y, x, c| {
        if m_f.is_set(y, x) {
            i_f.get(y, x, c)
        } else {
            i_m.get(y, x, c)
        }
    });
    let channels: Vec<usize> = (0..i_f.channels()).collect();
    let solved = par::map_collect(channels, |c| {
        PoissonProblem {
            region: omega.clone(),
            boundary: boundary.channel(c),
            guidance: i_m.channel(c),
            tolerance: tol,
            max_iterations: max_iter,
        }
        .solve()
    });
    let mut out = i_f.clone();
    let nc = i_f.channels();
    for (c, res) in solved.into_iter().enumerate() {
        let (values, _) = res?;
        for (p, &m) in omega.data().iter().enumerate() {
            if m != 0.0 {
                out.data_mut()[p * nc + c] = values[p];
            }
        }
    }
    Ok(out.clamp01())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_rhs_needs_no_iterations() {
        let sol = cg_solve(|v, o| o.copy_from_slice(v), &[0.0; 5], 1e-10, 10).unwrap();
        assert_eq!(sol.iterations, 0);
        assert!(sol.x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_converges_in_one_step() {
        let b = [1.0, -2.0, 3.0];
        let sol = cg_solve(|v, o| o.copy_from_slice(v), &b, 1e-12, 10).unwrap();
        assert_eq!(sol.iterations, 1);
        for (x, y) in sol.x.iter().zip(b) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn max_iter_exceeded_reports_residual() {
        // 1D Laplacian of size 50 needs more than 3 iterations.
        let n = 50;
        let apply = |v: &[f64], o: &mut [f64]| {
            for i in 0..n {
                let l = if i > 0 { v[i - 1] } else { 0.0 };
                let r = if i + 1 < n { v[i + 1] } else { 0.0 };
                o[i] = 2.0 * v[i] - l - r;
            }
        };
        let err = cg_solve(apply, &vec![1.0; n], 1e-10, 3).unwrap_err();
        match err {
            Error::NonConvergence { iterations, residual } => {
                assert_eq!(iterations, 3);
                assert!(residual > 1e-10);
            }
            e => panic!("unexpected {e}"),
        }
    }

    fn disk(h: usize, w: usize, cy: f64, cx: f64, r: f64) -> MaskF {
        MaskF::from_fn(h, w, |y, x| (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2) <= r * r)
    }

    #[test]
    fn consistent_data_reproduces_render() {
        let i_m = ImageF::from_fn(12, 12, 3, |y, x, c| 0.2 + 0.05 * ((x + 2 * y + c) % 7) as f64);
        let m_m = disk(12, 12, 6.0, 6.0, 4.5);
        let m_f = MaskF::from_fn(12, 12, |y, x| m_m.is_set(y, x) && !(4..8).contains(&y));
        let out = poisson_blend(&i_m, &m_f, &i_m, &m_m, 1e-10, None).unwrap();
        for y in 0..12 {
            for x in 0..12 {
                if m_m.is_set(y, x) {
                    for c in 0..3 {
                        assert!((out.get(y, x, c) - i_m.get(y, x, c)).abs() < 1e-8);
                    }
                }
            }
        }
    }

    #[test]
    fn constant_boundary_offset_is_carried_inside() {
        let i_m = ImageF::from_fn(10, 10, 1, |y, x, _| 0.3 + 0.02 * x as f64 + 0.01 * ((y * x) % 5) as f64);
        let m_m = MaskF::ones(10, 10);
        let m_f = MaskF::from_fn(10, 10, |y, x| !((3..7).contains(&y) && (2..8).contains(&x)));
        let k = 0.1;
        let i_f = ImageF::from_fn(10, 10, 1, |y, x, _| i_m.get(y, x, 0) + k);
        let out = poisson_blend(&i_f, &m_f, &i_m, &m_m, 1e-12, None).unwrap();
        for y in 3..7 {
            for x in 2..8 {
                assert!((out.get(y, x, 0) - (i_m.get(y, x, 0) + k)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn empty_region_returns_face() {
        let i_f = ImageF::filled(4, 4, 3, 0.4);
        let i_m = ImageF::filled(4, 4, 3, 0.9);
        let m = MaskF::ones(4, 4);
        assert_eq!(poisson_blend(&i_f, &m, &i_m, &m, 1e-8, None).unwrap(), i_f);
    }

    #[test]
    fn border_touching_region_rejected() {
        let i = ImageF::filled(4, 4, 1, 0.5);
        let m_m = MaskF::ones(4, 4);
        let m_f = MaskF::zeros(4, 4);
        assert!(matches!(
            poisson_blend(&i, &m_f, &i, &m_m, 1e-8, None),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn non_convergence_propagates() {
        let i_m = ImageF::from_fn(20, 20, 1, |y, x, _| ((x * y) % 7) as f64 / 7.0);
        let m_m = disk(20, 20, 10.0, 10.0, 7.0);
        let m_f = MaskF::zeros(20, 20);
        let i_f = ImageF::filled(20, 20, 1, 0.9);
        assert!(matches!(
            poisson_blend(&i_f, &m_f, &i_m, &m_m, 1e-12, Some(2)),
            Err(Error::NonConvergence { .. })
        ));
    }
}
