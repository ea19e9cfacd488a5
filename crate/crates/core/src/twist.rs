//! Index-raising twists of frame loops and tangent-plane gluing of defining
//! functions along a curve.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;

use crate::boundary::{BoundaryFunction, BoundaryGrid};
use crate::conjugation::{self, ConjugationKind};
use crate::error::{Error, Result};
use crate::frames::{FrameLoop, StructuredFrame};
use crate::poly::Poly;

/// Default half-width parameter of the short arc around `ζ = −1`.
pub const DEFAULT_EPS: f64 = 0.4;
/// Arc width used when twisted frames feed index computations and disc families.
///
/// Narrow arcs make `|h|` vary over many orders of magnitude, beyond what the
/// polynomial section ansatz can resolve.
pub const INDEX_EPS: f64 = 6.0;
/// Largest grid [`auto_grid`] will try.
pub const MAX_TWIST_GRID: usize = 1 << 16;
/// Spectral energy fraction of `h` allowed in the top quarter of the band.
const TAIL_ENERGY: f64 = 1e-24;

fn flat_exp(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        (-1.0 / x).exp()
    }
}

/// C^∞ step: 0 for `s ≤ 0`, 1 for `s ≥ 1`, all derivatives vanishing at both ends.
pub fn smooth_step(s: f64) -> f64 {
    let a = flat_exp(s);
    let b = flat_exp(1.0 - s);
    if a + b == 0.0 {
        0.0
    } else {
        a / (a + b)
    }
}

/// C^∞ bump on the real line: 0 for `|s| ≤ ε/4`, 1 for `|s| ≥ ε/2`.
pub fn cutoff(s: f64, eps: f64) -> f64 {
    let q = eps / 4.0;
    smooth_step((s.abs() - q) / q)
}

/// `g = ζ^ℓ h` with `h = exp(−T₀v + iv)` nonvanishing and holomorphic, and `g`
/// real on the main arc `|θ| ≤ π − ε/8`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwistFunction {
    pub ell: u32,
    pub eps: f64,
    pub g: BoundaryFunction,
    pub h: BoundaryFunction,
}

/// Phase of `g`: zero on the main arc, rising by `2πℓ` across the short arc.
fn phase(theta: f64, ell: u32, eps: f64) -> f64 {
    let a = eps / 8.0;
    let t = if theta > PI { theta - 2.0 * PI } else { theta };
    let l = f64::from(ell);
    if t.abs() <= PI - a {
        0.0
    } else if t > 0.0 {
        2.0 * PI * l * smooth_step((t - PI + a) / (2.0 * a))
    } else {
        2.0 * PI * l * (smooth_step((t + PI + a) / (2.0 * a)) - 1.0)
    }
}

/// The extension `v` of `−ℓθ` across the short arc.
fn extension(theta: f64, ell: u32, eps: f64) -> f64 {
    let t = if theta > PI { theta - 2.0 * PI } else { theta };
    phase(theta, ell, eps) - f64::from(ell) * t
}

/// Smallest grid size accepted by [`make_twist`].
pub fn min_grid_size(ell: u32, eps: f64) -> usize {
    (64.0 * f64::from(ell) / eps).ceil().max(256.0) as usize
}

fn top_quarter_energy(f: &BoundaryFunction) -> f64 {
    f.smoothness_report().tail_energy
}

/// Builds the twist on the given grid and checks its invariants.
pub fn make_twist(ell: u32, eps: f64, grid: BoundaryGrid) -> Result<TwistFunction> {
    if !(eps > 0.0 && eps < 8.0 * PI) {
        return Err(Error::TwistInvariant(format!("eps = {eps} out of range")));
    }
    if grid.size() < min_grid_size(ell, eps) {
        return Err(Error::TwistInvariant(format!(
            "grid {} cannot resolve the transition arc (need ≥ {})",
            grid.size(),
            min_grid_size(ell, eps)
        )));
    }
    let thetas = grid.thetas();
    let v: Vec<f64> = thetas.iter().map(|&t| extension(t, ell, eps)).collect();
    let vf = BoundaryFunction::from_real_components(vec![v.clone()], grid)?;
    let tv = conjugation::conjugate(&vf, ConjugationKind::AtCenter)?;
    let tv: Vec<f64> = tv.values(0).iter().map(|c| c.re).collect();
    let hv: Vec<C64> = tv
        .iter()
        .zip(&v)
        .map(|(t, vv)| C64::new(-t, *vv).exp())
        .collect();
    let gv: Vec<C64> = tv
        .iter()
        .zip(&thetas)
        .map(|(t, &th)| (-t).exp() * C64::from_polar(1.0, phase(th, ell, eps)))
        .collect();
    let twist = TwistFunction {
        ell,
        eps,
        g: BoundaryFunction::scalar(gv, grid)?,
        h: BoundaryFunction::scalar(hv, grid)?,
    };
    twist.check()?;
    Ok(twist)
}

/// Grid size for `ℓ`, `ε`, doubled until the spectrum of `h` is resolved.
pub fn auto_grid(ell: u32, eps: f64) -> Result<BoundaryGrid> {
    let start = (512.0 * f64::from(ell) / eps).ceil().max(256.0) as usize;
    let mut size = start.next_power_of_two();
    loop {
        let grid = BoundaryGrid::new(size)?;
        let t = make_twist(ell, eps, grid)?;
        if top_quarter_energy(&t.h) <= TAIL_ENERGY {
            return Ok(grid);
        }
        if size >= MAX_TWIST_GRID {
            return Err(Error::TwistInvariant(format!(
                "h unresolved on {size} samples (tail energy {:e})",
                top_quarter_energy(&t.h)
            )));
        }
        size *= 2;
    }
}

/// Twist on an automatically sized grid.
pub fn make_twist_auto(ell: u32, eps: f64) -> Result<TwistFunction> {
    make_twist(ell, eps, auto_grid(ell, eps)?)
}

impl TwistFunction {
    /// Largest `|Im g|` on the main arc.
    pub fn main_arc_imag(&self) -> f64 {
        let grid = self.g.grid();
        (0..grid.size())
            .filter(|&k| {
                let t = grid.theta(k);
                let t = if t > PI { t - 2.0 * PI } else { t };
                t.abs() <= PI - self.eps / 8.0
            })
            .map(|k| self.g.values(0)[k].im.abs())
            .fold(0.0, f64::max)
    }

    pub fn min_abs_h(&self) -> f64 {
        self.h.values(0).iter().map(|v| v.norm()).fold(f64::INFINITY, f64::min)
    }

    pub fn winding(&self) -> Result<i64> {
        // |g| is a positive factor and does not affect the winding
        let unit = self.g.map(|v| v / v.norm())?;
        conjugation::winding_number(&unit, 0.5)
    }

    fn check(&self) -> Result<()> {
        let m = self.min_abs_h();
        if !(m > 0.0) || !m.is_finite() {
            return Err(Error::TwistInvariant(format!("min |h| = {m:e}")));
        }
        let im = self.main_arc_imag();
        if im >= 1e-8 {
            return Err(Error::TwistInvariant(format!("|Im g| = {im:e} on the main arc")));
        }
        let w = self.winding()?;
        if w != i64::from(self.ell) {
            return Err(Error::TwistInvariant(format!("winding {w} but ℓ = {}", self.ell)));
        }
        Ok(())
    }
}

/// Largest grid among the twists needed for `ells`, at least `floor`.
pub fn twist_grid(ells: &[u32], eps: f64, floor: BoundaryGrid) -> Result<BoundaryGrid> {
    let mut size = floor.size();
    for &l in ells {
        if l > 0 {
            size = size.max(auto_grid(l, eps)?.size());
        }
    }
    BoundaryGrid::new(size)
}

/// Multiplies column `j` of a structured frame `(ζ^{m_j}Θ_j)` by `g_{ℓ_j}`.
pub fn twist_frame(
    base: &FrameLoop,
    theta_frame: &StructuredFrame,
    ells: &[u32],
    eps: f64,
) -> Result<FrameLoop> {
    let n = base.n();
    if ells.len() != n || theta_frame.n() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} twists for {n} columns",
            ells.len()
        )));
    }
    let structured = theta_frame.frame()?.resample(base.grid())?;
    let scale = base
        .matrices()
        .iter()
        .map(|g| g.norm())
        .fold(0.0, f64::max)
        .max(1e-300);
    let gap = base
        .matrices()
        .iter()
        .zip(structured.matrices())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    if gap > 1e-8 * scale {
        return Err(Error::TwistInvariant(format!(
            "base frame differs from its structured form by {gap:e}"
        )));
    }
    let grid = twist_grid(ells, eps, base.grid())?;
    let factors = ells
        .iter()
        .map(|&l| Ok(make_twist(l, eps, grid)?.g))
        .collect::<Result<Vec<_>>>()?;
    base.resample(grid)?.scale_columns(&factors)
}

/// Structured form of the twisted frame: `Θ'_j = h_{ℓ_j}Θ_j`, `m'_j = m_j + ℓ_j`.
pub fn twist_structured(theta_frame: &StructuredFrame, ells: &[u32], eps: f64) -> Result<StructuredFrame> {
    if ells.len() != theta_frame.n() {
        return Err(Error::DimensionMismatch(format!(
            "{} twists for {} columns",
            ells.len(),
            theta_frame.n()
        )));
    }
    let grid = twist_grid(ells, eps, theta_frame.grid())?;
    let factors = ells
        .iter()
        .map(|&l| Ok(make_twist(l, eps, grid)?.h))
        .collect::<Result<Vec<_>>>()?;
    theta_frame.twisted(&factors, ells)
}

/// Defining functions `r(s, z)` that agree with the base manifold `y = φ(x)` for
/// `|s| ≥ ε/2` and with its affine tangent space at `γ(s)` for `|s| ≤ ε/4`.
#[derive(Debug, Clone, PartialEq)]
pub struct GluedFamily {
    phi: Vec<Poly>,
    gamma: Vec<Poly>,
    eps: f64,
}

impl GluedFamily {
    pub fn n(&self) -> usize {
        self.phi.len()
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn chi(&self, s: f64) -> f64 {
        cutoff(s, self.eps)
    }

    /// Base point `x(s)` on the curve.
    pub fn curve_x(&self, s: f64) -> Vec<f64> {
        self.gamma.iter().map(|p| p.eval(&[s])).collect()
    }

    /// `γ(s) = x(s) + iφ(x(s))`.
    pub fn curve_point(&self, s: f64) -> Vec<C64> {
        let x = self.curve_x(s);
        x.iter()
            .zip(&self.phi)
            .map(|(xi, p)| C64::new(*xi, p.eval(&x)))
            .collect()
    }

    /// `r(s, ·)` as polynomials in `(x₁..x_N, y₁..y_N)`.
    pub fn defining_polys(&self, s: f64) -> Vec<Poly> {
        let n = self.n();
        let x0 = self.curve_x(s);
        let chi = self.chi(s);
        // δ_k = x_k − x_k(s) written in the (x, y) variables
        let delta: Vec<Poly> = (0..n)
            .map(|k| Poly::var(2 * n, k).sub(&Poly::constant(2 * n, x0[k])))
            .collect();
        self.phi
            .iter()
            .enumerate()
            .map(|(j, p)| {
                let shifted = p.taylor_shift(&x0);
                let affine = shifted.head(2);
                let tail = shifted.tail(2);
                let approx = affine.add(&tail.scale(chi));
                Poly::var(2 * n, n + j).sub(&approx.compose(&delta))
            })
            .collect()
    }

    pub fn eval(&self, s: f64, z: &[C64]) -> Vec<f64> {
        let args: Vec<f64> = z.iter().map(|v| v.re).chain(z.iter().map(|v| v.im)).collect();
        self.defining_polys(s).iter().map(|p| p.eval(&args)).collect()
    }

    /// Defining functions of the base manifold, `y_j − φ_j(x)`.
    pub fn base_polys(&self) -> Vec<Poly> {
        let n = self.n();
        let xs: Vec<Poly> = (0..n).map(|k| Poly::var(2 * n, k)).collect();
        self.phi
            .iter()
            .enumerate()
            .map(|(j, p)| Poly::var(2 * n, n + j).sub(&p.compose(&xs)))
            .collect()
    }

    fn probe(&self) -> Result<()> {
        let n = self.n();
        let samples = 41;
        for i in 0..samples {
            let s = self.eps * (-0.975 + 1.95 * i as f64 / (samples - 1) as f64);
            let g = self.curve_point(s);
            let r = self.eval(s, &g);
            let worst = r.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if worst >= 1e-10 {
                return Err(Error::GluingProbe(format!("r(s, γ(s)) = {worst:e} at s = {s}")));
            }
            if s.abs() >= self.eps / 2.0 {
                let base = self.base_polys();
                let d = self
                    .defining_polys(s)
                    .iter()
                    .zip(&base)
                    .map(|(a, b)| a.max_coeff_diff(b))
                    .fold(0.0, f64::max);
                if d > 1e-10 {
                    return Err(Error::GluingProbe(format!("outer family differs by {d:e} at s = {s}")));
                }
            }
            if s.abs() <= self.eps / 4.0 {
                let x0 = self.curve_x(s);
                let grads: Vec<Vec<f64>> = self
                    .phi
                    .iter()
                    .map(|p| p.gradient().iter().map(|q| q.eval(&x0)).collect())
                    .collect();
                for k in 0..n {
                    for t in [0.3, -0.7] {
                        // along the tangent vector (e_k, ∇φ·e_k)
                        let z: Vec<C64> = (0..n)
                            .map(|j| {
                                let dx = if j == k { t } else { 0.0 };
                                g[j] + C64::new(dx, grads[j][k] * t)
                            })
                            .collect();
                        let r = self.eval(s, &z);
                        let worst = r.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                        if worst >= 1e-10 {
                            return Err(Error::GluingProbe(format!("tangent probe {worst:e} at s = {s}")));
                        }
                        // along the normal direction i·e_k the residual is exactly t in slot k
                        let mut zn = g.clone();
                        zn[k] += C64::new(0.0, t);
                        let rn = self.eval(s, &zn);
                        if (rn[k] - t).abs() >= 1e-10 {
                            return Err(Error::GluingProbe(format!("normal probe {} at s = {s}", rn[k])));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Glues the tangent planes of `y = φ(x)` along `γ` into the base defining functions.
pub fn glue_tangent_family(phi: Vec<Poly>, gamma: Vec<Poly>, eps: f64) -> Result<GluedFamily> {
    let n = phi.len();
    if n == 0 || gamma.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{n} defining functions but a curve in ℝ^{}",
            gamma.len()
        )));
    }
    if !(eps > 0.0) {
        return Err(Error::GluingProbe(format!("eps = {eps} must be positive")));
    }
    for (j, p) in phi.iter().enumerate() {
        if p.nvars() != n {
            return Err(Error::DimensionMismatch(format!("φ_{j} must have {n} variables")));
        }
        if p.order().is_some_and(|o| o < 2) {
            return Err(Error::InvalidManifold(format!("φ_{j} or dφ_{j} is nonzero at 0")));
        }
    }
    if gamma.iter().any(|g| g.nvars() != 1) {
        return Err(Error::DimensionMismatch("curve components must be polynomials in s".into()));
    }
    let family = GluedFamily { phi, gamma, eps };
    family.probe()?;
    Ok(family)
}
