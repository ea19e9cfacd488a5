//! Finite-dimensional families of analytic discs attached to families of
//! maximally real targets near a reference disc.
//!
//! Columns `X_j = ζ^{m_j}Θ_j` of a structured frame give the variation
//! `G(u, f) = Σ_j (u_j − T₀f_j + i f_j) X_j`, which extends holomorphically when
//! `u_j = ζ^{−m_j}h_j` with `h_j` a palindromic polynomial of degree `2m_j`.
//! The correction `f = φ(u)` is solved so that `A′ + G(u, φ(u))` stays attached.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::bishop::{self, AnalyticDisc, BishopOptions, GraphManifold};
use crate::boundary::{BoundaryFunction, BoundaryGrid};
use crate::conjugation::{self, ConjugationKind};
use crate::error::{Error, Result};
use crate::frames::{FrameLoop, IndexProfile, StructuredFrame};
use crate::linalg;
use crate::poly::Poly;
use crate::report::Report;

/// Default attachment tolerance of [`solve_phi`].
pub const SOLVER_TOL: f64 = 1e-10;
/// Allowed movement of the disc center in a fixed-center family.
pub const CENTER_TOL: f64 = 1e-9;
/// Negative-spectrum mass tolerated in an assembled disc.
pub const DISC_HOLOMORPHY_TOL: f64 = 1e-9;
/// Relative singular-value cutoff for numerical ranks.
pub const RANK_TOL: f64 = 1e-8;
/// Central finite-difference step in parameter space.
pub const FD_STEP: f64 = 1e-4;
const MAX_SOLVER_ITER: usize = 100;

fn realify_point(p: &[C64]) -> Vec<f64> {
    p.iter().map(|v| v.re).chain(p.iter().map(|v| v.im)).collect()
}

/// Family of maximally real targets `{p : r_j(ζ, p) = 0}` in coordinates centered
/// on the reference disc, together with its tangent frame.
///
/// The defining functions are polynomials in `(Re p₁, …, Re p_N, Im p₁, …, Im p_N)`,
/// one set per boundary sample.
#[derive(Debug, Clone)]
pub struct AttachmentTarget {
    frame: FrameLoop,
    defining: Vec<Vec<Poly>>,
    gradients: Vec<Vec<Vec<Poly>>>,
    linear: bool,
}

impl AttachmentTarget {
    pub fn new(frame: FrameLoop, defining: Vec<Vec<Poly>>) -> Result<Self> {
        let n = frame.n();
        let s = frame.grid().size();
        if defining.len() != s {
            return Err(Error::LengthMismatch {
                expected: s,
                got: defining.len(),
            });
        }
        let zero = vec![0.0; 2 * n];
        let mut gradients = Vec::with_capacity(s);
        for (k, rs) in defining.iter().enumerate() {
            if rs.len() != n || rs.iter().any(|r| r.nvars() != 2 * n) {
                return Err(Error::DimensionMismatch(format!(
                    "sample {k} needs {n} functions of {} real variables",
                    2 * n
                )));
            }
            if let Some(v) = rs.iter().map(|r| r.eval(&zero)).find(|v| v.abs() >= 1e-12) {
                return Err(Error::InvalidTarget(format!("r(ζ_{k}, 0) = {v:e}")));
            }
            let grads: Vec<Vec<Poly>> = rs.iter().map(Poly::gradient).collect();
            // r_j = Re(Σ_l c_jl p_l) to first order; the zero set is maximally real iff c is invertible
            let c = DMatrix::from_fn(n, n, |j, l| {
                C64::new(grads[j][l].eval(&zero), -grads[j][n + l].eval(&zero))
            });
            let sv = linalg::complex_singular_values(&c);
            let (smax, smin) = (sv[0], sv[n - 1]);
            if !(smin > 1e-10 * smax) {
                return Err(Error::InvalidTarget(format!(
                    "zero set is not maximally real at sample {k} (σ_min/σ_max = {:e})",
                    smin / smax
                )));
            }
            gradients.push(grads);
        }
        let linear = defining.iter().flatten().all(|r| r.degree() <= 1);
        Ok(Self {
            frame,
            defining,
            gradients,
            linear,
        })
    }

    /// Real and imaginary parts of `q = X⁻¹p` as linear polynomials in `p`.
    fn frame_coordinates(x: &DMatrix<C64>) -> Result<(Vec<Poly>, Vec<Poly>)> {
        let n = x.nrows();
        let inv = x.clone().try_inverse().ok_or(Error::SingularFrame {
            angle: f64::NAN,
            sigma_min: 0.0,
        })?;
        let var = |v| Poly::var(2 * n, v);
        let mut re = Vec::with_capacity(n);
        let mut im = Vec::with_capacity(n);
        for j in 0..n {
            let (mut a, mut b) = (Poly::zero(2 * n), Poly::zero(2 * n));
            for l in 0..n {
                let c = inv[(j, l)];
                a = a.add(&var(l).scale(c.re)).sub(&var(n + l).scale(c.im));
                b = b.add(&var(l).scale(c.im)).add(&var(n + l).scale(c.re));
            }
            re.push(a);
            im.push(b);
        }
        Ok((re, im))
    }

    /// The targets `{p : X(ζ)⁻¹p ∈ ℝ^N}`, i.e. the tangent spaces themselves.
    pub fn linear(frame: &FrameLoop) -> Result<Self> {
        let defining = frame
            .matrices()
            .iter()
            .map(|x| Ok(Self::frame_coordinates(x)?.1))
            .collect::<Result<Vec<_>>>()?;
        Self::new(frame.clone(), defining)
    }

    /// `r_j = Im q_j − strength·|q|²` with `q = X⁻¹p`: tangent to the frame at
    /// `p = 0` but curved, with curvature measured in frame coordinates.
    pub fn quadratic(frame: &FrameLoop, strength: f64) -> Result<Self> {
        if !strength.is_finite() {
            return Err(Error::InvalidTarget("non-finite strength".into()));
        }
        let defining = frame
            .matrices()
            .iter()
            .map(|x| {
                let (re, im) = Self::frame_coordinates(x)?;
                let sq = re
                    .iter()
                    .chain(&im)
                    .fold(Poly::zero(2 * x.nrows()), |acc, q| acc.add(&q.mul(q)))
                    .scale(strength);
                Ok(im.iter().map(|q| q.sub(&sq)).collect())
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(frame.clone(), defining)
    }

    pub fn frame(&self) -> &FrameLoop {
        &self.frame
    }

    pub fn grid(&self) -> BoundaryGrid {
        self.frame.grid()
    }

    pub fn n(&self) -> usize {
        self.frame.n()
    }

    pub fn is_linear(&self) -> bool {
        self.linear
    }

    /// `r(ζ_k, p)`.
    pub fn eval(&self, k: usize, p: &[C64]) -> Vec<f64> {
        let x = realify_point(p);
        self.defining[k].iter().map(|r| r.eval(&x)).collect()
    }

    /// Real `N × 2N` Jacobian of `r(ζ_k, ·)` at `p`.
    pub fn jacobian(&self, k: usize, p: &[C64]) -> DMatrix<f64> {
        let n = self.n();
        let x = realify_point(p);
        DMatrix::from_fn(n, 2 * n, |j, v| self.gradients[k][j][v].eval(&x))
    }

    /// `sup_k max_j |r_j(ζ_k, g(ζ_k))|` for a displacement `g` on the target grid.
    pub fn residual(&self, g: &BoundaryFunction) -> f64 {
        (0..g.len())
            .flat_map(|k| self.eval(k, &g.sample(k)))
            .fold(0.0, |a, v| a.max(v.abs()))
    }
}

/// Coefficients of the polynomials `h_j`, laid out per component.
///
/// For `κ_j = 2m_j` the component holds `κ_j + 1` reals: complex `c₀, …, c_{m_j−1}`
/// as `(t₁, t₂), (t₃, t₄), …`, then the real middle coefficient `c_{m_j}`. The
/// remaining coefficients are `c_{κ_j−k} = conj(c_k)`, so `ζ^{−m_j}h_j` is real.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscParameters {
    kappas: Vec<u32>,
    t: Vec<f64>,
    free: Vec<bool>,
}

impl DiscParameters {
    pub fn zeros(kappas: Vec<u32>) -> Self {
        let len = kappas.iter().map(|k| *k as usize + 1).sum();
        Self {
            kappas,
            t: vec![0.0; len],
            free: vec![true; len],
        }
    }

    pub fn new(kappas: Vec<u32>, t: Vec<f64>) -> Result<Self> {
        let len = t.len();
        Self::with_mask(kappas, t, vec![true; len])
    }

    /// Parameters with some entries pinned to zero (`free[i] == false`).
    pub fn with_mask(kappas: Vec<u32>, t: Vec<f64>, free: Vec<bool>) -> Result<Self> {
        let len: usize = kappas.iter().map(|k| *k as usize + 1).sum();
        if t.len() != len || free.len() != len {
            return Err(Error::Layout(format!(
                "{} parameters and {} mask entries for {len} slots",
                t.len(),
                free.len()
            )));
        }
        if let Some(i) = (0..len).find(|&i| !free[i] && t[i] != 0.0) {
            return Err(Error::Layout(format!("masked parameter {i} is nonzero")));
        }
        if t.iter().any(|v| !v.is_finite()) {
            return Err(Error::Layout("non-finite parameter".into()));
        }
        Ok(Self { kappas, t, free })
    }

    /// Indices `(4, …, 4)` with only `(t₃ʲ, t₄ʲ)` free: `h_j = τ_jζ + τ̄_jζ³`.
    ///
    /// `free` packs `(t₃¹, t₄¹, t₃², t₄², …)`.
    pub fn fixed_center(n: usize, free: &[f64]) -> Result<Self> {
        if free.len() != 2 * n {
            return Err(Error::Layout(format!("{} free values for {} slots", free.len(), 2 * n)));
        }
        let mut t = vec![0.0; 5 * n];
        let mut mask = vec![false; 5 * n];
        for j in 0..n {
            t[5 * j + 2] = free[2 * j];
            t[5 * j + 3] = free[2 * j + 1];
            mask[5 * j + 2] = true;
            mask[5 * j + 3] = true;
        }
        Self::with_mask(vec![4; n], t, mask)
    }

    pub fn kappas(&self) -> &[u32] {
        &self.kappas
    }

    pub fn t(&self) -> &[f64] {
        &self.t
    }

    pub fn free_mask(&self) -> &[bool] {
        &self.free
    }

    pub fn free_count(&self) -> usize {
        self.free.iter().filter(|f| **f).count()
    }

    pub fn n(&self) -> usize {
        self.kappas.len()
    }

    pub fn offset(&self, j: usize) -> usize {
        self.kappas[..j].iter().map(|k| *k as usize + 1).sum()
    }

    pub fn component(&self, j: usize) -> &[f64] {
        let o = self.offset(j);
        &self.t[o..o + self.kappas[j] as usize + 1]
    }

    pub fn is_zero(&self) -> bool {
        self.t.iter().all(|v| *v == 0.0)
    }
}

/// `Σ(κ_j + 1)`, the number of real parameters for a nonnegative profile.
pub fn param_space_dim(profile: &IndexProfile) -> Result<usize> {
    if let Some((component, &index)) = profile.partial.iter().enumerate().find(|(_, k)| **k < 0) {
        return Err(Error::NegativeIndex { component, index });
    }
    Ok(profile.partial.iter().map(|k| *k as usize + 1).sum())
}

/// Boundary values of `h_j`.
pub fn poly_h(params: &DiscParameters, j: usize, grid: BoundaryGrid) -> Result<BoundaryFunction> {
    if j >= params.n() {
        return Err(Error::Layout(format!("component {j} out of range")));
    }
    let kappa = params.kappas[j] as usize;
    if kappa % 2 == 1 {
        return Err(Error::Layout(format!("odd index {kappa} has no palindromic layout")));
    }
    if 2 * kappa >= grid.size() {
        return Err(Error::Layout(format!("degree {kappa} does not fit on {} samples", grid.size())));
    }
    let m = kappa / 2;
    let t = params.component(j);
    let mut c = vec![C64::new(0.0, 0.0); kappa + 1];
    for k in 0..m {
        c[k] = C64::new(t[2 * k], t[2 * k + 1]);
        c[kappa - k] = c[k].conj();
    }
    c[m] = C64::new(t[2 * m], 0.0);
    let mut co = vec![C64::new(0.0, 0.0); grid.size()];
    co[..=kappa].copy_from_slice(&c);
    BoundaryFunction::from_coeffs(vec![co], grid)
}

/// Real boundary function `u_j = ζ^{−κ_j/2}h_j`.
pub fn poly_u(params: &DiscParameters, j: usize, grid: BoundaryGrid) -> Result<BoundaryFunction> {
    let h = poly_h(params, j, grid)?;
    let u = h.shift(-i64::from(params.kappas[j] / 2));
    let tol = 1e-10 * u.max_abs().max(1.0);
    if !u.is_real(tol) {
        return Err(Error::NotReal { max_imag: u.max_imag() });
    }
    Ok(u.real_part())
}

/// Solves `r_j(ζ, G(u, f)(ζ)) = 0` for `f`; the solution is `φ(u)`.
pub fn solve_phi(target: &AttachmentTarget, u: &BoundaryFunction, tol: f64) -> Result<BoundaryFunction> {
    Ok(solve_phi_with_residual(target, u, tol)?.0)
}

fn displacement(x: &[DMatrix<C64>], u: &[Vec<f64>], f: &[Vec<f64>], tf: &[Vec<f64>], k: usize) -> Vec<C64> {
    let n = u.len();
    let mut p = vec![C64::new(0.0, 0.0); n];
    for l in 0..n {
        let a = C64::new(u[l][k] - tf[l][k], f[l][k]);
        if a == C64::new(0.0, 0.0) {
            continue;
        }
        for (r, pr) in p.iter_mut().enumerate() {
            *pr += x[k][(r, l)] * a;
        }
    }
    p
}

fn conj_center(f: &[Vec<f64>], grid: BoundaryGrid) -> Result<Vec<Vec<f64>>> {
    if f.iter().flatten().all(|v| *v == 0.0) {
        return Ok(f.to_vec());
    }
    let fb = BoundaryFunction::from_real_components(f.to_vec(), grid)?;
    let t = conjugation::conjugate(&fb, ConjugationKind::AtCenter)?;
    Ok((0..f.len()).map(|j| t.values(j).iter().map(|v| v.re).collect()).collect())
}

fn real_parts(u: &BoundaryFunction) -> Vec<Vec<f64>> {
    (0..u.dim()).map(|j| u.values(j).iter().map(|v| v.re).collect()).collect()
}

fn solve_phi_with_residual(target: &AttachmentTarget, u: &BoundaryFunction, tol: f64) -> Result<(BoundaryFunction, f64)> {
    let n = target.n();
    let grid = target.grid();
    if u.dim() != n || u.grid() != grid {
        return Err(Error::DimensionMismatch(format!(
            "u must have {n} components on {} samples",
            grid.size()
        )));
    }
    if !u.is_real(1e-10 * u.max_abs().max(1.0)) {
        return Err(Error::NotReal { max_imag: u.max_imag() });
    }
    let s = grid.size();
    let x = target.frame().matrices();
    let ur = real_parts(u);
    let zero = vec![vec![0.0; s]; n];
    let evaluate = |f: &[Vec<f64>]| -> Result<(Vec<Vec<f64>>, f64)> {
        let tf = conj_center(f, grid)?;
        let mut worst = 0.0f64;
        let r: Vec<Vec<f64>> = (0..s)
            .map(|k| {
                let v = target.eval(k, &displacement(x, &ur, f, &tf, k));
                for e in &v {
                    worst = if e.is_finite() { worst.max(e.abs()) } else { f64::INFINITY };
                }
                v
            })
            .collect();
        Ok((r, worst))
    };
    let (mut r, mut res) = evaluate(&zero)?;
    if res < tol {
        return Ok((BoundaryFunction::from_real_components(zero, grid)?, res));
    }
    // pointwise linearization in the i·X_l directions, frozen at f = 0
    let mut inverses = Vec::with_capacity(s);
    for k in 0..s {
        let p0 = displacement(x, &ur, &zero, &zero, k);
        let jac = target.jacobian(k, &p0);
        let m = DMatrix::from_fn(n, n, |j, l| {
            (0..n)
                .map(|c| {
                    let d = C64::new(0.0, 1.0) * x[k][(c, l)];
                    jac[(j, c)] * d.re + jac[(j, n + c)] * d.im
                })
                .sum::<f64>()
        });
        let sv = linalg::real_singular_values(&m);
        if !(sv[n - 1] > 1e-12 * sv[0]) {
            return Err(Error::SingularLinearization { sample: k });
        }
        inverses.push(m.try_inverse().ok_or(Error::SingularLinearization { sample: k })?);
    }
    let mut f = zero;
    let mut iterations = 0;
    while res >= tol {
        if iterations >= MAX_SOLVER_ITER {
            return Err(Error::MaxIterations {
                max_iter: MAX_SOLVER_ITER,
                residual: res,
            });
        }
        iterations += 1;
        let mut step = vec![vec![0.0; s]; n];
        for k in 0..s {
            let rk = nalgebra::DVector::from_fn(n, |j, _| r[k][j]);
            let d = &inverses[k] * rk;
            for j in 0..n {
                step[j][k] = d[j];
            }
        }
        let mut lambda = 1.0;
        loop {
            let trial: Vec<Vec<f64>> = f
                .iter()
                .zip(&step)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - lambda * y).collect())
                .collect();
            let (rt, rest) = evaluate(&trial)?;
            if rest < res {
                f = trial;
                r = rt;
                res = rest;
                break;
            }
            lambda /= 2.0;
            if lambda < 1e-6 {
                return Err(Error::NonContraction {
                    iterations,
                    residual: res,
                });
            }
        }
    }
    Ok((BoundaryFunction::from_real_components(f, grid)?, res))
}

/// A disc `A′ + G(u, φ(u))` of the family.
#[derive(Debug, Clone)]
pub struct NearbyDisc {
    pub disc: AnalyticDisc,
    pub params: DiscParameters,
    pub u: BoundaryFunction,
    pub f: BoundaryFunction,
    pub residual: f64,
}

fn structured_samples(theta: &StructuredFrame) -> Vec<DMatrix<C64>> {
    let grid = theta.grid();
    let n = theta.n();
    (0..grid.size())
        .map(|k| {
            let z = grid.zeta(k);
            DMatrix::from_fn(n, n, |r, c| theta.theta()[c].values(r)[k] * z.powi(theta.powers()[c] as i32))
        })
        .collect()
}

fn check_consistent(target: &AttachmentTarget, theta: &StructuredFrame) -> Result<()> {
    if theta.grid() != target.grid() || theta.n() != target.n() {
        return Err(Error::DimensionMismatch("target and frame live on different grids".into()));
    }
    for (k, (a, b)) in structured_samples(theta)
        .iter()
        .zip(target.frame().matrices())
        .enumerate()
    {
        if (a - b).norm() > 1e-8 * b.norm() {
            return Err(Error::InvalidTarget(format!(
                "target frame differs from the structured frame at sample {k}"
            )));
        }
    }
    Ok(())
}

/// Assembles `A′ + G(u, φ(u))` for the parameters and checks holomorphy,
/// attachment and, when every `h_j` vanishes at the origin, the fixed center.
pub fn nearby_disc(
    target: &AttachmentTarget,
    base: &AnalyticDisc,
    theta_frame: &StructuredFrame,
    params: &DiscParameters,
    tol: f64,
) -> Result<NearbyDisc> {
    check_consistent(target, theta_frame)?;
    assemble(target, base, theta_frame, params, tol)
}

fn assemble(
    target: &AttachmentTarget,
    base: &AnalyticDisc,
    theta_frame: &StructuredFrame,
    params: &DiscParameters,
    tol: f64,
) -> Result<NearbyDisc> {
    let n = theta_frame.n();
    let grid = target.grid();
    if base.dim() != n || params.n() != n {
        return Err(Error::DimensionMismatch(format!(
            "disc of dimension {} and {} parameter blocks for {n} columns",
            base.dim(),
            params.n()
        )));
    }
    for (j, (&k, &m)) in params.kappas().iter().zip(theta_frame.powers()).enumerate() {
        if k != 2 * m {
            return Err(Error::Layout(format!("component {j}: index {k} but power {m}")));
        }
    }
    let base_boundary = if base.grid() == grid {
        base.boundary().clone()
    } else {
        base.boundary().resample(grid)
    };
    let us = (0..n)
        .map(|j| poly_u(params, j, grid))
        .collect::<Result<Vec<_>>>()?;
    let u = BoundaryFunction::stack(&us.iter().collect::<Vec<_>>())?;
    let (f, residual) = solve_phi_with_residual(target, &u, tol)?;
    let x = target.frame().matrices();
    let ur = real_parts(&u);
    let fr = real_parts(&f);
    let tf = conj_center(&fr, grid)?;
    let mut comps: Vec<Vec<C64>> = base_boundary.components().to_vec();
    for k in 0..grid.size() {
        let p = displacement(x, &ur, &fr, &tf, k);
        for (j, v) in p.into_iter().enumerate() {
            comps[j][k] += v;
        }
    }
    let disc = AnalyticDisc::with_tolerance(BoundaryFunction::from_components(comps, grid)?, DISC_HOLOMORPHY_TOL)?;
    if residual >= tol {
        return Err(Error::Attachment { residual, tol });
    }
    // h_j(0) = 0 for every j keeps the center in place
    let pinned = (0..n).all(|j| theta_frame.powers()[j] >= 1 && params.component(j)[..2] == [0.0, 0.0]);
    if pinned {
        let shift = disc
            .center_value()
            .iter()
            .zip(conjugation::power_series(&base_boundary, C64::new(0.0, 0.0)))
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        if shift > CENTER_TOL {
            return Err(Error::CenterMoved { shift });
        }
    }
    Ok(NearbyDisc {
        disc,
        params: params.clone(),
        u,
        f,
        residual,
    })
}

/// Discs over the `2N` free parameters `(t₃ʲ, t₄ʲ)` of indices `(4, …, 4)`.
#[derive(Debug, Clone)]
pub struct FixedCenterFamily {
    target: AttachmentTarget,
    base: AnalyticDisc,
    theta: StructuredFrame,
    tol: f64,
}

impl FixedCenterFamily {
    pub fn new(target: AttachmentTarget, base: &AnalyticDisc, theta: &StructuredFrame, tol: f64) -> Result<Self> {
        if theta.powers().iter().any(|&m| m != 2) {
            return Err(Error::Layout(format!(
                "fixed-center family needs indices (4, …, 4), got powers {:?}",
                theta.powers()
            )));
        }
        let grid = target.grid();
        let theta = if theta.grid() == grid {
            theta.clone()
        } else {
            theta.resample(grid)
        };
        check_consistent(&target, &theta)?;
        let base = if base.grid() == grid {
            base.clone()
        } else {
            AnalyticDisc::with_tolerance(base.boundary().resample(grid), DISC_HOLOMORPHY_TOL)?
        };
        Ok(Self {
            target,
            base,
            theta,
            tol,
        })
    }

    pub fn n(&self) -> usize {
        self.theta.n()
    }

    pub fn free_dim(&self) -> usize {
        2 * self.n()
    }

    pub fn base(&self) -> &AnalyticDisc {
        &self.base
    }

    pub fn target(&self) -> &AttachmentTarget {
        &self.target
    }

    pub fn theta(&self) -> &StructuredFrame {
        &self.theta
    }

    pub fn center(&self) -> &[C64] {
        self.base.center_value()
    }

    pub fn disc(&self, free: &[f64]) -> Result<NearbyDisc> {
        let params = DiscParameters::fixed_center(self.n(), free)?;
        assemble(&self.target, &self.base, &self.theta, &params, self.tol)
    }

    /// `a = Θ(0)⁻¹c₁` with `c₁` the first Fourier coefficient of the base disc.
    pub fn first_order_coefficients(&self) -> Result<Vec<C64>> {
        let n = self.n();
        let c1 = nalgebra::DVector::from_fn(n, |j, _| self.base.boundary().coeff(j, 1));
        let inv = self
            .theta
            .theta_at_center()
            .try_inverse()
            .ok_or_else(|| Error::InvalidTarget("Θ(0) is singular".into()))?;
        Ok((inv * c1).iter().copied().collect())
    }

    /// Parameter direction `(t₃ʲ, t₄ʲ) = (Re, Im)(i a_j)` whose first-order effect is the rotation.
    pub fn rotation_direction(&self) -> Result<Vec<f64>> {
        Ok(self
            .first_order_coefficients()?
            .iter()
            .flat_map(|a| [-a.im, a.re])
            .collect())
    }
}

/// `∂/∂θ` of `θ ↦ A(|ζ|e^{iθ})` at an interior point, from the power series.
fn angular_derivative(b: &BoundaryFunction, zeta: C64) -> Vec<C64> {
    let half = b.len() / 2;
    (0..b.dim())
        .map(|j| {
            let c = b.coeffs(j);
            let s = (1..half)
                .rev()
                .fold(C64::new(0.0, 0.0), |acc, n| acc * zeta + c[n] * n as f64);
            C64::new(0.0, 1.0) * zeta * s
        })
        .collect()
}

fn diff_norm(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}

fn unit(n: usize, i: usize, h: f64) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[i] = h;
    v
}

/// Central difference of `t ↦ A_t(ζ)` along `dir`, from the discs at `±FD_STEP·dir`.
fn fd_pair(family: &FixedCenterFamily, dir: &[f64]) -> Result<(AnalyticDisc, AnalyticDisc)> {
    let plus: Vec<f64> = dir.iter().map(|v| v * FD_STEP).collect();
    let minus: Vec<f64> = dir.iter().map(|v| -v * FD_STEP).collect();
    Ok((family.disc(&plus)?.disc, family.disc(&minus)?.disc))
}

fn fd_eval(pair: &(AnalyticDisc, AnalyticDisc), zeta: C64) -> Vec<C64> {
    let a = pair.0.eval_inside(zeta);
    let b = pair.1.eval_inside(zeta);
    a.iter().zip(&b).map(|(x, y)| (x - y) / (2.0 * FD_STEP)).collect()
}

/// Compares first derivatives of the family at `t = 0` with their leading terms
/// `ζΘ(0)e_j`, `iζΘ(0)e_j` (parameter directions) and `ζΘ(0)(ia)` (rotation)
/// at `ζ = ρe^{iθ}` and `ζ = (ρ/2)e^{iθ}`.
pub fn derivative_check(family: &FixedCenterFamily, rho: f64, thetas: &[f64]) -> Result<Report> {
    let n = family.n();
    let theta0 = family.theta.theta_at_center();
    let a = family.first_order_coefficients()?;
    let rot = &theta0 * nalgebra::DVector::from_fn(n, |j, _| C64::new(0.0, 1.0) * a[j]);
    let pairs = (0..2 * n)
        .map(|i| fd_pair(family, &unit(2 * n, i, 1.0)))
        .collect::<Result<Vec<_>>>()?;
    let mut errs = [[0.0f64; 3]; 2];
    for (ri, r) in [rho, rho / 2.0].into_iter().enumerate() {
        for &th in thetas {
            let z = C64::from_polar(r, th);
            for (i, pair) in pairs.iter().enumerate() {
                let j = i / 2;
                let phase = if i % 2 == 0 { C64::new(1.0, 0.0) } else { C64::new(0.0, 1.0) };
                let lead: Vec<C64> = (0..n).map(|row| z * phase * theta0[(row, j)]).collect();
                let e = diff_norm(&fd_eval(pair, z), &lead);
                errs[ri][i % 2] = errs[ri][i % 2].max(e);
            }
            let lead: Vec<C64> = rot.iter().map(|v| z * v).collect();
            let e = diff_norm(&angular_derivative(family.base.boundary(), z), &lead);
            errs[ri][2] = errs[ri][2].max(e);
        }
    }
    let total = |e: &[f64; 3]| e.iter().copied().fold(0.0, f64::max);
    let (e1, e2) = (total(&errs[0]), total(&errs[1]));
    let ratio = e1 / e2;
    let ratios: Vec<f64> = (0..3).map(|k| errs[0][k] / errs[1][k]).collect();
    Ok(Report::new("derivative_leading_order")
        .value("rho", rho)
        .value("error_rho", e1)
        .value("error_half_rho", e2)
        .value("ratio", ratio)
        .value("errors_rho", errs[0])
        .value("errors_half_rho", errs[1])
        .value("ratios", ratios)
        .value("a", a.iter().map(|v| [v.re, v.im]).collect::<Vec<_>>())
        .tolerance("ratio_min", 3.0)
        .tolerance("ratio_max", 5.0)
        .pass_if((3.0..=5.0).contains(&ratio)))
}

/// Rank of `(θ, t′) ↦ A_{t′}(ρ_ε e^{iθ})` at `t′ = 0` over a slice of parameter
/// space; by default the orthogonal complement of the rotation direction.
pub fn foliation_rank(
    family: &FixedCenterFamily,
    rho_eps: f64,
    thetas: &[f64],
    slice: Option<DMatrix<f64>>,
    rank_tol: f64,
) -> Result<Report> {
    let n = family.n();
    let rotation = family.rotation_direction()?;
    let slice = slice.unwrap_or_else(|| linalg::real_complement(&rotation));
    if slice.nrows() != 2 * n || slice.ncols() != 2 * n - 1 {
        return Err(Error::DimensionMismatch(format!(
            "slice must be {}x{}",
            2 * n,
            2 * n - 1
        )));
    }
    let pairs = (0..slice.ncols())
        .map(|c| fd_pair(family, slice.column(c).as_slice()))
        .collect::<Result<Vec<_>>>()?;
    let mut sigmas = Vec::with_capacity(thetas.len());
    let mut ranks = Vec::with_capacity(thetas.len());
    for &th in thetas {
        let z = C64::from_polar(rho_eps, th);
        let mut cols = vec![realify_point(&angular_derivative(family.base.boundary(), z))];
        for pair in &pairs {
            cols.push(realify_point(&fd_eval(pair, z)));
        }
        let jac = DMatrix::from_fn(2 * n, 2 * n, |r, c| cols[c][r]);
        let sv = linalg::real_singular_values(&jac);
        ranks.push(sv.iter().filter(|&&s| s > rank_tol * sv[0]).count());
        sigmas.push(sv[2 * n - 1]);
    }
    let floor = 1e-6 * rho_eps;
    let smin = sigmas.iter().copied().fold(f64::INFINITY, f64::min);
    let full = ranks.iter().all(|&r| r == 2 * n);
    Ok(Report::new("foliation_rank")
        .value("rho_eps", rho_eps)
        .value("sigma_min", smin)
        .value("sigma_min_per_angle", &sigmas)
        .value("ranks", &ranks)
        .value("full_rank", 2 * n)
        .value("rotation_direction", &rotation)
        .tolerance("sigma_min", floor)
        .tolerance("rank_relative", rank_tol)
        .pass_if(full && smin > floor))
}

/// Numerical rank of the real Jacobian of `params ↦ A′ + G(u, φ(u))` at zero,
/// over all (unmasked) parameters of the profile.
pub fn parameter_rank(target: &AttachmentTarget, base: &AnalyticDisc, theta_frame: &StructuredFrame, tol: f64) -> Result<usize> {
    check_consistent(target, theta_frame)?;
    let kappas: Vec<u32> = theta_frame.powers().iter().map(|m| 2 * m).collect();
    let dim: usize = kappas.iter().map(|k| *k as usize + 1).sum();
    let flatten = |d: &AnalyticDisc| -> Vec<f64> {
        d.boundary()
            .components()
            .iter()
            .flatten()
            .flat_map(|v| [v.re, v.im])
            .collect()
    };
    let mut cols = Vec::with_capacity(dim);
    for i in 0..dim {
        let plus = DiscParameters::new(kappas.clone(), unit(dim, i, FD_STEP))?;
        let minus = DiscParameters::new(kappas.clone(), unit(dim, i, -FD_STEP))?;
        let a = flatten(&assemble(target, base, theta_frame, &plus, tol)?.disc);
        let b = flatten(&assemble(target, base, theta_frame, &minus, tol)?.disc);
        cols.push(a.iter().zip(&b).map(|(x, y)| (x - y) / (2.0 * FD_STEP)).collect::<Vec<f64>>());
    }
    let rows = cols[0].len();
    let jac = faer::Mat::from_fn(rows, dim, |r, c| cols[c][r]);
    let (sv, _) = linalg::right_svd(&jac);
    Ok(sv.iter().filter(|&&s| s > RANK_TOL * sv[0]).count())
}

/// Rank of `v ↦ Im ∂A/∂θ(1)` for reference discs with `y₀ = (0, v)`, as a map into
/// the `n` directions of `T₀M` complementary to the complex tangent space.
pub fn rank_report(manifold: &GraphManifold, rho0: f64, grid: BoundaryGrid, opts: BishopOptions) -> Result<Report> {
    let (m, n) = (manifold.m(), manifold.n());
    let w = bishop::reference_w(m, rho0, grid);
    let velocity = |y0: &[f64]| -> Result<Vec<f64>> {
        let sol = bishop::solve_bishop(manifold, &w, y0, opts)?;
        let d = sol.disc.boundary().derivative();
        Ok((m..m + n).map(|j| d.values(j)[0].im).collect())
    };
    let base = velocity(&vec![0.0; n])?;
    let mut cols = Vec::with_capacity(n.saturating_sub(1));
    for i in 1..n {
        let a = velocity(&unit(n, i, FD_STEP))?;
        let b = velocity(&unit(n, i, -FD_STEP))?;
        cols.push(a.iter().zip(&b).map(|(x, y)| (x - y) / (2.0 * FD_STEP)).collect::<Vec<f64>>());
    }
    let bnorm = base.iter().map(|v| v * v).sum::<f64>().sqrt();
    let (rank, angle) = if cols.is_empty() {
        (0, (bnorm > 0.0).then_some(std::f64::consts::FRAC_PI_2))
    } else {
        let jac = DMatrix::from_fn(n, cols.len(), |r, c| cols[c][r]);
        let svd = jac.clone().svd(true, false);
        let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
        let cutoff = (RANK_TOL * smax.max(bnorm)).max(1e-12);
        let u = svd.u.expect("requested");
        let live: Vec<usize> = (0..svd.singular_values.len())
            .filter(|&i| svd.singular_values[i] > cutoff)
            .collect();
        let angle = (bnorm > 0.0).then(|| {
            let b = nalgebra::DVector::from_column_slice(&base);
            let mut resid = b.clone();
            for &i in &live {
                let ui = u.column(i);
                resid -= ui * ui.dot(&b);
            }
            (resid.norm() / bnorm).clamp(0.0, 1.0).asin()
        });
        (live.len(), angle)
    };
    Ok(Report::new("normal_rank")
        .value("rank", rank)
        .value("expected_rank", n - 1)
        .value("base_velocity", &base)
        .value("transversality_angle", angle)
        .tolerance("rank_relative", RANK_TOL)
        .pass_if(rank == n - 1 && angle.is_some_and(|a| a > 1e-6)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::{partial_indices, FrameLoop};
    use crate::twist;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(s: usize) -> BoundaryGrid {
        BoundaryGrid::new(s).unwrap()
    }

    /// Constant `Θ` with columns of `ζ²`: the simplest frame of indices `(4, …, 4)`.
    fn flat_structured(g: BoundaryGrid, n: usize) -> StructuredFrame {
        let theta = (0..n)
            .map(|j| {
                let mut e = vec![C64::new(0.0, 0.0); n];
                e[j] = C64::new(1.0, 0.0);
                BoundaryFunction::constant(g, &e)
            })
            .collect();
        StructuredFrame::new(theta, vec![2; n]).unwrap()
    }

    fn flat_base(g: BoundaryGrid, n: usize) -> AnalyticDisc {
        let m = GraphManifold::flat(n - 1, 1).unwrap();
        bishop::reference_disc(&m, 0.1, g, BishopOptions::default()).unwrap().disc
    }

    fn random_u(rng: &mut ChaCha8Rng, g: BoundaryGrid, n: usize, size: f64) -> BoundaryFunction {
        let comps = (0..n)
            .map(|_| {
                let a: Vec<(f64, f64)> = (0..6).map(|_| (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
                g.thetas()
                    .iter()
                    .map(|&t| {
                        size * a.iter().enumerate().map(|(k, (c, s))| (c * (k as f64 * t).cos() + s * (k as f64 * t).sin()) / (1.0 + k as f64)).sum::<f64>()
                    })
                    .collect()
            })
            .collect();
        BoundaryFunction::from_real_components(comps, g).unwrap()
    }

    #[test]
    fn param_dims() {
        assert_eq!(param_space_dim(&IndexProfile::new(vec![2, 0, 0])).unwrap(), 5);
        assert_eq!(param_space_dim(&IndexProfile::new(vec![4, 4])).unwrap(), 10);
        assert_eq!(param_space_dim(&IndexProfile::new(vec![0, 0, 0])).unwrap(), 3);
        assert!(matches!(
            param_space_dim(&IndexProfile::new(vec![2, -1])),
            Err(Error::NegativeIndex { index: -1, .. })
        ));
    }

    #[test]
    fn palindromic_polynomials() {
        let g = grid(64);
        let zero = DiscParameters::zeros(vec![4]);
        assert!(poly_h(&zero, 0, g).unwrap().max_abs() == 0.0);
        let p = DiscParameters::fixed_center(1, &[1.0, 0.0]).unwrap();
        let h = poly_h(&p, 0, g).unwrap();
        let u = poly_u(&p, 0, g).unwrap();
        for k in 0..64 {
            let z = g.zeta(k);
            assert!((h.values(0)[k] - (z + z.powi(3))).norm() < 1e-14);
            assert!((u.values(0)[k].re - 2.0 * g.theta(k).cos()).abs() < 1e-14);
        }
        let p = DiscParameters::new(vec![2], vec![1.0, 0.0, 0.0]).unwrap();
        let h = poly_h(&p, 0, g).unwrap();
        let u = poly_u(&p, 0, g).unwrap();
        for k in 0..64 {
            let z = g.zeta(k);
            assert!((h.values(0)[k] - (1.0 + z * z)).norm() < 1e-14);
            assert!((u.values(0)[k].re - 2.0 * g.theta(k).cos()).abs() < 1e-14);
        }
    }

    #[test]
    fn layout_errors() {
        assert!(DiscParameters::new(vec![2, 0], vec![0.0; 3]).is_err());
        assert!(DiscParameters::with_mask(vec![0], vec![1.0], vec![false]).is_err());
        let odd = DiscParameters::new(vec![1], vec![0.0; 2]).unwrap();
        assert!(poly_h(&odd, 0, grid(64)).is_err());
        assert_eq!(DiscParameters::fixed_center(3, &[0.0; 6]).unwrap().free_count(), 6);
    }

    #[test]
    fn target_validation() {
        let g = grid(64);
        let f = FrameLoop::identity(g, 2);
        let lin = AttachmentTarget::linear(&f).unwrap();
        assert!(lin.is_linear());
        assert!(!AttachmentTarget::quadratic(&f, 1.0).unwrap().is_linear());
        // Im p₁ = 0 twice is not maximally real
        let bad = vec![vec![Poly::var(4, 2), Poly::var(4, 2)]; 64];
        assert!(matches!(AttachmentTarget::new(f.clone(), bad), Err(Error::InvalidTarget(_))));
        let shifted = vec![vec![Poly::var(4, 2).add(&Poly::constant(4, 1.0)), Poly::var(4, 3)]; 64];
        assert!(AttachmentTarget::new(f, shifted).is_err());
    }

    #[test]
    fn phi_vanishes_on_linear_targets() {
        let g = grid(256);
        let frame = FrameLoop::diagonal_powers(g, &[1, 0]).unwrap();
        let t = AttachmentTarget::linear(&frame).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let u = random_u(&mut rng, g, 2, 0.01);
            let f = solve_phi(&t, &u, SOLVER_TOL).unwrap();
            assert_eq!(f.max_abs(), 0.0);
        }
    }

    #[test]
    fn quadratic_target_solution_and_flat_derivative() {
        let g = grid(256);
        let frame = FrameLoop::diagonal_powers(g, &[1, 0]).unwrap();
        let t = AttachmentTarget::quadratic(&frame, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u = random_u(&mut rng, g, 2, 0.05);
        let (f, res) = solve_phi_with_residual(&t, &u, 1e-12).unwrap();
        assert!(res < 1e-12);
        assert!(f.max_abs() > 0.0);
        // recomputed residual of the assembled displacement
        let fr = real_parts(&f);
        let tf = conj_center(&fr, g).unwrap();
        let ur = real_parts(&u);
        let worst = (0..256)
            .flat_map(|k| t.eval(k, &displacement(frame.matrices(), &ur, &fr, &tf, k)))
            .fold(0.0f64, |a, v| a.max(v.abs()));
        assert!(worst < 1e-12);
        // φ is quadratic at 0, so its central difference quotient vanishes
        for h in [1e-3, 1e-4] {
            let up = solve_phi(&t, &u.scale(C64::new(h, 0.0)), 1e-14).unwrap();
            let um = solve_phi(&t, &u.scale(C64::new(-h, 0.0)), 1e-14).unwrap();
            let d = up.sub(&um).unwrap().max_abs() / (2.0 * h);
            assert!(d < 1e-5, "{d}");
        }
    }

    #[test]
    fn zero_parameters_return_base() {
        let g = grid(256);
        let s = flat_structured(g, 2);
        let target = AttachmentTarget::linear(&s.frame().unwrap()).unwrap();
        let base = flat_base(g, 2);
        let d = nearby_disc(&target, &base, &s, &DiscParameters::zeros(vec![4, 4]), SOLVER_TOL).unwrap();
        assert_eq!(d.disc, base);
        assert_eq!(d.residual, 0.0);
    }

    #[test]
    fn fixed_center_on_twisted_frame() {
        let g = grid(256);
        let base_frame = FrameLoop::diagonal_powers(g, &[1, 0]).unwrap();
        let theta = StructuredFrame::from_r1(&base_frame).unwrap();
        let tw = twist::twist_structured(&theta, &[1, 2], 6.0).unwrap();
        let target = AttachmentTarget::quadratic(&tw.frame().unwrap(), 0.3).unwrap();
        let base = flat_base(g, 2);
        let fam = FixedCenterFamily::new(target, &base, &tw, 1e-11).unwrap();
        for free in [[0.005, -0.002, 0.001, 0.004], [-0.007, 0.0, 0.0, 0.007]] {
            let d = fam.disc(&free).unwrap();
            let shift = diff_norm(d.disc.center_value(), fam.center());
            assert!(shift < CENTER_TOL);
            assert!(d.f.max_abs() > 0.0);
            assert!(conjugation::negative_spectrum_mass(d.disc.boundary()) < 1e-9);
        }
    }

    #[test]
    fn parameter_count_law_on_linear_targets() {
        let g = grid(128);
        let base = flat_base(g, 2);
        let r1 = FrameLoop::diagonal_powers(g, &[1, 0]).unwrap();
        let mut cases = vec![flat_structured(g, 2), StructuredFrame::from_r1(&r1).unwrap()];
        let id = FrameLoop::identity(g, 2);
        cases.push(StructuredFrame::new(id.columns(), vec![0, 0]).unwrap());
        for s in cases {
            let target = AttachmentTarget::linear(&s.frame().unwrap()).unwrap();
            let want = param_space_dim(&s.indices()).unwrap();
            assert_eq!(parameter_rank(&target, &base, &s, SOLVER_TOL).unwrap(), want);
        }
    }

    #[test]
    fn constant_theta_has_cubic_error() {
        // with Θ constant and a linear base disc the leading terms are exact up to ζ³
        let g = grid(256);
        let s = flat_structured(g, 2);
        let target = AttachmentTarget::linear(&s.frame().unwrap()).unwrap();
        let fam = FixedCenterFamily::new(target, &flat_base(g, 2), &s, SOLVER_TOL).unwrap();
        let r = derivative_check(&fam, 0.1, &[0.0, 1.0, 2.5]).unwrap();
        let ratio = r.get_f64("ratio").unwrap();
        assert!((ratio - 8.0).abs() < 0.1, "{ratio}");
        assert!(r.get_f64("error_rho").unwrap() < 1.1e-3);
    }

    #[test]
    fn foliation_rank_flat_and_degenerate() {
        let g = grid(256);
        let s = flat_structured(g, 2);
        let target = AttachmentTarget::linear(&s.frame().unwrap()).unwrap();
        let fam = FixedCenterFamily::new(target, &flat_base(g, 2), &s, SOLVER_TOL).unwrap();
        let angles: Vec<f64> = (0..16).map(|i| i as f64 * std::f64::consts::TAU / 16.0).collect();
        let r = foliation_rank(&fam, 0.05, &angles, None, RANK_TOL).unwrap();
        assert!(r.pass, "{r:?}");
        let mut slice = linalg::real_complement(&fam.rotation_direction().unwrap());
        let c0 = slice.column(0).into_owned();
        slice.set_column(1, &c0);
        let r = foliation_rank(&fam, 0.05, &angles, Some(slice), RANK_TOL).unwrap();
        assert!(!r.pass);
    }

    #[test]
    fn rank_report_cases() {
        let g = grid(128);
        let flat = GraphManifold::flat(1, 2).unwrap();
        let r = rank_report(&flat, 0.1, g, BishopOptions::default()).unwrap();
        assert_eq!(r.values["rank"], 0);
        let x = |i| Poly::var(4, i);
        // h = (|w|², Re w²)
        let h1 = x(0).mul(&x(0)).add(&x(1).mul(&x(1)));
        let h2 = x(0).mul(&x(0)).sub(&x(1).mul(&x(1)));
        let q = GraphManifold::new(1, 2, vec![h1, h2]).unwrap();
        let r = rank_report(&q, 0.1, g, BishopOptions::default()).unwrap();
        assert!(r.values["base_velocity"].is_array());
        assert!(r.values["rank"].as_u64().unwrap() <= 1);
    }

    #[test]
    fn r1_structured_frame_matches_indices() {
        let g = grid(256);
        let m = GraphManifold::flat(1, 1).unwrap();
        let sol = bishop::reference_disc(&m, 0.1, g, BishopOptions::default()).unwrap();
        let f = bishop::build_r1_frame(&m, &sol, BishopOptions::default()).unwrap();
        assert_eq!(partial_indices(&f).unwrap().partial, vec![2, 0]);
        let s = StructuredFrame::from_r1(&f).unwrap();
        let target = AttachmentTarget::linear(&f).unwrap();
        assert_eq!(parameter_rank(&target, &sol.disc, &s, SOLVER_TOL).unwrap(), 4);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn assembled_u_is_real(t in proptest::collection::vec(-1.0..1.0f64, 8)) {
            let g = grid(64);
            let p = DiscParameters::new(vec![4, 2], t).unwrap();
            for j in 0..2 {
                let u = poly_h(&p, j, g).unwrap().shift(-i64::from(p.kappas()[j] / 2));
                prop_assert!(u.max_imag() < 1e-10);
            }
        }

        #[test]
        fn linear_phi_is_zero(seed in 0u64..1000) {
            let g = grid(128);
            let frame = FrameLoop::diagonal_powers(g, &[2, 1, 0]).unwrap();
            let t = AttachmentTarget::linear(&frame).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = random_u(&mut rng, g, 3, 0.02);
            prop_assert!(solve_phi(&t, &u, SOLVER_TOL).unwrap().max_abs() < 1e-12);
        }
    }
}
