//! Generic CR graphs `x = h(w, y)` in `ℂ^m × ℂ^n`, the Bishop equation
//! `Y = T₁[h(W, Y)] + y₀` and the disc families built on it.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::boundary::{BoundaryFunction, BoundaryGrid};
use crate::conjugation::{self, ConjugationKind, HOLOMORPHY_TOL};
use crate::error::{Error, Result};
use crate::frames::FrameLoop;
use crate::poly::{Poly, Term};

/// Maximum total degree accepted for the defining polynomials.
pub const MAX_DEGREE: u32 = 6;

/// Generic CR manifold given as a graph over `(w, y)`.
///
/// Variables of each `h_j` are ordered `(Re w₁..Re w_m, Im w₁..Im w_m, y₁..y_n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphManifold {
    m: usize,
    n: usize,
    h: Vec<Poly>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct JsonTerm {
    coeff: f64,
    powers: Vec<u32>,
    #[serde(default)]
    component: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct JsonManifold {
    m: usize,
    n: usize,
    terms: Vec<JsonTerm>,
}

impl GraphManifold {
    pub fn new(m: usize, n: usize, h: Vec<Poly>) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(Error::InvalidManifold(format!("m = {m}, n = {n} must be positive")));
        }
        if h.len() != n {
            return Err(Error::InvalidManifold(format!("{} components for codimension {n}", h.len())));
        }
        for (j, p) in h.iter().enumerate() {
            if p.nvars() != 2 * m + n {
                return Err(Error::InvalidManifold(format!(
                    "component {j} has {} variables, expected {}",
                    p.nvars(),
                    2 * m + n
                )));
            }
            if p.degree() > MAX_DEGREE {
                return Err(Error::InvalidManifold(format!(
                    "component {j} has degree {} > {MAX_DEGREE}",
                    p.degree()
                )));
            }
            if let Some(o) = p.order() {
                if o < 2 {
                    return Err(Error::InvalidManifold(format!(
                        "component {j} has a term of degree {o}; h and dh must vanish at 0"
                    )));
                }
            }
        }
        Ok(Self { m, n, h })
    }

    /// `h ≡ 0`.
    pub fn flat(m: usize, n: usize) -> Result<Self> {
        Self::new(m, n, vec![Poly::zero(2 * m + n); n])
    }

    /// Every component equal to `|w₁|²`.
    pub fn quadric(m: usize, n: usize) -> Result<Self> {
        let nv = 2 * m + n;
        let q = Poly::var(nv, 0)
            .mul(&Poly::var(nv, 0))
            .add(&Poly::var(nv, m).mul(&Poly::var(nv, m)));
        Self::new(m, n, vec![q; n])
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Ambient complex dimension `m + n`.
    pub fn dim(&self) -> usize {
        self.m + self.n
    }

    pub fn components(&self) -> &[Poly] {
        &self.h
    }

    pub fn is_flat(&self) -> bool {
        self.h.iter().all(Poly::is_zero)
    }

    /// `h(w, y)` at one point.
    pub fn eval(&self, w: &[C64], y: &[f64]) -> Vec<f64> {
        let x = self.real_args(w, y);
        self.h.iter().map(|p| p.eval(&x)).collect()
    }

    fn real_args(&self, w: &[C64], y: &[f64]) -> Vec<f64> {
        let mut x = Vec::with_capacity(2 * self.m + self.n);
        x.extend(w.iter().map(|v| v.re));
        x.extend(w.iter().map(|v| v.im));
        x.extend_from_slice(y);
        x
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let j: JsonManifold = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_json_value(j)
    }

    pub fn from_value(v: &serde_json::Value) -> Result<Self> {
        let j: JsonManifold =
            serde_json::from_value(v.clone()).map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_json_value(j)
    }

    fn from_json_value(j: JsonManifold) -> Result<Self> {
        if j.m == 0 || j.n == 0 {
            return Err(Error::InvalidManifold(format!("m = {}, n = {} must be positive", j.m, j.n)));
        }
        let nv = 2 * j.m + j.n;
        let mut h = vec![Poly::zero(nv); j.n];
        for t in &j.terms {
            if t.component >= j.n {
                return Err(Error::InvalidManifold(format!("component {} out of range", t.component)));
            }
            let p = Poly::from_terms(
                nv,
                &[Term {
                    coeff: t.coeff,
                    powers: t.powers.clone(),
                }],
            )?;
            h[t.component] = h[t.component].add(&p);
        }
        Self::new(j.m, j.n, h)
    }

    pub fn to_json(&self) -> String {
        let terms = self
            .h
            .iter()
            .enumerate()
            .flat_map(|(component, p)| {
                p.terms().into_iter().map(move |t| JsonTerm {
                    coeff: t.coeff,
                    powers: t.powers,
                    component,
                })
            })
            .collect();
        serde_json::to_string(&JsonManifold {
            m: self.m,
            n: self.n,
            terms,
        })
        .expect("plain data serializes")
    }
}

/// Holomorphic map of the disc known through its boundary trace.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticDisc {
    boundary: BoundaryFunction,
    center_value: Vec<C64>,
}

impl AnalyticDisc {
    /// Wraps boundary data after checking every component for holomorphy.
    pub fn new(boundary: BoundaryFunction) -> Result<Self> {
        Self::with_tolerance(boundary, HOLOMORPHY_TOL)
    }

    pub fn with_tolerance(boundary: BoundaryFunction, tol: f64) -> Result<Self> {
        let mass = conjugation::negative_spectrum_mass_per_component(&boundary)
            .into_iter()
            .fold(0.0, f64::max);
        if mass >= tol {
            return Err(Error::NotHolomorphic { mass });
        }
        let center_value = conjugation::power_series(&boundary, C64::new(0.0, 0.0));
        Ok(Self {
            boundary,
            center_value,
        })
    }

    pub fn boundary(&self) -> &BoundaryFunction {
        &self.boundary
    }

    pub fn center_value(&self) -> &[C64] {
        &self.center_value
    }

    pub fn grid(&self) -> BoundaryGrid {
        self.boundary.grid()
    }

    pub fn dim(&self) -> usize {
        self.boundary.dim()
    }

    /// Value at an interior point.
    pub fn eval_inside(&self, zeta: C64) -> Vec<C64> {
        conjugation::power_series(&self.boundary, zeta)
    }

    /// First `m` components.
    pub fn w_part(&self, m: usize) -> BoundaryFunction {
        let parts: Vec<BoundaryFunction> = (0..m).map(|j| self.boundary.component(j)).collect();
        BoundaryFunction::stack(&parts.iter().collect::<Vec<_>>()).expect("same grid")
    }

    /// Imaginary parts of the last `n` components.
    pub fn y_part(&self, m: usize) -> Vec<Vec<f64>> {
        (m..self.dim())
            .map(|j| self.boundary.values(j).iter().map(|v| v.im).collect())
            .collect()
    }
}

/// Stopping rule of the fixed-point iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BishopOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for BishopOptions {
    fn default() -> Self {
        Self {
            tol: 1e-13,
            max_iter: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BishopSolution {
    pub disc: AnalyticDisc,
    pub iterations: usize,
    /// `sup |Y − T₁[h(W, Y)] − y₀|` of the returned `Y`.
    pub residual: f64,
    /// `y₀` the equation was solved with.
    pub y0: Vec<f64>,
}

impl BishopSolution {
    /// `max |X − h(W, Y)|` over the grid.
    pub fn attachment_residual(&self, manifold: &GraphManifold) -> f64 {
        attachment_residual(manifold, &self.disc)
    }
}

/// `max |Re z − h(w, Im z)|` over the boundary samples.
pub fn attachment_residual(manifold: &GraphManifold, disc: &AnalyticDisc) -> f64 {
    let (m, n) = (manifold.m, manifold.n);
    let b = disc.boundary();
    let mut worst: f64 = 0.0;
    for k in 0..b.len() {
        let s = b.sample(k);
        let y: Vec<f64> = s[m..].iter().map(|v| v.im).collect();
        let hx = manifold.eval(&s[..m], &y);
        for j in 0..n {
            worst = worst.max((s[m + j].re - hx[j]).abs());
        }
    }
    worst
}

fn h_on_grid(manifold: &GraphManifold, w: &BoundaryFunction, y: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let s = w.len();
    let mut out = vec![vec![0.0; s]; manifold.n];
    let mut wk = vec![C64::new(0.0, 0.0); manifold.m];
    let mut yk = vec![0.0; manifold.n];
    for k in 0..s {
        for (i, slot) in wk.iter_mut().enumerate() {
            *slot = w.values(i)[k];
        }
        for (i, slot) in yk.iter_mut().enumerate() {
            *slot = y[i][k];
        }
        for (j, v) in manifold.eval(&wk, &yk).into_iter().enumerate() {
            out[j][k] = v;
        }
    }
    out
}

fn conj_at_one(x: &[Vec<f64>], grid: BoundaryGrid) -> Result<Vec<Vec<f64>>> {
    let f = BoundaryFunction::from_real_components(x.to_vec(), grid)?;
    let t = conjugation::conjugate(&f, ConjugationKind::AtOne)?;
    Ok((0..t.dim())
        .map(|j| t.values(j).iter().map(|v| v.re).collect())
        .collect())
}

/// Solves `Y = T₁[h(W, Y)] + y₀` by Picard iteration started at `Y ≡ y₀`.
pub fn solve_bishop(
    manifold: &GraphManifold,
    w: &BoundaryFunction,
    y0: &[f64],
    opts: BishopOptions,
) -> Result<BishopSolution> {
    let start: Vec<Vec<f64>> = y0.iter().map(|&v| vec![v; w.len()]).collect();
    solve_bishop_from(manifold, w, y0, start, opts)
}

/// Same iteration from an explicit initial `Y`.
pub fn solve_bishop_from(
    manifold: &GraphManifold,
    w: &BoundaryFunction,
    y0: &[f64],
    start: Vec<Vec<f64>>,
    opts: BishopOptions,
) -> Result<BishopSolution> {
    let (m, n) = (manifold.m, manifold.n);
    if w.dim() != m {
        return Err(Error::DimensionMismatch(format!("W has {} components, m = {m}", w.dim())));
    }
    if y0.len() != n || start.len() != n {
        return Err(Error::DimensionMismatch(format!("y0 must have {n} entries")));
    }
    let wmass = conjugation::negative_spectrum_mass_per_component(w)
        .into_iter()
        .fold(0.0, f64::max);
    if wmass >= HOLOMORPHY_TOL {
        return Err(Error::NotHolomorphic { mass: wmass });
    }
    let grid = w.grid();
    let mut y = start;
    let mut prev = f64::INFINITY;
    let mut stalled = 0;
    let mut iterations = 0;
    loop {
        let hx = h_on_grid(manifold, w, &y);
        if hx.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonContraction {
                iterations: iterations + 1,
                residual: f64::INFINITY,
            });
        }
        let mut f = conj_at_one(&hx, grid)?;
        for (fj, &c) in f.iter_mut().zip(y0) {
            fj.iter_mut().for_each(|v| *v += c);
        }
        let residual = y
            .iter()
            .zip(&f)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(p, q)| (p - q).abs()))
            .fold(0.0, f64::max);
        iterations += 1;
        if !residual.is_finite() {
            return Err(Error::NonContraction {
                iterations,
                residual,
            });
        }
        if residual < opts.tol {
            let x = h_on_grid(manifold, w, &y);
            let mut comps: Vec<Vec<C64>> = (0..m).map(|i| w.values(i).to_vec()).collect();
            for j in 0..n {
                comps.push(x[j].iter().zip(&y[j]).map(|(a, b)| C64::new(*a, *b)).collect());
            }
            let boundary = BoundaryFunction::from_components(comps, grid)?;
            let disc = AnalyticDisc::new(boundary)?;
            return Ok(BishopSolution {
                disc,
                iterations,
                residual,
                y0: y0.to_vec(),
            });
        }
        if iterations >= opts.max_iter {
            return Err(Error::MaxIterations {
                max_iter: opts.max_iter,
                residual,
            });
        }
        if residual >= 0.9 * prev {
            stalled += 1;
            if stalled >= 10 {
                return Err(Error::NonContraction {
                    iterations,
                    residual,
                });
            }
        } else {
            stalled = 0;
        }
        prev = residual;
        y = f;
    }
}

/// `W = (ρ₀ − ρ₀ζ, 0, …, 0)` on the given grid.
pub fn reference_w(m: usize, rho0: f64, grid: BoundaryGrid) -> BoundaryFunction {
    let mut co = vec![vec![C64::new(0.0, 0.0); grid.size()]; m];
    co[0][0] = C64::new(rho0, 0.0);
    co[0][1] = C64::new(-rho0, 0.0);
    BoundaryFunction::from_coeffs(co, grid).expect("finite")
}

/// Disc with `W = (ρ₀ − ρ₀ζ, 0, …, 0)` and `y₀ = 0`.
pub fn reference_disc(
    manifold: &GraphManifold,
    rho0: f64,
    grid: BoundaryGrid,
    opts: BishopOptions,
) -> Result<BishopSolution> {
    if !(rho0 > 0.0 && rho0.is_finite()) {
        return Err(Error::InvalidManifold(format!("rho0 = {rho0} must be positive")));
    }
    let w = reference_w(manifold.m, rho0, grid);
    let w1 = w.values(0);
    if w1[0].norm() > 1e-12 {
        return Err(Error::InvalidManifold("W₁(1) ≠ 0".into()));
    }
    if w1[1..].iter().any(|v| v.re <= 0.0) {
        return Err(Error::InvalidManifold("Re W₁ must be positive off ζ = 1".into()));
    }
    solve_bishop(manifold, &w, &vec![0.0; manifold.n], opts)
}

/// Solves the Bishop equation with `w`-shifts `(0, u₂, …, u_m)` and `y₀ + y`.
///
/// `u_star` packs `(Re u₂, Im u₂, Re u₃, …)`.
pub fn perturbed_disc(
    manifold: &GraphManifold,
    base_w: &BoundaryFunction,
    u_star: &[f64],
    y: &[f64],
    y0: &[f64],
    opts: BishopOptions,
) -> Result<BishopSolution> {
    let (m, n) = (manifold.m, manifold.n);
    if u_star.len() != 2 * (m - 1) || y.len() != n || y0.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "u* needs {} entries and y, y0 need {n}",
            2 * (m - 1)
        )));
    }
    let w = if u_star.iter().all(|&v| v == 0.0) {
        base_w.clone()
    } else {
        let mut shift = vec![C64::new(0.0, 0.0); m];
        for k in 1..m {
            shift[k] = C64::new(u_star[2 * (k - 1)], u_star[2 * (k - 1) + 1]);
        }
        base_w.add(&BoundaryFunction::constant(base_w.grid(), &shift))?
    };
    let yy: Vec<f64> = y0.iter().zip(y).map(|(a, b)| a + b).collect();
    solve_bishop(manifold, &w, &yy, opts)
}

/// Finite-difference step for parameter derivatives.
pub const FD_STEP: f64 = 1e-4;
/// Agreement required between the step and half-step differences.
pub const FD_CONSISTENCY: f64 = 1e-6;

/// Central difference with one Richardson step-halving.
pub(crate) fn richardson(
    f: impl Fn(f64) -> Result<BoundaryFunction>,
    step: f64,
    what: &str,
) -> Result<BoundaryFunction> {
    let central = |h: f64| -> Result<BoundaryFunction> {
        let p = f(h)?;
        let q = f(-h)?;
        Ok(p.sub(&q)?.scale(C64::new(0.5 / h, 0.0)))
    };
    let d1 = central(step)?;
    let d2 = central(step / 2.0)?;
    let gap = d1.sub(&d2)?.max_abs();
    let scale = d2.max_abs().max(1.0);
    if gap > FD_CONSISTENCY * scale {
        return Err(Error::InconsistentDerivative(format!(
            "{what}: step and half-step differ by {gap:e}"
        )));
    }
    d2.scale(C64::new(4.0 / 3.0, 0.0))
        .sub(&d1.scale(C64::new(1.0 / 3.0, 0.0)))
}

/// Frame of the maximally real manifold swept by the perturbed family.
///
/// Column 1 is `∂A/∂θ`; then the derivatives along `Re u_k`, `k = 2..m`; then
/// along `y_j`. `base` must come from a Bishop solve over `manifold`.
pub fn build_r1_frame(manifold: &GraphManifold, base: &BishopSolution, opts: BishopOptions) -> Result<FrameLoop> {
    let (m, n) = (manifold.m, manifold.n);
    let disc = &base.disc;
    let w = disc.w_part(m);
    let y0 = &base.y0;
    let mut columns = vec![disc.boundary().derivative()];
    for k in 1..m {
        let col = richardson(
            |h| {
                let mut u = vec![0.0; 2 * (m - 1)];
                u[2 * (k - 1)] = h;
                Ok(perturbed_disc(manifold, &w, &u, &vec![0.0; n], y0, opts)?
                    .disc
                    .boundary()
                    .clone())
            },
            FD_STEP,
            &format!("w-shift {}", k + 1),
        )?;
        columns.push(col);
    }
    for j in 0..n {
        let col = richardson(
            |h| {
                let mut y = vec![0.0; n];
                y[j] = h;
                Ok(perturbed_disc(manifold, &w, &vec![0.0; 2 * (m - 1)], &y, y0, opts)?
                    .disc
                    .boundary()
                    .clone())
            },
            FD_STEP,
            &format!("y-shift {}", j + 1),
        )?;
        columns.push(col);
    }
    FrameLoop::from_columns(&columns)
}
