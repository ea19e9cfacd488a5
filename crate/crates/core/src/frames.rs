//! Loops of maximally real frames and their partial indices.
//!
//! Indices are read off from dimensions of holomorphic sections rather than
//! from an explicit factorization. For a loop `L(ζ)` with partial indices
//! `κ_j`, the holomorphic maps `u` with `e^{isθ/2} u(ζ) ∈ L(ζ)` form a real
//! space of dimension `D_s = Σ_j max(κ_j − s + 1, 0)` for every integer `s`,
//! so `D_s − D_{s+1}` counts the indices `≥ s`.

use std::f64::consts::PI;

use faer::Mat;
use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::boundary::{self, BoundaryFunction, BoundaryGrid};
use crate::conjugation;
use crate::error::{Error, Result};
use crate::linalg;

/// Relative singular-value cutoff defining numerical rank.
pub const RANK_CUTOFF: f64 = 1e-8;
/// Singular values must stay below the cutoff or above `RANK_CUTOFF · SPECTRAL_GAP`.
pub const SPECTRAL_GAP: f64 = 1e4;
/// Smallest singular value tolerated for a column-normalized frame matrix.
pub const MIN_FRAME_SIGMA: f64 = 1e-8;

const DEGREE_LADDER: [usize; 4] = [24, 48, 96, 144];
const COMPRESSION_LADDER: [f64; 4] = [1.0, 2.0, 4.0, 8.0];
/// Relative spectral energy treated as zero when measuring bandwidth.
const BANDWIDTH_ENERGY: f64 = 1e-22;
/// Cutoff on singular values of truncated orthonormal null bases.
const FILTRATION_CUTOFF: f64 = 1e-6;

/// A loop `ζ ↦ G(ζ) ∈ GL(N, ℂ)` sampled on a grid; columns are a real basis of `L(ζ)`.
#[derive(Debug, Clone)]
pub struct FrameLoop {
    grid: BoundaryGrid,
    n: usize,
    matrices: Vec<DMatrix<C64>>,
    coeffs: Vec<Vec<C64>>,
    min_sigma: f64,
    min_sigma_angle: f64,
}

impl PartialEq for FrameLoop {
    fn eq(&self, other: &Self) -> bool {
        self.grid == other.grid && self.n == other.n && self.matrices == other.matrices
    }
}

fn normalized_columns(g: &DMatrix<C64>) -> DMatrix<C64> {
    let mut out = g.clone();
    for mut c in out.column_iter_mut() {
        let nrm = c.norm();
        if nrm > 0.0 {
            c /= C64::new(nrm, 0.0);
        }
    }
    out
}

impl FrameLoop {
    /// Checks every sample for invertibility; columns are normalized first since
    /// positive rescaling does not change their real span.
    pub fn new(grid: BoundaryGrid, matrices: Vec<DMatrix<C64>>) -> Result<Self> {
        if matrices.len() != grid.size() {
            return Err(Error::LengthMismatch {
                expected: grid.size(),
                got: matrices.len(),
            });
        }
        let n = matrices[0].nrows();
        if n == 0 {
            return Err(Error::DimensionMismatch("empty frame".into()));
        }
        let mut min_sigma = f64::INFINITY;
        let mut min_sigma_angle = 0.0;
        for (k, g) in matrices.iter().enumerate() {
            if g.nrows() != n || g.ncols() != n {
                return Err(Error::DimensionMismatch(format!(
                    "sample {k} is {}x{}, expected {n}x{n}",
                    g.nrows(),
                    g.ncols()
                )));
            }
            if let Some(index) = g.iter().position(|v| !v.re.is_finite() || !v.im.is_finite()) {
                return Err(Error::NonFinite { index: k * n * n + index });
            }
            let s = *linalg::complex_singular_values(&normalized_columns(g))
                .last()
                .expect("nonempty");
            if s < min_sigma {
                min_sigma = s;
                min_sigma_angle = grid.theta(k);
            }
        }
        if min_sigma <= MIN_FRAME_SIGMA {
            return Err(Error::SingularFrame {
                angle: min_sigma_angle,
                sigma_min: min_sigma,
            });
        }
        let mut coeffs = Vec::with_capacity(n * n);
        for r in 0..n {
            for c in 0..n {
                let entry: Vec<C64> = matrices.iter().map(|g| g[(r, c)]).collect();
                coeffs.push(boundary::forward(&entry));
            }
        }
        Ok(Self {
            grid,
            n,
            matrices,
            coeffs,
            min_sigma,
            min_sigma_angle,
        })
    }

    /// Frame whose column `j` is the boundary function `columns[j]`.
    pub fn from_columns(columns: &[BoundaryFunction]) -> Result<Self> {
        let n = columns.len();
        let first = columns.first().ok_or_else(|| Error::DimensionMismatch("no columns".into()))?;
        let grid = first.grid();
        for c in columns {
            if c.dim() != n || c.grid() != grid {
                return Err(Error::DimensionMismatch(format!(
                    "columns must be {n}-vectors on a common grid"
                )));
            }
        }
        let matrices = (0..grid.size())
            .map(|k| DMatrix::from_fn(n, n, |r, c| columns[c].values(r)[k]))
            .collect();
        Self::new(grid, matrices)
    }

    pub fn from_fn(grid: BoundaryGrid, f: impl Fn(C64) -> DMatrix<C64>) -> Result<Self> {
        Self::new(grid, grid.zetas().into_iter().map(f).collect())
    }

    /// The constant identity loop.
    pub fn identity(grid: BoundaryGrid, n: usize) -> Self {
        Self::new(grid, vec![DMatrix::identity(n, n); grid.size()]).expect("identity is invertible")
    }

    /// `diag(ζ^{k_1}, …, ζ^{k_N})`.
    pub fn diagonal_powers(grid: BoundaryGrid, powers: &[i32]) -> Result<Self> {
        Self::from_fn(grid, |z| {
            DMatrix::from_fn(powers.len(), powers.len(), |r, c| {
                if r == c {
                    z.powi(powers[r])
                } else {
                    C64::new(0.0, 0.0)
                }
            })
        })
    }

    pub fn grid(&self) -> BoundaryGrid {
        self.grid
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn matrix(&self, k: usize) -> &DMatrix<C64> {
        &self.matrices[k]
    }

    pub fn matrices(&self) -> &[DMatrix<C64>] {
        &self.matrices
    }

    /// Smallest singular value of the column-normalized samples and where it occurs.
    pub fn min_singular_value(&self) -> (f64, f64) {
        (self.min_sigma, self.min_sigma_angle)
    }

    pub fn column(&self, j: usize) -> BoundaryFunction {
        let comps = (0..self.n)
            .map(|r| self.matrices.iter().map(|g| g[(r, j)]).collect())
            .collect();
        BoundaryFunction::from_components(comps, self.grid).expect("finite")
    }

    pub fn columns(&self) -> Vec<BoundaryFunction> {
        (0..self.n).map(|j| self.column(j)).collect()
    }

    /// Trigonometric interpolant of every entry at angle `θ`.
    pub fn eval(&self, theta: f64) -> DMatrix<C64> {
        let s = self.grid.size();
        let step = C64::from_polar(1.0, theta);
        let mut pows = vec![C64::new(1.0, 0.0); s / 2];
        for i in 1..s / 2 {
            pows[i] = pows[i - 1] * step;
        }
        let nyq = ((s / 2) as f64 * theta).cos();
        DMatrix::from_fn(self.n, self.n, |r, c| {
            let co = &self.coeffs[r * self.n + c];
            let mut acc = co[0] + co[s / 2] * nyq;
            for i in 1..s / 2 {
                acc += co[i] * pows[i] + co[s - i] * pows[i].conj();
            }
            acc
        })
    }

    /// `det G` as a scalar boundary function.
    pub fn det(&self) -> BoundaryFunction {
        let vals = self.matrices.iter().map(|g| g.determinant()).collect();
        BoundaryFunction::scalar(vals, self.grid).expect("finite")
    }

    pub fn permute_columns(&self, perm: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.n];
        if perm.len() != self.n || perm.iter().any(|&p| p >= self.n || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::DimensionMismatch("not a permutation".into()));
        }
        let m = self
            .matrices
            .iter()
            .map(|g| DMatrix::from_fn(self.n, self.n, |r, c| g[(r, perm[c])]))
            .collect();
        Self::new(self.grid, m)
    }

    /// `G(ζ)·R` for a fixed real matrix `R`.
    pub fn right_mul_real(&self, r: &DMatrix<f64>) -> Result<Self> {
        if r.nrows() != self.n || r.ncols() != self.n {
            return Err(Error::DimensionMismatch("gauge must be N×N".into()));
        }
        let rc = r.map(|v| C64::new(v, 0.0));
        Self::new(self.grid, self.matrices.iter().map(|g| g * &rc).collect())
    }

    /// `G(ζ)·Q` for any fixed complex matrix, acting on the left as `P·G`.
    pub fn left_mul(&self, p: impl Fn(C64) -> DMatrix<C64>) -> Result<Self> {
        let m = self
            .matrices
            .iter()
            .enumerate()
            .map(|(k, g)| p(self.grid.zeta(k)) * g)
            .collect();
        Self::new(self.grid, m)
    }

    /// `ζ^k·G(ζ)`.
    pub fn shift(&self, k: i32) -> Self {
        let m = self
            .matrices
            .iter()
            .enumerate()
            .map(|(i, g)| g * self.grid.zeta(i).powi(k))
            .collect();
        Self::new(self.grid, m).expect("shift keeps invertibility")
    }

    /// Multiplies column `j` by the scalar function `factors[j]`.
    pub fn scale_columns(&self, factors: &[BoundaryFunction]) -> Result<Self> {
        if factors.len() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "{} factors for {} columns",
                factors.len(),
                self.n
            )));
        }
        if factors.iter().any(|f| f.grid() != self.grid) {
            return Err(Error::DimensionMismatch("factor grid differs from frame grid".into()));
        }
        let m = self
            .matrices
            .iter()
            .enumerate()
            .map(|(k, g)| {
                let mut out = g.clone();
                for (j, mut col) in out.column_iter_mut().enumerate() {
                    col *= factors[j].values(0)[k];
                }
                out
            })
            .collect();
        Self::new(self.grid, m)
    }

    /// Re-samples every entry spectrally.
    pub fn resample(&self, grid: BoundaryGrid) -> Result<Self> {
        if grid == self.grid {
            return Ok(self.clone());
        }
        let cols: Vec<BoundaryFunction> = self.columns().iter().map(|c| c.resample(grid)).collect();
        Self::from_columns(&cols)
    }

    pub fn to_json(&self) -> String {
        let matrices: Vec<Vec<[f64; 2]>> = self
            .matrices
            .iter()
            .map(|g| {
                let mut row_major = Vec::with_capacity(self.n * self.n);
                for r in 0..self.n {
                    for c in 0..self.n {
                        row_major.push([g[(r, c)].re, g[(r, c)].im]);
                    }
                }
                row_major
            })
            .collect();
        serde_json::to_string(&FrameJson {
            grid_size: self.grid.size(),
            n: self.n,
            matrices,
        })
        .expect("plain data serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let j: FrameJson = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let grid = BoundaryGrid::new(j.grid_size)?;
        let mut m = Vec::with_capacity(j.matrices.len());
        for entries in &j.matrices {
            if entries.len() != j.n * j.n {
                return Err(Error::Parse(format!("expected {} entries per sample", j.n * j.n)));
            }
            m.push(DMatrix::from_fn(j.n, j.n, |r, c| {
                let [re, im] = entries[r * j.n + c];
                C64::new(re, im)
            }));
        }
        Self::new(grid, m)
    }
}

#[derive(Serialize, Deserialize)]
struct FrameJson {
    grid_size: usize,
    n: usize,
    matrices: Vec<Vec<[f64; 2]>>,
}

/// `B(ζ) = G(ζ)·conj(G(ζ))⁻¹` at every sample.
pub fn b_loop(frame: &FrameLoop) -> Result<Vec<DMatrix<C64>>> {
    frame
        .matrices
        .iter()
        .enumerate()
        .map(|(k, g)| {
            let gb = g.map(|v| v.conj());
            let s = linalg::complex_singular_values(&normalized_columns(&gb));
            let smin = *s.last().expect("nonempty");
            if smin <= MIN_FRAME_SIGMA {
                return Err(Error::SingularFrame {
                    angle: frame.grid.theta(k),
                    sigma_min: smin,
                });
            }
            let inv = gb.try_inverse().ok_or(Error::SingularFrame {
                angle: frame.grid.theta(k),
                sigma_min: smin,
            })?;
            Ok(g * inv)
        })
        .collect()
}

/// Same loop of subspaces with unit columns; off-grid interpolation of the raw
/// frame loses relative accuracy where a column is small.
fn unit_columns(frame: &FrameLoop) -> Result<FrameLoop> {
    FrameLoop::new(frame.grid, frame.matrices.iter().map(normalized_columns).collect())
}

/// Twice the winding number of `det G`.
pub fn total_index(frame: &FrameLoop) -> Result<i64> {
    // dividing by the column norms is a positive rescaling and keeps the winding
    let vals = frame
        .matrices
        .iter()
        .map(|g| normalized_columns(g).determinant())
        .collect();
    let d = BoundaryFunction::scalar(vals, frame.grid)?;
    Ok(2 * conjugation::winding_number(&d, 1e-12)?)
}

/// Partial indices with the evidence used to certify them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexProfile {
    /// Sorted in nonincreasing order.
    pub partial: Vec<i64>,
    pub total: i64,
    pub certificate: IndexCertificate,
}

/// Numerical evidence behind an [`IndexProfile`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct IndexCertificate {
    /// Polynomial degree of the section ansatz.
    pub degree: usize,
    /// Boundary samples used for the constraints.
    pub samples: usize,
    /// Compression factor of the disc automorphism used for conditioning.
    pub compression: f64,
    /// Lowest shift scanned.
    pub start_shift: i64,
    /// Section dimensions `D_s` for `s = start_shift, start_shift + 1, …`.
    pub dims: Vec<usize>,
    /// Largest relative singular value counted as null.
    pub max_null_sigma: f64,
    /// Smallest relative singular value counted as live.
    pub min_live_sigma: f64,
}

impl IndexProfile {
    pub fn new(mut partial: Vec<i64>) -> Self {
        partial.sort_by(|a, b| b.cmp(a));
        let total = partial.iter().sum();
        Self {
            partial,
            total,
            certificate: IndexCertificate::default(),
        }
    }
}

/// Real-span projector of the realified columns.
fn projector(g: &DMatrix<C64>) -> DMatrix<f64> {
    let (q, _) = linalg::split_span(g);
    &q * q.transpose()
}

/// Disc automorphism `ξ ↦ (ξ + a)/(1 + āξ)` used to spread steep parts of a loop.
#[derive(Debug, Clone, Copy)]
struct Conditioning {
    a: C64,
    compression: f64,
    bandwidth: usize,
}

impl Conditioning {
    fn map_angle(&self, theta: f64) -> f64 {
        let xi = C64::from_polar(1.0, theta);
        ((xi + self.a) / (C64::new(1.0, 0.0) + self.a.conj() * xi)).arg()
    }
}

fn bandwidth_of(frame: &FrameLoop, a: C64, samples: usize) -> usize {
    let grid = BoundaryGrid::new(samples).expect("power of two");
    let c = Conditioning {
        a,
        compression: 1.0,
        bandwidth: 0,
    };
    let n2 = 2 * frame.n;
    let mut entries = vec![vec![C64::new(0.0, 0.0); samples]; n2 * (n2 + 1) / 2];
    for k in 0..samples {
        let p = projector(&frame.eval(c.map_angle(grid.theta(k))));
        let mut idx = 0;
        for r in 0..n2 {
            for col in r..n2 {
                entries[idx][k] = C64::new(p[(r, col)], 0.0);
                idx += 1;
            }
        }
    }
    let mut energy = vec![0.0; samples / 2 + 1];
    for e in &entries {
        let co = boundary::forward(e);
        for (slot, v) in co.iter().enumerate() {
            energy[grid.freq(slot).unsigned_abs() as usize] += v.norm_sqr();
        }
    }
    let total: f64 = energy.iter().sum();
    let mut tail = total;
    for (n, e) in energy.iter().enumerate() {
        tail -= e;
        if tail <= BANDWIDTH_ENERGY * total {
            return n;
        }
    }
    samples / 2
}

/// Picks the compression factor that minimizes the bandwidth of the reparametrized loop.
fn choose_conditioning(frame: &FrameLoop) -> Conditioning {
    let s = frame.grid.size();
    // steepest point of the gauge-invariant projector loop
    let proj: Vec<DMatrix<f64>> = frame.matrices.iter().map(projector).collect();
    let (mut best_k, mut best_d) = (0, -1.0);
    for k in 0..s {
        let d = (&proj[(k + 1) % s] - &proj[k]).norm();
        if d > best_d {
            best_d = d;
            best_k = k;
        }
    }
    let p = C64::from_polar(1.0, frame.grid.theta(best_k) + frame.grid.step() / 2.0);
    let mut trial = 1024.min(s.max(256));
    loop {
        let mut best: Option<Conditioning> = None;
        for &kf in &COMPRESSION_LADDER {
            let a = p * ((kf - 1.0) / (kf + 1.0));
            let bw = bandwidth_of(frame, a, trial);
            if best.is_none_or(|b| bw < b.bandwidth) {
                best = Some(Conditioning {
                    a,
                    compression: kf,
                    bandwidth: bw,
                });
            }
        }
        let best = best.expect("ladder is nonempty");
        if 5 * best.bandwidth < 2 * trial || trial >= 8192 {
            return best;
        }
        trial *= 2;
    }
}

/// Sampled constraints `P_{L^⊥}(e^{isθ/2} u(ξ_k)) = 0` for `u ∘ ψ`.
struct SectionSystem {
    n: usize,
    thetas: Vec<f64>,
    perp: Vec<DMatrix<f64>>,
}

struct NullSpace {
    dim: usize,
    max_null: f64,
    min_live: f64,
    basis: Mat<f64>,
}

impl SectionSystem {
    fn new(frame: &FrameLoop, cond: &Conditioning, degree: usize) -> Self {
        let need = 2 * (degree + cond.bandwidth + 16) + 1;
        let samples = need.next_power_of_two().max(64);
        let grid = BoundaryGrid::new(samples).expect("power of two");
        let identity = cond.a == C64::new(0.0, 0.0) && samples == frame.grid.size();
        let perp = (0..samples)
            .map(|k| {
                let g = if identity {
                    frame.matrices[k].clone()
                } else {
                    frame.eval(cond.map_angle(grid.theta(k)))
                };
                linalg::split_span(&g).1
            })
            .collect();
        Self {
            n: frame.n,
            thetas: grid.thetas(),
            perp,
        }
    }

    fn samples(&self) -> usize {
        self.thetas.len()
    }

    fn matrix(&self, shift: i64, degree: usize) -> Mat<f64> {
        let n = self.n;
        let cols = 2 * n * (degree + 1);
        let mut a = Mat::<f64>::zeros(self.samples() * n, cols);
        for (k, &th) in self.thetas.iter().enumerate() {
            let q = &self.perp[k];
            for d in 0..=degree {
                let alpha = (d as f64 + shift as f64 / 2.0) * th;
                let (sn, cs) = alpha.sin_cos();
                for i in 0..n {
                    let row = k * n + i;
                    for c in 0..n {
                        let (qr, qi) = (q[(c, i)], q[(n + c, i)]);
                        let col = (d * n + c) * 2;
                        a[(row, col)] = qr * cs + qi * sn;
                        a[(row, col + 1)] = -qr * sn + qi * cs;
                    }
                }
            }
        }
        a
    }

    fn nullspace(&self, shift: i64, degree: usize) -> NullSpace {
        let a = self.matrix(shift, degree);
        let (s, v) = linalg::right_svd(&a);
        let smax = s[0].max(f64::MIN_POSITIVE);
        let dim = s.iter().filter(|&&x| x < RANK_CUTOFF * smax).count();
        let cols = s.len();
        let max_null = if dim > 0 { s[cols - dim] / smax } else { 0.0 };
        let min_live = if dim < cols { s[cols - dim - 1] / smax } else { 0.0 };
        let basis = v.get(.., cols - dim..).to_owned();
        NullSpace {
            dim,
            max_null,
            min_live,
            basis,
        }
    }
}

fn certified(ns: &NullSpace) -> bool {
    ns.min_live >= RANK_CUTOFF * SPECTRAL_GAP
}

/// Dimensions `D_{s+2j}`, `j = 0, 1, …`, from one null basis at shift `s`.
///
/// Sections at shift `s + 2j` are those at shift `s` divisible by `ζ^j`, i.e. with
/// the first `j` coefficient blocks zero.
fn filtration(ns: &NullSpace, n: usize, max_steps: usize) -> Vec<usize> {
    let mut dims = vec![ns.dim];
    for j in 1..=max_steps {
        if *dims.last().expect("nonempty") == 0 {
            break;
        }
        let rows = (2 * n * j).min(ns.basis.nrows());
        let block = DMatrix::from_fn(rows, ns.dim, |r, c| ns.basis[(r, c)]);
        let rank = linalg::real_singular_values(&block)
            .iter()
            .filter(|&&x| x > FILTRATION_CUTOFF)
            .count();
        dims.push(ns.dim - rank);
    }
    dims
}

/// Real dimension of polynomial sections `u = Σ_{n ≤ degree} c_n ζ^n` with `u(ζ) ∈ L(ζ)`.
///
/// The loop is first composed with a disc automorphism chosen to flatten its
/// steepest part; section dimensions are invariant under this change of variable.
pub fn holomorphic_section_dim(frame: &FrameLoop, degree: usize) -> Result<usize> {
    if degree == 0 {
        return Err(Error::UnstableDimension("degree must be at least 1".into()));
    }
    let frame = &unit_columns(frame)?;
    let cond = choose_conditioning(frame);
    let sys = SectionSystem::new(frame, &cond, degree + 2);
    let lo = sys.nullspace(0, degree);
    let hi = sys.nullspace(0, degree + 2);
    for ns in [&lo, &hi] {
        if !certified(ns) {
            return Err(Error::UnstableDimension(format!(
                "no spectral gap: live singular value {:e} near the cutoff",
                ns.min_live
            )));
        }
    }
    if lo.dim != hi.dim {
        return Err(Error::UnstableDimension(format!(
            "dimension {} at degree {degree} but {} at degree {}",
            lo.dim,
            hi.dim,
            degree + 2
        )));
    }
    Ok(lo.dim)
}

fn indices_from_dims(start: i64, dims: &[usize], n: usize) -> Option<Vec<i64>> {
    // counts[i] = #{κ ≥ start + i}
    let counts: Vec<i64> = dims.windows(2).map(|w| w[0] as i64 - w[1] as i64).collect();
    if counts.first() != Some(&(n as i64)) || *dims.last()? != 0 {
        return None;
    }
    if counts.windows(2).any(|w| w[1] > w[0]) || counts.iter().any(|&c| c < 0) {
        return None;
    }
    let mut out = Vec::with_capacity(n);
    for (i, w) in counts.windows(2).enumerate() {
        for _ in 0..(w[0] - w[1]) {
            out.push(start + i as i64);
        }
    }
    let last = *counts.last()?;
    for _ in 0..last {
        out.push(start + counts.len() as i64 - 1);
    }
    (out.len() == n).then_some(out)
}

/// Partial indices by scanning section dimensions over shifts.
pub fn partial_indices(frame: &FrameLoop) -> Result<IndexProfile> {
    let total = total_index(frame)?;
    let n = frame.n;
    let frame = &unit_columns(frame)?;
    let cond = choose_conditioning(frame);
    let mut last_err = Error::UnstableDimension("no degree in the ladder produced a certified scan".into());
    for &degree in &DEGREE_LADDER {
        let sys = SectionSystem::new(frame, &cond, degree);
        let mut start = 0i64;
        let scan = loop {
            let even = sys.nullspace(start, degree);
            let odd = sys.nullspace(start + 1, degree);
            if !certified(&even) || !certified(&odd) {
                break None;
            }
            if even.dim < odd.dim || even.dim - odd.dim > n {
                break None;
            }
            if even.dim - odd.dim == n {
                break Some((even, odd));
            }
            start -= 2;
            if -start > degree as i64 / 2 {
                break None;
            }
        };
        let Some((even, odd)) = scan else {
            continue;
        };
        let steps = degree / 2;
        let de = filtration(&even, n, steps);
        let dodd = filtration(&odd, n, steps);
        let mut dims = Vec::with_capacity(de.len() + dodd.len());
        for i in 0..de.len().max(dodd.len()) {
            dims.push(*de.get(i).unwrap_or(&0));
            dims.push(*dodd.get(i).unwrap_or(&0));
        }
        while dims.len() > 2 && dims[dims.len() - 1] == 0 && dims[dims.len() - 2] == 0 {
            dims.pop();
        }
        let Some(partial) = indices_from_dims(start, &dims, n) else {
            last_err = Error::UnstableDimension(format!("non-monotone section dimensions {dims:?}"));
            continue;
        };
        // the sections at the start shift must fit well inside the ansatz degree
        let top = partial.iter().max().copied().unwrap_or(0);
        if (top - start) as usize > degree / 2 {
            continue;
        }
        let sum: i64 = partial.iter().sum();
        if sum != total {
            last_err = Error::IndexMismatch { sum, total };
            continue;
        }
        let mut profile = IndexProfile::new(partial);
        profile.certificate = IndexCertificate {
            degree,
            samples: sys.samples(),
            compression: cond.compression,
            start_shift: start,
            dims,
            max_null_sigma: even.max_null.max(odd.max_null),
            min_live_sigma: even.min_live.min(odd.min_live),
        };
        return Ok(profile);
    }
    Err(last_err)
}

/// Frame in the structured form `X_j = ζ^{m_j} Θ_j` with `Θ` holomorphic on the disc,
/// so that `B = Θ·diag(ζ^{2m_j})·conj(Θ)⁻¹` and the partial indices are `2m_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredFrame {
    theta: Vec<BoundaryFunction>,
    powers: Vec<u32>,
}

impl StructuredFrame {
    pub fn new(theta: Vec<BoundaryFunction>, powers: Vec<u32>) -> Result<Self> {
        let n = theta.len();
        if n == 0 || powers.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{n} columns but {} powers",
                powers.len()
            )));
        }
        let grid = theta[0].grid();
        for (j, t) in theta.iter().enumerate() {
            if t.dim() != n || t.grid() != grid {
                return Err(Error::DimensionMismatch(format!("column {j} has the wrong shape")));
            }
            let mass = conjugation::negative_spectrum_mass(t);
            if mass >= 1e-9 {
                return Err(Error::NotHolomorphic { mass });
            }
        }
        Ok(Self { theta, powers })
    }

    /// Reads `Θ₁ = G₁/ζ`, `Θ_k = G_k` off a frame built as `(ζΘ₁, Θ₂, …, Θ_N)`.
    pub fn from_r1(frame: &FrameLoop) -> Result<Self> {
        let mut cols = frame.columns();
        cols[0] = cols[0].shift(-1);
        let mut powers = vec![0; frame.n];
        powers[0] = 1;
        Self::new(cols, powers)
    }

    pub fn n(&self) -> usize {
        self.theta.len()
    }

    pub fn grid(&self) -> BoundaryGrid {
        self.theta[0].grid()
    }

    pub fn theta(&self) -> &[BoundaryFunction] {
        &self.theta
    }

    pub fn powers(&self) -> &[u32] {
        &self.powers
    }

    /// Partial indices `2m_j` implied by the structure.
    pub fn indices(&self) -> IndexProfile {
        IndexProfile::new(self.powers.iter().map(|&m| 2 * i64::from(m)).collect())
    }

    /// `Θ(0)` from the holomorphic extension of the columns.
    pub fn theta_at_center(&self) -> DMatrix<C64> {
        let n = self.n();
        let cols: Vec<Vec<C64>> = self
            .theta
            .iter()
            .map(|t| conjugation::power_series(t, C64::new(0.0, 0.0)))
            .collect();
        DMatrix::from_fn(n, n, |r, c| cols[c][r])
    }

    /// `Θ(ζ)` at an interior point.
    pub fn theta_at(&self, zeta: C64) -> DMatrix<C64> {
        let n = self.n();
        let cols: Vec<Vec<C64>> = self
            .theta
            .iter()
            .map(|t| conjugation::power_series(t, zeta))
            .collect();
        DMatrix::from_fn(n, n, |r, c| cols[c][r])
    }

    /// The loop `X_j = ζ^{m_j}Θ_j`.
    pub fn frame(&self) -> Result<FrameLoop> {
        let cols: Vec<BoundaryFunction> = self
            .theta
            .iter()
            .zip(&self.powers)
            .map(|(t, &m)| {
                let grid = t.grid();
                let z = BoundaryFunction::from_fn(grid, self.n(), |z| vec![z.powi(m as i32); self.n()])
                    .expect("finite");
                t.mul(&z).expect("same shape")
            })
            .collect();
        FrameLoop::from_columns(&cols)
    }

    /// Multiplies `Θ_j` by holomorphic scalars `h_j` and raises `m_j` by `extra_j`.
    pub fn twisted(&self, factors: &[BoundaryFunction], extra: &[u32]) -> Result<Self> {
        let n = self.n();
        if factors.len() != n || extra.len() != n {
            return Err(Error::DimensionMismatch("one factor and one power per column".into()));
        }
        let grid = factors
            .iter()
            .map(BoundaryFunction::grid)
            .chain(std::iter::once(self.grid()))
            .max_by_key(BoundaryGrid::size)
            .expect("nonempty");
        let mut theta = Vec::with_capacity(n);
        for j in 0..n {
            let t = self.theta[j].resample(grid);
            let f = factors[j].resample(grid);
            let fv = BoundaryFunction::stack(&vec![&f; n])?;
            theta.push(t.mul(&fv)?);
        }
        let powers = self.powers.iter().zip(extra).map(|(m, e)| m + e).collect();
        Self::new(theta, powers)
    }

    pub fn resample(&self, grid: BoundaryGrid) -> Self {
        Self {
            theta: self.theta.iter().map(|t| t.resample(grid)).collect(),
            powers: self.powers.clone(),
        }
    }
}

/// Angle of `ζ` in `[0, 2π)`.
pub fn canonical_angle(theta: f64) -> f64 {
    theta.rem_euclid(2.0 * PI)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(s: usize) -> BoundaryGrid {
        BoundaryGrid::new(s).unwrap()
    }

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn b_loop_examples() {
        let g = grid(32);
        let id = FrameLoop::identity(g, 2);
        for b in b_loop(&id).unwrap() {
            assert!((b - DMatrix::identity(2, 2)).norm() < 1e-15);
        }
        let z = FrameLoop::diagonal_powers(g, &[1]).unwrap();
        for (k, b) in b_loop(&z).unwrap().iter().enumerate() {
            assert!((b[(0, 0)] - g.zeta(k).powi(2)).norm() < 1e-14);
        }
        let d = FrameLoop::diagonal_powers(g, &[1, 0]).unwrap();
        for (k, b) in b_loop(&d).unwrap().iter().enumerate() {
            assert!((b[(0, 0)] - g.zeta(k).powi(2)).norm() < 1e-14);
            assert!((b[(1, 1)] - 1.0).norm() < 1e-14);
            assert!(b[(0, 1)].norm() < 1e-15 && b[(1, 0)].norm() < 1e-15);
        }
    }

    #[test]
    fn total_index_examples() {
        let g = grid(64);
        assert_eq!(total_index(&FrameLoop::identity(g, 3)).unwrap(), 0);
        assert_eq!(total_index(&FrameLoop::diagonal_powers(g, &[1, 0, 0]).unwrap()).unwrap(), 2);
    }

    #[test]
    fn singular_frame_reported() {
        let g = grid(16);
        let r = FrameLoop::from_fn(g, |z| {
            DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(1.0, 0.0), z, c(1.0, 0.0)])
        });
        assert!(matches!(r, Err(Error::SingularFrame { .. })));
    }

    #[test]
    fn section_dim_examples() {
        let g = grid(64);
        assert_eq!(holomorphic_section_dim(&FrameLoop::identity(g, 3), 6).unwrap(), 3);
        assert_eq!(holomorphic_section_dim(&FrameLoop::diagonal_powers(g, &[1]).unwrap(), 6).unwrap(), 3);
    }

    /// Brute-force oracle for `G = ζ`, `N = 1`: the map `c ↦ Im(ζ̄ u)` at the samples.
    #[test]
    fn section_dim_brute_force_oracle() {
        let g = grid(16);
        let deg = 3;
        let rows = 16;
        let cols = 2 * (deg + 1);
        let a = DMatrix::from_fn(rows, cols, |k, j| {
            let n = (j / 2) as i32;
            let z = g.zeta(k);
            let basis = if j % 2 == 0 { c(1.0, 0.0) } else { c(0.0, 1.0) };
            (z.conj() * basis * z.powi(n)).im
        });
        let s = linalg::real_singular_values(&a);
        let null = s.iter().filter(|&&x| x < 1e-10 * s[0]).count() + cols.saturating_sub(s.len());
        assert_eq!(null, 3);
    }

    #[test]
    fn identity_and_diagonal_indices() {
        let g = grid(64);
        let p = partial_indices(&FrameLoop::identity(g, 3)).unwrap();
        assert_eq!(p.partial, vec![0, 0, 0]);
        assert_eq!(p.total, 0);
        let p = partial_indices(&FrameLoop::diagonal_powers(g, &[1, 0, 0]).unwrap()).unwrap();
        assert_eq!(p.partial, vec![2, 0, 0]);
        assert_eq!(p.total, 2);
    }

    #[test]
    fn negative_indices() {
        let g = grid(64);
        let p = partial_indices(&FrameLoop::diagonal_powers(g, &[1, -1]).unwrap()).unwrap();
        assert_eq!(p.partial, vec![2, -2]);
        let p = partial_indices(&FrameLoop::diagonal_powers(g, &[2, -1, 0]).unwrap()).unwrap();
        assert_eq!(p.partial, vec![4, 0, -2]);
    }

    /// `e^{iθ/2}` times the rotation by `θ/2`: a continuous frame of `e^{iθ/2}ℝ²`.
    fn half_turn(z: C64) -> DMatrix<C64> {
        let one = c(1.0, 0.0);
        let i = c(0.0, 1.0);
        DMatrix::from_row_slice(2, 2, &[one + z, i * (z - one), -i * (z - one), one + z]) * c(0.5, 0.0)
    }

    #[test]
    fn odd_indices() {
        let g = grid(64);
        let f = FrameLoop::from_fn(g, half_turn).unwrap();
        assert_eq!(total_index(&f).unwrap(), 2);
        assert_eq!(partial_indices(&f).unwrap().partial, vec![1, 1]);
        assert_eq!(partial_indices(&f.shift(-1)).unwrap().partial, vec![-1, -1]);
        let f3 = FrameLoop::from_fn(g, |z| {
            let h = half_turn(z);
            DMatrix::from_fn(3, 3, |r, c| {
                if r < 2 && c < 2 {
                    h[(r, c)]
                } else if r == c {
                    C64::new(1.0, 0.0)
                } else {
                    C64::new(0.0, 0.0)
                }
            })
        })
        .unwrap();
        assert_eq!(partial_indices(&f3).unwrap().partial, vec![1, 1, 0]);
    }

    fn random_loop(rng: &mut ChaCha8Rng, g: BoundaryGrid, powers: &[i32]) -> FrameLoop {
        let n = powers.len();
        // ‖P₁‖ + ‖P₂‖ < 1 keeps I + P₁ζ + P₂ζ² invertible on the closed disc
        let p1 = DMatrix::from_fn(n, n, |_, _| c(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1)));
        let p2 = DMatrix::from_fn(n, n, |_, _| c(rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05)));
        let r = DMatrix::from_fn(n, n, |i, j| rng.random_range(-1.0..1.0) + if i == j { 2.0 } else { 0.0 });
        let d = FrameLoop::diagonal_powers(g, powers).unwrap();
        d.left_mul(|z| DMatrix::<C64>::identity(n, n) + &p1 * z + &p2 * (z * z))
            .unwrap()
            .right_mul_real(&r)
            .unwrap()
    }

    #[test]
    fn random_loops_recover_structure() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let g = grid(128);
        for _ in 0..4 {
            let powers: Vec<i32> = (0..3).map(|_| rng.random_range(0..3)).collect();
            let f = random_loop(&mut rng, g, &powers);
            let p = partial_indices(&f).unwrap();
            let mut want: Vec<i64> = powers.iter().map(|&k| 2 * k as i64).collect();
            want.sort_by(|a, b| b.cmp(a));
            assert_eq!(p.partial, want);
            assert_eq!(p.total, total_index(&f).unwrap());
        }
    }

    #[test]
    fn json_round_trip() {
        let f = FrameLoop::diagonal_powers(grid(16), &[1, 2]).unwrap();
        let back = FrameLoop::from_json(&f.to_json()).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn structured_frame_from_diagonal() {
        let g = grid(32);
        let f = FrameLoop::diagonal_powers(g, &[1, 0]).unwrap();
        let s = StructuredFrame::from_r1(&f).unwrap();
        assert_eq!(s.powers(), &[1, 0]);
        assert!((s.theta_at_center() - DMatrix::<C64>::identity(2, 2)).norm() < 1e-14);
        let back = s.frame().unwrap();
        for (a, b) in back.matrices().iter().zip(f.matrices()) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]
        #[test]
        fn shift_law(k0 in 0i32..3, k1 in 0i32..3, shift in -1i32..3) {
            let g = grid(64);
            let f = FrameLoop::diagonal_powers(g, &[k0, k1]).unwrap();
            let base = partial_indices(&f).unwrap();
            let sh = partial_indices(&f.shift(shift)).unwrap();
            let want: Vec<i64> = base.partial.iter().map(|k| k + 2 * shift as i64).collect();
            prop_assert_eq!(sh.partial, want);
            prop_assert_eq!(sh.total, base.total + 2 * 2 * shift as i64);
        }
    }
}
