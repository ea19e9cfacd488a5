//! Periodic vector-valued functions on the unit circle.
//!
//! A [`BoundaryFunction`] keeps both the samples at the angles
//! `θ_k = 2πk/S` and the discrete Fourier coefficients `c_n`,
//! `n ∈ [−S/2, S/2)`. The Nyquist mode `n = −S/2` is interpolated as
//! `c·cos(Sθ/2)` so real samples give real interpolants.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::sync::Arc;

use num_complex::Complex64 as C64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_GRID_SIZE: usize = 256;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(size: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(size)
        } else {
            p.plan_fft_forward(size)
        }
    })
}

/// Normalized forward transform: `c_n = (1/S) Σ f_k e^{−inθ_k}` in FFT order.
pub(crate) fn forward(samples: &[C64]) -> Vec<C64> {
    let mut buf = samples.to_vec();
    plan(buf.len(), false).process(&mut buf);
    let s = 1.0 / buf.len() as f64;
    buf.iter_mut().for_each(|c| *c *= s);
    buf
}

/// Inverse of [`forward`].
pub(crate) fn inverse(coeffs: &[C64]) -> Vec<C64> {
    let mut buf = coeffs.to_vec();
    plan(buf.len(), true).process(&mut buf);
    buf
}

/// Equispaced angles on the circle; `size` is a power of two, at least 8.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoundaryGrid {
    size: usize,
}

impl BoundaryGrid {
    pub fn new(size: usize) -> Result<Self> {
        if size < 8 || !size.is_power_of_two() {
            return Err(Error::InvalidGrid(size));
        }
        Ok(Self { size })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn step(&self) -> f64 {
        2.0 * PI / self.size as f64
    }

    pub fn theta(&self, k: usize) -> f64 {
        self.step() * k as f64
    }

    pub fn zeta(&self, k: usize) -> C64 {
        C64::from_polar(1.0, self.theta(k))
    }

    pub fn thetas(&self) -> Vec<f64> {
        (0..self.size).map(|k| self.theta(k)).collect()
    }

    pub fn zetas(&self) -> Vec<C64> {
        (0..self.size).map(|k| self.zeta(k)).collect()
    }

    /// Frequency carried by FFT slot `slot`.
    pub fn freq(&self, slot: usize) -> i64 {
        let s = self.size as i64;
        let k = slot as i64;
        if k < s / 2 {
            k
        } else {
            k - s
        }
    }

    /// FFT slot holding frequency `n`, if it is representable.
    pub fn slot(&self, n: i64) -> Option<usize> {
        let s = self.size as i64;
        if n < -s / 2 || n >= s / 2 {
            None
        } else {
            Some(n.rem_euclid(s) as usize)
        }
    }
}

impl Default for BoundaryGrid {
    fn default() -> Self {
        Self {
            size: DEFAULT_GRID_SIZE,
        }
    }
}

/// Proxy diagnostics for the regularity of boundary data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessReport {
    pub sup_norm: f64,
    /// Fraction of spectral mass carried by `|n| ≥ 3S/8`.
    pub tail_energy: f64,
    /// Largest second difference quotient over the grid.
    pub difference_quotient_bound: f64,
}

/// Samples of a map `∂Δ → ℂ^d` together with their Fourier coefficients.
///
/// Storage is component-major: `values[j][k]` is component `j` at `θ_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryFunction {
    grid: BoundaryGrid,
    values: Vec<Vec<C64>>,
    coeffs: Vec<Vec<C64>>,
}

impl BoundaryFunction {
    /// Builds from sample-major data, one complex vector per grid angle.
    pub fn from_samples(samples: &[Vec<C64>], grid: BoundaryGrid) -> Result<Self> {
        if samples.len() != grid.size {
            return Err(Error::LengthMismatch {
                expected: grid.size,
                got: samples.len(),
            });
        }
        let d = samples.first().map_or(0, Vec::len);
        if d == 0 {
            return Err(Error::DimensionMismatch("samples have no components".into()));
        }
        let mut comps = vec![Vec::with_capacity(grid.size); d];
        for (k, s) in samples.iter().enumerate() {
            if s.len() != d {
                return Err(Error::DimensionMismatch(format!(
                    "sample {k} has {} components, expected {d}",
                    s.len()
                )));
            }
            for (j, v) in s.iter().enumerate() {
                comps[j].push(*v);
            }
        }
        Self::from_components(comps, grid)
    }

    /// Builds from component-major data.
    pub fn from_components(values: Vec<Vec<C64>>, grid: BoundaryGrid) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::DimensionMismatch("no components".into()));
        }
        for comp in &values {
            if comp.len() != grid.size {
                return Err(Error::LengthMismatch {
                    expected: grid.size,
                    got: comp.len(),
                });
            }
            if let Some(index) = comp.iter().position(|v| !v.re.is_finite() || !v.im.is_finite()) {
                return Err(Error::NonFinite { index });
            }
        }
        let coeffs = values.iter().map(|c| forward(c)).collect();
        Ok(Self {
            grid,
            values,
            coeffs,
        })
    }

    /// Scalar function from one component of samples.
    pub fn scalar(values: Vec<C64>, grid: BoundaryGrid) -> Result<Self> {
        Self::from_components(vec![values], grid)
    }

    pub fn from_real_components(values: Vec<Vec<f64>>, grid: BoundaryGrid) -> Result<Self> {
        Self::from_components(
            values
                .into_iter()
                .map(|c| c.into_iter().map(|x| C64::new(x, 0.0)).collect())
                .collect(),
            grid,
        )
    }

    /// Samples `f(ζ)` componentwise.
    pub fn from_fn(grid: BoundaryGrid, dim: usize, f: impl Fn(C64) -> Vec<C64>) -> Result<Self> {
        let samples: Vec<Vec<C64>> = (0..grid.size).map(|k| f(grid.zeta(k))).collect();
        if samples.iter().any(|s| s.len() != dim) {
            return Err(Error::DimensionMismatch(format!("closure must return {dim} values")));
        }
        Self::from_samples(&samples, grid)
    }

    /// Builds from coefficients in FFT order, one vector per component.
    pub fn from_coeffs(coeffs: Vec<Vec<C64>>, grid: BoundaryGrid) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::DimensionMismatch("no components".into()));
        }
        for c in &coeffs {
            if c.len() != grid.size {
                return Err(Error::LengthMismatch {
                    expected: grid.size,
                    got: c.len(),
                });
            }
        }
        let values: Vec<Vec<C64>> = coeffs.iter().map(|c| inverse(c)).collect();
        for comp in &values {
            if let Some(index) = comp.iter().position(|v| !v.re.is_finite() || !v.im.is_finite()) {
                return Err(Error::NonFinite { index });
            }
        }
        Ok(Self {
            grid,
            values,
            coeffs,
        })
    }

    pub fn zeros(grid: BoundaryGrid, dim: usize) -> Self {
        Self {
            grid,
            values: vec![vec![C64::new(0.0, 0.0); grid.size]; dim],
            coeffs: vec![vec![C64::new(0.0, 0.0); grid.size]; dim],
        }
    }

    pub fn constant(grid: BoundaryGrid, value: &[C64]) -> Self {
        let mut coeffs = vec![vec![C64::new(0.0, 0.0); grid.size]; value.len()];
        for (c, v) in coeffs.iter_mut().zip(value) {
            c[0] = *v;
        }
        Self {
            grid,
            values: value.iter().map(|v| vec![*v; grid.size]).collect(),
            coeffs,
        }
    }

    pub fn grid(&self) -> BoundaryGrid {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn len(&self) -> usize {
        self.grid.size
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Samples of component `j`.
    pub fn values(&self, j: usize) -> &[C64] {
        &self.values[j]
    }

    pub fn components(&self) -> &[Vec<C64>] {
        &self.values
    }

    /// Coefficients of component `j` in FFT order.
    pub fn coeffs(&self, j: usize) -> &[C64] {
        &self.coeffs[j]
    }

    /// Coefficient of frequency `n` in component `j`; zero outside the grid band.
    pub fn coeff(&self, j: usize, n: i64) -> C64 {
        self.grid
            .slot(n)
            .map_or(C64::new(0.0, 0.0), |s| self.coeffs[j][s])
    }

    /// The vector sampled at `θ_k`.
    pub fn sample(&self, k: usize) -> Vec<C64> {
        self.values.iter().map(|c| c[k]).collect()
    }

    pub fn samples(&self) -> Vec<Vec<C64>> {
        (0..self.len()).map(|k| self.sample(k)).collect()
    }

    pub fn component(&self, j: usize) -> Self {
        Self {
            grid: self.grid,
            values: vec![self.values[j].clone()],
            coeffs: vec![self.coeffs[j].clone()],
        }
    }

    /// Concatenates components of several functions on a common grid.
    pub fn stack(parts: &[&Self]) -> Result<Self> {
        let grid = parts
            .first()
            .ok_or_else(|| Error::DimensionMismatch("nothing to stack".into()))?
            .grid;
        let mut values = Vec::new();
        let mut coeffs = Vec::new();
        for p in parts {
            if p.grid != grid {
                return Err(Error::DimensionMismatch("grids differ".into()));
            }
            values.extend(p.values.iter().cloned());
            coeffs.extend(p.coeffs.iter().cloned());
        }
        Ok(Self {
            grid,
            values,
            coeffs,
        })
    }

    /// Trigonometric interpolant of component `j` at angle `θ`.
    pub fn eval_component(&self, j: usize, theta: f64) -> C64 {
        let s = self.grid.size;
        let c = &self.coeffs[j];
        let step = C64::from_polar(1.0, theta);
        let mut acc = c[0];
        let mut pos = C64::new(1.0, 0.0);
        for n in 1..s / 2 {
            pos *= step;
            acc += c[n] * pos + c[s - n] * pos.conj();
        }
        let half = (s / 2) as f64;
        acc + c[s / 2] * (half * theta).cos()
    }

    /// Trigonometric interpolation through the samples.
    pub fn eval(&self, theta: f64) -> Vec<C64> {
        (0..self.dim()).map(|j| self.eval_component(j, theta)).collect()
    }

    /// Largest Euclidean norm of a sample vector.
    pub fn sup_norm(&self) -> f64 {
        (0..self.len())
            .map(|k| {
                self.values
                    .iter()
                    .map(|c| c[k].norm_sqr())
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values
            .iter()
            .flatten()
            .map(|v| v.norm())
            .fold(0.0, f64::max)
    }

    pub fn max_imag(&self) -> f64 {
        self.values
            .iter()
            .flatten()
            .map(|v| v.im.abs())
            .fold(0.0, f64::max)
    }

    pub fn is_real(&self, tol: f64) -> bool {
        self.max_imag() <= tol
    }

    /// Mean value of each component.
    pub fn mean(&self) -> Vec<C64> {
        self.coeffs.iter().map(|c| c[0]).collect()
    }

    pub fn smoothness_report(&self) -> SmoothnessReport {
        let s = self.grid.size;
        let cut = (3 * s / 8) as i64;
        let mut total = 0.0;
        let mut tail = 0.0;
        for c in &self.coeffs {
            for (slot, v) in c.iter().enumerate() {
                let e = v.norm_sqr();
                total += e;
                if self.grid.freq(slot).abs() >= cut {
                    tail += e;
                }
            }
        }
        let h2 = self.grid.step().powi(2);
        let mut dq: f64 = 0.0;
        for c in &self.values {
            for k in 0..s {
                let d2 = c[(k + 1) % s] - 2.0 * c[k] + c[(k + s - 1) % s];
                dq = dq.max(d2.norm() / h2);
            }
        }
        SmoothnessReport {
            sup_norm: self.sup_norm(),
            tail_energy: if total > 0.0 { (tail / total).min(1.0) } else { 0.0 },
            difference_quotient_bound: dq,
        }
    }

    fn map_coeffs(&self, f: impl Fn(i64, C64) -> C64) -> Self {
        let coeffs: Vec<Vec<C64>> = self
            .coeffs
            .iter()
            .map(|c| {
                c.iter()
                    .enumerate()
                    .map(|(slot, v)| f(self.grid.freq(slot), *v))
                    .collect()
            })
            .collect();
        let values = coeffs.iter().map(|c| inverse(c)).collect();
        Self {
            grid: self.grid,
            values,
            coeffs,
        }
    }

    /// Applies a Fourier multiplier `m(n)` to every component.
    pub fn multiplier(&self, m: impl Fn(i64) -> C64) -> Self {
        self.map_coeffs(|n, c| m(n) * c)
    }

    /// Spectral derivative in `θ`; the Nyquist mode is dropped.
    pub fn derivative(&self) -> Self {
        let nyq = -(self.grid.size as i64) / 2;
        self.multiplier(|n| {
            if n == nyq {
                C64::new(0.0, 0.0)
            } else {
                C64::new(0.0, n as f64)
            }
        })
    }

    /// Multiplies by `ζ^k` through a coefficient shift, dropping modes that leave the band.
    pub fn shift(&self, k: i64) -> Self {
        let s = self.grid.size as i64;
        let coeffs: Vec<Vec<C64>> = self
            .coeffs
            .iter()
            .map(|c| {
                let mut out = vec![C64::new(0.0, 0.0); c.len()];
                for (slot, v) in c.iter().enumerate() {
                    let n = self.grid.freq(slot) + k;
                    if n >= -s / 2 && n < s / 2 {
                        out[n.rem_euclid(s) as usize] = *v;
                    }
                }
                out
            })
            .collect();
        Self::from_coeffs(coeffs, self.grid).expect("shift of finite data is finite")
    }

    /// Pointwise map over the samples of every component.
    pub fn map(&self, f: impl Fn(C64) -> C64) -> Result<Self> {
        Self::from_components(
            self.values
                .iter()
                .map(|c| c.iter().map(|v| f(*v)).collect())
                .collect(),
            self.grid,
        )
    }

    pub fn real_part(&self) -> Self {
        self.map(|v| C64::new(v.re, 0.0)).expect("finite")
    }

    pub fn imag_part(&self) -> Self {
        self.map(|v| C64::new(v.im, 0.0)).expect("finite")
    }

    pub fn conj(&self) -> Self {
        self.map(|v| v.conj()).expect("finite")
    }

    pub fn scale(&self, a: C64) -> Self {
        Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .map(|c| c.iter().map(|v| a * v).collect())
                .collect(),
            coeffs: self
                .coeffs
                .iter()
                .map(|c| c.iter().map(|v| a * v).collect())
                .collect(),
        }
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid || self.dim() != other.dim() {
            return Err(Error::DimensionMismatch(format!(
                "({}, {}) vs ({}, {})",
                self.grid.size,
                self.dim(),
                other.grid.size,
                other.dim()
            )));
        }
        Ok(())
    }

    /// `a·self + b·other`.
    pub fn axpby(&self, a: C64, other: &Self, b: C64) -> Result<Self> {
        self.check_same(other)?;
        let comb = |x: &[Vec<C64>], y: &[Vec<C64>]| -> Vec<Vec<C64>> {
            x.iter()
                .zip(y)
                .map(|(p, q)| p.iter().zip(q).map(|(u, v)| a * u + b * v).collect())
                .collect()
        };
        Ok(Self {
            grid: self.grid,
            values: comb(&self.values, &other.values),
            coeffs: comb(&self.coeffs, &other.coeffs),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.axpby(C64::new(1.0, 0.0), other, C64::new(1.0, 0.0))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.axpby(C64::new(1.0, 0.0), other, C64::new(-1.0, 0.0))
    }

    /// Componentwise pointwise product.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        Self::from_components(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(p, q)| p.iter().zip(q).map(|(u, v)| u * v).collect())
                .collect(),
            self.grid,
        )
    }

    /// Re-samples on another grid by zero padding or truncating the spectrum.
    pub fn resample(&self, grid: BoundaryGrid) -> Self {
        if grid == self.grid {
            return self.clone();
        }
        let (s_old, s_new) = (self.grid.size as i64, grid.size as i64);
        let coeffs: Vec<Vec<C64>> = self
            .coeffs
            .iter()
            .map(|c| {
                let mut out = vec![C64::new(0.0, 0.0); grid.size];
                for (slot, v) in c.iter().enumerate() {
                    let n = self.grid.freq(slot);
                    if n == -s_old / 2 {
                        // split the cosine Nyquist mode when it becomes resolvable
                        if s_new > s_old {
                            out[(s_old / 2) as usize] += 0.5 * v;
                            out[(s_new - s_old / 2) as usize] += 0.5 * v;
                        } else if s_new == s_old {
                            out[slot] += v;
                        }
                        continue;
                    }
                    if n > -s_new / 2 && n < s_new / 2 {
                        out[n.rem_euclid(s_new) as usize] += v;
                    }
                }
                out
            })
            .collect();
        Self::from_coeffs(coeffs, grid).expect("finite")
    }

    /// Writes `θ, re_1, im_1, …` rows with a header.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut line = String::from("theta");
        for j in 1..=self.dim() {
            let _ = write!(line, ",re_{j},im_{j}");
        }
        writeln!(out, "{line}")?;
        for k in 0..self.len() {
            line.clear();
            let _ = write!(line, "{:e}", self.grid.theta(k));
            for c in &self.values {
                let _ = write!(line, ",{:e},{:e}", c[k].re, c[k].im);
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii")
    }

    /// Parses the format produced by [`Self::write_csv`].
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty csv".into()))?
            .map_err(|e| Error::Parse(e.to_string()))?;
        let cols = header.split(',').count();
        if cols < 3 || cols % 2 == 0 {
            return Err(Error::Parse(format!("bad header: {header}")));
        }
        let d = (cols - 1) / 2;
        let mut samples = Vec::new();
        for (row, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::Parse(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let nums: Vec<f64> = line
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse(format!("row {row}: {e}")))?;
            if nums.len() != cols {
                return Err(Error::Parse(format!("row {row}: expected {cols} columns")));
            }
            samples.push(
                (0..d)
                    .map(|j| C64::new(nums[1 + 2 * j], nums[2 + 2 * j]))
                    .collect::<Vec<_>>(),
            );
        }
        let grid = BoundaryGrid::new(samples.len())?;
        Self::from_samples(&samples, grid)
    }
}
