//! Harmonic conjugation on the circle, holomorphic extension into the disc and
//! winding numbers of scalar loops.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::boundary::BoundaryFunction;
use crate::error::{Error, Result};

/// Holomorphy threshold on the relative negative-frequency mass.
pub const HOLOMORPHY_TOL: f64 = 1e-10;

/// Normalization of the harmonic conjugate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ConjugationKind {
    /// Zero mean, i.e. the harmonic extension vanishes at the center.
    AtCenter,
    /// Vanishes at `ζ = 1`.
    AtOne,
}

fn check_real(u: &BoundaryFunction) -> Result<()> {
    let tol = 1e-12 * u.max_abs().max(1.0);
    let max_imag = u.max_imag();
    if max_imag > tol {
        return Err(Error::NotReal { max_imag });
    }
    Ok(())
}

/// Harmonic conjugate of a real function, computed with the multiplier `−i·sign(n)`.
///
/// The mean and the unpaired Nyquist mode are discarded.
pub fn conjugate(u: &BoundaryFunction, kind: ConjugationKind) -> Result<BoundaryFunction> {
    check_real(u)?;
    let nyq = -(u.len() as i64) / 2;
    let t = u.multiplier(|n| {
        if n == 0 || n == nyq {
            C64::new(0.0, 0.0)
        } else {
            C64::new(0.0, -(n.signum() as f64))
        }
    });
    // the multiplier preserves realness up to rounding; drop the residue
    let t = t.real_part();
    match kind {
        ConjugationKind::AtCenter => Ok(t),
        ConjugationKind::AtOne => {
            let at_one = t.sample(0);
            let shift = BoundaryFunction::constant(u.grid(), &at_one);
            t.sub(&shift)
        }
    }
}

/// `u + i·T u`, the boundary trace of the holomorphic function with real part `u`.
pub fn analytic_completion(u: &BoundaryFunction, kind: ConjugationKind) -> Result<BoundaryFunction> {
    let t = conjugate(u, kind)?;
    u.real_part().add(&t.scale(C64::new(0.0, 1.0)))
}

/// Relative spectral mass at negative frequencies (the Nyquist slot counts as negative).
pub fn negative_spectrum_mass(f: &BoundaryFunction) -> f64 {
    let grid = f.grid();
    let mut neg = 0.0;
    let mut total = 0.0;
    for j in 0..f.dim() {
        for (slot, c) in f.coeffs(j).iter().enumerate() {
            let e = c.norm_sqr();
            total += e;
            if grid.freq(slot) < 0 {
                neg += e;
            }
        }
    }
    if total == 0.0 {
        0.0
    } else {
        neg / total
    }
}

/// Negative-spectrum mass of each component separately.
pub fn negative_spectrum_mass_per_component(f: &BoundaryFunction) -> Vec<f64> {
    (0..f.dim())
        .map(|j| negative_spectrum_mass(&f.component(j)))
        .collect()
}

/// Evaluates `Σ_{n≥0} c_n ζ^n` without checking holomorphy.
pub fn power_series(f: &BoundaryFunction, zeta: C64) -> Vec<C64> {
    let half = f.len() / 2;
    (0..f.dim())
        .map(|j| {
            let c = f.coeffs(j);
            // Horner from the top
            (0..half).rev().fold(C64::new(0.0, 0.0), |acc, n| acc * zeta + c[n])
        })
        .collect()
}

/// Value at an interior point of the holomorphic extension of boundary data.
pub fn holomorphic_extension(f: &BoundaryFunction, zeta: C64) -> Result<Vec<C64>> {
    if zeta.norm() > 1.0 - 1e-6 {
        return Err(Error::TooCloseToBoundary {
            modulus: zeta.norm(),
        });
    }
    let mass = negative_spectrum_mass(f);
    if mass >= HOLOMORPHY_TOL {
        return Err(Error::NotHolomorphic { mass });
    }
    Ok(power_series(f, zeta))
}

/// Winding number of a scalar loop around the origin by argument summation.
pub fn winding_number(f: &BoundaryFunction, tol: f64) -> Result<i64> {
    let v = f.values(0);
    let grid = f.grid();
    if let Some((k, z)) = v
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
    {
        if z.norm() <= tol {
            return Err(Error::VanishingLoop {
                min_modulus: z.norm(),
                angle: grid.theta(k),
            });
        }
    }
    let s = v.len();
    let mut total = 0.0;
    for k in 0..s {
        let jump = (v[(k + 1) % s] / v[k]).arg();
        if jump.abs() >= PI / 2.0 {
            return Err(Error::UnderResolvedLoop {
                jump,
                angle: grid.theta(k),
            });
        }
        total += jump;
    }
    Ok((total / (2.0 * PI)).round() as i64)
}
