//! Sparse real polynomials in a fixed number of real variables.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One monomial `coeff · Π x_i^{powers_i}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub coeff: f64,
    pub powers: Vec<u32>,
}

/// Polynomial stored as exponent vector → coefficient, zero terms dropped.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Poly {
    nvars: usize,
    terms: BTreeMap<Vec<u32>, f64>,
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * f64::from(n - i) / f64::from(i + 1))
}

impl Poly {
    pub fn zero(nvars: usize) -> Self {
        Self {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(nvars: usize, c: f64) -> Self {
        let mut p = Self::zero(nvars);
        p.add_term(c, vec![0; nvars]);
        p
    }

    /// The coordinate function `x_i`.
    pub fn var(nvars: usize, i: usize) -> Self {
        let mut pw = vec![0; nvars];
        pw[i] = 1;
        let mut p = Self::zero(nvars);
        p.add_term(1.0, pw);
        p
    }

    pub fn from_terms(nvars: usize, terms: &[Term]) -> Result<Self> {
        let mut p = Self::zero(nvars);
        for t in terms {
            if t.powers.len() != nvars {
                return Err(Error::InvalidManifold(format!(
                    "term has {} exponents, expected {nvars}",
                    t.powers.len()
                )));
            }
            if !t.coeff.is_finite() {
                return Err(Error::InvalidManifold("non-finite coefficient".into()));
            }
            p.add_term(t.coeff, t.powers.clone());
        }
        Ok(p)
    }

    pub fn add_term(&mut self, coeff: f64, powers: Vec<u32>) {
        debug_assert_eq!(powers.len(), self.nvars);
        let e = self.terms.entry(powers.clone()).or_insert(0.0);
        *e += coeff;
        if *e == 0.0 {
            self.terms.remove(&powers);
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn terms(&self) -> Vec<Term> {
        self.terms
            .iter()
            .map(|(p, c)| Term {
                coeff: *c,
                powers: p.clone(),
            })
            .collect()
    }

    pub fn coeff(&self, powers: &[u32]) -> f64 {
        self.terms.get(powers).copied().unwrap_or(0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.terms
            .keys()
            .map(|p| p.iter().sum::<u32>())
            .max()
            .unwrap_or(0)
    }

    /// Lowest total degree among the nonzero terms.
    pub fn order(&self) -> Option<u32> {
        self.terms.keys().map(|p| p.iter().sum::<u32>()).min()
    }

    /// Terms of total degree at least `d`.
    pub fn tail(&self, d: u32) -> Self {
        Self {
            nvars: self.nvars,
            terms: self
                .terms
                .iter()
                .filter(|(p, _)| p.iter().sum::<u32>() >= d)
                .map(|(p, c)| (p.clone(), *c))
                .collect(),
        }
    }

    /// Terms of total degree below `d`.
    pub fn head(&self, d: u32) -> Self {
        Self {
            nvars: self.nvars,
            terms: self
                .terms
                .iter()
                .filter(|(p, _)| p.iter().sum::<u32>() < d)
                .map(|(p, c)| (p.clone(), *c))
                .collect(),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.nvars);
        self.terms
            .iter()
            .map(|(p, c)| {
                p.iter()
                    .zip(x)
                    .fold(*c, |acc, (&e, xi)| if e == 0 { acc } else { acc * xi.powi(e as i32) })
            })
            .sum()
    }

    pub fn partial(&self, i: usize) -> Self {
        let mut out = Self::zero(self.nvars);
        for (p, c) in &self.terms {
            if p[i] > 0 {
                let mut q = p.clone();
                q[i] -= 1;
                out.add_term(c * f64::from(p[i]), q);
            }
        }
        out
    }

    pub fn gradient(&self) -> Vec<Self> {
        (0..self.nvars).map(|i| self.partial(i)).collect()
    }

    pub fn scale(&self, a: f64) -> Self {
        let mut out = Self::zero(self.nvars);
        if a != 0.0 {
            for (p, c) in &self.terms {
                out.add_term(c * a, p.clone());
            }
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (p, c) in &other.terms {
            out.add_term(*c, p.clone());
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-1.0))
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = Self::zero(self.nvars);
        for (p, a) in &self.terms {
            for (q, b) in &other.terms {
                out.add_term(a * b, p.iter().zip(q).map(|(x, y)| x + y).collect());
            }
        }
        out
    }

    /// Re-expands around `x0`: returns `q` with `q(δ) = p(x0 + δ)` exactly.
    pub fn taylor_shift(&self, x0: &[f64]) -> Self {
        let mut out = Self::zero(self.nvars);
        for (p, c) in &self.terms {
            // expand Π (x0_i + δ_i)^{p_i} term by term
            let mut partial: Vec<(Vec<u32>, f64)> = vec![(vec![0; self.nvars], *c)];
            for (i, &e) in p.iter().enumerate() {
                if e == 0 {
                    continue;
                }
                let mut next = Vec::with_capacity(partial.len() * (e as usize + 1));
                for (pw, cf) in &partial {
                    for k in 0..=e {
                        let mut q = pw.clone();
                        q[i] = k;
                        next.push((q, cf * binomial(e, k) * x0[i].powi((e - k) as i32)));
                    }
                }
                partial = next;
            }
            for (q, cf) in partial {
                if cf != 0.0 {
                    out.add_term(cf, q);
                }
            }
        }
        out
    }

    /// Substitutes each variable by a polynomial in a new variable set.
    pub fn compose(&self, subs: &[Self]) -> Self {
        let nv = subs.first().map_or(0, |s| s.nvars);
        let mut out = Self::zero(nv);
        for (p, c) in &self.terms {
            let mut m = Self::constant(nv, *c);
            for (i, &e) in p.iter().enumerate() {
                for _ in 0..e {
                    m = m.mul(&subs[i]);
                }
            }
            out = out.add(&m);
        }
        out
    }

    /// Largest absolute coefficient difference to `other`.
    pub fn max_coeff_diff(&self, other: &Self) -> f64 {
        self.sub(other)
            .terms
            .values()
            .map(|c| c.abs())
            .fold(0.0, f64::max)
    }
}
