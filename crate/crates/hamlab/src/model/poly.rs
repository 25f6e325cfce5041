//! Real polynomials in the action variables, stored sparsely by exponent
//! multi-index. All calculus on them (products, shifts, derivatives) is exact.

use std::collections::BTreeMap;

use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PolyError {
    #[error("jet degree must be at least 2, got {0}")]
    DegreeError(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Sparse polynomial in `n` real variables.
///
/// Zero coefficients are never stored; the map is ordered so iteration, and
/// therefore every derived quantity, is deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionPolynomial {
    n: usize,
    terms: BTreeMap<Vec<u32>, f64>,
}

// terms go out as a `[{"exp": [...], "c": ...}]` list, matching the model
// file format (JSON map keys must be strings)
impl Serialize for ActionPolynomial {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Term<'a> {
            exp: &'a [u32],
            c: f64,
        }
        let terms: Vec<Term> = self
            .terms
            .iter()
            .map(|(e, &c)| Term { exp: e, c })
            .collect();
        let mut s = serializer.serialize_struct("ActionPolynomial", 2)?;
        s.serialize_field("n", &self.n)?;
        s.serialize_field("terms", &terms)?;
        s.end()
    }
}

impl ActionPolynomial {
    pub fn zero(n: usize) -> Self {
        Self {
            n,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(n: usize, c: f64) -> Self {
        let mut p = Self::zero(n);
        p.add_term(&vec![0; n], c);
        p
    }

    /// Single monomial `c · I^exps`.
    pub fn monomial(n: usize, exps: &[u32], c: f64) -> Self {
        assert_eq!(exps.len(), n, "exponent multi-index length must equal n");
        let mut p = Self::zero(n);
        p.add_term(exps, c);
        p
    }

    /// The linear form `v·I`.
    pub fn linear(v: &[f64]) -> Self {
        let n = v.len();
        let mut p = Self::zero(n);
        for (i, &vi) in v.iter().enumerate() {
            let mut e = vec![0u32; n];
            e[i] = 1;
            p.add_term(&e, vi);
        }
        p
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<u32>, &f64)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    /// Max total degree of the stored terms; 0 for the zero polynomial.
    pub fn degree(&self) -> usize {
        self.terms
            .keys()
            .map(|e| e.iter().sum::<u32>() as usize)
            .max()
            .unwrap_or(0)
    }

    pub fn add_term(&mut self, exps: &[u32], c: f64) {
        assert_eq!(exps.len(), self.n);
        if c == 0.0 {
            return;
        }
        let entry = self.terms.entry(exps.to_vec()).or_insert(0.0);
        *entry += c;
        if *entry == 0.0 {
            self.terms.remove(exps);
        }
    }

    pub fn coefficient(&self, exps: &[u32]) -> f64 {
        self.terms.get(exps).copied().unwrap_or(0.0)
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        let mut out = self.clone();
        for (e, &c) in other.terms.iter() {
            out.add_term(e, c);
        }
        out
    }

    pub fn scale(&self, c: f64) -> Self {
        let mut out = Self::zero(self.n);
        if c == 0.0 {
            return out;
        }
        for (e, &a) in self.terms.iter() {
            out.add_term(e, a * c);
        }
        out
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        let mut out = Self::zero(self.n);
        let mut e = vec![0u32; self.n];
        for (ea, &ca) in self.terms.iter() {
            for (eb, &cb) in other.terms.iter() {
                for i in 0..self.n {
                    e[i] = ea[i] + eb[i];
                }
                out.add_term(&e, ca * cb);
            }
        }
        out
    }

    /// Exact partial derivative with respect to variable `i`.
    pub fn partial(&self, i: usize) -> Self {
        assert!(i < self.n);
        let mut out = Self::zero(self.n);
        for (e, &c) in self.terms.iter() {
            if e[i] == 0 {
                continue;
            }
            let mut d = e.clone();
            d[i] -= 1;
            out.add_term(&d, c * f64::from(e[i]));
        }
        out
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.n);
        let mut acc = 0.0;
        for (e, &c) in self.terms.iter() {
            let mut t = c;
            for (i, &ei) in e.iter().enumerate() {
                for _ in 0..ei {
                    t *= x[i];
                }
            }
            acc += t;
        }
        acc
    }

    /// Gradient at `x`, exact term-wise.
    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.n];
        for (e, &c) in self.terms.iter() {
            for i in 0..self.n {
                if e[i] == 0 {
                    continue;
                }
                let mut t = c * f64::from(e[i]);
                for (j, &ej) in e.iter().enumerate() {
                    let pow = if j == i { ej - 1 } else { ej };
                    for _ in 0..pow {
                        t *= x[j];
                    }
                }
                g[i] += t;
            }
        }
        g
    }

    /// Exact Hessian matrix at `x`.
    pub fn hessian(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut h = vec![vec![0.0; self.n]; self.n];
        for i in 0..self.n {
            let pi = self.partial(i);
            for j in i..self.n {
                let v = pi.partial(j).eval(x);
                h[i][j] = v;
                h[j][i] = v;
            }
        }
        h
    }

    /// Recenter at `center`: returns `q` with `q(X) = p(center + X)`, exactly.
    pub fn shift(&self, center: &[f64]) -> Self {
        assert_eq!(center.len(), self.n);
        let mut out = Self::zero(self.n);
        let mut scratch = Vec::new();
        for (e, &c) in self.terms.iter() {
            // expand c * prod_i (center_i + X_i)^{e_i} one variable at a time
            scratch.clear();
            scratch.push((vec![0u32; self.n], c));
            for i in 0..self.n {
                if e[i] == 0 {
                    continue;
                }
                let mut next = Vec::with_capacity(scratch.len() * (e[i] as usize + 1));
                for (base, coef) in scratch.iter() {
                    // (center_i + X_i)^{e_i} = sum_j C(e_i,j) center_i^{e_i-j} X_i^j
                    let mut binom = 1.0f64;
                    for j in 0..=e[i] {
                        let mut b = base.clone();
                        b[i] += j;
                        let mut t = coef * binom;
                        for _ in 0..(e[i] - j) {
                            t *= center[i];
                        }
                        next.push((b, t));
                        binom *= f64::from(e[i] - j) / f64::from(j + 1);
                    }
                }
                scratch = next;
            }
            for (b, t) in scratch.iter() {
                out.add_term(b, *t);
            }
        }
        out
    }

    /// Keep only terms with total degree in `[lo, hi]`.
    pub fn truncate_degrees(&self, lo: usize, hi: usize) -> Self {
        let mut out = Self::zero(self.n);
        for (e, &c) in self.terms.iter() {
            let d = e.iter().sum::<u32>() as usize;
            if d >= lo && d <= hi {
                out.add_term(e, c);
            }
        }
        out
    }

    /// Upper bound for `sup |p|` on the polydisc `|I_i| <= r`:
    /// the coefficient majorant `Σ |c| r^deg`.
    pub fn majorant(&self, r: f64) -> f64 {
        let mut acc = 0.0;
        for (e, &c) in self.terms.iter() {
            let d = e.iter().sum::<u32>();
            acc += c.abs() * r.powi(d as i32);
        }
        acc
    }

    /// Sup-norm distance between coefficient vectors on the monomial basis.
    pub fn coeff_sup_distance(&self, other: &Self) -> f64 {
        assert_eq!(self.n, other.n);
        let mut d: f64 = 0.0;
        for (e, &c) in self.terms.iter() {
            d = d.max((c - other.coefficient(e)).abs());
        }
        for (e, &c) in other.terms.iter() {
            d = d.max((c - self.coefficient(e)).abs());
        }
        d
    }
}

/// Element of `P₂(n,m)`: polynomial with homogeneous parts of degrees 2..=m only.
///
/// This is the class of Taylor jets the stable-steepness condition quantifies
/// over; membership (no constant or linear part) is enforced on construction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JetPolynomial {
    poly: ActionPolynomial,
    m: usize,
}

impl JetPolynomial {
    pub fn new(poly: ActionPolynomial, m: usize) -> Result<Self, PolyError> {
        if m < 2 {
            return Err(PolyError::DegreeError(m));
        }
        let clipped = poly.truncate_degrees(2, m);
        Ok(Self { poly: clipped, m })
    }

    pub fn poly(&self) -> &ActionPolynomial {
        &self.poly
    }

    pub fn n(&self) -> usize {
        self.poly.n()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// All monomial multi-indices of degrees 2..=m in n variables, in a fixed
    /// deterministic order. This is the basis used for perturbation sampling.
    pub fn basis(n: usize, m: usize) -> Vec<Vec<u32>> {
        let mut out = Vec::new();
        let mut e = vec![0u32; n];
        fn rec(out: &mut Vec<Vec<u32>>, e: &mut Vec<u32>, i: usize, left: u32) {
            if i + 1 == e.len() {
                e[i] = left;
                out.push(e.clone());
                return;
            }
            for v in 0..=left {
                e[i] = v;
                rec(out, e, i + 1, left - v);
            }
        }
        for d in 2..=m as u32 {
            rec(&mut out, &mut e, 0, d);
        }
        out
    }
}

/// Taylor jet `T₂^m p(I_*)`: recenter `p` at `I_*` and keep homogeneous
/// degrees 2..=m, so the coefficient of each multi-index is the corresponding
/// scaled derivative `(l!)⁻¹ ∇^l p(I_*)` entry.
pub fn taylor_jet(p: &ActionPolynomial, i_star: &[f64], m: usize) -> Result<JetPolynomial, PolyError> {
    if i_star.len() != p.n() {
        return Err(PolyError::DimensionMismatch {
            expected: p.n(),
            got: i_star.len(),
        });
    }
    let shifted = p.shift(i_star);
    JetPolynomial::new(shifted, m)
}
