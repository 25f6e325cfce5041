//! Fourier–Taylor fields `f(θ,I) = Σ_k c_k(I) e^{2πi k·θ}` and the
//! Hamiltonians built on them.
//!
//! Fields are immutable after construction and always satisfy the reality
//! invariant `c_{−k} = conj(c_k)` (the builder inserts conjugate modes
//! itself), so `evaluate` returns a real number up to rounding.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::freq::FrequencyVector;
use crate::model::poly::ActionPolynomial;

pub const TAU: f64 = std::f64::consts::TAU; // 2π, angles measured in turns

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("action out of domain: |I|∞ = {actual} exceeds radius {radius}")]
    DomainError { actual: f64, radius: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("partial-average block must satisfy 1 <= d <= n-1, got d={d} with n={n}")]
    InvalidAverageBlock { d: usize, n: usize },
    #[error("model validation failed: {0}")]
    Validation(String),
    #[error("epsilon must be nonnegative and finite, got {0}")]
    BadEpsilon(f64),
    #[error(transparent)]
    Freq(#[from] crate::freq::FreqError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
}

/// Complex-coefficient action polynomial: one Fourier mode's coefficient.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModePoly {
    pub re: ActionPolynomial,
    pub im: ActionPolynomial,
}

impl ModePoly {
    pub fn zero(n: usize) -> Self {
        Self {
            re: ActionPolynomial::zero(n),
            im: ActionPolynomial::zero(n),
        }
    }

    pub fn real(p: ActionPolynomial) -> Self {
        let n = p.n();
        Self {
            re: p,
            im: ActionPolynomial::zero(n),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }

    pub fn conj(&self) -> Self {
        Self {
            re: self.re.clone(),
            im: self.im.scale(-1.0),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            re: self.re.add(&other.re),
            im: self.im.add(&other.im),
        }
    }

    pub fn scale_complex(&self, z: Complex64) -> Self {
        Self {
            re: self.re.scale(z.re).add(&self.im.scale(-z.im)),
            im: self.re.scale(z.im).add(&self.im.scale(z.re)),
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        Self {
            re: self.re.mul(&other.re).add(&self.im.mul(&other.im).scale(-1.0)),
            im: self.re.mul(&other.im).add(&self.im.mul(&other.re)),
        }
    }

    pub fn partial(&self, i: usize) -> Self {
        Self {
            re: self.re.partial(i),
            im: self.im.partial(i),
        }
    }

    pub fn eval(&self, x: &[f64]) -> Complex64 {
        Complex64::new(self.re.eval(x), self.im.eval(x))
    }

    /// `Σ |c_e| r^|e|` over the union of stored multi-indices.
    pub fn majorant(&self, r: f64) -> f64 {
        let mut seen: BTreeMap<Vec<u32>, (f64, f64)> = BTreeMap::new();
        for (e, &c) in self.re.terms() {
            seen.entry(e.clone()).or_insert((0.0, 0.0)).0 = c;
        }
        for (e, &c) in self.im.terms() {
            seen.entry(e.clone()).or_insert((0.0, 0.0)).1 = c;
        }
        seen.iter()
            .map(|(e, &(a, b))| {
                let d = e.iter().sum::<u32>();
                a.hypot(b) * r.powi(d as i32)
            })
            .sum()
    }
}

/// Finite Fourier series in the angles with polynomial coefficients in the
/// actions. Both `k` and `−k` are stored explicitly.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierTaylorField {
    n: usize,
    modes: BTreeMap<Vec<i32>, ModePoly>,
    domain_radius: f64,
    analyticity_width: f64,
}

// modes serialize as a `[{"k": [...], "re": ..., "im": ...}]` list; JSON map
// keys must be strings, and the list matches the model file layout
impl serde::Serialize for FourierTaylorField {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        #[derive(Serialize)]
        struct Mode<'a> {
            k: &'a [i32],
            re: &'a crate::model::poly::ActionPolynomial,
            im: &'a crate::model::poly::ActionPolynomial,
        }
        let modes: Vec<Mode> = self
            .modes
            .iter()
            .map(|(k, c)| Mode {
                k,
                re: &c.re,
                im: &c.im,
            })
            .collect();
        let mut s = serializer.serialize_struct("FourierTaylorField", 4)?;
        s.serialize_field("n", &self.n)?;
        s.serialize_field("modes", &modes)?;
        s.serialize_field("domain_radius", &self.domain_radius)?;
        s.serialize_field("analyticity_width", &self.analyticity_width)?;
        s.end()
    }
}

pub struct FieldBuilder {
    n: usize,
    modes: BTreeMap<Vec<i32>, ModePoly>,
    domain_radius: f64,
    analyticity_width: f64,
}

impl FieldBuilder {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            modes: BTreeMap::new(),
            domain_radius: f64::INFINITY,
            analyticity_width: 0.5,
        }
    }

    pub fn domain_radius(mut self, r: f64) -> Self {
        self.domain_radius = r;
        self
    }

    pub fn analyticity_width(mut self, s: f64) -> Self {
        self.analyticity_width = s;
        self
    }

    fn accumulate(&mut self, k: &[i32], c: ModePoly) {
        assert_eq!(k.len(), self.n);
        let entry = self
            .modes
            .entry(k.to_vec())
            .or_insert_with(|| ModePoly::zero(self.n));
        *entry = entry.add(&c);
        if entry.is_zero() {
            self.modes.remove(k);
        }
    }

    /// Angle-independent part (`k = 0`, real coefficients).
    pub fn mean(mut self, p: ActionPolynomial) -> Self {
        let k0 = vec![0i32; self.n];
        self.accumulate(&k0, ModePoly::real(p));
        self
    }

    /// Adds `p(I) · cos(2π k·θ)`.
    pub fn cos(mut self, k: &[i32], p: ActionPolynomial) -> Self {
        let half = ModePoly::real(p.scale(0.5));
        let neg: Vec<i32> = k.iter().map(|x| -x).collect();
        self.accumulate(k, half.clone());
        self.accumulate(&neg, half);
        self
    }

    /// Adds `p(I) · sin(2π k·θ)`.
    pub fn sin(mut self, k: &[i32], p: ActionPolynomial) -> Self {
        // sin = (e^{+} − e^{−})/(2i): coefficient −i/2 at k, +i/2 at −k
        let n = self.n;
        let half_im = |s: f64| ModePoly {
            re: ActionPolynomial::zero(n),
            im: p.scale(s),
        };
        let neg: Vec<i32> = k.iter().map(|x| -x).collect();
        self.accumulate(k, half_im(-0.5));
        self.accumulate(&neg, half_im(0.5));
        self
    }

    /// Adds exactly one mode without the implied conjugate. The caller is
    /// responsible for keeping the reality invariant `c_{−k} = conj(c_k)`.
    pub fn complex_pair_raw(mut self, k: &[i32], c: ModePoly) -> Self {
        self.accumulate(k, c);
        self
    }

    /// Adds complex coefficient `re + i·im` at mode `k` and its conjugate at
    /// `−k`. For `k = 0`, `im` must be zero.
    pub fn complex_pair(mut self, k: &[i32], c: ModePoly) -> Self {
        if k.iter().all(|&x| x == 0) {
            assert!(c.im.is_zero(), "zero mode must be real");
            self.accumulate(k, c);
            return self;
        }
        let neg: Vec<i32> = k.iter().map(|x| -x).collect();
        self.accumulate(&neg, c.conj());
        self.accumulate(k, c);
        self
    }

    pub fn build(self) -> FourierTaylorField {
        FourierTaylorField {
            n: self.n,
            modes: self.modes,
            domain_radius: self.domain_radius,
            analyticity_width: self.analyticity_width,
        }
    }
}

impl FourierTaylorField {
    pub fn zero(n: usize) -> Self {
        FieldBuilder::new(n).build()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn domain_radius(&self) -> f64 {
        self.domain_radius
    }

    pub fn analyticity_width(&self) -> f64 {
        self.analyticity_width
    }

    pub fn modes(&self) -> impl Iterator<Item = (&Vec<i32>, &ModePoly)> {
        self.modes.iter()
    }

    pub fn mode(&self, k: &[i32]) -> Option<&ModePoly> {
        self.modes.get(k)
    }

    pub fn num_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn is_zero(&self) -> bool {
        self.modes.is_empty()
    }

    /// Largest `|k|∞` present; 0 for an angle-free field.
    pub fn max_wave(&self) -> u32 {
        self.modes
            .keys()
            .map(|k| k.iter().map(|x| x.unsigned_abs()).max().unwrap_or(0))
            .max()
            .unwrap_or(0)
    }

    /// True when every mode coefficient is constant in the actions, which is
    /// what the exact splitting integrator requires.
    pub fn is_angle_only(&self) -> bool {
        self.modes
            .values()
            .all(|c| c.re.degree() == 0 && c.im.degree() == 0)
    }

    pub fn check_domain(&self, actions: &[f64]) -> Result<(), ModelError> {
        if self.domain_radius.is_finite() {
            let sup = actions.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
            if sup > self.domain_radius {
                return Err(ModelError::DomainError {
                    actual: sup,
                    radius: self.domain_radius,
                });
            }
        }
        Ok(())
    }

    /// Largest reality defect `|c_{−k} − conj(c_k)|` over stored coefficients;
    /// 0.0 for every builder-constructed field.
    pub fn reality_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (k, c) in self.modes.iter() {
            let neg: Vec<i32> = k.iter().map(|x| -x).collect();
            let other = self.modes.get(&neg).cloned().unwrap_or_else(|| ModePoly::zero(self.n));
            let expect = c.conj();
            worst = worst.max(expect.re.coeff_sup_distance(&other.re));
            worst = worst.max(expect.im.coeff_sup_distance(&other.im));
        }
        worst
    }

    pub fn evaluate_complex(&self, theta: &[f64], actions: &[f64]) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (k, c) in self.modes.iter() {
            let phase: f64 = k
                .iter()
                .zip(theta.iter())
                .map(|(&ki, &ti)| f64::from(ki) * ti)
                .sum();
            acc += c.eval(actions) * Complex64::from_polar(1.0, TAU * phase);
        }
        acc
    }

    /// Real value of the field; the imaginary residue is rounding noise
    /// (`≤ 1e-14` in the test suite) by the reality invariant.
    pub fn evaluate(&self, theta: &[f64], actions: &[f64]) -> f64 {
        self.evaluate_complex(theta, actions).re
    }

    /// Field of `∂f/∂θ_j`: mode-wise multiplication by `2πi k_j`.
    pub fn deriv_theta(&self, j: usize) -> Self {
        let mut modes = BTreeMap::new();
        for (k, c) in self.modes.iter() {
            let factor = Complex64::new(0.0, TAU * f64::from(k[j]));
            let d = c.scale_complex(factor);
            if !d.is_zero() {
                modes.insert(k.clone(), d);
            }
        }
        Self {
            n: self.n,
            modes,
            domain_radius: self.domain_radius,
            analyticity_width: self.analyticity_width,
        }
    }

    /// Field of `∂f/∂I_j`: coefficient polynomials differentiated term-wise.
    pub fn deriv_action(&self, j: usize) -> Self {
        let mut modes = BTreeMap::new();
        for (k, c) in self.modes.iter() {
            let d = c.partial(j);
            if !d.is_zero() {
                modes.insert(k.clone(), d);
            }
        }
        Self {
            n: self.n,
            modes,
            domain_radius: self.domain_radius,
            analyticity_width: self.analyticity_width,
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        let mut modes = self.modes.clone();
        for (k, c) in other.modes.iter() {
            let entry = modes.entry(k.clone()).or_insert_with(|| ModePoly::zero(self.n));
            *entry = entry.add(c);
            if entry.is_zero() {
                modes.remove(k);
            }
        }
        Self {
            n: self.n,
            modes,
            domain_radius: self.domain_radius.min(other.domain_radius),
            analyticity_width: self.analyticity_width.min(other.analyticity_width),
        }
    }

    pub fn scale(&self, c: f64) -> Self {
        let mut modes = BTreeMap::new();
        if c != 0.0 {
            for (k, m) in self.modes.iter() {
                modes.insert(k.clone(), m.scale_complex(Complex64::new(c, 0.0)));
            }
        }
        Self {
            n: self.n,
            modes,
            domain_radius: self.domain_radius,
            analyticity_width: self.analyticity_width,
        }
    }

    /// Product field: wave vectors add, coefficient polynomials multiply.
    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        let mut modes: BTreeMap<Vec<i32>, ModePoly> = BTreeMap::new();
        for (ka, ca) in self.modes.iter() {
            for (kb, cb) in other.modes.iter() {
                let k: Vec<i32> = ka.iter().zip(kb.iter()).map(|(a, b)| a + b).collect();
                let prod = ca.mul(cb);
                let entry = modes.entry(k.clone()).or_insert_with(|| ModePoly::zero(self.n));
                *entry = entry.add(&prod);
                if entry.is_zero() {
                    modes.remove(&k);
                }
            }
        }
        Self {
            n: self.n,
            modes,
            domain_radius: self.domain_radius.min(other.domain_radius),
            analyticity_width: self.analyticity_width.min(other.analyticity_width),
        }
    }

    /// Partial average over the last `n−d` angles: keeps exactly the modes
    /// whose trailing `n−d` wave components vanish. Exact, no quadrature.
    pub fn partial_average(&self, d: usize) -> Result<Self, ModelError> {
        if d < 1 || d >= self.n {
            return Err(ModelError::InvalidAverageBlock { d, n: self.n });
        }
        let mut modes = BTreeMap::new();
        for (k, c) in self.modes.iter() {
            if k[d..].iter().all(|&x| x == 0) {
                modes.insert(k.clone(), c.clone());
            }
        }
        Ok(Self {
            n: self.n,
            modes,
            domain_radius: self.domain_radius,
            analyticity_width: self.analyticity_width,
        })
    }

    /// Full average over the torus: the `k = 0` coefficient, a real polynomial.
    pub fn full_average(&self) -> ActionPolynomial {
        let k0 = vec![0i32; self.n];
        match self.modes.get(&k0) {
            Some(c) => c.re.clone(),
            None => ActionPolynomial::zero(self.n),
        }
    }

    /// Coefficient-majorant upper bound for `sup |f|` on the complex
    /// neighbourhood of analyticity width `s` and action radius `r`:
    /// `Σ_k M_{c_k}(r) e^{2π |k|∞ s}`.
    pub fn weighted_norm(&self, s: f64, r: f64) -> f64 {
        self.modes
            .iter()
            .map(|(k, c)| {
                let kinf = k.iter().map(|x| x.unsigned_abs()).max().unwrap_or(0);
                c.majorant(r) * (TAU * f64::from(kinf) * s).exp()
            })
            .sum()
    }
}

/// `H(θ,I) = α·I + ε f(θ,I)`.
#[derive(Debug, Clone)]
pub struct Hamiltonian {
    alpha: FrequencyVector,
    epsilon: f64,
    f: FourierTaylorField,
}

impl Hamiltonian {
    pub fn new(
        alpha: FrequencyVector,
        epsilon: f64,
        f: FourierTaylorField,
    ) -> Result<Self, ModelError> {
        if alpha.n() != f.n() {
            return Err(ModelError::DimensionMismatch {
                expected: alpha.n(),
                got: f.n(),
            });
        }
        if !epsilon.is_finite() || epsilon < 0.0 {
            return Err(ModelError::BadEpsilon(epsilon));
        }
        Ok(Self { alpha, epsilon, f })
    }

    pub fn n(&self) -> usize {
        self.alpha.n()
    }

    pub fn alpha(&self) -> &FrequencyVector {
        &self.alpha
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn field(&self) -> &FourierTaylorField {
        &self.f
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self, ModelError> {
        Self::new(self.alpha.clone(), epsilon, self.f.clone())
    }

    pub fn evaluate(&self, theta: &[f64], actions: &[f64]) -> Result<f64, ModelError> {
        self.f.check_domain(actions)?;
        let lin: f64 = self
            .alpha
            .components()
            .iter()
            .zip(actions.iter())
            .map(|(a, i)| a * i)
            .sum();
        Ok(lin + self.epsilon * self.f.evaluate(theta, actions))
    }

    /// `∂H/∂θ`, exact term-wise.
    pub fn grad_theta(&self, theta: &[f64], actions: &[f64]) -> Result<Vec<f64>, ModelError> {
        self.f.check_domain(actions)?;
        let mut g = vec![0.0; self.n()];
        for (k, c) in self.f.modes.iter() {
            let phase: f64 = k
                .iter()
                .zip(theta.iter())
                .map(|(&ki, &ti)| f64::from(ki) * ti)
                .sum();
            let wave = c.eval(actions) * Complex64::from_polar(1.0, TAU * phase);
            for (j, &kj) in k.iter().enumerate() {
                if kj != 0 {
                    // Re(2πi k_j · wave) = −2π k_j · Im(wave)
                    g[j] -= self.epsilon * TAU * f64::from(kj) * wave.im;
                }
            }
        }
        Ok(g)
    }

    /// `∂H/∂I = α + ε ∂f/∂I`, exact term-wise.
    pub fn grad_actions(&self, theta: &[f64], actions: &[f64]) -> Result<Vec<f64>, ModelError> {
        self.f.check_domain(actions)?;
        let mut g = self.alpha.components().to_vec();
        for (k, c) in self.f.modes.iter() {
            let phase: f64 = k
                .iter()
                .zip(theta.iter())
                .map(|(&ki, &ti)| f64::from(ki) * ti)
                .sum();
            let e = Complex64::from_polar(1.0, TAU * phase);
            for j in 0..self.n() {
                let d = c.partial(j);
                if !d.is_zero() {
                    g[j] += self.epsilon * (d.eval(actions) * e).re;
                }
            }
        }
        Ok(g)
    }
}
