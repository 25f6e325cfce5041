//! Arithmetic on frequency vectors: the small-divisor profile `Ψ_α`, the
//! affordable-cutoff function `Δ_α`, resonance detection and Diophantine
//! certificates.
//!
//! `Ψ_α(Q) = max { |k·α|⁻¹ : k ∈ Zⁿ, 0 < |k|∞ ≤ Q }` is computed by full
//! lattice enumeration (halved by the `k ↔ −k` symmetry, which is exact in
//! IEEE arithmetic), never by sampling: the value is exact or the operation
//! fails loudly. `Δ_α(x) = sup { Q ≥ 1 : Q Ψ_α(Q) ≤ x }` is solved in closed
//! form from the piecewise-constant extension `Ψ_α(Q) = Ψ_α(⌊Q⌋)`.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FreqError {
    #[error("frequency vector must be nonzero")]
    ZeroVector,
    #[error("frequency vectors need n >= 2 components, got {0}")]
    DimensionTooSmall(usize),
    #[error("frequency vector is not sup-norm normalized (max |component| = {0})")]
    NotNormalized(f64),
    #[error("resonant within enumeration range: k = {witness:?}, |k·α| = {value:.3e}")]
    ResonantWithinRange { witness: Vec<i64>, value: f64 },
    #[error("lattice enumeration budget exceeded: needs {required} points, budget {budget}")]
    EnumerationBudgetExceeded { required: u128, budget: u64 },
    #[error("argument out of domain: {0}")]
    DomainError(String),
}

/// Frequency vector `α ∈ Rⁿ`, optionally sup-norm normalised (`max|α_i| = 1`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrequencyVector {
    components: Vec<f64>,
    normalized: bool,
}

impl FrequencyVector {
    /// Scale `v` by its largest-magnitude component, so `max_i |v_i| = 1`.
    pub fn normalize(v: &[f64]) -> Result<Self, FreqError> {
        if v.len() < 2 {
            return Err(FreqError::DimensionTooSmall(v.len()));
        }
        let max = v.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
        if max == 0.0 {
            return Err(FreqError::ZeroVector);
        }
        Ok(Self {
            components: v.iter().map(|&x| x / max).collect(),
            normalized: true,
        })
    }

    /// Accept an already-normalised vector; rejects if `max|v_i|` is off 1 by
    /// more than one ulp.
    pub fn from_normalized(v: Vec<f64>) -> Result<Self, FreqError> {
        if v.len() < 2 {
            return Err(FreqError::DimensionTooSmall(v.len()));
        }
        let max = v.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
        if max == 0.0 {
            return Err(FreqError::ZeroVector);
        }
        if (max - 1.0).abs() > f64::EPSILON {
            return Err(FreqError::NotNormalized(max));
        }
        Ok(Self {
            components: v,
            normalized: true,
        })
    }

    pub fn n(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[f64] {
        &self.components
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Number of leading components that are exactly zero (the resonant block
    /// size `d` for vectors of the form `α = (0, α̃)`).
    pub fn leading_zeros(&self) -> usize {
        self.components.iter().take_while(|&&x| x == 0.0).count()
    }

    pub fn dot_int(&self, k: &[i64]) -> f64 {
        debug_assert_eq!(k.len(), self.components.len());
        let mut acc = 0.0;
        for (ki, ai) in k.iter().zip(self.components.iter()) {
            acc += (*ki as f64) * ai;
        }
        acc
    }
}

/// Knobs shared by the enumeration operations.
#[derive(Debug, Clone, Copy)]
pub struct EnumerationLimits {
    /// Hard cap on `(2⌊Q⌋+1)ⁿ`; past it the operation fails rather than
    /// subsample.
    pub budget: u64,
    /// A divisor `|k·α| <= resonance_tol · |k|∞` counts as an exact resonance.
    pub resonance_tol: f64,
}

impl Default for EnumerationLimits {
    fn default() -> Self {
        Self {
            budget: 100_000_000,
            resonance_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ResonanceReport {
    pub resonant: bool,
    pub witness: Option<Vec<i64>>,
    /// The smallest `|k·α|` attained over the searched range.
    pub witness_value: f64,
    pub q_searched: u32,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiophantineCertificate {
    /// `min` of `|k·α| · |k|∞^τ` over the searched range.
    pub gamma: f64,
    pub tau: f64,
    pub q_max: u32,
    /// Running minimum per shell radius `Q`.
    pub margin_curve: Vec<(u32, f64)>,
}

/// Visit every lattice point with `|k|∞ = radius` and first nonzero component
/// positive (one representative per `{k, −k}` pair). The partition below is
/// exact: `lead` is the first index carrying `±radius`.
fn for_each_shell_point(n: usize, radius: i64, mut visit: impl FnMut(&[i64])) {
    assert!(radius >= 1);
    let mut k = vec![0i64; n];
    for lead in 0..n {
        // components before `lead` range in (-radius, radius), `lead` itself
        // is ±radius, the rest ranges in [-radius, radius].
        fn rec(
            k: &mut Vec<i64>,
            i: usize,
            lead: usize,
            radius: i64,
            visit: &mut impl FnMut(&[i64]),
        ) {
            if i == k.len() {
                // canonical representative: first nonzero component positive
                if k.iter().find(|&&x| x != 0).map(|&x| x > 0).unwrap_or(false) {
                    visit(k);
                }
                return;
            }
            if i == lead {
                for v in [-radius, radius] {
                    k[i] = v;
                    rec(k, i + 1, lead, radius, visit);
                }
            } else {
                let bound = if i < lead { radius - 1 } else { radius };
                for v in -bound..=bound {
                    k[i] = v;
                    rec(k, i + 1, lead, radius, visit);
                }
            }
            k[i] = 0;
        }
        rec(&mut k, 0, lead, radius, &mut visit);
    }
}

fn lattice_points(n: usize, q: u32) -> u128 {
    let side = 2u128 * u128::from(q) + 1;
    let mut p = 1u128;
    for _ in 0..n {
        p = p.saturating_mul(side);
    }
    p
}

fn check_budget(n: usize, q: u32, limits: &EnumerationLimits) -> Result<(), FreqError> {
    let required = lattice_points(n, q);
    if required > u128::from(limits.budget) {
        return Err(FreqError::EnumerationBudgetExceeded {
            required,
            budget: limits.budget,
        });
    }
    Ok(())
}

fn require_normalized(alpha: &FrequencyVector) -> Result<(), FreqError> {
    if !alpha.is_normalized() {
        let max = alpha
            .components()
            .iter()
            .fold(0.0f64, |m, &x| m.max(x.abs()));
        return Err(FreqError::NotNormalized(max));
    }
    Ok(())
}

/// Dyadic decomposition `x = mant · 2^exp` with integer `mant`. Exact for
/// every finite f64, so integer arithmetic on the numerators decides
/// `k·α = 0` without any tolerance.
fn dyadic(x: f64) -> (i64, i32) {
    if x == 0.0 {
        return (0, 0);
    }
    let bits = x.to_bits();
    let sign = if bits >> 63 == 1 { -1i64 } else { 1 };
    let biased = ((bits >> 52) & 0x7ff) as i32;
    let frac = bits & ((1u64 << 52) - 1);
    let (mant, exp) = if biased == 0 {
        (frac as i64, -1074) // subnormal
    } else {
        ((frac | (1u64 << 52)) as i64, biased - 1075)
    };
    (sign * mant, exp)
}

/// Exact-rational resonance test: returns `Some(true)` iff `k·α` is exactly
/// zero as a real number, `None` when the exponent spread overflows i128.
fn exact_dot_is_zero(k: &[i64], alpha: &[f64]) -> Option<bool> {
    let parts: Vec<(i64, i32)> = alpha.iter().map(|&a| dyadic(a)).collect();
    let min_exp = parts
        .iter()
        .filter(|(m, _)| *m != 0)
        .map(|&(_, e)| e)
        .min()?;
    let mut acc: i128 = 0;
    for (&ki, &(m, e)) in k.iter().zip(parts.iter()) {
        if m == 0 || ki == 0 {
            continue;
        }
        let shift = e - min_exp;
        if shift > 70 {
            return None; // numerator would overflow; fall back to floating point
        }
        let scaled = i128::from(m).checked_shl(shift as u32)?;
        acc = acc.checked_add(i128::from(ki).checked_mul(scaled)?)?;
    }
    Some(acc == 0)
}

struct ShellScan {
    /// min |k·α| so far and its witness
    min_value: f64,
    witness: Vec<i64>,
    /// an exactly-zero integer relation was found
    exact_zero: bool,
}

fn scan_shell(alpha: &FrequencyVector, radius: i64, scan: &mut ShellScan) {
    let comps = alpha.components();
    for_each_shell_point(alpha.n(), radius, |k| {
        let d = alpha.dot_int(k).abs();
        if d < scan.min_value {
            scan.min_value = d;
            scan.witness = k.to_vec();
        }
        if d < 1e-9 && exact_dot_is_zero(k, comps) == Some(true) {
            scan.exact_zero = true;
            scan.min_value = 0.0;
            scan.witness = k.to_vec();
        }
    });
}

fn resonance_threshold(limits: &EnumerationLimits, witness: &[i64]) -> f64 {
    let kinf = witness.iter().map(|k| k.abs()).max().unwrap_or(1) as f64;
    limits.resonance_tol * kinf
}

/// `Ψ_α(Q)`: exact maximum of `|k·α|⁻¹` over `0 < |k|∞ ≤ ⌊Q⌋`.
pub fn psi(alpha: &FrequencyVector, q: f64, limits: &EnumerationLimits) -> Result<f64, FreqError> {
    require_normalized(alpha)?;
    if !(q >= 1.0) {
        return Err(FreqError::DomainError(format!("Q must be >= 1, got {q}")));
    }
    let qf = q.floor().min(u32::MAX as f64) as u32;
    check_budget(alpha.n(), qf, limits)?;
    let mut scan = ShellScan {
        min_value: f64::INFINITY,
        witness: Vec::new(),
        exact_zero: false,
    };
    for radius in 1..=i64::from(qf) {
        scan_shell(alpha, radius, &mut scan);
    }
    if scan.exact_zero || scan.min_value <= resonance_threshold(limits, &scan.witness) {
        return Err(FreqError::ResonantWithinRange {
            witness: scan.witness,
            value: scan.min_value,
        });
    }
    Ok(1.0 / scan.min_value)
}

/// `Δ_α(x) = sup { Q ≥ 1 : Q Ψ_α(Q) ≤ x }` with `Ψ_α` extended
/// piecewise-constant between integers, solved shell by shell.
///
/// When even `Q = 1` is unaffordable (`x < Ψ_α(1)`) the defining set is empty
/// and the domain boundary 1 is returned.
pub fn delta(alpha: &FrequencyVector, x: f64, limits: &EnumerationLimits) -> Result<f64, FreqError> {
    require_normalized(alpha)?;
    if !(x >= 1.0) {
        return Err(FreqError::DomainError(format!("x must be >= 1, got {x}")));
    }
    let mut scan = ShellScan {
        min_value: f64::INFINITY,
        witness: Vec::new(),
        exact_zero: false,
    };
    let mut j: u32 = 1;
    check_budget(alpha.n(), 1, limits)?;
    scan_shell(alpha, 1, &mut scan);
    loop {
        if scan.exact_zero || scan.min_value <= resonance_threshold(limits, &scan.witness) {
            return Err(FreqError::ResonantWithinRange {
                witness: scan.witness,
                value: scan.min_value,
            });
        }
        let psi_j = 1.0 / scan.min_value;
        // Membership tests use the same product the set definition does, so
        // boundary inputs x = Q·Ψ(Q) resolve consistently at the ulp level.
        if f64::from(j) * psi_j > x {
            // Piece [j, j+1) starts outside the set. For j = 1 the set is
            // empty (clamp to the domain boundary); otherwise the previous
            // pieces filled [1, j) and the sup is its right endpoint.
            return Ok(if j == 1 { 1.0 } else { f64::from(j) });
        }
        if f64::from(j + 1) * psi_j <= x {
            // the whole piece [j, j+1) is in the set; move to the next shell
            check_budget(alpha.n(), j + 1, limits)?;
            scan_shell(alpha, i64::from(j) + 1, &mut scan);
            j += 1;
            continue;
        }
        // piece j is the last one: sup = x/Ψ(j), kept within [j, j+1]
        return Ok((x / psi_j).clamp(f64::from(j), f64::from(j + 1)));
    }
}

/// Minimiser of `|k·α|` over `0 < |k|∞ ≤ q_max`; resonant iff the minimum is
/// at or below `tol` (or an exact integer relation is found).
pub fn find_resonance(
    alpha: &FrequencyVector,
    q_max: u32,
    tol: f64,
    limits: &EnumerationLimits,
) -> Result<ResonanceReport, FreqError> {
    require_normalized(alpha)?;
    if q_max < 1 {
        return Err(FreqError::DomainError("q_max must be >= 1".into()));
    }
    if !(tol > 0.0) {
        return Err(FreqError::DomainError("tol must be > 0".into()));
    }
    check_budget(alpha.n(), q_max, limits)?;
    let mut scan = ShellScan {
        min_value: f64::INFINITY,
        witness: Vec::new(),
        exact_zero: false,
    };
    for radius in 1..=i64::from(q_max) {
        scan_shell(alpha, radius, &mut scan);
    }
    Ok(ResonanceReport {
        resonant: scan.exact_zero || scan.min_value <= tol,
        witness: Some(scan.witness),
        witness_value: scan.min_value,
        q_searched: q_max,
    })
}

/// Diophantine certificate: `γ = min |k·α| · |k|∞^τ` over `0 < |k|∞ ≤ q_max`.
///
/// With this `γ`, `Ψ_α(Q) ≤ γ⁻¹ Q^τ` holds for every `Q ≤ q_max`, which is
/// the certified range of the `(γ,τ)` condition.
pub fn diophantine_certificate(
    alpha: &FrequencyVector,
    tau: f64,
    q_max: u32,
    limits: &EnumerationLimits,
) -> Result<DiophantineCertificate, FreqError> {
    require_normalized(alpha)?;
    if !(tau > 0.0) {
        return Err(FreqError::DomainError("tau must be > 0".into()));
    }
    if q_max < 1 {
        return Err(FreqError::DomainError("q_max must be >= 1".into()));
    }
    check_budget(alpha.n(), q_max, limits)?;
    let mut gamma = f64::INFINITY;
    let mut curve = Vec::new();
    for radius in 1..=i64::from(q_max) {
        let mut scan = ShellScan {
            min_value: f64::INFINITY,
            witness: Vec::new(),
            exact_zero: false,
        };
        scan_shell(alpha, radius, &mut scan);
        if scan.exact_zero || scan.min_value <= resonance_threshold(limits, &scan.witness) {
            return Err(FreqError::ResonantWithinRange {
                witness: scan.witness,
                value: scan.min_value,
            });
        }
        let scaled = scan.min_value * (radius as f64).powf(tau);
        gamma = gamma.min(scaled);
        curve.push((radius as u32, gamma));
    }
    Ok(DiophantineCertificate {
        gamma,
        tau,
        q_max,
        margin_curve: curve,
    })
}

/// Golden-mean fractional part `(√5 − 1)/2`, used across the test suite.
pub fn golden_mean() -> f64 {
    (5.0f64.sqrt() - 1.0) / 2.0
}
