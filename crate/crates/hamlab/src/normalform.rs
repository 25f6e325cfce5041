//! First-order averaging.
//!
//! `solve_homological` removes the angle-dependent modes up to the cutoff by
//! mode-wise division, `χ_k = f_k / (2πi k·α)`; the defining identity
//! `α·∂_θχ = f_elim` then holds exactly term-wise. The transformation is
//! realised as the numerical time-ε flow of χ, so `remainder_probe` measures
//! the true composed Hamiltonian rather than a truncated series. A single
//! averaging step is performed; modes beyond the cutoff are left in place and
//! count toward the measured remainder.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::freq::{self, EnumerationLimits, FreqError, FrequencyVector};
use crate::model::{FieldBuilder, FourierTaylorField, Hamiltonian, ModelError};
use crate::symplectic::{self, SymplecticError};

const TAU: f64 = std::f64::consts::TAU;

#[derive(Debug, Error)]
pub enum NormalFormError {
    #[error("small divisor below tolerance at k = {k:?}: |k·α| = {value:.3e}")]
    SmallDivisorBelowTolerance { k: Vec<i32>, value: f64 },
    #[error("cutoff K = {0} exceeds the configured budget {1}")]
    CutoffTooLarge(u32, u64),
    #[error("resonant mode requires α = (0, α̃) with the first {d} components zero")]
    NotResonantForm { d: usize },
    #[error("probe count must be at least 1")]
    NoProbes,
    #[error(transparent)]
    Freq(#[from] FreqError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Symplectic(#[from] SymplecticError),
}

/// Which modes the averaging keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AveragingMode {
    /// Eliminate every mode `0 < |k|∞ ≤ K`; keep the full average.
    NonResonant,
    /// `α = (0, α̃)`: eliminate modes with fast components `k̃ ≠ 0` up to the
    /// cutoff; keep the partial average over the last `n − d` angles.
    Resonant { d: usize },
}

#[derive(Debug, Clone, Serialize)]
pub struct NormalFormResult {
    /// Generating field of the transformation.
    pub chi: FourierTaylorField,
    /// Kept part: the (partial or full) average of the perturbation.
    pub averaged: FourierTaylorField,
    pub cutoff: u32,
    pub mode: AveragingMode,
    /// Measured sup of `|H∘Φ − (α·I + ε·averaged)|` over the probe grid;
    /// `None` until `remainder_probe` has run.
    pub remainder_bound: Option<f64>,
    /// min |k·α| over the eliminated modes (infinite if nothing was eliminated).
    pub smallest_divisor: f64,
    /// Number of modes eliminated into χ.
    pub eliminated_modes: usize,
}

fn is_eliminated(k: &[i32], kinf: u32, cutoff: u32, mode: AveragingMode) -> bool {
    if kinf == 0 || kinf > cutoff {
        return false;
    }
    match mode {
        AveragingMode::NonResonant => true,
        AveragingMode::Resonant { d } => k[d..].iter().any(|&x| x != 0),
    }
}

/// Solve `α·∂_θχ = f_elim` mode-by-mode below the cutoff.
pub fn solve_homological(
    f: &FourierTaylorField,
    alpha: &FrequencyVector,
    cutoff: u32,
    mode: AveragingMode,
    limits: &EnumerationLimits,
) -> Result<NormalFormResult, NormalFormError> {
    assert!(cutoff >= 1);
    let n = f.n();
    assert_eq!(alpha.n(), n);
    // a cutoff beyond the enumerable range cannot be certified non-resonant
    let points = (2u128 * u128::from(cutoff) + 1).saturating_pow(n as u32);
    if points > u128::from(limits.budget) {
        return Err(NormalFormError::CutoffTooLarge(cutoff, limits.budget));
    }
    if let AveragingMode::Resonant { d } = mode {
        assert!(d >= 1 && d < n);
        if alpha.components()[..d].iter().any(|&a| a != 0.0) {
            return Err(NormalFormError::NotResonantForm { d });
        }
    }
    let mut chi = FieldBuilder::new(n)
        .domain_radius(f.domain_radius())
        .analyticity_width(f.analyticity_width());
    let mut averaged = FieldBuilder::new(n)
        .domain_radius(f.domain_radius())
        .analyticity_width(f.analyticity_width());
    let mut smallest = f64::INFINITY;
    let mut eliminated = 0usize;
    for (k, c) in f.modes() {
        let kinf = k.iter().map(|x| x.unsigned_abs()).max().unwrap_or(0);
        if is_eliminated(k, kinf, cutoff, mode) {
            let div: f64 = k
                .iter()
                .zip(alpha.components())
                .map(|(&ki, &ai)| f64::from(ki) * ai)
                .sum();
            if div.abs() <= limits.resonance_tol * f64::from(kinf) {
                return Err(NormalFormError::SmallDivisorBelowTolerance {
                    k: k.clone(),
                    value: div.abs(),
                });
            }
            smallest = smallest.min(div.abs());
            // χ_k = f_k / (2πi k·α)
            let factor = Complex64::new(0.0, TAU * div).inv();
            chi = chi.complex_pair_raw(k, c.scale_complex(factor));
            eliminated += 1;
        } else {
            averaged = averaged.complex_pair_raw(k, c.clone());
        }
    }
    Ok(NormalFormResult {
        chi: chi.build(),
        averaged: averaged.build(),
        cutoff,
        mode,
        remainder_bound: None,
        smallest_divisor: smallest,
        eliminated_modes: eliminated,
    })
}

/// `{f,g} = Σ_i ∂_{θ_i}f ∂_{I_i}g − ∂_{I_i}f ∂_{θ_i}g`, exact in the
/// Fourier–Taylor algebra.
pub fn poisson_bracket(f: &FourierTaylorField, g: &FourierTaylorField) -> FourierTaylorField {
    assert_eq!(f.n(), g.n());
    let n = f.n();
    let mut acc = FourierTaylorField::zero(n);
    for i in 0..n {
        let a = f.deriv_theta(i).mul(&g.deriv_action(i));
        let b = f.deriv_action(i).mul(&g.deriv_theta(i));
        acc = acc.add(&a).add(&b.scale(-1.0));
    }
    acc
}

/// `K = ⌊Δ_α(c/ε)⌋`, the affordable resonance-order cutoff.
pub fn choose_cutoff(
    alpha: &FrequencyVector,
    epsilon: f64,
    c: f64,
    limits: &EnumerationLimits,
) -> Result<u32, NormalFormError> {
    if !(epsilon > 0.0) {
        return Err(NormalFormError::Freq(FreqError::DomainError(
            "epsilon must be positive".into(),
        )));
    }
    let x = (c / epsilon).max(1.0);
    let d = freq::delta(alpha, x, limits)?;
    Ok(d.floor().max(1.0) as u32)
}

/// Flow probe points by the time-ε flow of χ and measure
/// `max |H∘Φ − (α·I + ε·averaged)|`. A measurement, not a bound.
pub fn remainder_probe(
    h: &Hamiltonian,
    nf: &NormalFormResult,
    probes: usize,
    seed: u64,
) -> Result<f64, NormalFormError> {
    if probes == 0 {
        return Err(NormalFormError::NoProbes);
    }
    let n = h.n();
    let eps = h.epsilon();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let radius = if h.field().domain_radius().is_finite() {
        h.field().domain_radius() / 2.0
    } else {
        0.5
    };
    let mut worst = 0.0f64;
    for _ in 0..probes {
        let theta: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let action: Vec<f64> = (0..n).map(|_| rng.gen_range(-radius..radius)).collect();
        let mapped = symplectic::flow_field(&nf.chi, eps, &theta, &action, 32)?;
        let composed = h.evaluate(&mapped.0, &mapped.1)?;
        let lin: f64 = h
            .alpha()
            .components()
            .iter()
            .zip(action.iter())
            .map(|(a, i)| a * i)
            .sum();
        let normal = lin + eps * nf.averaged.evaluate(&theta, &action);
        worst = worst.max((composed - normal).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::freq::golden_mean;
    use crate::model::ActionPolynomial;
    use approx::assert_relative_eq;

    fn golden() -> FrequencyVector {
        FrequencyVector::from_normalized(vec![1.0, golden_mean()]).unwrap()
    }

    fn limits() -> EnumerationLimits {
        EnumerationLimits::default()
    }

    #[test]
    fn single_mode_chi_is_scaled_sine() {
        // f = cos(2πθ1): χ = sin(2πθ1)/(2π α1), averaged = 0
        let f = FieldBuilder::new(2)
            .cos(&[1, 0], ActionPolynomial::constant(2, 1.0))
            .build();
        let nf = solve_homological(&f, &golden(), 1, AveragingMode::NonResonant, &limits()).unwrap();
        assert!(nf.averaged.is_zero());
        assert_eq!(nf.eliminated_modes, 2);
        assert_relative_eq!(nf.smallest_divisor, 1.0, max_relative = 1e-15);
        for theta in [[0.0, 0.0], [0.13, 0.7], [0.4, 0.9]] {
            let expect = (TAU * theta[0]).sin() / TAU;
            assert_relative_eq!(nf.chi.evaluate(&theta, &[0.0, 0.0]), expect, epsilon = 1e-14);
        }
    }

    #[test]
    fn angle_free_field_needs_no_transformation() {
        let f = FieldBuilder::new(2)
            .mean(ActionPolynomial::monomial(2, &[2, 0], 0.5))
            .build();
        let nf = solve_homological(&f, &golden(), 3, AveragingMode::NonResonant, &limits()).unwrap();
        assert!(nf.chi.is_zero());
        assert_eq!(nf.averaged, f);
        assert_eq!(nf.smallest_divisor, f64::INFINITY);
    }

    #[test]
    fn resonant_mode_keeps_partial_average() {
        // α = (0,1), f = cos(2πθ1) + cos(2πθ2):
        // averaged = cos(2πθ1), χ = sin(2πθ2)/(2π)
        let alpha = FrequencyVector::from_normalized(vec![0.0, 1.0]).unwrap();
        let f = FieldBuilder::new(2)
            .cos(&[1, 0], ActionPolynomial::constant(2, 1.0))
            .cos(&[0, 1], ActionPolynomial::constant(2, 1.0))
            .build();
        let nf =
            solve_homological(&f, &alpha, 1, AveragingMode::Resonant { d: 1 }, &limits()).unwrap();
        for theta in [[0.0, 0.0], [0.3, 0.21], [0.77, 0.5]] {
            assert_relative_eq!(
                nf.averaged.evaluate(&theta, &[0.0, 0.0]),
                (TAU * theta[0]).cos(),
                epsilon = 1e-14
            );
            assert_relative_eq!(
                nf.chi.evaluate(&theta, &[0.0, 0.0]),
                (TAU * theta[1]).sin() / TAU,
                epsilon = 1e-14
            );
        }
    }

    #[test]
    fn resonant_mode_rejects_wrong_alpha_shape() {
        let f = FieldBuilder::new(2)
            .cos(&[1, 0], ActionPolynomial::constant(2, 1.0))
            .build();
        let r = solve_homological(&f, &golden(), 1, AveragingMode::Resonant { d: 1 }, &limits());
        assert!(matches!(r, Err(NormalFormError::NotResonantForm { .. })));
    }

    #[test]
    fn small_divisor_is_rejected() {
        // resonant α in non-resonant mode: k = (1,-2) has k·α = 0
        let alpha = FrequencyVector::from_normalized(vec![1.0, 0.5]).unwrap();
        let f = FieldBuilder::new(2)
            .cos(&[1, -2], ActionPolynomial::constant(2, 1.0))
            .build();
        let r = solve_homological(&f, &alpha, 2, AveragingMode::NonResonant, &limits());
        match r {
            Err(NormalFormError::SmallDivisorBelowTolerance { k, value }) => {
                assert!(k == vec![1, -2] || k == vec![-1, 2]);
                assert_eq!(value, 0.0);
            }
            other => panic!("expected small-divisor error, got {other:?}"),
        }
    }

    #[test]
    fn homological_identity_holds_coefficientwise() {
        // α·∂θχ reproduces the eliminated part exactly, mode by mode
        let f = FieldBuilder::new(2)
            .cos(&[1, 0], ActionPolynomial::monomial(2, &[0, 1], 1.0))
            .sin(&[1, 1], ActionPolynomial::constant(2, 0.4))
            .cos(&[2, -1], ActionPolynomial::monomial(2, &[1, 0], 0.7))
            .build();
        let alpha = golden();
        let nf = solve_homological(&f, &alpha, 2, AveragingMode::NonResonant, &limits()).unwrap();
        // build α·∂θχ
        let mut lhs = FourierTaylorField::zero(2);
        for (i, &ai) in alpha.components().iter().enumerate() {
            lhs = lhs.add(&nf.chi.deriv_theta(i).scale(ai));
        }
        // compare coefficient-wise with f (all modes eliminated here)
        for (k, c) in f.modes() {
            let got = lhs.mode(k).expect("mode must be present");
            assert!(c.re.coeff_sup_distance(&got.re) <= 1e-14);
            assert!(c.im.coeff_sup_distance(&got.im) <= 1e-14);
        }
        // and the field-level identity at probe points
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..16 {
            let theta = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
            let act = [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)];
            let a = lhs.evaluate(&theta, &act) + nf.averaged.evaluate(&theta, &act);
            let b = f.evaluate(&theta, &act);
            assert!((a - b).abs() <= 1e-13, "identity defect {}", (a - b).abs());
        }
    }

    #[test]
    fn poisson_canonical_pair() {
        // {I1, cos(2πθ1)} = 2π sin(2πθ1)
        let i1 = FieldBuilder::new(2)
            .mean(ActionPolynomial::monomial(2, &[1, 0], 1.0))
            .build();
        let cosf = FieldBuilder::new(2)
            .cos(&[1, 0], ActionPolynomial::constant(2, 1.0))
            .build();
        let pb = poisson_bracket(&i1, &cosf);
        for theta in [[0.0, 0.0], [0.2, 0.5], [0.85, 0.1]] {
            assert_relative_eq!(
                pb.evaluate(&theta, &[0.3, 0.4]),
                TAU * (TAU * theta[0]).sin(),
                epsilon = 1e-13
            );
        }
    }

    #[test]
    fn poisson_antisymmetry() {
        let f = FieldBuilder::new(2)
            .cos(&[1, 0], ActionPolynomial::monomial(2, &[0, 1], 1.0))
            .sin(&[0, 1], ActionPolynomial::constant(2, 0.5))
            .build();
        let g = FieldBuilder::new(2)
            .cos(&[1, 1], ActionPolynomial::monomial(2, &[1, 0], 0.3))
            .mean(ActionPolynomial::monomial(2, &[0, 2], 1.0))
            .build();
        let fg = poisson_bracket(&f, &g);
        let gf = poisson_bracket(&g, &f);
        assert_eq!(fg.add(&gf), FourierTaylorField::zero(2).add(&FourierTaylorField::zero(2)));
        assert!(poisson_bracket(&f, &f).is_zero());
    }

    #[test]
    fn poisson_with_linear_part_recovers_homological_lhs() {
        // {α·I, χ} = −α·∂θχ
        let alpha = golden();
        let lin = FieldBuilder::new(2)
            .mean(ActionPolynomial::linear(alpha.components()))
            .build();
        let chi = FieldBuilder::new(2)
            .sin(&[1, 1], ActionPolynomial::monomial(2, &[1, 0], 0.9))
            .build();
        let pb = poisson_bracket(&lin, &chi);
        let mut rhs = FourierTaylorField::zero(2);
        for (i, &ai) in alpha.components().iter().enumerate() {
            rhs = rhs.add(&chi.deriv_theta(i).scale(-ai));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..16 {
            let theta = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
            let act = [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)];
            assert_relative_eq!(
                pb.evaluate(&theta, &act),
                rhs.evaluate(&theta, &act),
                epsilon = 1e-13
            );
        }
    }

    #[test]
    fn choose_cutoff_examples() {
        let lim = limits();
        let a = golden();
        // ε = 1/3, c = 1: Δ(3) = 3/φ² ≈ 1.146 → K = 1
        assert_eq!(choose_cutoff(&a, 1.0 / 3.0, 1.0, &lim).unwrap(), 1);
        // x = 2Ψ(2): Δ = 2 → K = 2
        let psi2 = freq::psi(&a, 2.0, &lim).unwrap();
        assert_eq!(choose_cutoff(&a, 1.0 / (2.0 * psi2), 1.0, &lim).unwrap(), 2);
        // monotone: larger ε gives smaller or equal K
        let k_small = choose_cutoff(&a, 1e-3, 1.0, &lim).unwrap();
        let k_large = choose_cutoff(&a, 1e-2, 1.0, &lim).unwrap();
        assert!(k_large <= k_small);
    }

    #[test]
    fn smallest_divisor_consistent_with_psi() {
        let a = golden();
        let lim = limits();
        let f = FieldBuilder::new(2)
            .cos(&[1, 0], ActionPolynomial::constant(2, 1.0))
            .cos(&[1, -1], ActionPolynomial::constant(2, 1.0))
            .cos(&[2, -1], ActionPolynomial::constant(2, 0.5))
            .build();
        let k = 2;
        let nf = solve_homological(&f, &a, k, AveragingMode::NonResonant, &lim).unwrap();
        let psi_k = freq::psi(&a, f64::from(k), &lim).unwrap();
        assert!(nf.smallest_divisor >= 1.0 / psi_k - 1e-15);
    }

    #[test]
    fn remainder_vanishes_in_trivial_cases() {
        let a = golden();
        let lim = limits();
        // ε = 0
        let f = FieldBuilder::new(2)
            .cos(&[1, 0], ActionPolynomial::constant(2, 1.0))
            .build();
        let nf = solve_homological(&f, &a, 1, AveragingMode::NonResonant, &lim).unwrap();
        let h0 = Hamiltonian::new(a.clone(), 0.0, f.clone()).unwrap();
        assert!(remainder_probe(&h0, &nf, 8, 1).unwrap() <= 1e-14);
        // angle-free f: χ = 0, Φ = identity
        let g = FieldBuilder::new(2)
            .mean(ActionPolynomial::monomial(2, &[2, 0], 0.5))
            .build();
        let nfg = solve_homological(&g, &a, 1, AveragingMode::NonResonant, &lim).unwrap();
        let hg = Hamiltonian::new(a.clone(), 1e-2, g.clone()).unwrap();
        assert!(remainder_probe(&hg, &nfg, 8, 1).unwrap() <= 1e-14);
    }

    #[test]
    fn resonant_averaging_in_three_degrees_of_freedom() {
        // α = (0, 1, g): slow angle θ1, non-resonant fast block (1, g)
        let g = golden_mean();
        let alpha = FrequencyVector::from_normalized(vec![0.0, 1.0, g]).unwrap();
        let mut slow_coeff = ActionPolynomial::constant(3, 1.0);
        slow_coeff.add_term(&[0, 1, 0], 1.0);
        let f = FieldBuilder::new(3)
            .cos(&[1, 0, 0], slow_coeff)
            .cos(&[0, 1, 1], ActionPolynomial::constant(3, 1.0))
            .build();
        let nf =
            solve_homological(&f, &alpha, 2, AveragingMode::Resonant { d: 1 }, &limits()).unwrap();
        // the slow mode survives untouched, the fast mode moves into χ
        assert!(nf.averaged.mode(&[1, 0, 0]).is_some());
        assert!(nf.averaged.mode(&[0, 1, 1]).is_none());
        assert_eq!(nf.eliminated_modes, 2);
        assert_relative_eq!(nf.smallest_divisor, 1.0 + g, max_relative = 1e-15);
        let theta = [0.3, 0.7, 0.11];
        assert_relative_eq!(
            nf.chi.evaluate(&theta, &[0.0; 3]),
            (TAU * (theta[1] + theta[2])).sin() / (TAU * (1.0 + g)),
            epsilon = 1e-14
        );
        // cutoff rule for the fast block uses its own arithmetic
        let tilde = FrequencyVector::from_normalized(vec![1.0, g]).unwrap();
        assert_eq!(choose_cutoff(&tilde, 1.0 / 3.0, 1.0, &limits()).unwrap(), 1);
    }

    #[test]
    fn cutoff_budget_is_enforced() {
        let a = golden();
        let lim = EnumerationLimits {
            budget: 10_000,
            ..Default::default()
        };
        let f = FieldBuilder::new(2)
            .cos(&[1, 0], ActionPolynomial::constant(2, 1.0))
            .build();
        match solve_homological(&f, &a, 5_000, AveragingMode::NonResonant, &lim) {
            Err(NormalFormError::CutoffTooLarge(5_000, 10_000)) => {}
            other => panic!("expected cutoff budget error, got {other:?}"),
        }
        // and delta itself refuses to walk past the lattice budget
        match freq::delta(&a, 1e12, &lim) {
            Err(FreqError::EnumerationBudgetExceeded { .. }) => {}
            other => panic!("expected budget error, got {other:?}"),
        }
    }

    #[test]
    fn remainder_scales_quadratically_in_epsilon() {
        // single golden-frequency mode with action-dependent coefficient
        let a = golden();
        let lim = limits();
        let mut coeff = ActionPolynomial::constant(2, 1.0);
        coeff.add_term(&[1, 0], 0.5);
        let f = FieldBuilder::new(2).cos(&[1, 1], coeff).build();
        let probe = |eps: f64| -> f64 {
            let h = Hamiltonian::new(a.clone(), eps, f.clone()).unwrap();
            let nf = solve_homological(&f, &a, 1, AveragingMode::NonResonant, &lim).unwrap();
            remainder_probe(&h, &nf, 24, 7).unwrap()
        };
        for eps in [1e-2, 1e-3] {
            let ratio = probe(eps) / probe(eps / 2.0);
            assert!(
                (3.0..=5.0).contains(&ratio),
                "first-order remainder should scale ~4x, got {ratio} at eps={eps}"
            );
        }
    }
}
