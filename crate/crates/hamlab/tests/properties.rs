//! Property tests for the structural invariants: monotonicity and symmetry
//! of the arithmetic functions, projection identities of averaging, algebra
//! identities of the Poisson bracket, and format round trips.

use proptest::prelude::*;

use hamlab::experiment::fmt_f64;
use hamlab::freq::{self, EnumerationLimits, FrequencyVector};
use hamlab::model::{
    load_model, save_model, ActionPolynomial, FieldBuilder, FourierTaylorField, ModePoly,
};
use hamlab::normalform::poisson_bracket;
use hamlab::steepness::maxmin_curve;

fn limits() -> EnumerationLimits {
    EnumerationLimits::default()
}

/// Normalised non-resonant frequency vectors (resonant draws are discarded).
fn nonresonant_alpha(n: usize) -> impl Strategy<Value = FrequencyVector> {
    prop::collection::vec(-1.0f64..1.0, n).prop_filter_map("non-resonant", |v| {
        let a = FrequencyVector::normalize(&v).ok()?;
        freq::psi(&a, 12.0, &limits()).ok()?;
        Some(a)
    })
}

fn small_poly() -> impl Strategy<Value = ActionPolynomial> {
    prop::collection::vec(((0u32..3, 0u32..3), -1.0f64..1.0), 0..4).prop_map(|terms| {
        let mut p = ActionPolynomial::zero(2);
        for ((e1, e2), c) in terms {
            p.add_term(&[e1, e2], c);
        }
        p
    })
}

fn small_field() -> impl Strategy<Value = FourierTaylorField> {
    let mode = ((-2i32..=2, -2i32..=2), small_poly(), small_poly());
    prop::collection::vec(mode, 0..4).prop_map(|modes| {
        let mut b = FieldBuilder::new(2);
        for ((k1, k2), re, im) in modes {
            let k = [k1, k2];
            if k == [0, 0] {
                b = b.mean(re);
            } else {
                b = b.complex_pair(&k, ModePoly { re, im });
            }
        }
        b.build()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn psi_is_monotone_in_q(alpha in nonresonant_alpha(2), q1 in 1u32..10, q2 in 1u32..10) {
        let (lo, hi) = (q1.min(q2), q1.max(q2));
        let a = freq::psi(&alpha, f64::from(lo), &limits()).unwrap();
        let b = freq::psi(&alpha, f64::from(hi), &limits()).unwrap();
        prop_assert!(a <= b);
    }

    #[test]
    fn delta_is_monotone_and_galois_consistent(alpha in nonresonant_alpha(2), x1 in 1.0f64..200.0, x2 in 1.0f64..200.0, q in 1u32..8) {
        let (lo, hi) = (x1.min(x2), x1.max(x2));
        let a = freq::delta(&alpha, lo, &limits()).unwrap();
        let b = freq::delta(&alpha, hi, &limits()).unwrap();
        prop_assert!(a <= b);
        let psi_q = freq::psi(&alpha, f64::from(q), &limits()).unwrap();
        let d = freq::delta(&alpha, f64::from(q) * psi_q, &limits()).unwrap();
        prop_assert!(d >= f64::from(q), "delta(QΨ(Q)) = {d} < {q}");
    }

    #[test]
    fn psi_symmetries(alpha in nonresonant_alpha(3), q in 1u32..6) {
        let v = freq::psi(&alpha, f64::from(q), &limits()).unwrap();
        // negation is bit-exact: IEEE rounding is symmetric about zero
        let neg: Vec<f64> = alpha.components().iter().map(|x| -x).collect();
        let neg = FrequencyVector::from_normalized(neg).unwrap();
        prop_assert_eq!(v.to_bits(), freq::psi(&neg, f64::from(q), &limits()).unwrap().to_bits());
        // Permutations reassociate the dot-product sum, so the minima may
        // differ by a few ulps of the largest partial sum (up to n·Q); the
        // discrepancy of Ψ itself is that error amplified by cancellation.
        let mut perm = alpha.components().to_vec();
        perm.rotate_left(1);
        let perm = FrequencyVector::from_normalized(perm).unwrap();
        let w = freq::psi(&perm, f64::from(q), &limits()).unwrap();
        let sum_scale = 3.0 * f64::from(q);
        prop_assert!(
            (1.0 / v - 1.0 / w).abs() <= 32.0 * f64::EPSILON * sum_scale,
            "divisor minima differ: {} vs {}",
            1.0 / v,
            1.0 / w
        );
    }

    #[test]
    fn averaging_projections_are_idempotent_and_commute(f in small_field()) {
        let avg = f.partial_average(1).unwrap();
        prop_assert_eq!(avg.partial_average(1).unwrap(), avg.clone());
        prop_assert_eq!(
            avg.full_average(),
            f.full_average()
        );
        // commutes with the action derivative
        prop_assert_eq!(
            f.deriv_action(0).partial_average(1).unwrap(),
            f.partial_average(1).unwrap().deriv_action(0)
        );
        // the average of an angle derivative vanishes
        prop_assert!(f.deriv_theta(0).full_average().is_zero());
    }

    #[test]
    fn poisson_bracket_is_antisymmetric_and_bilinear(f in small_field(), g in small_field(), c in -2.0f64..2.0) {
        let fg = poisson_bracket(&f, &g);
        let gf = poisson_bracket(&g, &f);
        let scale = 1.0 + fg.weighted_norm(0.0, 1.0);
        prop_assert!(fg.add(&gf).weighted_norm(0.0, 1.0) <= 1e-12 * scale);
        prop_assert!(poisson_bracket(&f, &f).weighted_norm(0.0, 1.0) <= 1e-12 * scale);
        // {c·f, g} = c·{f, g} holds coefficient-wise up to rounding
        let lhs = poisson_bracket(&f.scale(c), &g);
        let rhs = fg.scale(c);
        let diff = lhs.add(&rhs.scale(-1.0));
        prop_assert!(diff.weighted_norm(0.0, 1.0) <= 1e-12 * (1.0 + fg.weighted_norm(0.0, 1.0)));
    }

    #[test]
    fn reality_holds_for_built_fields(f in small_field(), t1 in 0.0f64..1.0, t2 in 0.0f64..1.0) {
        prop_assert_eq!(f.reality_defect(), 0.0);
        let z = f.evaluate_complex(&[t1, t2], &[0.3, -0.2]);
        prop_assert!(z.im.abs() <= 1e-13);
    }

    #[test]
    fn restrict_is_linear_and_exact(p in small_poly(), q in small_poly(), a in -2.0f64..2.0, angle in 0.0f64..std::f64::consts::PI, x in -1.0f64..1.0) {
        let basis = vec![vec![angle.cos(), angle.sin()]];
        let combined = hamlab::steepness::restrict(&p.scale(a).add(&q), &basis).unwrap();
        let separate = hamlab::steepness::restrict(&p, &basis).unwrap().scale(a)
            .add(&hamlab::steepness::restrict(&q, &basis).unwrap());
        let scale = 1.0 + separate.majorant(1.0);
        prop_assert!(combined.add(&separate.scale(-1.0)).majorant(1.0) <= 1e-12 * scale);
        // evaluating the restriction equals evaluating the ambient polynomial
        let ambient = p.eval(&[basis[0][0] * x, basis[0][1] * x]);
        let restricted = hamlab::steepness::restrict(&p, &basis).unwrap().eval(&[x]);
        prop_assert!((ambient - restricted).abs() <= 1e-12 * (1.0 + ambient.abs()));
    }

    #[test]
    fn maxmin_is_positively_homogeneous(p in small_poly(), c in 0.1f64..5.0) {
        let base = maxmin_curve(&p, 0.2, 16, 32);
        let scaled = maxmin_curve(&p.scale(c), 0.2, 16, 32);
        prop_assert!((scaled - c * base).abs() <= 1e-10 * (1.0 + base));
    }

    #[test]
    fn model_files_round_trip(f in small_field(), a in nonresonant_alpha(2)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        save_model(&path, &a, &f).unwrap();
        let (a2, f2) = load_model(&path).unwrap();
        prop_assert_eq!(a.components(), a2.components());
        prop_assert_eq!(f, f2);
    }

    #[test]
    fn float_format_round_trips(x in prop::num::f64::NORMAL) {
        let printed = fmt_f64(x);
        let back: f64 = printed.parse().unwrap();
        prop_assert_eq!(back.to_bits(), x.to_bits());
    }
}
