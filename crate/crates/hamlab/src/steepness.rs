//! Genericity condition checks for averaged perturbations.
//!
//! `check_stably_steep` is a sampling-based falsification/corroboration
//! procedure for the stable-steepness condition on jets in `P₂(n,m)`: it
//! sweeps subspace dimensions `l ∈ [1, n−1]`, sampled subspaces (coordinate
//! frames, quasi-uniform frames and seeded random frames), sampled
//! perturbations on the coefficient ρ-sphere plus the centre, and a geometric
//! ζ grid, requiring `max_{0≤η≤ζ} min_{|x|=η} |∇P_Λ(x)| > C ζ^{m−1}`
//! everywhere. An accepted verdict is corroboration, not proof; a rejection
//! always carries a concrete witness that re-evaluates to a violation.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::freq::FrequencyVector;
use crate::model::{
    taylor_jet, ActionPolynomial, FourierTaylorField, JetPolynomial, ModelError, PolyError,
};

const TAU: f64 = std::f64::consts::TAU;

#[derive(Debug, Error)]
pub enum SteepnessError {
    #[error("basis is not orthonormal (defect {0:.3e})")]
    BasisNotOrthonormal(f64),
    #[error("sampling budget exceeded: needs about {required} evaluations, budget {budget}")]
    SamplingBudgetExceeded { required: u128, budget: u64 },
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Sampling resolution for `check_stably_steep`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SteepSampling {
    /// Sampled subspaces per dimension `l`, on top of the coordinate frames.
    pub subspaces_per_dim: usize,
    /// Perturbations on the coefficient ρ-sphere (the centre is always tested).
    pub perturbations: usize,
    /// Points of the uniform η grid in `(0, ζ]`.
    pub eta_grid: usize,
    /// Quasi-uniform sphere directions for the inner minimum (`l ≥ 2`).
    pub sphere_samples: usize,
    /// Points of the geometric ζ grid in `(0, δ]`.
    pub zeta_grid: usize,
    pub seed: u64,
    /// Cap on the estimated number of gradient evaluations.
    pub budget: u64,
}

impl Default for SteepSampling {
    fn default() -> Self {
        Self {
            subspaces_per_dim: 64,
            perturbations: 16,
            eta_grid: 64,
            sphere_samples: 256,
            zeta_grid: 12,
            seed: 0,
            budget: 2_000_000_000,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SubspaceSamples {
    pub l: usize,
    pub subspaces: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SteepnessVerdict {
    pub accepted: bool,
    pub rho: f64,
    pub c: f64,
    pub delta: f64,
    pub m: usize,
    /// Smallest `maxmin − C ζ^{m−1}` seen; positive iff accepted.
    pub worst_margin: f64,
    /// Orthonormal basis (rows) of the worst subspace.
    pub worst_subspace: Option<Vec<Vec<f64>>>,
    pub worst_zeta: f64,
    pub worst_eta: f64,
    /// The perturbed jet realising the worst margin, for independent re-evaluation.
    pub worst_perturbation: Option<JetPolynomial>,
    pub samples: Vec<SubspaceSamples>,
}

/// Derived steepness constants for the function whose jet was accepted:
/// gradient floor `κ = ϖ/2`, `C′ = C/2`, steepness indices `m−1`, with the
/// tested ζ range standing in for the neighbourhood radius.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FunctionSteepness {
    pub kappa: f64,
    pub c_prime: f64,
    pub delta_prime: f64,
    pub index: usize,
}

impl SteepnessVerdict {
    /// Conversion attached to accepted verdicts. `gradient_floor` is the
    /// lower bound ϖ on `|∇h|` near the expansion point; for sup-normalised
    /// linear parts it is 1.
    pub fn function_steepness(&self, gradient_floor: f64) -> FunctionSteepness {
        FunctionSteepness {
            kappa: gradient_floor / 2.0,
            c_prime: self.c / 2.0,
            delta_prime: self.delta,
            index: self.m - 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Condition {
    G1,
    G2,
    G3,
    G4,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind")]
pub enum ConditionWitness {
    G1 {
        theta_star: Vec<f64>,
        i_star: Vec<f64>,
        derivative: f64,
        /// One third of the attained derivative, the margin quantity the
        /// instability construction works with.
        zeta: f64,
    },
    G2 {
        i_star: Vec<f64>,
        det: f64,
        sigma_min: f64,
        /// max of the Hessian norm and inverse-Hessian norm (sup-induced).
        m_bound: f64,
    },
    G3 {
        verdict: SteepnessVerdict,
        steep_function: FunctionSteepness,
    },
    G4 {
        eigenvalues: Vec<f64>,
        sign: i8,
    },
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionReport {
    pub condition: Condition,
    pub holds: bool,
    /// Present exactly when the condition holds.
    pub witness: Option<ConditionWitness>,
    pub notes: Vec<String>,
}

/// Structural-zero floors separating genuine degeneracy from round-off.
pub const G1_FLOOR: f64 = 1e-6;
pub const SINGULAR_VALUE_FLOOR: f64 = 1e-8;

/// `m_n = [n²/2 + 2]`, the jet degree from which stable steepness is generic.
pub fn generic_jet_degree(n: usize) -> usize {
    n * n / 2 + 2
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn orthonormality_defect(basis: &[Vec<f64>]) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, bi) in basis.iter().enumerate() {
        for (j, bj) in basis.iter().enumerate() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((dot(bi, bj) - target).abs());
        }
    }
    worst
}

/// Restriction `P_Λ(x) = P(Σ x_j b_j)`, expanded exactly in the subspace
/// coordinates. `basis` holds the orthonormal rows spanning Λ.
pub fn restrict(p: &ActionPolynomial, basis: &[Vec<f64>]) -> Result<ActionPolynomial, SteepnessError> {
    let n = p.n();
    let l = basis.len();
    assert!(l >= 1 && basis.iter().all(|b| b.len() == n));
    let defect = orthonormality_defect(basis);
    if defect > 1e-12 {
        return Err(SteepnessError::BasisNotOrthonormal(defect));
    }
    // linear form for each ambient variable: I_i = Σ_j b_j[i] x_j
    let forms: Vec<ActionPolynomial> = (0..n)
        .map(|i| {
            let coeffs: Vec<f64> = basis.iter().map(|b| b[i]).collect();
            ActionPolynomial::linear(&coeffs)
        })
        .collect();
    let mut out = ActionPolynomial::zero(l);
    for (e, &c) in p.terms() {
        let mut term = ActionPolynomial::constant(l, c);
        for (i, &ei) in e.iter().enumerate() {
            for _ in 0..ei {
                term = term.mul(&forms[i]);
            }
        }
        out = out.add(&term);
    }
    Ok(out)
}

fn gradient_norm_sq(grads: &[ActionPolynomial], x: &[f64]) -> f64 {
    grads.iter().map(|g| {
        let v = g.eval(x);
        v * v
    }).sum()
}

/// Quasi-uniform unit directions in R^l.
fn unit_directions(l: usize, count: usize) -> Vec<Vec<f64>> {
    match l {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..count)
            .map(|i| {
                let a = TAU * (i as f64 + 0.5) / count as f64;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        3 => {
            // Fibonacci sphere
            let golden_angle = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
            (0..count)
                .map(|i| {
                    let z = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
                    let r = (1.0 - z * z).max(0.0).sqrt();
                    let phi = golden_angle * i as f64;
                    vec![r * phi.cos(), r * phi.sin(), z]
                })
                .collect()
        }
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_d125);
            (0..count)
                .map(|_| {
                    loop {
                        let v: Vec<f64> = (0..l).map(|_| gaussian(&mut rng)).collect();
                        let nv = norm(&v);
                        if nv > 1e-6 {
                            return v.iter().map(|x| x / nv).collect();
                        }
                    }
                })
                .collect()
        }
    }
}

fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    // Box-Muller
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos()
}

/// Minimum of `|∇P(ηu)|` over unit directions: sampled set plus one local
/// tangential-descent refinement from the best sample.
fn sphere_min(
    grads: &[ActionPolynomial],
    hess: &[Vec<ActionPolynomial>],
    eta: f64,
    dirs: &[Vec<f64>],
) -> f64 {
    let l = grads.len();
    let mut best = f64::INFINITY;
    let mut best_u: &Vec<f64> = &dirs[0];
    let mut x = vec![0.0; l];
    for u in dirs {
        for i in 0..l {
            x[i] = eta * u[i];
        }
        let v = gradient_norm_sq(grads, &x);
        if v < best {
            best = v;
            best_u = u;
        }
    }
    if l == 1 {
        return best.sqrt();
    }
    // descent on u ↦ |∇P(ηu)|² restricted to the sphere
    let mut u = best_u.clone();
    let mut step = 0.25;
    let mut current = best;
    for _ in 0..40 {
        for i in 0..l {
            x[i] = eta * u[i];
        }
        // ∇_u = 2η ∇²P(x)·∇P(x)
        let gp: Vec<f64> = grads.iter().map(|g| g.eval(&x)).collect();
        let mut gu = vec![0.0; l];
        for i in 0..l {
            let mut acc = 0.0;
            for j in 0..l {
                acc += hess[i][j].eval(&x) * gp[j];
            }
            gu[i] = 2.0 * eta * acc;
        }
        let proj = dot(&gu, &u);
        for i in 0..l {
            gu[i] -= proj * u[i];
        }
        let gnorm = norm(&gu);
        // only the direction of gu is used, so the stop must be scale-free
        // (maxmin(c·P) = c·maxmin(P) depends on identical descent paths)
        if gnorm == 0.0 {
            break;
        }
        let mut trial = vec![0.0; l];
        for i in 0..l {
            trial[i] = u[i] - step * gu[i] / gnorm;
        }
        let tn = norm(&trial);
        for t in trial.iter_mut() {
            *t /= tn;
        }
        for i in 0..l {
            x[i] = eta * trial[i];
        }
        let v = gradient_norm_sq(grads, &x);
        if v < current {
            current = v;
            u = trial;
            step *= 1.3;
        } else {
            step *= 0.5;
            if step < 1e-7 {
                break;
            }
        }
    }
    current.min(best).sqrt()
}

fn hessian_polys(grads: &[ActionPolynomial]) -> Vec<Vec<ActionPolynomial>> {
    let l = grads.len();
    (0..l)
        .map(|i| (0..l).map(|j| grads[i].partial(j)).collect())
        .collect()
}

/// Grid approximation of `max_{0≤η≤ζ} min_{|x|=η} |∇P_Λ(x)|` with
/// `eta_grid` uniform η points in `(0, ζ]`.
pub fn maxmin_curve(
    p_lambda: &ActionPolynomial,
    zeta: f64,
    eta_grid: usize,
    sphere_samples: usize,
) -> f64 {
    maxmin_curve_impl(p_lambda, zeta, eta_grid, sphere_samples).0
}

fn maxmin_curve_impl(
    p_lambda: &ActionPolynomial,
    zeta: f64,
    eta_grid: usize,
    sphere_samples: usize,
) -> (f64, f64) {
    assert!(zeta > 0.0 && eta_grid >= 1);
    let l = p_lambda.n();
    let grads: Vec<ActionPolynomial> = (0..l).map(|i| p_lambda.partial(i)).collect();
    let hess = hessian_polys(&grads);
    let dirs = unit_directions(l, sphere_samples);
    let mut best = -f64::INFINITY;
    let mut best_eta = 0.0;
    for i in 1..=eta_grid {
        let eta = zeta * i as f64 / eta_grid as f64;
        let v = sphere_min(&grads, &hess, eta, &dirs);
        if v > best {
            best = v;
            best_eta = eta;
        }
    }
    (best, best_eta)
}

fn coordinate_subspaces(n: usize, l: usize) -> Vec<Vec<Vec<f64>>> {
    // all l-element subsets of the standard basis
    let mut out = Vec::new();
    let mut pick = vec![0usize; l];
    fn rec(n: usize, l: usize, start: usize, depth: usize, pick: &mut Vec<usize>, out: &mut Vec<Vec<Vec<f64>>>) {
        if depth == l {
            let basis: Vec<Vec<f64>> = pick
                .iter()
                .map(|&i| {
                    let mut e = vec![0.0; n];
                    e[i] = 1.0;
                    e
                })
                .collect();
            out.push(basis);
            return;
        }
        for i in start..n {
            pick[depth] = i;
            rec(n, l, i + 1, depth + 1, pick, out);
        }
    }
    rec(n, l, 0, 0, &mut pick, &mut out);
    out
}

fn gram_schmidt(rows: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(rows.len());
    for r in rows {
        let mut v = r.clone();
        for b in &basis {
            let p = dot(&v, b);
            for (vi, bi) in v.iter_mut().zip(b.iter()) {
                *vi -= p * bi;
            }
        }
        let nv = norm(&v);
        if nv < 1e-9 {
            return None;
        }
        basis.push(v.iter().map(|x| x / nv).collect());
    }
    Some(basis)
}

/// Orthonormal complement of a unit vector.
fn complement_basis(u: &[f64]) -> Vec<Vec<f64>> {
    let n = u.len();
    let mut rows = vec![u.to_vec()];
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        rows.push(e);
    }
    // greedy Gram-Schmidt keeping the first n vectors that survive
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for r in rows {
        let mut v = r;
        for b in &basis {
            let p = dot(&v, b);
            for (vi, bi) in v.iter_mut().zip(b.iter()) {
                *vi -= p * bi;
            }
        }
        let nv = norm(&v);
        if nv > 1e-9 {
            basis.push(v.iter().map(|x| x / nv).collect());
        }
        if basis.len() == n {
            break;
        }
    }
    basis.remove(0); // drop the u direction itself
    basis
}

/// Subspace sample for dimension l: coordinate frames, a deterministic
/// quasi-uniform family where one exists (lines, and hyperplanes via their
/// normals), and seeded random frames for the rest.
fn sample_subspaces(n: usize, l: usize, count: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<Vec<f64>>> {
    let mut out = coordinate_subspaces(n, l);
    let deterministic = if l == 1 || l + 1 == n { count / 2 } else { 0 };
    if l == 1 {
        for u in unit_directions(n, deterministic) {
            out.push(vec![u]);
        }
    } else if l + 1 == n {
        for u in unit_directions(n, deterministic) {
            let b = complement_basis(&u);
            if b.len() == l {
                out.push(b);
            }
        }
    }
    let target = coordinate_subspaces(n, l).len() + count;
    while out.len() < target {
        let rows: Vec<Vec<f64>> = (0..l)
            .map(|_| (0..n).map(|_| gaussian(rng)).collect())
            .collect();
        if let Some(b) = gram_schmidt(&rows) {
            out.push(b);
        }
    }
    out
}

/// Perturbation directions on the coefficient sup-sphere of `P₂(n,m)`.
fn sample_perturbations(
    n: usize,
    m: usize,
    rho: f64,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<ActionPolynomial> {
    let basis = JetPolynomial::basis(n, m);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let coeffs: Vec<f64> = basis.iter().map(|_| rng.gen_range(-1.0..1.0)).collect();
        let sup = coeffs.iter().fold(0.0f64, |a, &c| a.max(c.abs()));
        if sup == 0.0 {
            continue;
        }
        let mut p = ActionPolynomial::zero(n);
        for (e, c) in basis.iter().zip(coeffs.iter()) {
            p.add_term(e, c * rho / sup);
        }
        out.push(p);
    }
    out
}

/// Sampling-based check of `(ρ,C,δ)`-stable steepness of the jet `p0`.
pub fn check_stably_steep(
    p0: &JetPolynomial,
    rho: f64,
    c: f64,
    delta: f64,
    sampling: &SteepSampling,
) -> Result<SteepnessVerdict, SteepnessError> {
    assert!(rho > 0.0 && c > 0.0 && delta > 0.0);
    let n = p0.n();
    let m = p0.m();
    let mut rng = ChaCha8Rng::seed_from_u64(sampling.seed);

    // pre-flight work estimate against the budget
    let mut required: u128 = 0;
    for l in 1..=n - 1 {
        let subs = coordinate_subspaces(n, l).len() + sampling.subspaces_per_dim;
        let dirs = if l == 1 { 2 } else { sampling.sphere_samples + 40 };
        required += (subs as u128)
            * (sampling.perturbations as u128 + 1)
            * (sampling.zeta_grid as u128)
            * (sampling.eta_grid as u128)
            * (dirs as u128);
    }
    if required > u128::from(sampling.budget) {
        return Err(SteepnessError::SamplingBudgetExceeded {
            required,
            budget: sampling.budget,
        });
    }

    let perturbations = sample_perturbations(n, m, rho, sampling.perturbations, &mut rng);
    // geometric ζ grid δ, δ/2, δ/4, …
    let zetas: Vec<f64> = (0..sampling.zeta_grid).map(|i| delta / 2f64.powi(i as i32)).collect();

    let mut worst_margin = f64::INFINITY;
    let mut worst: Option<(Vec<Vec<f64>>, f64, f64, ActionPolynomial)> = None;
    let mut samples = Vec::new();

    for l in 1..=n - 1 {
        let subspaces = sample_subspaces(n, l, sampling.subspaces_per_dim, &mut rng);
        samples.push(SubspaceSamples {
            l,
            subspaces: subspaces.len(),
        });
        for basis in &subspaces {
            for pert_idx in 0..=perturbations.len() {
                let p = if pert_idx == 0 {
                    p0.poly().clone()
                } else {
                    p0.poly().add(&perturbations[pert_idx - 1])
                };
                let restricted = restrict(&p, basis)?;
                for &zeta in &zetas {
                    let (value, eta) = maxmin_curve_impl(
                        &restricted,
                        zeta,
                        sampling.eta_grid,
                        sampling.sphere_samples,
                    );
                    let margin = value - c * zeta.powi(m as i32 - 1);
                    if margin < worst_margin {
                        worst_margin = margin;
                        worst = Some((basis.clone(), zeta, eta, p.clone()));
                    }
                }
            }
        }
    }

    let accepted = worst_margin > 0.0;
    let (worst_subspace, worst_zeta, worst_eta, worst_perturbation) = match worst {
        Some((b, z, e, p)) => (
            Some(b),
            z,
            e,
            Some(JetPolynomial::new(p, m)?),
        ),
        None => (None, 0.0, 0.0, None),
    };
    Ok(SteepnessVerdict {
        accepted,
        rho,
        c,
        delta,
        m,
        worst_margin,
        worst_subspace,
        worst_zeta,
        worst_eta,
        worst_perturbation,
        samples,
    })
}

/// Scan box half-width for the action grid: the field's domain radius when
/// finite, else 1.
fn scan_radius(f: &FourierTaylorField) -> f64 {
    if f.domain_radius().is_finite() {
        f.domain_radius()
    } else {
        1.0
    }
}

/// G1: the partial average over the fast angles has a non-trivial slow-angle
/// gradient somewhere. Grid scan over `T^d × B` refined by compass search.
pub fn check_g1(
    f: &FourierTaylorField,
    d: usize,
    theta_grid: usize,
    i_grid: usize,
    floor: f64,
) -> Result<ConditionReport, SteepnessError> {
    let n = f.n();
    let favg = f.partial_average(d)?;
    let derivs: Vec<FourierTaylorField> = (0..d).map(|j| favg.deriv_theta(j)).collect();
    let a = scan_radius(f);

    let objective = |theta_bar: &[f64], actions: &[f64]| -> f64 {
        let mut theta = vec![0.0; n];
        theta[..d].copy_from_slice(theta_bar);
        derivs
            .iter()
            .map(|df| df.evaluate(&theta, actions).abs())
            .fold(0.0, f64::max)
    };

    // grid scan
    let mut best = -f64::INFINITY;
    let mut best_theta = vec![0.0; d];
    let mut best_actions = vec![0.0; n];
    let mut theta_idx = vec![0usize; d];
    let mut act_idx = vec![0usize; n];
    loop {
        let theta_bar: Vec<f64> = theta_idx.iter().map(|&i| i as f64 / theta_grid as f64).collect();
        loop {
            let actions: Vec<f64> = act_idx
                .iter()
                .map(|&i| -a + 2.0 * a * (i as f64 + 0.5) / i_grid as f64)
                .collect();
            let v = objective(&theta_bar, &actions);
            if v > best {
                best = v;
                best_theta = theta_bar.clone();
                best_actions = actions;
            }
            if !advance(&mut act_idx, i_grid) {
                break;
            }
        }
        if !advance(&mut theta_idx, theta_grid) {
            break;
        }
    }

    // compass-search refinement
    let mut step_t = 1.0 / theta_grid as f64;
    let mut step_a = a / i_grid as f64;
    for _ in 0..60 {
        let mut improved = false;
        for j in 0..d {
            for s in [-1.0, 1.0] {
                let mut t = best_theta.clone();
                t[j] = (t[j] + s * step_t).rem_euclid(1.0);
                let v = objective(&t, &best_actions);
                if v > best {
                    best = v;
                    best_theta = t;
                    improved = true;
                }
            }
        }
        for j in 0..n {
            for s in [-1.0, 1.0] {
                let mut x = best_actions.clone();
                x[j] = (x[j] + s * step_a).clamp(-a, a);
                let v = objective(&best_theta, &x);
                if v > best {
                    best = v;
                    best_actions = x;
                    improved = true;
                }
            }
        }
        if !improved {
            step_t *= 0.5;
            step_a *= 0.5;
            if step_t < 1e-10 {
                break;
            }
        }
    }

    let holds = best > floor;
    Ok(ConditionReport {
        condition: Condition::G1,
        holds,
        witness: holds.then(|| ConditionWitness::G1 {
            theta_star: best_theta,
            i_star: best_actions,
            derivative: best,
            zeta: best / 3.0,
        }),
        notes: vec![],
    })
}

fn advance(idx: &mut [usize], base: usize) -> bool {
    for i in idx.iter_mut() {
        *i += 1;
        if *i < base {
            return true;
        }
        *i = 0;
    }
    false
}

fn sup_row_norm(m: &DMatrix<f64>) -> f64 {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// G2: the Hessian of the full average is non-singular at `I_*`.
pub fn check_g2(f: &FourierTaylorField, i_star: &[f64], floor: f64) -> ConditionReport {
    let favg = f.full_average();
    let h = favg.hessian(i_star);
    let n = i_star.len();
    let hm = DMatrix::from_fn(n, n, |i, j| h[i][j]);
    let det = hm.clone().determinant();
    let svd = hm.clone().svd(false, false);
    let sigma_min = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
    let holds = sigma_min > floor;
    let m_bound = match hm.clone().try_inverse() {
        Some(inv) => sup_row_norm(&hm).max(sup_row_norm(&inv)),
        None => f64::INFINITY,
    };
    ConditionReport {
        condition: Condition::G2,
        holds,
        witness: holds.then(|| ConditionWitness::G2 {
            i_star: i_star.to_vec(),
            det,
            sigma_min,
            m_bound,
        }),
        notes: vec![],
    }
}

/// G3: the Taylor jet `T₂^m f̄(I_*)` is stably steep at the given constants.
pub fn check_g3(
    f: &FourierTaylorField,
    i_star: &[f64],
    m: usize,
    rho: f64,
    c: f64,
    delta: f64,
    sampling: &SteepSampling,
) -> Result<(ConditionReport, SteepnessVerdict), SteepnessError> {
    let n = f.n();
    let favg = f.full_average();
    let jet = taylor_jet(&favg, i_star, m)?;
    let mut notes = Vec::new();
    let m_n = generic_jet_degree(n);
    if m < m_n {
        notes.push(format!(
            "jet degree m={m} is below m_n={m_n}; stable steepness is only known to be generic from m_n on"
        ));
    }
    let verdict = check_stably_steep(&jet, rho, c, delta, sampling)?;
    let report = ConditionReport {
        condition: Condition::G3,
        holds: verdict.accepted,
        witness: verdict.accepted.then(|| ConditionWitness::G3 {
            verdict: verdict.clone(),
            steep_function: verdict.function_steepness(1.0),
        }),
        notes,
    };
    Ok((report, verdict))
}

/// G4: the Hessian of the full average restricted to `α^⊥` is sign-definite.
pub fn check_g4(
    f: &FourierTaylorField,
    i_star: &[f64],
    alpha: &FrequencyVector,
    floor: f64,
) -> ConditionReport {
    let n = alpha.n();
    let favg = f.full_average();
    let h = favg.hessian(i_star);
    // Euclidean-orthonormal basis of α^⊥
    let a = alpha.components();
    let na = norm(a);
    let unit: Vec<f64> = a.iter().map(|x| x / na).collect();
    let basis = complement_basis(&unit);
    let l = basis.len();
    let hm = DMatrix::from_fn(n, n, |i, j| h[i][j]);
    let b = DMatrix::from_fn(l, n, |i, j| basis[i][j]);
    let projected = &b * &hm * b.transpose();
    let sym = nalgebra::SymmetricEigen::new(projected);
    let mut eig: Vec<f64> = sym.eigenvalues.iter().cloned().collect();
    eig.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let all_pos = eig.iter().all(|&v| v > floor);
    let all_neg = eig.iter().all(|&v| v < -floor);
    let holds = all_pos || all_neg;
    ConditionReport {
        condition: Condition::G4,
        holds,
        witness: holds.then(|| ConditionWitness::G4 {
            eigenvalues: eig.clone(),
            sign: if all_pos { 1 } else { -1 },
        }),
        notes: vec![],
    }
}
