//! Structure-preserving integration of `H = α·I + ε f(θ,I)`.
//!
//! The default scheme is the implicit midpoint rule, symplectic for general
//! smooth Hamiltonians; the fixed-point solve is gated by a Lipschitz bound
//! derived from the field's coefficient majorants so contraction is
//! guaranteed before the first iteration runs. For angle-only perturbations
//! a Strang splitting (half kick, exact rotation, half kick) is available as
//! an exact fast path.

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::model::{FourierTaylorField, Hamiltonian, ModelError};

const TAU: f64 = std::f64::consts::TAU;

#[derive(Debug, Error)]
pub enum SymplecticError {
    #[error("fixed-point iteration diverged at step {step}: residual {residual:.3e}")]
    FixedPointDiverged { step: u64, residual: f64 },
    #[error("scheme unavailable: {0}")]
    SchemeUnavailable(String),
    #[error("step refused: h·ε·L = {product:.3e} ≥ 1/2 (h = {h}, ε = {eps}, Lipschitz bound L = {lipschitz:.3e})")]
    StepTooLarge {
        h: f64,
        eps: f64,
        lipschitz: f64,
        product: f64,
    },
    #[error("trajectory left the action box at t = {t}")]
    BoundaryExit { t: f64 },
    #[error("invalid integrator config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Scheme {
    ImplicitMidpoint,
    Splitting,
}

#[derive(Debug, Clone)]
pub struct IntegratorConfig {
    pub scheme: Scheme,
    /// Step size; negative integrates backward in time.
    pub h: f64,
    pub fp_tol: f64,
    pub fp_max_iter: usize,
    pub record_every: usize,
    /// Optional action box `B` (lower, upper); the run aborts with
    /// `BoundaryExit` when the actions leave `B` shrunk by `|h|·margin`.
    pub action_box: Option<(Vec<f64>, Vec<f64>)>,
    pub boundary_margin: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::ImplicitMidpoint,
            h: 1e-2,
            fp_tol: 1e-13,
            fp_max_iter: 50,
            record_every: 1,
            action_box: None,
            boundary_margin: 1.0,
        }
    }
}

impl IntegratorConfig {
    fn validate(&self) -> Result<(), SymplecticError> {
        if self.h == 0.0 || !self.h.is_finite() {
            return Err(SymplecticError::BadConfig("step h must be nonzero and finite".into()));
        }
        if !(self.fp_tol > 0.0) {
            return Err(SymplecticError::BadConfig("fp_tol must be positive".into()));
        }
        if self.fp_max_iter == 0 {
            return Err(SymplecticError::BadConfig("fp_max_iter must be at least 1".into()));
        }
        if self.record_every == 0 {
            return Err(SymplecticError::BadConfig("record_every must be at least 1".into()));
        }
        Ok(())
    }
}

/// Point of the extended phase space; angles in `[0,1)` turns.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseState {
    pub theta: Vec<f64>,
    pub action: Vec<f64>,
    pub t: f64,
}

impl PhaseState {
    pub fn new(theta: Vec<f64>, action: Vec<f64>) -> Self {
        Self { theta, action, t: 0.0 }
    }

    fn reduce_angles(&mut self) {
        for t in self.theta.iter_mut() {
            *t = t.rem_euclid(1.0);
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub samples: Vec<PhaseState>,
    pub energy0: f64,
    pub max_energy_drift: f64,
    /// `sup_t |I(t) − I(0)|∞` over every computed step, not just the samples.
    pub max_action_drift: f64,
}

/// Observables of a run that does not keep samples.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub final_state: PhaseState,
    pub steps: u64,
    pub energy0: f64,
    pub max_energy_drift: f64,
    pub max_action_drift: f64,
    /// Interpolated first time `|I(t) − I(0)|∞ ≥ c1`, when a threshold was set.
    pub hit: Option<f64>,
    pub drift_at_end: f64,
}

/// Flattened mode table for tight evaluation loops.
struct CompiledMode {
    k: Vec<f64>,
    terms: Vec<(Vec<u32>, Complex64)>,
}

pub(crate) struct CompiledHamiltonian {
    n: usize,
    alpha: Vec<f64>,
    eps: f64,
    modes: Vec<CompiledMode>,
}

impl CompiledHamiltonian {
    pub(crate) fn from_hamiltonian(h: &Hamiltonian) -> Self {
        Self::assemble(h.alpha().components().to_vec(), h.epsilon(), h.field())
    }

    /// Hamiltonian `ε·f` with no linear part (used for generating flows).
    pub(crate) fn from_field(field: &FourierTaylorField, eps: f64) -> Self {
        Self::assemble(vec![0.0; field.n()], eps, field)
    }

    fn assemble(alpha: Vec<f64>, eps: f64, field: &FourierTaylorField) -> Self {
        let n = field.n();
        let mut modes = Vec::new();
        for (k, c) in field.modes() {
            let mut terms: Vec<(Vec<u32>, Complex64)> = Vec::new();
            for (e, &re) in c.re.terms() {
                terms.push((e.clone(), Complex64::new(re, c.im.coefficient(e))));
            }
            for (e, &im) in c.im.terms() {
                if c.re.coefficient(e) == 0.0 {
                    terms.push((e.clone(), Complex64::new(0.0, im)));
                }
            }
            terms.sort_by(|a, b| a.0.cmp(&b.0));
            modes.push(CompiledMode {
                k: k.iter().map(|&x| f64::from(x)).collect(),
                terms,
            });
        }
        Self { n, alpha, eps, modes }
    }

    /// `∂H/∂θ` into `g_theta`, `∂H/∂I` into `g_action`.
    fn grad(&self, theta: &[f64], action: &[f64], g_theta: &mut [f64], g_action: &mut [f64]) {
        g_theta.fill(0.0);
        g_action.copy_from_slice(&self.alpha);
        for mode in &self.modes {
            let mut phase = 0.0;
            for i in 0..self.n {
                phase += mode.k[i] * theta[i];
            }
            let (s, c) = (TAU * phase).sin_cos();
            let wave = Complex64::new(c, s);
            let mut value = Complex64::new(0.0, 0.0);
            for (e, coeff) in &mode.terms {
                let mut p = 1.0;
                for (i, &ei) in e.iter().enumerate() {
                    for _ in 0..ei {
                        p *= action[i];
                    }
                }
                value += coeff * p;
                // action gradient of this term
                for (i, &ei) in e.iter().enumerate() {
                    if ei == 0 {
                        continue;
                    }
                    let mut dp = f64::from(ei);
                    for (j, &ej) in e.iter().enumerate() {
                        let pow = if j == i { ej - 1 } else { ej };
                        for _ in 0..pow {
                            dp *= action[j];
                        }
                    }
                    let z = coeff * dp * wave;
                    g_action[i] += self.eps * z.re;
                }
            }
            let z = value * wave;
            for i in 0..self.n {
                if mode.k[i] != 0.0 {
                    // Re(2πi k_i · z) = −2π k_i Im(z)
                    g_theta[i] -= self.eps * TAU * mode.k[i] * z.im;
                }
            }
        }
    }

    fn energy(&self, theta: &[f64], action: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.n {
            acc += self.alpha[i] * action[i];
        }
        for mode in &self.modes {
            let mut phase = 0.0;
            for i in 0..self.n {
                phase += mode.k[i] * theta[i];
            }
            let (s, c) = (TAU * phase).sin_cos();
            let wave = Complex64::new(c, s);
            let mut value = Complex64::new(0.0, 0.0);
            for (e, coeff) in &mode.terms {
                let mut p = 1.0;
                for (i, &ei) in e.iter().enumerate() {
                    for _ in 0..ei {
                        p *= action[i];
                    }
                }
                value += coeff * p;
            }
            acc += self.eps * (value * wave).re;
        }
        acc
    }
}

/// Sup-norm Lipschitz bound for `∇f` on `|I|∞ ≤ r`, from coefficient
/// majorants of the exact second-derivative fields.
pub fn lipschitz_grad_bound(field: &FourierTaylorField, r: f64) -> f64 {
    let n = field.n();
    // second derivatives: θθ, θI, II blocks
    let mut sup = vec![vec![0.0f64; 2 * n]; 2 * n];
    for (k, c) in field.modes() {
        let kabs: Vec<f64> = k.iter().map(|&x| f64::from(x.abs())).collect();
        let m0 = c.majorant(r);
        for u in 0..n {
            for v in 0..n {
                sup[u][v] += TAU * kabs[u] * TAU * kabs[v] * m0;
                let mdv = c.partial(v).majorant(r);
                sup[u][n + v] += TAU * kabs[u] * mdv;
                sup[n + v][u] += TAU * kabs[u] * mdv;
                sup[n + u][n + v] += c.partial(u).partial(v).majorant(r);
            }
        }
    }
    sup.iter()
        .map(|row| row.iter().sum::<f64>())
        .fold(0.0, f64::max)
}

fn gate_radius(field: &FourierTaylorField, action: &[f64]) -> f64 {
    if field.domain_radius().is_finite() {
        field.domain_radius()
    } else {
        let sup = action.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
        (2.0 * sup).max(1.0)
    }
}

struct Workspace {
    wt: Vec<f64>,
    wa: Vec<f64>,
    mt: Vec<f64>,
    ma: Vec<f64>,
    gt: Vec<f64>,
    ga: Vec<f64>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Self {
            wt: vec![0.0; n],
            wa: vec![0.0; n],
            mt: vec![0.0; n],
            ma: vec![0.0; n],
            gt: vec![0.0; n],
            ga: vec![0.0; n],
        }
    }
}

fn midpoint_step(
    c: &CompiledHamiltonian,
    theta: &mut [f64],
    action: &mut [f64],
    h: f64,
    fp_tol: f64,
    max_iter: usize,
    ws: &mut Workspace,
    step_index: u64,
) -> Result<(), SymplecticError> {
    let n = c.n;
    // explicit Euler predictor
    c.grad(theta, action, &mut ws.gt, &mut ws.ga);
    for i in 0..n {
        ws.wt[i] = theta[i] + h * ws.ga[i];
        ws.wa[i] = action[i] - h * ws.gt[i];
    }
    let mut prev_inc = f64::INFINITY;
    let mut damped = false;
    let mut converged = false;
    for it in 0..max_iter {
        for i in 0..n {
            ws.mt[i] = 0.5 * (theta[i] + ws.wt[i]);
            ws.ma[i] = 0.5 * (action[i] + ws.wa[i]);
        }
        c.grad(&ws.mt, &ws.ma, &mut ws.gt, &mut ws.ga);
        let mut inc = 0.0f64;
        for i in 0..n {
            let nt = theta[i] + h * ws.ga[i];
            let na = action[i] - h * ws.gt[i];
            inc = inc.max((nt - ws.wt[i]).abs()).max((na - ws.wa[i]).abs());
            if damped {
                ws.wt[i] = 0.5 * (ws.wt[i] + nt);
                ws.wa[i] = 0.5 * (ws.wa[i] + na);
            } else {
                ws.wt[i] = nt;
                ws.wa[i] = na;
            }
        }
        if inc == 0.0 || (inc <= fp_tol && inc >= prev_inc) {
            converged = true;
            break;
        }
        if inc > prev_inc && it >= 6 {
            // non-contraction fallback
            damped = true;
        }
        prev_inc = inc;
    }
    if !converged && prev_inc > fp_tol {
        return Err(SymplecticError::FixedPointDiverged {
            step: step_index,
            residual: prev_inc,
        });
    }
    theta.copy_from_slice(&ws.wt);
    action.copy_from_slice(&ws.wa);
    for t in theta.iter_mut() {
        *t = t.rem_euclid(1.0);
    }
    Ok(())
}

fn splitting_step(
    c: &CompiledHamiltonian,
    theta: &mut [f64],
    action: &mut [f64],
    h: f64,
    ws: &mut Workspace,
) {
    let n = c.n;
    // half kick: I -= (h/2)·∂θH(θ), exact because f is angle-only
    c.grad(theta, action, &mut ws.gt, &mut ws.ga);
    for i in 0..n {
        action[i] -= 0.5 * h * ws.gt[i];
    }
    // exact rotation
    for i in 0..n {
        theta[i] = (theta[i] + h * c.alpha[i]).rem_euclid(1.0);
    }
    // half kick
    c.grad(theta, action, &mut ws.gt, &mut ws.ga);
    for i in 0..n {
        action[i] -= 0.5 * h * ws.gt[i];
    }
}

fn check_scheme(h: &Hamiltonian, cfg: &IntegratorConfig, actions: &[f64]) -> Result<(), SymplecticError> {
    cfg.validate()?;
    match cfg.scheme {
        Scheme::Splitting => {
            if !h.field().is_angle_only() {
                return Err(SymplecticError::SchemeUnavailable(
                    "splitting requires an angle-only perturbation (no action dependence)".into(),
                ));
            }
            Ok(())
        }
        Scheme::ImplicitMidpoint => {
            let r = gate_radius(h.field(), actions);
            let lip = lipschitz_grad_bound(h.field(), r);
            let product = cfg.h.abs() * h.epsilon() * lip;
            if product >= 0.5 {
                return Err(SymplecticError::StepTooLarge {
                    h: cfg.h,
                    eps: h.epsilon(),
                    lipschitz: lip,
                    product,
                });
            }
            Ok(())
        }
    }
}

/// One integration step.
pub fn step(h: &Hamiltonian, s: &PhaseState, cfg: &IntegratorConfig) -> Result<PhaseState, SymplecticError> {
    check_scheme(h, cfg, &s.action)?;
    h.field().check_domain(&s.action)?;
    let compiled = CompiledHamiltonian::from_hamiltonian(h);
    let mut ws = Workspace::new(h.n());
    let mut out = s.clone();
    match cfg.scheme {
        Scheme::ImplicitMidpoint => midpoint_step(
            &compiled,
            &mut out.theta,
            &mut out.action,
            cfg.h,
            cfg.fp_tol,
            cfg.fp_max_iter,
            &mut ws,
            0,
        )?,
        Scheme::Splitting => splitting_step(&compiled, &mut out.theta, &mut out.action, cfg.h, &mut ws),
    }
    out.reduce_angles();
    out.t = s.t + cfg.h;
    h.field().check_domain(&out.action)?;
    Ok(out)
}

struct Observer<'a> {
    i0: Vec<f64>,
    energy0: f64,
    max_energy_drift: f64,
    max_action_drift: f64,
    threshold: Option<f64>,
    hit: Option<f64>,
    prev_drift: f64,
    prev_t: f64,
    cfg: &'a IntegratorConfig,
}

impl<'a> Observer<'a> {
    fn new(c: &CompiledHamiltonian, s0: &PhaseState, threshold: Option<f64>, cfg: &'a IntegratorConfig) -> Self {
        Self {
            i0: s0.action.clone(),
            energy0: c.energy(&s0.theta, &s0.action),
            max_energy_drift: 0.0,
            max_action_drift: 0.0,
            threshold,
            hit: None,
            prev_drift: 0.0,
            prev_t: s0.t,
            cfg,
        }
    }

    /// Returns true when the run can stop (threshold reached).
    fn observe(&mut self, c: &CompiledHamiltonian, theta: &[f64], action: &[f64], t: f64) -> Result<bool, SymplecticError> {
        let drift = action
            .iter()
            .zip(self.i0.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        self.max_action_drift = self.max_action_drift.max(drift);
        let e = c.energy(theta, action);
        self.max_energy_drift = self.max_energy_drift.max((e - self.energy0).abs());
        if let Some((lo, hi)) = &self.cfg.action_box {
            let shrink = self.cfg.h.abs() * self.cfg.boundary_margin;
            for i in 0..action.len() {
                if action[i] < lo[i] + shrink || action[i] > hi[i] - shrink {
                    return Err(SymplecticError::BoundaryExit { t });
                }
            }
        }
        let mut done = false;
        if let Some(c1) = self.threshold {
            if self.hit.is_none() && drift >= c1 {
                // linear interpolation between the bracketing steps
                let tau = if drift > self.prev_drift {
                    self.prev_t + (t - self.prev_t) * (c1 - self.prev_drift) / (drift - self.prev_drift)
                } else {
                    t
                };
                self.hit = Some(tau);
                done = true;
            }
        }
        self.prev_drift = drift;
        self.prev_t = t;
        Ok(done)
    }
}

fn drive(
    h: &Hamiltonian,
    s0: &PhaseState,
    t_span: f64,
    cfg: &IntegratorConfig,
    threshold: Option<f64>,
    mut record: Option<&mut Vec<PhaseState>>,
) -> Result<RunReport, SymplecticError> {
    if !(t_span > 0.0) {
        return Err(SymplecticError::BadConfig(format!("integration span must be positive, got {t_span}")));
    }
    check_scheme(h, cfg, &s0.action)?;
    h.field().check_domain(&s0.action)?;
    let compiled = CompiledHamiltonian::from_hamiltonian(h);
    let mut ws = Workspace::new(h.n());
    let steps = (t_span / cfg.h.abs()).ceil() as u64;
    let mut theta = s0.theta.clone();
    let mut action = s0.action.clone();
    let mut observer = Observer::new(&compiled, s0, threshold, cfg);
    if let Some(rec) = record.as_deref_mut() {
        rec.push(PhaseState { theta: theta.clone(), action: action.clone(), t: s0.t });
    }
    let mut t = s0.t;
    for i in 1..=steps {
        match cfg.scheme {
            Scheme::ImplicitMidpoint => midpoint_step(
                &compiled,
                &mut theta,
                &mut action,
                cfg.h,
                cfg.fp_tol,
                cfg.fp_max_iter,
                &mut ws,
                i,
            )?,
            Scheme::Splitting => splitting_step(&compiled, &mut theta, &mut action, cfg.h, &mut ws),
        }
        t = s0.t + i as f64 * cfg.h;
        h.field().check_domain(&action)?;
        let done = observer.observe(&compiled, &theta, &action, t)?;
        if let Some(rec) = record.as_deref_mut() {
            if i % cfg.record_every as u64 == 0 || i == steps || done {
                rec.push(PhaseState { theta: theta.clone(), action: action.clone(), t });
            }
        }
        if done {
            return Ok(RunReport {
                final_state: PhaseState { theta, action, t },
                steps: i,
                energy0: observer.energy0,
                max_energy_drift: observer.max_energy_drift,
                max_action_drift: observer.max_action_drift,
                hit: observer.hit,
                drift_at_end: observer.prev_drift,
            });
        }
    }
    Ok(RunReport {
        final_state: PhaseState { theta, action, t },
        steps,
        energy0: observer.energy0,
        max_energy_drift: observer.max_energy_drift,
        max_action_drift: observer.max_action_drift,
        hit: observer.hit,
        drift_at_end: observer.prev_drift,
    })
}

/// Integrate for `ceil(T/h)` steps, recording every `record_every`-th state
/// plus the final one; energy and action drift are accumulated at every step.
pub fn integrate(
    h: &Hamiltonian,
    s0: &PhaseState,
    t_span: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory, SymplecticError> {
    let mut samples = Vec::new();
    let report = drive(h, s0, t_span, cfg, None, Some(&mut samples))?;
    Ok(Trajectory {
        samples,
        energy0: report.energy0,
        max_energy_drift: report.max_energy_drift,
        max_action_drift: report.max_action_drift,
    })
}

/// Observables-only run, optionally stopping at the drift threshold.
pub fn run_observed(
    h: &Hamiltonian,
    s0: &PhaseState,
    t_span: f64,
    cfg: &IntegratorConfig,
    threshold: Option<f64>,
) -> Result<RunReport, SymplecticError> {
    drive(h, s0, t_span, cfg, threshold, None)
}

/// First time `|I(t) − I(0)|∞ ≥ c1`, linearly interpolated between the
/// bracketing steps; `None` if the threshold is not reached by `t_max`.
pub fn hitting_time(
    h: &Hamiltonian,
    s0: &PhaseState,
    c1: f64,
    t_max: f64,
    cfg: &IntegratorConfig,
) -> Result<Option<f64>, SymplecticError> {
    if !(c1 > 0.0) {
        return Err(SymplecticError::BadConfig("threshold c1 must be positive".into()));
    }
    Ok(drive(h, s0, t_max, cfg, Some(c1), None)?.hit)
}

/// Time-`span` flow of the Hamiltonian vector field of `field` (no linear
/// part), integrated by implicit midpoint substeps. Used to realise
/// generating-field transformations as true flows.
pub(crate) fn flow_field(
    field: &FourierTaylorField,
    span: f64,
    theta0: &[f64],
    action0: &[f64],
    substeps: usize,
) -> Result<(Vec<f64>, Vec<f64>), SymplecticError> {
    let mut theta = theta0.to_vec();
    let mut action = action0.to_vec();
    if span == 0.0 {
        return Ok((theta, action));
    }
    let compiled = CompiledHamiltonian::from_field(field, 1.0);
    let mut ws = Workspace::new(field.n());
    let h = span / substeps as f64;
    for i in 0..substeps {
        midpoint_step(&compiled, &mut theta, &mut action, h, 1e-14, 64, &mut ws, i as u64)?;
    }
    Ok((theta, action))
}

/// Determinant of the finite-difference Jacobian of one step; a symplectic
/// map has determinant 1.
pub fn step_jacobian_det(
    h: &Hamiltonian,
    s: &PhaseState,
    cfg: &IntegratorConfig,
    delta: f64,
) -> Result<f64, SymplecticError> {
    let n = h.n();
    let dim = 2 * n;
    let mut jac = nalgebra::DMatrix::zeros(dim, dim);
    for j in 0..dim {
        let mut plus = s.clone();
        let mut minus = s.clone();
        if j < n {
            plus.theta[j] += delta;
            minus.theta[j] -= delta;
        } else {
            plus.action[j - n] += delta;
            minus.action[j - n] -= delta;
        }
        let sp = step(h, &plus, cfg)?;
        let sm = step(h, &minus, cfg)?;
        for i in 0..dim {
            let (vp, vm) = if i < n {
                // unwrap the angle difference to the nearest representative
                let mut d = sp.theta[i] - sm.theta[i];
                if d > 0.5 {
                    d -= 1.0;
                }
                if d < -0.5 {
                    d += 1.0;
                }
                (d, 0.0)
            } else {
                (sp.action[i - n], sm.action[i - n])
            };
            jac[(i, j)] = (vp - vm) / (2.0 * delta);
        }
    }
    Ok(jac.determinant())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::freq::{golden_mean, FrequencyVector};
    use crate::model::{ActionPolynomial, FieldBuilder};
    use approx::assert_relative_eq;

    fn golden() -> FrequencyVector {
        FrequencyVector::from_normalized(vec![1.0, golden_mean()]).unwrap()
    }

    fn resonant() -> FrequencyVector {
        FrequencyVector::from_normalized(vec![0.0, 1.0]).unwrap()
    }

    /// f = cos(2πθ1) with α = (0,1): constant-force drift İ1 = 2πε at θ1 = 1/4.
    fn constant_force(eps: f64) -> Hamiltonian {
        let f = FieldBuilder::new(2)
            .cos(&[1, 0], ActionPolynomial::constant(2, 1.0))
            .build();
        Hamiltonian::new(resonant(), eps, f).unwrap()
    }

    /// f = cos2πθ1 + cos2πθ2 + (I1²+I2²)/2 with golden α.
    fn g2_model(eps: f64) -> Hamiltonian {
        let mut quad = ActionPolynomial::zero(2);
        quad.add_term(&[2, 0], 0.5);
        quad.add_term(&[0, 2], 0.5);
        let f = FieldBuilder::new(2)
            .cos(&[1, 0], ActionPolynomial::constant(2, 1.0))
            .cos(&[0, 1], ActionPolynomial::constant(2, 1.0))
            .mean(quad)
            .build();
        Hamiltonian::new(golden(), eps, f).unwrap()
    }

    #[test]
    fn unperturbed_flow_is_exact() {
        let h = Hamiltonian::new(golden(), 0.0, crate::model::FourierTaylorField::zero(2)).unwrap();
        let s0 = PhaseState::new(vec![0.1, 0.2], vec![0.3, -0.4]);
        for scheme in [Scheme::ImplicitMidpoint, Scheme::Splitting] {
            let cfg = IntegratorConfig {
                scheme,
                h: 1.0 / 128.0,
                ..Default::default()
            };
            let traj = integrate(&h, &s0, 2.0, &cfg).unwrap();
            assert_eq!(traj.max_action_drift, 0.0);
            let last = traj.samples.last().unwrap();
            assert_eq!(last.action, s0.action);
            // dyadic step: the rotation accumulates exactly
            let n_steps = 256.0;
            let expect: Vec<f64> = s0
                .theta
                .iter()
                .zip(golden().components())
                .map(|(t, a)| (t + n_steps * (1.0 / 128.0) * a).rem_euclid(1.0))
                .collect();
            for (got, want) in last.theta.iter().zip(expect.iter()) {
                assert_relative_eq!(got, want, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn constant_force_kick_is_exact_per_step() {
        let eps = 1e-3;
        let h = constant_force(eps);
        let s0 = PhaseState::new(vec![0.25, 0.0], vec![0.0, 0.0]);
        for scheme in [Scheme::ImplicitMidpoint, Scheme::Splitting] {
            let cfg = IntegratorConfig {
                scheme,
                h: 0.01,
                ..Default::default()
            };
            let s1 = step(&h, &s0, &cfg).unwrap();
            // θ1 has zero frequency and ∂f/∂I = 0: it stays at 1/4;
            // the kick is 2πε h on I1
            assert_relative_eq!(s1.theta[0], 0.25, epsilon = 1e-15);
            assert_relative_eq!(s1.action[0], TAU * eps * 0.01, max_relative = 1e-12);
            assert_eq!(s1.action[1], 0.0);
        }
    }

    #[test]
    fn constant_force_drift_matches_closed_form() {
        let eps = 1e-3;
        let h = constant_force(eps);
        let s0 = PhaseState::new(vec![0.25, 0.0], vec![0.0, 0.0]);
        let cfg = IntegratorConfig {
            h: 0.01,
            record_every: 1000,
            ..Default::default()
        };
        let t_span = 10.0;
        let traj = integrate(&h, &s0, t_span, &cfg).unwrap();
        // within one step of the closed form (ceil(T/h) may add a step)
        assert!((traj.max_action_drift - TAU * eps * t_span).abs() <= 1.5 * TAU * eps * cfg.h);
    }

    #[test]
    fn midpoint_step_is_time_symmetric() {
        let h = g2_model(1e-2);
        let s0 = PhaseState::new(vec![0.12, 0.8], vec![0.05, -0.02]);
        let cfg = IntegratorConfig {
            h: 0.01,
            ..Default::default()
        };
        let fwd = step(&h, &s0, &cfg).unwrap();
        let back_cfg = IntegratorConfig { h: -0.01, ..cfg };
        let back = step(&h, &fwd, &back_cfg).unwrap();
        for i in 0..2 {
            assert!((back.theta[i] - s0.theta[i]).abs() <= 10.0 * 1e-13);
            assert!((back.action[i] - s0.action[i]).abs() <= 10.0 * 1e-13);
        }
    }

    #[test]
    fn reversibility_over_a_horizon() {
        let h = g2_model(1e-2);
        let s0 = PhaseState::new(vec![0.12, 0.8], vec![0.05, -0.02]);
        let cfg = IntegratorConfig {
            h: 0.01,
            ..Default::default()
        };
        let fwd = run_observed(&h, &s0, 10.0, &cfg, None).unwrap();
        let back_cfg = IntegratorConfig { h: -0.01, ..cfg };
        let back = run_observed(&h, &fwd.final_state, 10.0, &back_cfg, None).unwrap();
        for i in 0..2 {
            assert!(
                (back.final_state.action[i] - s0.action[i]).abs() <= 1e-10,
                "action round-trip error {}",
                (back.final_state.action[i] - s0.action[i]).abs()
            );
            let mut dt = back.final_state.theta[i] - s0.theta[i];
            if dt > 0.5 {
                dt -= 1.0;
            }
            if dt < -0.5 {
                dt += 1.0;
            }
            assert!(dt.abs() <= 1e-10, "angle round-trip error {dt}");
        }
    }

    #[test]
    fn hitting_time_closed_form_and_scaling() {
        let c1 = 0.1;
        let cfg = IntegratorConfig {
            h: 0.01,
            ..Default::default()
        };
        let s0 = PhaseState::new(vec![0.25, 0.0], vec![0.0, 0.0]);
        let mut taus = Vec::new();
        for eps in [1e-2, 5e-3] {
            let h = constant_force(eps);
            let t_max = 10.0 * c1 / (TAU * eps);
            let tau = hitting_time(&h, &s0, c1, t_max, &cfg).unwrap().unwrap();
            assert_relative_eq!(tau, c1 / (TAU * eps), epsilon = cfg.h);
            taus.push(tau);
        }
        // halving ε doubles τ
        assert_relative_eq!(taus[1] / taus[0], 2.0, max_relative = 1e-6);
        // ε = 0 never hits
        let h0 = constant_force(0.0);
        assert!(hitting_time(&h0, &s0, c1, 50.0, &cfg).unwrap().is_none());
    }

    #[test]
    fn splitting_requires_angle_only_field() {
        let h = g2_model(1e-2);
        let cfg = IntegratorConfig {
            scheme: Scheme::Splitting,
            ..Default::default()
        };
        let s0 = PhaseState::new(vec![0.0, 0.0], vec![0.0, 0.0]);
        assert!(matches!(
            step(&h, &s0, &cfg),
            Err(SymplecticError::SchemeUnavailable(_))
        ));
    }

    #[test]
    fn oversized_step_is_refused() {
        let h = g2_model(1.0);
        let cfg = IntegratorConfig {
            h: 1.0,
            ..Default::default()
        };
        let s0 = PhaseState::new(vec![0.0, 0.0], vec![0.0, 0.0]);
        assert!(matches!(
            step(&h, &s0, &cfg),
            Err(SymplecticError::StepTooLarge { .. })
        ));
    }

    #[test]
    fn fixed_point_divergence_is_reported() {
        // gate passes (product just below 1/2) but the iteration cannot reach
        // fp_tol within two iterations
        let h = g2_model(0.012);
        let cfg = IntegratorConfig {
            h: 1.0,
            fp_max_iter: 2,
            fp_tol: 1e-15,
            ..Default::default()
        };
        let s0 = PhaseState::new(vec![0.13, 0.29], vec![0.1, 0.1]);
        assert!(matches!(
            step(&h, &s0, &cfg),
            Err(SymplecticError::FixedPointDiverged { .. })
        ));
    }

    #[test]
    fn boundary_exit_aborts() {
        let h = constant_force(1e-2);
        let cfg = IntegratorConfig {
            h: 0.01,
            action_box: Some((vec![-0.05, -0.05], vec![0.05, 0.05])),
            ..Default::default()
        };
        let s0 = PhaseState::new(vec![0.25, 0.0], vec![0.0, 0.0]);
        match run_observed(&h, &s0, 10.0, &cfg, None) {
            Err(SymplecticError::BoundaryExit { t }) => assert!(t > 0.0),
            other => panic!("expected boundary exit, got {other:?}"),
        }
    }

    #[test]
    fn schemes_agree_at_second_order() {
        // θ-only perturbation on a non-resonant base flow
        let f = FieldBuilder::new(2)
            .cos(&[1, 0], ActionPolynomial::constant(2, 1.0))
            .cos(&[1, 1], ActionPolynomial::constant(2, 0.5))
            .build();
        let h = Hamiltonian::new(golden(), 1e-2, f).unwrap();
        let s0 = PhaseState::new(vec![0.3, 0.7], vec![0.0, 0.0]);
        let discrepancy = |hstep: f64| -> f64 {
            let cfg_m = IntegratorConfig {
                h: hstep,
                ..Default::default()
            };
            let cfg_s = IntegratorConfig {
                scheme: Scheme::Splitting,
                h: hstep,
                ..Default::default()
            };
            let a = run_observed(&h, &s0, 10.0, &cfg_m, None).unwrap().final_state;
            let b = run_observed(&h, &s0, 10.0, &cfg_s, None).unwrap().final_state;
            let mut d = 0.0f64;
            for i in 0..2 {
                d = d.max((a.action[i] - b.action[i]).abs());
                let mut dt = a.theta[i] - b.theta[i];
                if dt > 0.5 {
                    dt -= 1.0;
                }
                if dt < -0.5 {
                    dt += 1.0;
                }
                d = d.max(dt.abs());
            }
            d
        };
        let d1 = discrepancy(0.02);
        let d2 = discrepancy(0.01);
        let ratio = d1 / d2;
        assert!((3.0..=5.0).contains(&ratio), "O(h²) ratio out of range: {ratio}");
    }

    #[test]
    fn energy_stays_bounded_on_g2_model() {
        let h = g2_model(1e-2);
        let s0 = PhaseState::new(vec![0.21, 0.47], vec![0.0, 0.0]);
        let cfg = IntegratorConfig {
            h: 0.01,
            ..Default::default()
        };
        let report = run_observed(&h, &s0, 1000.0, &cfg, None).unwrap();
        assert!(
            report.max_energy_drift <= 1e-5,
            "energy drift {}",
            report.max_energy_drift
        );
    }

    #[test]
    fn one_step_jacobian_has_unit_determinant() {
        let h = g2_model(1e-2);
        let cfg = IntegratorConfig {
            h: 0.01,
            ..Default::default()
        };
        let s = PhaseState::new(vec![0.31, 0.64], vec![0.02, -0.07]);
        let det = step_jacobian_det(&h, &s, &cfg, 1e-5).unwrap();
        assert!((det - 1.0).abs() <= 1e-6, "det = {det}");
    }

    #[test]
    fn lipschitz_bound_dominates_hand_value() {
        // single cosine: |∂²θθ| = (2π)², others zero
        let f = FieldBuilder::new(2)
            .cos(&[1, 0], ActionPolynomial::constant(2, 1.0))
            .build();
        let l = lipschitz_grad_bound(&f, 1.0);
        assert!((TAU * TAU..=2.0 * TAU * TAU).contains(&l), "L = {l}");
    }
}
