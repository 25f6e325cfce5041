//! Batch sweeps over ε and initial conditions.
//!
//! `run_diffusion` measures hitting times of a fixed drift threshold on
//! resonant models (the `τ ~ ε⁻¹` law); `run_stability` measures drift
//! envelopes at a fixed horizon on non-resonant models and pairs them with
//! `Δ_α(c/ε)⁻¹` for comparison. Records are independent jobs executed on a
//! worker pool and sorted by `(eps, ic)` before writing, so parallelism never
//! changes the artifact. Wall-clock times are informational and are the one
//! column excluded from bit-identical reproducibility.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::freq::{self, EnumerationLimits, FreqError, FrequencyVector};
use crate::model::{FourierTaylorField, Hamiltonian, ModelError};
use crate::steepness::{check_g1, G1_FLOOR};
use crate::symplectic::{self, IntegratorConfig, PhaseState, Scheme};

/// Records with energy drift beyond this are flagged in the summary.
pub const ENERGY_SANITY: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("diffusion sweeps need a drift threshold c1")]
    MissingThreshold,
    #[error("stability sweeps need a non-resonant frequency vector: {0}")]
    ResonantAlpha(String),
    #[error("need at least 3 uncensored records for a fit, got {0}")]
    InsufficientData(usize),
    #[error("invalid sweep config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Freq(#[from] FreqError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Diffusion,
    Stability,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialCondition {
    pub theta0: Vec<f64>,
    #[serde(rename = "I0")]
    pub i0: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TRule {
    /// `T_max = factor / ε`.
    MultipleOfInvEps { factor: f64 },
    /// Fixed horizon.
    Fixed {
        #[serde(rename = "T")]
        t: f64,
    },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HRule {
    Fixed { h: f64 },
    /// `h = h0 · ε^p`.
    Scaled { h0: f64, p: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub model: PathBuf,
    pub experiment: ExperimentKind,
    /// Perturbation strengths, conventionally descending.
    pub eps_list: Vec<f64>,
    /// Drift threshold (diffusion only).
    #[serde(default)]
    pub c1: Option<f64>,
    #[serde(rename = "T_rule")]
    pub t_rule: TRule,
    pub h_rule: HRule,
    pub initial_conditions: Vec<InitialCondition>,
    pub seed: u64,
    /// Constant in `Δ_α(c/ε)` for the stability comparison column.
    #[serde(default = "default_c")]
    pub c: f64,
}

fn default_c() -> f64 {
    1.0
}

impl SweepConfig {
    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path)?;
        let cfg: SweepConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.eps_list.is_empty() {
            return Err(ExperimentError::BadConfig("eps_list must not be empty".into()));
        }
        if self.eps_list.iter().any(|&e| !(e > 0.0)) {
            return Err(ExperimentError::BadConfig("eps_list must be strictly positive".into()));
        }
        if self.initial_conditions.is_empty() {
            return Err(ExperimentError::BadConfig("need at least one initial condition".into()));
        }
        if let Some(c1) = self.c1 {
            if !(c1 > 0.0) {
                return Err(ExperimentError::BadConfig("c1 must be positive".into()));
            }
        }
        Ok(())
    }

    /// Fit-quality warnings the records can still be produced under.
    pub fn fit_warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.eps_list.len() < 3 {
            w.push("fewer than 3 eps values: power-law fit will be unavailable".into());
        }
        let (lo, hi) = self
            .eps_list
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &e| (lo.min(e), hi.max(e)));
        if hi / lo < 10.0 {
            w.push("eps range spans less than one decade: fit will be poorly conditioned".into());
        }
        w
    }

    fn h_for(&self, eps: f64) -> f64 {
        match self.h_rule {
            HRule::Fixed { h } => h,
            HRule::Scaled { h0, p } => h0 * eps.powf(p),
        }
    }

    fn t_max_for(&self, eps: f64) -> f64 {
        match self.t_rule {
            TRule::MultipleOfInvEps { factor } => factor / eps,
            TRule::Fixed { t } => t,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Outcome {
    Hit { tau: f64 },
    Censored { t_max: f64, drift_at_t: f64 },
    Error { message: String },
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRecord {
    pub eps: f64,
    pub ic_index: usize,
    pub outcome: Outcome,
    pub max_drift: f64,
    pub energy_drift: f64,
    /// `Δ_α(c/ε)⁻¹`, stability sweeps only.
    pub delta_inv: Option<f64>,
    pub wall_s: f64,
    /// Energy drift exceeded the sanity bound.
    pub flagged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub n_points: usize,
    pub response: String,
}

#[derive(Debug)]
pub struct SweepOutput {
    pub records: Vec<SweepRecord>,
    pub warnings: Vec<String>,
}

fn integrator_config(h: f64) -> IntegratorConfig {
    IntegratorConfig {
        scheme: Scheme::ImplicitMidpoint,
        h,
        ..Default::default()
    }
}

fn run_one(
    ham: &Hamiltonian,
    ic: &InitialCondition,
    t_max: f64,
    h: f64,
    threshold: Option<f64>,
) -> (Outcome, f64, f64) {
    let s0 = PhaseState::new(ic.theta0.clone(), ic.i0.clone());
    let cfg = integrator_config(h);
    match symplectic::run_observed(ham, &s0, t_max, &cfg, threshold) {
        Ok(report) => {
            let outcome = match report.hit {
                Some(tau) => Outcome::Hit { tau },
                None => Outcome::Censored {
                    t_max,
                    drift_at_t: report.drift_at_end,
                },
            };
            (outcome, report.max_action_drift, report.max_energy_drift)
        }
        Err(e) => (
            Outcome::Error {
                message: e.to_string().replace([',', '\n'], ";"),
            },
            f64::NAN,
            f64::NAN,
        ),
    }
}

fn sweep(
    cfg: &SweepConfig,
    ham: &Hamiltonian,
    threshold: Option<f64>,
    delta_inv_per_eps: &[Option<f64>],
) -> Vec<SweepRecord> {
    let jobs: Vec<(usize, usize)> = (0..cfg.eps_list.len())
        .flat_map(|ei| (0..cfg.initial_conditions.len()).map(move |ici| (ei, ici)))
        .collect();
    let mut records: Vec<SweepRecord> = jobs
        .par_iter()
        .map(|&(ei, ici)| {
            let eps = cfg.eps_list[ei];
            let started = Instant::now();
            let ham_eps = ham.with_epsilon(eps).expect("epsilon validated");
            let (outcome, max_drift, energy_drift) = run_one(
                &ham_eps,
                &cfg.initial_conditions[ici],
                cfg.t_max_for(eps),
                cfg.h_for(eps),
                threshold,
            );
            SweepRecord {
                eps,
                ic_index: ici,
                outcome,
                max_drift,
                energy_drift,
                delta_inv: delta_inv_per_eps[ei],
                wall_s: started.elapsed().as_secs_f64(),
                flagged: !(energy_drift <= ENERGY_SANITY),
            }
        })
        .collect();
    // jobs are generated in (eps, ic) order and par_iter preserves it, but the
    // artifact contract is explicit about the ordering
    records.sort_by(|a, b| {
        let ea = cfg.eps_list.iter().position(|&e| e == a.eps).unwrap();
        let eb = cfg.eps_list.iter().position(|&e| e == b.eps).unwrap();
        (ea, a.ic_index).cmp(&(eb, b.ic_index))
    });
    records
}

/// Hitting-time sweep on a (generically resonant) model. A failing G1 check
/// only warns: negative controls are legitimate sweeps.
pub fn run_diffusion(
    cfg: &SweepConfig,
    alpha: &FrequencyVector,
    field: &FourierTaylorField,
) -> Result<SweepOutput, ExperimentError> {
    cfg.validate()?;
    let c1 = cfg.c1.ok_or(ExperimentError::MissingThreshold)?;
    let mut warnings = cfg.fit_warnings();
    let d = alpha.leading_zeros();
    if d == 0 || d >= alpha.n() {
        warnings.push(
            "model frequency vector has no leading resonant block (0, α̃); G1 check skipped".into(),
        );
    } else {
        match check_g1(field, d, 32, 3, G1_FLOOR) {
            Ok(report) if !report.holds => warnings.push(
                "G1 fails on this model: expect censored records (negative control)".into(),
            ),
            Ok(_) => {}
            Err(e) => warnings.push(format!("G1 check errored: {e}")),
        }
    }
    let ham = Hamiltonian::new(alpha.clone(), cfg.eps_list[0], field.clone())?;
    let delta_inv = vec![None; cfg.eps_list.len()];
    let records = sweep(cfg, &ham, Some(c1), &delta_inv);
    Ok(SweepOutput { records, warnings })
}

/// Fixed-horizon drift sweep on a non-resonant model, with the
/// `Δ_α(c/ε)⁻¹` envelope attached per ε.
pub fn run_stability(
    cfg: &SweepConfig,
    alpha: &FrequencyVector,
    field: &FourierTaylorField,
) -> Result<SweepOutput, ExperimentError> {
    cfg.validate()?;
    let limits = EnumerationLimits::default();
    let probe = freq::find_resonance(alpha, 30, limits.resonance_tol, &limits)?;
    if probe.resonant {
        return Err(ExperimentError::ResonantAlpha(format!(
            "witness k = {:?}",
            probe.witness.unwrap_or_default()
        )));
    }
    let warnings = cfg.fit_warnings();
    let mut delta_inv = Vec::with_capacity(cfg.eps_list.len());
    for &eps in &cfg.eps_list {
        let x = (cfg.c / eps).max(1.0);
        delta_inv.push(Some(1.0 / freq::delta(alpha, x, &limits)?));
    }
    let ham = Hamiltonian::new(alpha.clone(), cfg.eps_list[0], field.clone())?;
    let records = sweep(cfg, &ham, None, &delta_inv);
    Ok(SweepOutput { records, warnings })
}

fn ols(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    (slope, intercept, r2)
}

/// OLS of `log τ` against `log ε` over the uncensored records.
pub fn fit_powerlaw(records: &[SweepRecord]) -> Result<FitResult, ExperimentError> {
    let points: Vec<(f64, f64)> = records
        .iter()
        .filter_map(|r| match r.outcome {
            Outcome::Hit { tau } => Some((r.eps.ln(), tau.ln())),
            _ => None,
        })
        .collect();
    if points.len() < 3 {
        return Err(ExperimentError::InsufficientData(points.len()));
    }
    let (slope, intercept, r2) = ols(&points);
    Ok(FitResult {
        slope,
        intercept,
        r2,
        n_points: points.len(),
        response: "tau".into(),
    })
}

/// OLS of `log max_drift` against `log ε` (stability envelopes).
pub fn fit_drift_envelope(records: &[SweepRecord]) -> Result<FitResult, ExperimentError> {
    let points: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| !matches!(r.outcome, Outcome::Error { .. }) && r.max_drift > 0.0)
        .map(|r| (r.eps.ln(), r.max_drift.ln()))
        .collect();
    if points.len() < 3 {
        return Err(ExperimentError::InsufficientData(points.len()));
    }
    let (slope, intercept, r2) = ols(&points);
    Ok(FitResult {
        slope,
        intercept,
        r2,
        n_points: points.len(),
        response: "max_drift".into(),
    })
}

/// 17-significant-digit decimal so artifacts round-trip losslessly.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_records_csv(path: &Path, records: &[SweepRecord]) -> Result<(), ExperimentError> {
    let mut out = std::fs::File::create(path)?;
    writeln!(out, "eps,ic,outcome,tau,max_drift,delta_inv,energy_drift,wall_s")?;
    for r in records {
        let (outcome, tau) = match &r.outcome {
            Outcome::Hit { tau } => ("hit", fmt_f64(*tau)),
            Outcome::Censored { .. } => ("censored", String::new()),
            Outcome::Error { .. } => ("error", String::new()),
        };
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            fmt_f64(r.eps),
            r.ic_index,
            outcome,
            tau,
            fmt_f64(r.max_drift),
            r.delta_inv.map(fmt_f64).unwrap_or_default(),
            fmt_f64(r.energy_drift),
            fmt_f64(r.wall_s),
        )?;
    }
    Ok(())
}

pub fn write_fit_json(path: &Path, fit: &Result<FitResult, ExperimentError>) -> Result<(), ExperimentError> {
    let value = match fit {
        Ok(f) => serde_json::to_value(f)?,
        Err(e) => serde_json::json!({ "error": e.to_string() }),
    };
    std::fs::write(path, serde_json::to_string_pretty(&value)?)?;
    Ok(())
}

pub fn write_summary(
    path: &Path,
    cfg: &SweepConfig,
    output: &SweepOutput,
    fit: &Result<FitResult, ExperimentError>,
) -> Result<(), ExperimentError> {
    let mut text = String::new();
    text.push_str(&format!("experiment={:?}\n", cfg.experiment));
    text.push_str(&format!("model={}\n", cfg.model.display()));
    let hits = output
        .records
        .iter()
        .filter(|r| matches!(r.outcome, Outcome::Hit { .. }))
        .count();
    let censored = output
        .records
        .iter()
        .filter(|r| matches!(r.outcome, Outcome::Censored { .. }))
        .count();
    let errors = output.records.len() - hits - censored;
    let flagged = output.records.iter().filter(|r| r.flagged).count();
    text.push_str(&format!(
        "records={} hits={} censored={} errors={} energy_flagged={}\n",
        output.records.len(),
        hits,
        censored,
        errors,
        flagged
    ));
    match fit {
        Ok(f) => text.push_str(&format!(
            "fit: response={} slope={} intercept={} r2={} n={}\n",
            f.response,
            fmt_f64(f.slope),
            fmt_f64(f.intercept),
            fmt_f64(f.r2),
            f.n_points
        )),
        Err(e) => text.push_str(&format!("fit: unavailable ({e})\n")),
    }
    for r in &output.records {
        let tau = match &r.outcome {
            Outcome::Hit { tau } => fmt_f64(*tau),
            Outcome::Censored { .. } => "censored".into(),
            Outcome::Error { message } => format!("error({message})"),
        };
        let ratio = r
            .delta_inv
            .map(|d| format!(" drift/delta_inv={}", fmt_f64(r.max_drift / d)))
            .unwrap_or_default();
        text.push_str(&format!(
            "eps={} ic={} tau={tau} max_drift={}{}\n",
            fmt_f64(r.eps),
            r.ic_index,
            fmt_f64(r.max_drift),
            ratio
        ));
    }
    for w in &output.warnings {
        text.push_str(&format!("warning: {w}\n"));
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Parse a records.csv produced by `write_records_csv` (for the `fit` command).
pub fn read_records_csv(path: &Path) -> Result<Vec<SweepRecord>, ExperimentError> {
    let text = std::fs::read_to_string(path)?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if !line.starts_with("eps,") {
                return Err(ExperimentError::BadConfig("records.csv header missing".into()));
            }
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 8 {
            return Err(ExperimentError::BadConfig(format!(
                "line {} has {} columns, expected 8",
                i + 1,
                cols.len()
            )));
        }
        let parse = |s: &str| -> Result<f64, ExperimentError> {
            s.parse::<f64>()
                .map_err(|e| ExperimentError::BadConfig(format!("bad float {s:?}: {e}")))
        };
        let eps = parse(cols[0])?;
        let ic_index: usize = cols[1]
            .parse()
            .map_err(|e| ExperimentError::BadConfig(format!("bad ic index: {e}")))?;
        let max_drift = parse(cols[4])?;
        let outcome = match cols[2] {
            "hit" => Outcome::Hit { tau: parse(cols[3])? },
            "censored" => Outcome::Censored {
                t_max: 0.0,
                drift_at_t: max_drift,
            },
            other => Outcome::Error {
                message: other.to_string(),
            },
        };
        records.push(SweepRecord {
            eps,
            ic_index,
            outcome,
            max_drift,
            energy_drift: parse(cols[6])?,
            delta_inv: if cols[5].is_empty() { None } else { Some(parse(cols[5])?) },
            wall_s: parse(cols[7])?,
            flagged: false,
        });
    }
    Ok(records)
}
