//! Command-line entry point: `arith`, `model`, `check`, `simulate`,
//! `normalform`, `experiment` and `fit` subcommands.
//!
//! Numeric output is printed as `key=value` lines with 17 significant digits.
//! Exit codes: 0 success (or condition holds), 1 condition fails, 2 resonance
//! within range, 3 enumeration/sampling budget exhausted, 64 usage error,
//! 65 bad input file, 70 internal numeric failure.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::experiment::{self, fmt_f64, ExperimentError, ExperimentKind, SweepConfig};
use crate::freq::{self, EnumerationLimits, FreqError, FrequencyVector};
use crate::model::{self, ModelError};
use crate::normalform::{self, AveragingMode, NormalFormError};
use crate::steepness::{self, SteepnessError, SteepSampling, G1_FLOOR, SINGULAR_VALUE_FLOOR};
use crate::symplectic::{self, IntegratorConfig, PhaseState, Scheme, SymplecticError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILS: i32 = 1;
pub const EXIT_RESONANT: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_BAD_INPUT: i32 = 65;
pub const EXIT_NUMERIC: i32 = 70;

/// Settings shared by every subcommand.
#[derive(Debug, Clone)]
pub struct GlobalConfig {
    pub limits: EnumerationLimits,
    pub g1_floor: f64,
    pub sv_floor: f64,
    pub fp_tol: f64,
    pub seed: u64,
    pub threads: usize,
}

impl Default for GlobalConfig {
    fn default() -> Self {
        Self {
            limits: EnumerationLimits::default(),
            g1_floor: G1_FLOOR,
            sv_floor: SINGULAR_VALUE_FLOOR,
            fp_tol: 1e-13,
            seed: 0,
            threads: 0,
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "hamlab",
    version,
    about = "Numerical laboratory for perturbed linear integrable Hamiltonians",
    disable_help_subcommand = true
)]
struct Cli {
    /// Worker threads (0 = auto); overrides HAMLAB_THREADS.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for all stochastic sampling.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Lattice/sampling budget override.
    #[arg(long, global = true)]
    budget: Option<u64>,
    /// Tolerance override NAME=VALUE; names: resonance_tol, g1_floor, sv_floor, fp_tol.
    #[arg(long = "tol", global = true, value_name = "NAME=VALUE")]
    tol: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Frequency-vector arithmetic.
    Arith {
        #[command(subcommand)]
        op: ArithOp,
    },
    /// Model file inspection.
    Model {
        #[command(subcommand)]
        op: ModelOp,
    },
    /// Genericity condition checks (exit 0 holds, 1 fails).
    Check {
        #[command(subcommand)]
        op: CheckOp,
    },
    /// Integrate one trajectory and write a CSV.
    Simulate(SimulateArgs),
    /// First-order averaging report.
    Normalform(NormalformArgs),
    /// Batch sweeps.
    Experiment {
        #[command(subcommand)]
        op: ExperimentOp,
    },
    /// Power-law fit of an existing records.csv.
    Fit(FitArgs),
}

#[derive(Subcommand, Debug)]
enum ArithOp {
    /// Small-divisor profile Ψ_α(Q) by exact lattice enumeration.
    Psi {
        /// Comma-separated frequency components (normalised to sup-norm 1).
        #[arg(long, value_name = "CSV")]
        alpha: String,
        #[arg(long = "Q")]
        q: f64,
    },
    /// Affordable-cutoff function Δ_α(x).
    Delta {
        #[arg(long, value_name = "CSV")]
        alpha: String,
        #[arg(long)]
        x: f64,
    },
    /// Minimiser of |k·α| up to |k|∞ ≤ qmax.
    Resonance {
        #[arg(long, value_name = "CSV")]
        alpha: String,
        #[arg(long)]
        qmax: u32,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Diophantine certificate γ = min |k·α|·|k|∞^τ.
    Dioph {
        #[arg(long, value_name = "CSV")]
        alpha: String,
        #[arg(long)]
        tau: f64,
        #[arg(long)]
        qmax: u32,
    },
}

#[derive(Subcommand, Debug)]
enum ModelOp {
    /// Check every invariant of a model file.
    Validate { file: PathBuf },
}

#[derive(Args, Debug)]
struct CheckCommon {
    #[arg(long)]
    model: PathBuf,
    /// Write the full report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
#[allow(clippy::enum_variant_names)]
enum CheckOp {
    /// Non-constant slow-angle average (instability hypothesis).
    G1 {
        #[command(flatten)]
        common: CheckCommon,
        /// Resonant block size; default: leading zeros of α.
        #[arg(long)]
        d: Option<usize>,
        #[arg(long, default_value_t = 64)]
        theta_grid: usize,
        #[arg(long = "I-grid", default_value_t = 5)]
        i_grid: usize,
    },
    /// Non-singular averaged Hessian.
    G2 {
        #[command(flatten)]
        common: CheckCommon,
        #[arg(long = "Istar", value_name = "CSV")]
        i_star: String,
    },
    /// Stably steep Taylor jet.
    G3 {
        #[command(flatten)]
        common: CheckCommon,
        #[arg(long = "Istar", value_name = "CSV")]
        i_star: String,
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 0.1)]
        rho: f64,
        #[arg(long = "C", default_value_t = 0.5)]
        c: f64,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
    },
    /// Sign-definite Hessian on the complement of α.
    G4 {
        #[command(flatten)]
        common: CheckCommon,
        #[arg(long = "Istar", value_name = "CSV")]
        i_star: String,
    },
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    eps: f64,
    #[arg(long, value_name = "CSV")]
    theta0: String,
    #[arg(long = "I0", value_name = "CSV")]
    i0: String,
    #[arg(long = "T")]
    t_span: f64,
    #[arg(long)]
    h: f64,
    #[arg(long, default_value = "midpoint")]
    scheme: String,
    #[arg(long, default_value_t = 1)]
    record_every: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct NormalformArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    eps: f64,
    /// "nonres" or "res:<d>".
    #[arg(long, default_value = "nonres")]
    mode: String,
    /// Constant in the cutoff rule K = ⌊Δ_α(c/ε)⌋.
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    #[arg(long, default_value_t = 32)]
    probes: usize,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum ExperimentOp {
    Diffusion {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    Stability {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Debug)]
struct FitArgs {
    #[arg(long)]
    records: PathBuf,
    /// tau (hitting times) or max_drift (envelopes).
    #[arg(long, default_value = "tau")]
    response: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Freq(#[from] FreqError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Steep(#[from] SteepnessError),
    #[error(transparent)]
    Symplectic(#[from] SymplecticError),
    #[error(transparent)]
    NormalForm(#[from] NormalFormError),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Freq(e) => match e {
                FreqError::ResonantWithinRange { .. } => EXIT_RESONANT,
                FreqError::EnumerationBudgetExceeded { .. } => EXIT_BUDGET,
                _ => EXIT_USAGE,
            },
            CliError::Model(e) => match e {
                ModelError::Io(_) | ModelError::Parse(_) | ModelError::Validation(_) => EXIT_BAD_INPUT,
                ModelError::DimensionMismatch { .. } => EXIT_BAD_INPUT,
                ModelError::Freq(FreqError::ResonantWithinRange { .. }) => EXIT_RESONANT,
                ModelError::Freq(_) => EXIT_BAD_INPUT,
                ModelError::BadEpsilon(_) | ModelError::InvalidAverageBlock { .. } => EXIT_USAGE,
                ModelError::DomainError { .. } => EXIT_NUMERIC,
            },
            CliError::Steep(e) => match e {
                SteepnessError::SamplingBudgetExceeded { .. } => EXIT_BUDGET,
                SteepnessError::BasisNotOrthonormal(_) => EXIT_USAGE,
                SteepnessError::Poly(_) => EXIT_USAGE,
                SteepnessError::Model(_) => EXIT_BAD_INPUT,
            },
            CliError::Symplectic(e) => match e {
                SymplecticError::SchemeUnavailable(_) | SymplecticError::BadConfig(_) => EXIT_USAGE,
                SymplecticError::Model(ModelError::Io(_) | ModelError::Parse(_) | ModelError::Validation(_)) => EXIT_BAD_INPUT,
                _ => EXIT_NUMERIC,
            },
            CliError::NormalForm(e) => match e {
                NormalFormError::SmallDivisorBelowTolerance { .. } => EXIT_RESONANT,
                NormalFormError::CutoffTooLarge(_, _) => EXIT_BUDGET,
                NormalFormError::NotResonantForm { .. } | NormalFormError::NoProbes => EXIT_USAGE,
                NormalFormError::Freq(FreqError::ResonantWithinRange { .. }) => EXIT_RESONANT,
                NormalFormError::Freq(FreqError::EnumerationBudgetExceeded { .. }) => EXIT_BUDGET,
                NormalFormError::Freq(_) => EXIT_USAGE,
                NormalFormError::Model(_) => EXIT_BAD_INPUT,
                NormalFormError::Symplectic(_) => EXIT_NUMERIC,
            },
            CliError::Experiment(e) => match e {
                ExperimentError::MissingThreshold | ExperimentError::BadConfig(_) => EXIT_USAGE,
                ExperimentError::ResonantAlpha(_) => EXIT_RESONANT,
                ExperimentError::Freq(FreqError::ResonantWithinRange { .. }) => EXIT_RESONANT,
                ExperimentError::Freq(FreqError::EnumerationBudgetExceeded { .. }) => EXIT_BUDGET,
                _ => EXIT_BAD_INPUT,
            },
            CliError::Io(_) => EXIT_BAD_INPUT,
        }
    }
}

fn parse_csv_floats(text: &str, what: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| CliError::Usage(format!("bad {what} component {s:?}: {e}")))
        })
        .collect()
}

fn parse_alpha(text: &str) -> Result<FrequencyVector, CliError> {
    let v = parse_csv_floats(text, "alpha")?;
    Ok(FrequencyVector::normalize(&v)?)
}

fn apply_tol_overrides(cfg: &mut GlobalConfig, overrides: &[String]) -> Result<(), CliError> {
    for entry in overrides {
        let (name, value) = entry
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--tol expects NAME=VALUE, got {entry:?}")))?;
        let value: f64 = value
            .parse()
            .map_err(|e| CliError::Usage(format!("bad tolerance value in {entry:?}: {e}")))?;
        if !(value > 0.0) {
            return Err(CliError::Usage(format!("tolerance {name} must be positive")));
        }
        match name {
            "resonance_tol" => cfg.limits.resonance_tol = value,
            "g1_floor" => cfg.g1_floor = value,
            "sv_floor" => cfg.sv_floor = value,
            "fp_tol" => cfg.fp_tol = value,
            other => {
                return Err(CliError::Usage(format!(
                    "unknown tolerance name {other:?} (documented: resonance_tol, g1_floor, sv_floor, fp_tol)"
                )))
            }
        }
    }
    Ok(())
}

/// Parse argv and run; returns the process exit code.
pub fn dispatch<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let kind = e.kind();
            let _ = e.print();
            return if matches!(kind, ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                EXIT_OK
            } else {
                EXIT_USAGE
            };
        }
    };

    let mut cfg = GlobalConfig {
        seed: cli.seed,
        ..Default::default()
    };
    if let Some(b) = cli.budget {
        cfg.limits.budget = b;
    }
    if let Err(e) = apply_tol_overrides(&mut cfg, &cli.tol) {
        eprintln!("error: {e}");
        return e.exit_code();
    }
    cfg.threads = cli
        .threads
        .or_else(|| {
            std::env::var("HAMLAB_THREADS")
                .ok()
                .and_then(|s| s.parse().ok())
        })
        .unwrap_or(0);
    if cfg.threads > 0 {
        // ignore the error if a pool already exists in this process
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global();
    }

    match run_command(cli.command, &cfg) {
        Ok(code) => code,
        Err(e) => {
            // resonance "errors" are answers: report the witness on stdout
            if let CliError::Freq(FreqError::ResonantWithinRange { witness, .. }) = &e {
                let ks: Vec<String> = witness.iter().map(|k| k.to_string()).collect();
                println!("resonant k={}", ks.join(","));
            } else {
                eprintln!("error: {e}");
            }
            e.exit_code()
        }
    }
}

fn run_command(cmd: Command, cfg: &GlobalConfig) -> Result<i32, CliError> {
    match cmd {
        Command::Arith { op } => run_arith(op, cfg),
        Command::Model { op } => run_model(op),
        Command::Check { op } => run_check(op, cfg),
        Command::Simulate(args) => run_simulate(args, cfg),
        Command::Normalform(args) => run_normalform(args, cfg),
        Command::Experiment { op } => run_experiment(op),
        Command::Fit(args) => run_fit(args),
    }
}

fn run_arith(op: ArithOp, cfg: &GlobalConfig) -> Result<i32, CliError> {
    match op {
        ArithOp::Psi { alpha, q } => {
            let a = parse_alpha(&alpha)?;
            let v = freq::psi(&a, q, &cfg.limits)?;
            println!("psi={}", fmt_f64(v));
        }
        ArithOp::Delta { alpha, x } => {
            let a = parse_alpha(&alpha)?;
            let v = freq::delta(&a, x, &cfg.limits)?;
            println!("delta={}", fmt_f64(v));
        }
        ArithOp::Resonance { alpha, qmax, tol } => {
            let a = parse_alpha(&alpha)?;
            let tol = tol.unwrap_or(cfg.limits.resonance_tol);
            let r = freq::find_resonance(&a, qmax, tol, &cfg.limits)?;
            println!("resonant={}", r.resonant);
            if let Some(w) = &r.witness {
                let ks: Vec<String> = w.iter().map(|k| k.to_string()).collect();
                println!("witness={}", ks.join(","));
            }
            println!("value={}", fmt_f64(r.witness_value));
            println!("q_searched={}", r.q_searched);
        }
        ArithOp::Dioph { alpha, tau, qmax } => {
            let a = parse_alpha(&alpha)?;
            let cert = freq::diophantine_certificate(&a, tau, qmax, &cfg.limits)?;
            println!("gamma={}", fmt_f64(cert.gamma));
            println!("tau={}", fmt_f64(cert.tau));
            println!("qmax={}", cert.q_max);
        }
    }
    Ok(EXIT_OK)
}

fn run_model(op: ModelOp) -> Result<i32, CliError> {
    match op {
        ModelOp::Validate { file } => {
            let (alpha, field) = model::load_model(&file)?;
            println!("ok=true");
            println!("n={}", field.n());
            println!("modes={}", field.num_modes());
            println!("max_wave={}", field.max_wave());
            println!("angle_only={}", field.is_angle_only());
            let ks: Vec<String> = alpha.components().iter().map(|&a| fmt_f64(a)).collect();
            println!("alpha={}", ks.join(","));
        }
    }
    Ok(EXIT_OK)
}

fn print_report(report: &steepness::ConditionReport) {
    println!("condition={:?}", report.condition);
    println!("holds={}", report.holds);
    for note in &report.notes {
        println!("note={note}");
    }
}

fn write_json<T: serde::Serialize>(path: &Option<PathBuf>, value: &T) -> Result<(), CliError> {
    if let Some(p) = path {
        std::fs::write(p, serde_json::to_string_pretty(value).map_err(|e| {
            CliError::Usage(format!("json serialisation failed: {e}"))
        })?)?;
    }
    Ok(())
}

fn run_check(op: CheckOp, cfg: &GlobalConfig) -> Result<i32, CliError> {
    let (report, json_path) = match op {
        CheckOp::G1 {
            common,
            d,
            theta_grid,
            i_grid,
        } => {
            let (alpha, field) = model::load_model(&common.model)?;
            let d = d.unwrap_or_else(|| alpha.leading_zeros());
            if d == 0 || d >= field.n() {
                return Err(CliError::Usage(format!(
                    "need a resonant block 1 <= d <= n-1 (got d={d}); pass --d explicitly"
                )));
            }
            let report = steepness::check_g1(&field, d, theta_grid, i_grid, cfg.g1_floor)?;
            if let Some(steepness::ConditionWitness::G1 {
                theta_star,
                i_star,
                derivative,
                zeta,
            }) = &report.witness
            {
                let ts: Vec<String> = theta_star.iter().map(|&t| fmt_f64(t)).collect();
                let is: Vec<String> = i_star.iter().map(|&t| fmt_f64(t)).collect();
                println!("theta_star={}", ts.join(","));
                println!("I_star={}", is.join(","));
                println!("derivative={}", fmt_f64(*derivative));
                println!("zeta={}", fmt_f64(*zeta));
            }
            (report, common.json)
        }
        CheckOp::G2 { common, i_star } => {
            let (_, field) = model::load_model(&common.model)?;
            let istar = parse_csv_floats(&i_star, "Istar")?;
            let report = steepness::check_g2(&field, &istar, cfg.sv_floor);
            if let Some(steepness::ConditionWitness::G2 {
                det,
                sigma_min,
                m_bound,
                ..
            }) = &report.witness
            {
                println!("det={}", fmt_f64(*det));
                println!("sigma_min={}", fmt_f64(*sigma_min));
                println!("M={}", fmt_f64(*m_bound));
            }
            (report, common.json)
        }
        CheckOp::G3 {
            common,
            i_star,
            m,
            rho,
            c,
            delta,
        } => {
            let (_, field) = model::load_model(&common.model)?;
            let istar = parse_csv_floats(&i_star, "Istar")?;
            let sampling = SteepSampling {
                seed: cfg.seed,
                ..Default::default()
            };
            let (report, verdict) =
                steepness::check_g3(&field, &istar, m, rho, c, delta, &sampling)?;
            println!("accepted={}", verdict.accepted);
            println!("worst_margin={}", fmt_f64(verdict.worst_margin));
            println!("worst_zeta={}", fmt_f64(verdict.worst_zeta));
            if let Some(b) = &verdict.worst_subspace {
                for (i, row) in b.iter().enumerate() {
                    let r: Vec<String> = row.iter().map(|&x| fmt_f64(x)).collect();
                    println!("worst_subspace_{i}={}", r.join(","));
                }
            }
            write_json(&common.json, &verdict)?;
            print_report(&report);
            return Ok(if report.holds { EXIT_OK } else { EXIT_FAILS });
        }
        CheckOp::G4 { common, i_star } => {
            let (alpha, field) = model::load_model(&common.model)?;
            let istar = parse_csv_floats(&i_star, "Istar")?;
            let report = steepness::check_g4(&field, &istar, &alpha, cfg.sv_floor);
            if let Some(steepness::ConditionWitness::G4 { eigenvalues, sign }) = &report.witness {
                let evs: Vec<String> = eigenvalues.iter().map(|&v| fmt_f64(v)).collect();
                println!("eigenvalues={}", evs.join(","));
                println!("sign={sign}");
            }
            (report, common.json)
        }
    };
    write_json(&json_path, &report)?;
    print_report(&report);
    Ok(if report.holds { EXIT_OK } else { EXIT_FAILS })
}

fn run_simulate(args: SimulateArgs, cfg: &GlobalConfig) -> Result<i32, CliError> {
    let (alpha, field) = model::load_model(&args.model)?;
    let n = field.n();
    let theta0 = parse_csv_floats(&args.theta0, "theta0")?;
    let i0 = parse_csv_floats(&args.i0, "I0")?;
    if theta0.len() != n || i0.len() != n {
        return Err(CliError::Usage(format!(
            "theta0 and I0 must have n={n} components"
        )));
    }
    let scheme = match args.scheme.as_str() {
        "midpoint" => Scheme::ImplicitMidpoint,
        "splitting" => Scheme::Splitting,
        other => {
            return Err(CliError::Usage(format!(
                "unknown scheme {other:?} (midpoint|splitting)"
            )))
        }
    };
    let ham = model::Hamiltonian::new(alpha, args.eps, field)?;
    let icfg = IntegratorConfig {
        scheme,
        h: args.h,
        fp_tol: cfg.fp_tol,
        record_every: args.record_every,
        ..Default::default()
    };
    let s0 = PhaseState::new(theta0, i0.clone());
    let traj = symplectic::integrate(&ham, &s0, args.t_span, &icfg)?;
    let mut out = std::fs::File::create(&args.out)?;
    let mut header = String::from("t");
    for i in 1..=n {
        header.push_str(&format!(",theta_{i}"));
    }
    for i in 1..=n {
        header.push_str(&format!(",I_{i}"));
    }
    header.push_str(",H,driftI");
    writeln!(out, "{header}")?;
    for s in &traj.samples {
        let mut line = fmt_f64(s.t);
        for v in &s.theta {
            line.push(',');
            line.push_str(&fmt_f64(*v));
        }
        for v in &s.action {
            line.push(',');
            line.push_str(&fmt_f64(*v));
        }
        let energy = ham.evaluate(&s.theta, &s.action)?;
        let drift = s
            .action
            .iter()
            .zip(i0.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        line.push(',');
        line.push_str(&fmt_f64(energy));
        line.push(',');
        line.push_str(&fmt_f64(drift));
        writeln!(out, "{line}")?;
    }
    println!("samples={}", traj.samples.len());
    println!("energy0={}", fmt_f64(traj.energy0));
    println!("max_energy_drift={}", fmt_f64(traj.max_energy_drift));
    println!("max_action_drift={}", fmt_f64(traj.max_action_drift));
    Ok(EXIT_OK)
}

fn parse_mode(text: &str, n: usize) -> Result<AveragingMode, CliError> {
    if text == "nonres" {
        return Ok(AveragingMode::NonResonant);
    }
    if let Some(d) = text.strip_prefix("res:") {
        let d: usize = d
            .parse()
            .map_err(|e| CliError::Usage(format!("bad resonant block in --mode: {e}")))?;
        if d == 0 || d >= n {
            return Err(CliError::Usage(format!(
                "resonant block must satisfy 1 <= d <= n-1 = {}",
                n - 1
            )));
        }
        return Ok(AveragingMode::Resonant { d });
    }
    Err(CliError::Usage(format!(
        "unknown --mode {text:?} (nonres | res:<d>)"
    )))
}

fn cutoff_for_mode(
    alpha: &FrequencyVector,
    mode: AveragingMode,
    eps: f64,
    c: f64,
    limits: &EnumerationLimits,
) -> Result<u32, CliError> {
    match mode {
        AveragingMode::NonResonant => Ok(normalform::choose_cutoff(alpha, eps, c, limits)?),
        AveragingMode::Resonant { d } => {
            let tail = &alpha.components()[d..];
            if tail.len() >= 2 {
                let tilde = FrequencyVector::normalize(tail)?;
                Ok(normalform::choose_cutoff(&tilde, eps, c, limits)?)
            } else {
                // one fast angle: |k·α̃| = |k|, so Δ(x) = x
                Ok((c / eps).max(1.0).floor() as u32)
            }
        }
    }
}

fn run_normalform(args: NormalformArgs, cfg: &GlobalConfig) -> Result<i32, CliError> {
    let (alpha, field) = model::load_model(&args.model)?;
    let mode = parse_mode(&args.mode, field.n())?;
    if !(args.eps > 0.0) {
        return Err(CliError::Usage("eps must be positive".into()));
    }
    let cutoff = cutoff_for_mode(&alpha, mode, args.eps, args.c, &cfg.limits)?;
    let mut nf = normalform::solve_homological(&field, &alpha, cutoff, mode, &cfg.limits)?;
    let ham = model::Hamiltonian::new(alpha, args.eps, field.clone())?;
    let remainder = normalform::remainder_probe(&ham, &nf, args.probes, cfg.seed)?;
    nf.remainder_bound = Some(remainder);
    let r_norm = if field.domain_radius().is_finite() {
        field.domain_radius()
    } else {
        1.0
    };
    println!("K={cutoff}");
    println!("eliminated_modes={}", nf.eliminated_modes);
    println!("smallest_divisor={}", fmt_f64(nf.smallest_divisor));
    println!("remainder={}", fmt_f64(remainder));
    println!(
        "chi_norm={}",
        fmt_f64(nf.chi.weighted_norm(field.analyticity_width(), r_norm))
    );
    write_json(&args.json, &nf)?;
    Ok(EXIT_OK)
}

fn run_experiment(op: ExperimentOp) -> Result<i32, CliError> {
    let (kind, config_path, out_dir) = match op {
        ExperimentOp::Diffusion { config, out } => (ExperimentKind::Diffusion, config, out),
        ExperimentOp::Stability { config, out } => (ExperimentKind::Stability, config, out),
    };
    let cfg = SweepConfig::load(&config_path)?;
    if cfg.experiment != kind {
        return Err(CliError::Usage(format!(
            "config declares experiment {:?} but the subcommand is {:?}",
            cfg.experiment, kind
        )));
    }
    // model path is resolved relative to the config file
    let model_path = if cfg.model.is_absolute() {
        cfg.model.clone()
    } else {
        config_path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(&cfg.model)
    };
    let (alpha, field) = model::load_model(&model_path)?;
    let output = match kind {
        ExperimentKind::Diffusion => experiment::run_diffusion(&cfg, &alpha, &field)?,
        ExperimentKind::Stability => experiment::run_stability(&cfg, &alpha, &field)?,
    };
    for w in &output.warnings {
        eprintln!("warning: {w}");
    }
    let fit = match kind {
        ExperimentKind::Diffusion => experiment::fit_powerlaw(&output.records),
        ExperimentKind::Stability => experiment::fit_drift_envelope(&output.records),
    };
    std::fs::create_dir_all(&out_dir)?;
    experiment::write_records_csv(&out_dir.join("records.csv"), &output.records)?;
    experiment::write_fit_json(&out_dir.join("fit.json"), &fit)?;
    experiment::write_summary(&out_dir.join("summary.txt"), &cfg, &output, &fit)?;
    println!("records={}", output.records.len());
    if let Ok(f) = &fit {
        println!("slope={}", fmt_f64(f.slope));
        println!("r2={}", fmt_f64(f.r2));
    }
    println!("out={}", out_dir.display());
    Ok(EXIT_OK)
}

fn run_fit(args: FitArgs) -> Result<i32, CliError> {
    let records = experiment::read_records_csv(&args.records)?;
    let fit = match args.response.as_str() {
        "tau" => experiment::fit_powerlaw(&records)?,
        "max_drift" => experiment::fit_drift_envelope(&records)?,
        other => {
            return Err(CliError::Usage(format!(
                "unknown response {other:?} (tau | max_drift)"
            )))
        }
    };
    println!("slope={}", fmt_f64(fit.slope));
    println!("intercept={}", fmt_f64(fit.intercept));
    println!("r2={}", fmt_f64(fit.r2));
    println!("n_points={}", fit.n_points);
    if let Some(out) = &args.out {
        std::fs::write(out, serde_json::to_string_pretty(&fit).map_err(|e| {
            CliError::Usage(format!("json serialisation failed: {e}"))
        })?)?;
    }
    Ok(EXIT_OK)
}
