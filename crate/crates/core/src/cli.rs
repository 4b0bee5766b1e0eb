//! Command-line surface: `forward`, `invert`, `recover`, `roundtrip`.
//!
//! Exit codes: 0 success, 1 I/O, 2 invalid input, 3 solver or pipeline
//! failure, 4 round-trip tolerance failure (the report is still written).

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{locate_eigenvalues, sample_weyl_ray, ForwardConfig, SpectralData, WeylSample};
use crate::inverse::{identity_diagnostics, invert, invert_with_constants, IdentityPoint, ReconstructionResult};
use crate::io::{self, ConfigFile, ConstantsFile, ReconstructionFile, SpectrumFile, SCHEMA_VERSION};
use crate::model::{validate_problem, ProblemSpec, ValidationMode, C64};
use crate::recovery::{recover_constants, RecoveredConstants};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_TOLERANCE: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "cwsl", version, about = "Forward and inverse spectral problems with complex layered weights")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Eigenvalues and Weyl coefficients of a problem file.
    Forward(ForwardArgs),
    /// Reconstruct q, h, H, d2 from a spectrum file.
    Invert(InvertArgs),
    /// Recover b, a1, a2, d1 and A from a spectrum file.
    Recover(RecoverArgs),
    /// Forward, invert and compare against the input problem.
    Roundtrip(RoundtripArgs),
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    /// JSON file with optional `forward` and `inverse` sections; flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Local relative tolerance of the integrator [default: 1e-11].
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Points of the integrator's shared x-grid [default: 201].
    #[arg(long)]
    pub grid_points: Option<usize>,
}

impl SolverArgs {
    fn load(&self) -> Result<ConfigFile> {
        let mut c = match &self.config {
            Some(p) => io::read_config(p)?,
            None => ConfigFile::default(),
        };
        if let Some(t) = self.tolerance {
            if !(t.is_finite() && t > 0.0) {
                return Err(Error::Schema(format!("--tolerance must be positive, got {t}")));
            }
            c.forward.ode.rtol = t;
        }
        if let Some(g) = self.grid_points {
            c.forward.ode.grid_points = g;
        }
        c.inverse.forward = c.forward;
        Ok(c)
    }
}

#[derive(Debug, Args)]
pub struct ForwardArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Eigenvalues per branch.
    #[arg(long)]
    pub num_eigenvalues: usize,
    /// Weyl-function samples stored for the recovery of a1; 0 disables.
    #[arg(long, default_value_t = 8)]
    pub weyl_samples: usize,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Args)]
pub struct InvertArgs {
    #[arg(long)]
    pub spectrum: PathBuf,
    #[arg(long)]
    pub interval_length: f64,
    #[arg(long)]
    pub output: PathBuf,
    /// Entries per branch [default: 40].
    #[arg(long)]
    pub truncation: Option<usize>,
    /// Points of the output grid [default: 201].
    #[arg(long)]
    pub x_grid: Option<usize>,
    #[arg(long)]
    pub emit_csv: Option<PathBuf>,
    /// Take b, a1, a2, d1 from this problem file instead of recovering them.
    #[arg(long)]
    pub model_from: Option<PathBuf>,
    /// Eigenvalues per branch re-solved from the reconstruction; 0 skips [default: 21].
    #[arg(long)]
    pub resolve_count: Option<usize>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Args)]
pub struct RecoverArgs {
    #[arg(long)]
    pub spectrum: PathBuf,
    #[arg(long)]
    pub interval_length: f64,
    /// Weyl samples file; otherwise samples stored in the spectrum are used, then the coefficients.
    #[arg(long)]
    pub weyl_samples: Option<PathBuf>,
    /// Also write the constants as JSON.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RoundtripArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub num_eigenvalues: usize,
    #[arg(long)]
    pub truncation: usize,
    #[arg(long)]
    pub report: PathBuf,
    /// Points of the output grid [default: 201].
    #[arg(long)]
    pub x_grid: Option<usize>,
    /// Use the input's b, a1, a2, d1 for the model instead of recovering them.
    #[arg(long)]
    pub known_constants: bool,
    #[arg(long, default_value_t = 8)]
    pub weyl_samples: usize,
    /// Relative L2 tolerance for q.
    #[arg(long, default_value_t = 5e-2)]
    pub q_tol: f64,
    /// Relative tolerance for h, H, d2 and the recovered constants.
    #[arg(long, default_value_t = 1e-2)]
    pub param_tol: f64,
    /// Relative tolerance for re-solved eigenvalues.
    #[arg(long, default_value_t = 1e-4)]
    pub resolve_tol: f64,
    #[command(flatten)]
    pub solver: SolverArgs,
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    let out = match cli.command {
        Command::Forward(a) => cmd_forward(&a),
        Command::Invert(a) => cmd_invert(&a),
        Command::Recover(a) => cmd_recover(&a),
        Command::Roundtrip(a) => cmd_roundtrip(&a),
    };
    match out {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e.root() {
        Error::Io(_) => EXIT_IO,
        _ if e.is_validation() => EXIT_INPUT,
        _ => EXIT_SOLVER,
    }
}

/// Weyl samples with `|rho|` from `60 / T` to `240 / T`; strict mode only.
pub fn weyl_samples_for(spec: &ProblemSpec, mode: ValidationMode, cfg: &ForwardConfig, count: usize) -> Result<Vec<WeylSample>> {
    if count == 0 || mode == ValidationMode::Relaxed {
        return Ok(Vec::new());
    }
    let scale = 1.5 / spec.length;
    sample_weyl_ray(spec, mode, &cfg.ode, count, 40.0 * scale, 160.0 * scale)
}

fn forward_spectrum(spec: &ProblemSpec, mode: ValidationMode, n: usize, weyl: usize, cfg: &ForwardConfig) -> Result<(SpectralData, Vec<WeylSample>)> {
    if n == 0 {
        return Err(Error::InsufficientSamples { what: "--num-eigenvalues", needed: 1, got: 0 });
    }
    // logs the relaxed-mode warnings
    validate_problem(spec, mode)?;
    let data = locate_eigenvalues(spec, mode, n, cfg)?;
    let samples = weyl_samples_for(spec, mode, cfg, weyl)?;
    Ok((data, samples))
}

fn cmd_forward(a: &ForwardArgs) -> Result<i32> {
    let cfg = a.solver.load()?.forward;
    let file = io::read_problem(&a.input)?;
    let spec = file.to_spec()?;
    let (data, weyl) = forward_spectrum(&spec, file.mode, a.num_eigenvalues, a.weyl_samples, &cfg)?;
    let out = SpectrumFile::new(spec.length, file.mode, &data, weyl, &cfg, Some(&spec))?;
    io::write_text(&a.output, &io::to_json(&out)?)?;
    Ok(EXIT_OK)
}

fn load_strict_spectrum(path: &Path, length: f64) -> Result<SpectrumFile> {
    let file = io::read_spectrum(path)?;
    if file.mode != ValidationMode::Strict {
        return Err(Error::StrictModeRequired("the spectrum was computed in relaxed mode; inversion needs two branches"));
    }
    if !(length.is_finite() && length > 0.0) {
        return Err(Error::Schema(format!("--interval-length must be positive, got {length}")));
    }
    if (file.length - length).abs() > 1e-12 * length {
        log::warn!("spectrum file records T = {}, using --interval-length {length}", file.length);
    }
    Ok(file)
}

fn cmd_invert(a: &InvertArgs) -> Result<i32> {
    let mut cfg = a.solver.load()?.inverse;
    if let Some(n) = a.truncation {
        cfg.truncation = n;
    }
    if let Some(g) = a.x_grid {
        cfg.x_grid = g;
    }
    if let Some(r) = a.resolve_count {
        cfg.resolve_count = r;
    }
    let file = load_strict_spectrum(&a.spectrum, a.interval_length)?;
    let data = file.to_data()?;
    let supplied = a.model_from.is_some();
    let result = match &a.model_from {
        Some(p) => {
            let rec = RecoveredConstants::from_problem(&io::read_problem(p)?.to_spec()?)?;
            invert_with_constants(&data, rec, a.interval_length, &cfg)?
        }
        None => {
            let weyl = (!file.weyl_samples.is_empty()).then_some(file.weyl_samples.as_slice());
            invert(&data, weyl, a.interval_length, &cfg)?
        }
    };
    if let Some(e) = &result.residuals.resolve_error {
        log::warn!("re-solve check skipped: {e}");
    }
    if let Some(csv) = &a.emit_csv {
        io::write_text(csv, &io::q_csv(&result.x, &result.q))?;
    }
    let out = ReconstructionFile::new(a.interval_length, &cfg, supplied, result)?;
    io::write_text(&a.output, &io::to_json(&out)?)?;
    Ok(EXIT_OK)
}

fn fmt_c(z: C64) -> String {
    format!("[{}, {}]", z.re, z.im)
}

fn cmd_recover(a: &RecoverArgs) -> Result<i32> {
    let file = load_strict_spectrum(&a.spectrum, a.interval_length)?;
    let data = file.to_data()?;
    let samples = match &a.weyl_samples {
        Some(p) => io::read_weyl_samples(p)?,
        None => file.weyl_samples.clone(),
    };
    let weyl = (!samples.is_empty()).then_some(samples.as_slice());
    let rec = recover_constants(&data, weyl, a.interval_length)?;
    println!("b   {}", rec.b);
    println!("a1  {}", fmt_c(rec.a1));
    println!("a2  {}", fmt_c(rec.a2));
    println!("d1  {}", fmt_c(rec.d1));
    println!("A   {}", fmt_c(rec.a_ratio));
    if let Some(d) = &rec.diagnostics {
        println!("residual a1 ({})  {:e}", d.a1_source, d.a1.residual);
        println!("residual a1*l1  {:e}", d.geometry.a1l1.residual);
        println!("residual a2*l2  {:e}", d.geometry.a2l2.residual);
        println!("residual C2  {:e}", d.c2.residual);
        println!("imag b  {:e}", d.geometry.b_imag);
        println!("ratio consistency  {:e}", d.ratio_consistency);
    }
    if let Some(p) = &a.output {
        let out = ConstantsFile { schema_version: SCHEMA_VERSION, length: a.interval_length, constants: rec };
        io::write_text(p, &io::to_json(&out)?)?;
    }
    Ok(EXIT_OK)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub forward_s: f64,
    pub invert_s: f64,
    pub diagnostics_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundtripReport {
    pub schema_version: u32,
    pub num_eigenvalues: usize,
    pub truncation: usize,
    pub constants_supplied: bool,
    pub checks: Vec<Check>,
    /// Main-equation defect and identity residual at five interior points.
    pub identity: Vec<IdentityPoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub identity_error: Option<String>,
    /// Pipeline failure, if the inversion did not complete.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    pub timing: Timing,
    pub passed: bool,
}

/// `|a - b| / |b|`, or `|a - b|` when `b = 0`.
pub fn relative_error(a: C64, b: C64) -> f64 {
    let d = (a - b).norm();
    if b.norm() > 0.0 {
        d / b.norm()
    } else {
        d
    }
}

/// Relative L2 error of `q` against the true potential, trapezoid rule on the output grid.
pub fn q_relative_l2(result: &ReconstructionResult, truth: &ProblemSpec) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for i in 1..result.x.len() {
        let w = (result.x[i] - result.x[i - 1]) / 2.0;
        for j in [i - 1, i] {
            let t = truth.potential.eval(result.x[j]);
            num += w * (result.q[j] - t).norm_sqr();
            den += w * t.norm_sqr();
        }
    }
    if den > 0.0 {
        (num / den).sqrt()
    } else {
        num.sqrt()
    }
}

/// Checks of a reconstruction against the problem it came from.
pub fn compare(result: &ReconstructionResult, truth: &ProblemSpec, q_tol: f64, param_tol: f64, resolve_tol: f64) -> Vec<Check> {
    let check = |name: &str, value: f64, limit: f64| Check { name: name.into(), value, limit, pass: value <= limit };
    let c = &result.constants;
    let mut out = vec![
        check("q_rel_l2", q_relative_l2(result, truth), q_tol),
        check("h", relative_error(result.h, truth.h), param_tol),
        check("H", relative_error(result.big_h, truth.big_h), param_tol),
        check("d2", relative_error(result.d2, truth.d2), param_tol),
        check("b", (c.b - truth.interface).abs() / truth.interface, param_tol),
        check("a1", relative_error(c.a1, truth.a1), param_tol),
        check("a2", relative_error(c.a2, truth.a2), param_tol),
        check("d1", relative_error(c.d1, truth.d1), param_tol),
    ];
    let resolve = match result.residuals.max_resolve_error {
        Some(v) => v,
        None => f64::INFINITY,
    };
    out.push(check("resolve", resolve, resolve_tol));
    out
}

fn cmd_roundtrip(a: &RoundtripArgs) -> Result<i32> {
    let mut cfg = a.solver.load()?.inverse;
    cfg.truncation = a.truncation;
    if let Some(g) = a.x_grid {
        cfg.x_grid = g;
    }
    let file = io::read_problem(&a.input)?;
    if file.mode != ValidationMode::Strict {
        return Err(Error::StrictModeRequired("the inverse pipeline needs a strict-mode problem"));
    }
    let spec = file.to_spec()?;
    if a.truncation > a.num_eigenvalues {
        return Err(Error::InsufficientSamples { what: "--num-eigenvalues for the truncation", needed: a.truncation, got: a.num_eigenvalues });
    }

    let t0 = Instant::now();
    let (data, weyl) = forward_spectrum(&spec, ValidationMode::Strict, a.num_eigenvalues, a.weyl_samples, &cfg.forward)?;
    let forward_s = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let outcome = if a.known_constants {
        RecoveredConstants::from_problem(&spec).and_then(|rec| invert_with_constants(&data, rec, spec.length, &cfg))
    } else {
        let w = (!weyl.is_empty()).then_some(weyl.as_slice());
        invert(&data, w, spec.length, &cfg)
    };
    let invert_s = t1.elapsed().as_secs_f64();

    let t2 = Instant::now();
    let xs: Vec<f64> = (0..5).map(|i| spec.length * (2 * i + 1) as f64 / 10.0).collect();
    let rec = match &outcome {
        Ok(r) => Ok(r.constants.clone()),
        Err(_) => RecoveredConstants::from_problem(&spec),
    };
    let identity = rec.and_then(|rec| identity_diagnostics(&spec, &data, &rec, a.truncation, &xs, a.truncation / 2, &cfg));
    let diagnostics_s = t2.elapsed().as_secs_f64();

    let (checks, failure) = match &outcome {
        Ok(r) => (compare(r, &spec, a.q_tol, a.param_tol, a.resolve_tol), None),
        Err(e) => (Vec::new(), Some(e.to_string())),
    };
    let passed = failure.is_none() && checks.iter().all(|c| c.pass);
    let (identity, identity_error) = match identity {
        Ok(v) => (v, None),
        Err(e) => (Vec::new(), Some(e.to_string())),
    };
    let report = RoundtripReport {
        schema_version: SCHEMA_VERSION,
        num_eigenvalues: a.num_eigenvalues,
        truncation: a.truncation,
        constants_supplied: a.known_constants,
        checks,
        identity,
        identity_error,
        failure,
        timing: Timing { forward_s, invert_s, diagnostics_s },
        passed,
    };
    io::write_text(&a.report, &io::to_json(&report)?)?;
    match outcome {
        Err(e) => Err(e),
        Ok(_) if passed => Ok(EXIT_OK),
        Ok(_) => {
            for c in report.checks.iter().filter(|c| !c.pass) {
                eprintln!("tolerance failed: {} = {:e} > {:e}", c.name, c.value, c.limit);
            }
            Ok(EXIT_TOLERANCE)
        }
    }
}
