//! On-disk formats: problem, spectrum and reconstruction files, and the CSV export.
//!
//! Complex numbers are `[re, im]` arrays. Every file carries `schema_version`,
//! which is checked before anything else is parsed.

use std::fmt::Write as _;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::forward::{ForwardConfig, Provenance, SpectralData, SpectralDatum, WeylSample};
use crate::inverse::{InverseConfig, ReconstructionResult};
use crate::model::{Potential, ProblemSpec, SampledPotential, ValidationMode, C64};
use crate::recovery::RecoveredConstants;

pub const SCHEMA_VERSION: u32 = 1;

/// Samples used for a builtin potential when `samples` is not given.
pub const DEFAULT_BUILTIN_SAMPLES: usize = 1001;

/// Named potentials, evaluated on a uniform grid of `samples` points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "expression", content = "params", rename_all = "lowercase", deny_unknown_fields)]
pub enum Builtin {
    Zero,
    Constant { value: C64 },
    /// `amplitude * exp(-rate (x - center)^2)`
    Gaussian { amplitude: C64, center: f64, rate: f64 },
}

impl Builtin {
    pub fn eval(&self, x: f64) -> C64 {
        match *self {
            Builtin::Zero => C64::new(0.0, 0.0),
            Builtin::Constant { value } => value,
            Builtin::Gaussian { amplitude, center, rate } => amplitude * (-rate * (x - center).powi(2)).exp(),
        }
    }

    fn check_finite(&self) -> Result<()> {
        let ok = match *self {
            Builtin::Zero => true,
            Builtin::Constant { value } => finite_c(value),
            Builtin::Gaussian { amplitude, center, rate } => finite_c(amplitude) && center.is_finite() && rate.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Schema("builtin potential has non-finite parameters".into()))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuiltinPotential {
    #[serde(flatten)]
    pub builtin: Builtin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PotentialInput {
    Sampled(SampledPotential),
    Builtin(BuiltinPotential),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemDoc {
    #[serde(rename = "T")]
    pub length: f64,
    pub b: f64,
    pub q: PotentialInput,
    pub a1: C64,
    pub a2: C64,
    pub h: C64,
    #[serde(rename = "H")]
    pub big_h: C64,
    pub d1: C64,
    pub d2: C64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub schema_version: u32,
    #[serde(default)]
    pub mode: ValidationMode,
    pub problem: ProblemDoc,
}

impl ProblemFile {
    pub fn from_spec(spec: &ProblemSpec, mode: ValidationMode) -> Self {
        ProblemFile {
            schema_version: SCHEMA_VERSION,
            mode,
            problem: ProblemDoc {
                length: spec.length,
                b: spec.interface,
                q: PotentialInput::Sampled(spec.potential.clone().into()),
                a1: spec.a1,
                a2: spec.a2,
                h: spec.h,
                big_h: spec.big_h,
                d1: spec.d1,
                d2: spec.d2,
            },
        }
    }

    /// Builds the problem; the potential grid must span exactly `[0, T]`.
    pub fn to_spec(&self) -> Result<ProblemSpec> {
        let p = &self.problem;
        if !p.length.is_finite() || !p.b.is_finite() {
            return Err(Error::Schema("T and b must be finite".into()));
        }
        let potential = match &p.q {
            PotentialInput::Sampled(s) => {
                let pot = Potential::from_samples(s.grid.clone(), s.values.clone())?;
                let (first, last) = (s.grid[0], s.grid[s.grid.len() - 1]);
                if first != 0.0 || last != p.length {
                    return Err(Error::Schema(format!("potential grid must span [0, {}], got [{first}, {last}]", p.length)));
                }
                pot
            }
            PotentialInput::Builtin(b) => {
                b.builtin.check_finite()?;
                let n = b.samples.unwrap_or(DEFAULT_BUILTIN_SAMPLES);
                if n < 2 {
                    return Err(Error::Schema("builtin potential needs at least 2 samples".into()));
                }
                Potential::from_fn(p.length, n, |x| b.builtin.eval(x))
            }
        };
        Ok(ProblemSpec {
            length: p.length,
            interface: p.b,
            potential,
            a1: p.a1,
            a2: p.a2,
            h: p.h,
            big_h: p.big_h,
            d1: p.d1,
            d2: p.d2,
        })
    }
}

/// Solver settings and a digest of them, so runs can be matched up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumProvenance {
    pub source: Provenance,
    pub config_hash: String,
    pub config: ForwardConfig,
    /// Digest of the problem that produced the spectrum, if known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem_hash: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumFile {
    pub schema_version: u32,
    #[serde(rename = "T")]
    pub length: f64,
    pub mode: ValidationMode,
    /// Asymptotic index of entry `k = 0`, per branch.
    #[serde(default)]
    pub seed_offset: [i64; 2],
    pub entries: Vec<SpectralDatum>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub weyl_samples: Vec<WeylSample>,
    pub provenance: SpectrumProvenance,
}

impl SpectrumFile {
    pub fn new(length: f64, mode: ValidationMode, data: &SpectralData, weyl: Vec<WeylSample>, cfg: &ForwardConfig, problem: Option<&ProblemSpec>) -> Result<Self> {
        Ok(SpectrumFile {
            schema_version: SCHEMA_VERSION,
            length,
            mode,
            seed_offset: data.seed_offset,
            entries: data.data.clone(),
            weyl_samples: weyl,
            provenance: SpectrumProvenance {
                source: data.provenance,
                config_hash: digest(cfg)?,
                config: *cfg,
                problem_hash: problem.map(digest).transpose()?,
            },
        })
    }

    /// Checks ordering and counts and returns the data marked as loaded.
    pub fn to_data(&self) -> Result<SpectralData> {
        if !self.length.is_finite() || self.length <= 0.0 {
            return Err(Error::Schema(format!("T must be positive and finite, got {}", self.length)));
        }
        if self.entries.windows(2).any(|w| (w[0].branch, w[0].k) >= (w[1].branch, w[1].k)) {
            return Err(Error::Schema("entries must be sorted branch-major, then by k, without repeats".into()));
        }
        for w in &self.weyl_samples {
            if !finite_c(w.rho) || !finite_c(w.m) {
                return Err(Error::Schema("non-finite Weyl sample".into()));
            }
        }
        let data = SpectralData::new(self.entries.clone(), Provenance::Loaded, self.seed_offset);
        data.check()?;
        Ok(data)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconstructionFile {
    pub schema_version: u32,
    #[serde(rename = "T")]
    pub length: f64,
    pub config: InverseConfig,
    pub config_hash: String,
    /// `true` when the model constants were supplied instead of recovered.
    pub constants_supplied: bool,
    pub result: ReconstructionResult,
}

impl ReconstructionFile {
    pub fn new(length: f64, cfg: &InverseConfig, constants_supplied: bool, result: ReconstructionResult) -> Result<Self> {
        Ok(ReconstructionFile { schema_version: SCHEMA_VERSION, length, config: *cfg, config_hash: digest(cfg)?, constants_supplied, result })
    }
}

/// Weyl-function samples supplied to `recover` separately from the spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeylSamplesFile {
    pub schema_version: u32,
    pub samples: Vec<WeylSample>,
}

/// Output of `recover`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsFile {
    pub schema_version: u32,
    #[serde(rename = "T")]
    pub length: f64,
    pub constants: RecoveredConstants,
}

/// Optional configuration file; both sections may be partial.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub forward: ForwardConfig,
    pub inverse: InverseConfig,
}

fn finite_c(z: C64) -> bool {
    z.re.is_finite() && z.im.is_finite()
}

/// Hex SHA-256 of the compact JSON form.
pub fn digest<T: Serialize>(v: &T) -> Result<String> {
    let bytes = serde_json::to_vec(v).map_err(|e| Error::Schema(e.to_string()))?;
    let mut out = String::with_capacity(64);
    for b in Sha256::digest(&bytes) {
        let _ = write!(out, "{b:02x}");
    }
    Ok(out)
}

/// Parses a versioned document; the version is checked first so that a newer
/// file is reported as such rather than as a field mismatch.
pub fn parse_versioned<T: DeserializeOwned>(text: &str, what: &str) -> Result<T> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Schema(format!("{what}: {e}")))?;
    match value.get("schema_version").and_then(|v| v.as_u64()) {
        Some(v) if v == SCHEMA_VERSION as u64 => {}
        Some(v) => return Err(Error::Schema(format!("{what}: unsupported schema_version {v} (expected {SCHEMA_VERSION})"))),
        None => return Err(Error::Schema(format!("{what}: missing integer schema_version"))),
    }
    serde_json::from_value(value).map_err(|e| Error::Schema(format!("{what}: {e}")))
}

pub fn to_json<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| Error::Schema(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

pub fn read_problem(path: &Path) -> Result<ProblemFile> {
    parse_versioned(&read_text(path)?, "problem file")
}

pub fn read_spectrum(path: &Path) -> Result<SpectrumFile> {
    parse_versioned(&read_text(path)?, "spectrum file")
}

pub fn read_reconstruction(path: &Path) -> Result<ReconstructionFile> {
    parse_versioned(&read_text(path)?, "reconstruction file")
}

pub fn read_weyl_samples(path: &Path) -> Result<Vec<WeylSample>> {
    let f: WeylSamplesFile = parse_versioned(&read_text(path)?, "Weyl sample file")?;
    if f.samples.iter().any(|w| !finite_c(w.rho) || !finite_c(w.m)) {
        return Err(Error::Schema("non-finite Weyl sample".into()));
    }
    Ok(f.samples)
}

pub fn read_config(path: &Path) -> Result<ConfigFile> {
    serde_json::from_str(&read_text(path)?).map_err(|e| Error::Schema(format!("config file: {e}")))
}

/// `x,q_re,q_im` with shortest round-trip formatting.
pub fn q_csv(x: &[f64], q: &[C64]) -> String {
    let mut out = String::from("x,q_re,q_im\n");
    for (x, v) in x.iter().zip(q) {
        let _ = writeln!(out, "{x},{},{}", v.re, v.im);
    }
    out
}
