//! Weights, interface location and jump factor from the tails of the spectral data.
//!
//! All limits are taken over the asymptotic index `k + seed_offset`, so the
//! `k`-linear parts of the eigenvalue asymptotics cancel exactly.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{SpectralData, WeylSample};
use crate::model::{cdiv, validate_problem, ProblemSpec, ValidationMode, C64};

/// `b` with an imaginary part above `NON_REAL_GEOMETRY * T` is rejected.
pub const NON_REAL_GEOMETRY: f64 = 1e-3;
/// Order-1 extrapolations whose last three partials spread by more than this
/// (relative) did not converge.
pub const MAX_SPREAD: f64 = 0.1;
/// `|A - 1|` below this means `omega- ~ 0`.
pub const DEGENERATE_RATIO: f64 = 1e-8;

const MIN_WEYL_SAMPLES: usize = 4;
const MIN_BRANCH_ENTRIES: usize = 20;

/// Result of extrapolating `v(t) = L + c / t + ...` as `t` grows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extrapolation {
    pub value: C64,
    /// Spread of the last three partial estimates.
    pub residual: f64,
    pub order: u8,
    pub partials: Vec<C64>,
}

/// Richardson extrapolation of order 0 (raw tail) or 1 (eliminating `c / t`).
pub fn richardson(samples: &[(f64, C64)], order: u8) -> Result<Extrapolation> {
    let needed = if order == 0 { 3 } else { 4 };
    if samples.len() < needed {
        return Err(Error::InsufficientSamples { what: "extrapolation points", needed, got: samples.len() });
    }
    let partials: Vec<C64> = match order {
        0 => samples.iter().map(|s| s.1).collect(),
        _ => samples
            .windows(2)
            .map(|w| (w[1].1 * w[1].0 - w[0].1 * w[0].0) / (w[1].0 - w[0].0))
            .collect(),
    };
    let tail = &partials[partials.len() - 3..];
    let mut residual = 0.0f64;
    for i in 0..3 {
        for j in i + 1..3 {
            residual = residual.max((tail[i] - tail[j]).norm());
        }
    }
    let value = *partials.last().unwrap();
    if !(value.re.is_finite() && value.im.is_finite()) {
        return Err(Error::NoConvergence("non-finite extrapolated value".into()));
    }
    Ok(Extrapolation { value, residual, order, partials })
}

/// `floor` is the scale below which `value` counts as zero.
fn checked(what: &str, e: Extrapolation, floor: f64) -> Result<Extrapolation> {
    if e.residual > MAX_SPREAD * e.value.norm().max(floor) {
        return Err(Error::NoConvergence(format!("{what}: partial estimates spread by {:e} around {}", e.residual, e.value)));
    }
    Ok(e)
}

/// Last half of a sequence, never fewer than `min` points.
fn tail_half<T: Copy>(v: &[T], min: usize) -> Vec<T> {
    let start = (v.len() / 2).min(v.len().saturating_sub(min));
    v[start..].to_vec()
}

/// `a1 = lim (i rho M)^{-1}` along a ray inside the sector where `Im(rho a1) > 0`.
pub fn recover_a1(samples: &[WeylSample]) -> Result<Extrapolation> {
    if samples.len() < MIN_WEYL_SAMPLES {
        return Err(Error::InsufficientSamples { what: "Weyl samples", needed: MIN_WEYL_SAMPLES, got: samples.len() });
    }
    let mut s: Vec<(f64, C64)> = samples.iter().map(|w| (w.rho.norm(), cdiv(C64::new(1.0, 0.0), C64::i() * w.rho * w.m))).collect();
    s.sort_by(|a, b| a.0.total_cmp(&b.0));
    checked("a1", richardson(&s, 1)?, 0.0)
}

/// Branch entries as `(asymptotic index, rho)`, sign of `rho` fixed by `pick`.
fn branch_rhos(data: &SpectralData, branch: u8, pick: impl Fn(f64, C64) -> bool) -> Result<Vec<(f64, C64)>> {
    let out: Vec<(f64, C64)> = data
        .branch(branch)
        .map(|d| {
            let k = data.seed_index(d) as f64;
            (k, if pick(k, d.rho) { d.rho } else { -d.rho })
        })
        .filter(|(k, _)| *k > 0.0)
        .collect();
    if out.len() < MIN_BRANCH_ENTRIES {
        return Err(Error::InsufficientSamples { what: if branch == 1 { "branch-1 entries" } else { "branch-2 entries" }, needed: MIN_BRANCH_ENTRIES, got: out.len() });
    }
    Ok(out)
}

/// `a1 l1 = lim -k pi / rho_k1`.
pub fn branch1_product(data: &SpectralData, order: u8) -> Result<Extrapolation> {
    // the physical root has -k pi / rho in the upper half plane (arg a1 in (0, pi))
    let rhos = branch_rhos(data, 1, |k, r| (-k * PI / r).im >= 0.0)?;
    let seq: Vec<(f64, C64)> = rhos.iter().map(|&(k, r)| (k, -k * PI / r)).collect();
    checked("a1 l1", richardson(&tail_half(&seq, 4), order)?, 0.0)
}

/// `a2 l2 = lim k pi / rho_k2`.
pub fn branch2_product(data: &SpectralData, order: u8) -> Result<Extrapolation> {
    let seq = branch2_sequence(data)?;
    let p: Vec<(f64, C64)> = seq.iter().map(|&(k, r)| (k, k * PI / r)).collect();
    checked("a2 l2", richardson(&tail_half(&p, 4), order)?, 0.0)
}

fn branch2_sequence(data: &SpectralData) -> Result<Vec<(f64, C64)>> {
    // arg a2 in [0, pi): k pi / rho has Im >= 0, and Re > 0 when real
    branch_rhos(data, 2, |k, r| {
        let p = k * PI / r;
        p.im > 1e-12 * p.norm() || (p.im >= -1e-12 * p.norm() && p.re > 0.0)
    })
}

/// `a1` from the Weyl coefficients when no Weyl-function samples are given:
/// `M_k1 -> 2 / (a1^2 l1)` and `a1 l1` from the eigenvalues.
pub fn recover_a1_from_coefficients(data: &SpectralData) -> Result<Extrapolation> {
    let m: Vec<(f64, C64)> = data.branch(1).map(|d| (data.seed_index(d) as f64, d.m)).filter(|(k, _)| *k > 0.0).collect();
    if m.len() < MIN_BRANCH_ENTRIES {
        return Err(Error::InsufficientSamples { what: "branch-1 entries", needed: MIN_BRANCH_ENTRIES, got: m.len() });
    }
    let minf = checked("M_k1", richardson(&tail_half(&m, 4), 1)?, 0.0)?;
    let p1 = branch1_product(data, 1)?;
    let value = cdiv(C64::new(2.0, 0.0), minf.value * p1.value);
    let residual = value.norm() * (minf.residual / minf.value.norm() + p1.residual / p1.value.norm());
    Ok(Extrapolation { value, residual, order: 1, partials: vec![value] })
}

/// `(b, l2, a2)`: `b = Re(a1 l1 / a1)`, `a2 = a2 l2 / (T - b)`.
pub fn recover_geometry(data: &SpectralData, a1: C64, length: f64) -> Result<(f64, f64, C64, GeometryDiagnostics)> {
    recover_geometry_order(data, a1, length, 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryDiagnostics {
    pub b_imag: f64,
    pub a1l1: Extrapolation,
    pub a2l2: Extrapolation,
}

/// Complex estimate `a1 l1 / a1` of `b`; its imaginary part measures the extrapolation quality.
pub fn interface_estimate(data: &SpectralData, a1: C64, order: u8) -> Result<(C64, Extrapolation)> {
    let p1 = branch1_product(data, order)?;
    Ok((cdiv(p1.value, a1), p1))
}

pub fn recover_geometry_order(data: &SpectralData, a1: C64, length: f64, order: u8) -> Result<(f64, f64, C64, GeometryDiagnostics)> {
    let (b_c, p1) = interface_estimate(data, a1, order)?;
    if b_c.im.abs() > NON_REAL_GEOMETRY * length {
        return Err(Error::NonRealGeometry { imag: b_c.im, threshold: NON_REAL_GEOMETRY * length });
    }
    let b = b_c.re;
    if !(b > 0.0 && b < length) {
        return Err(Error::NoConvergence(format!("recovered b = {b} outside (0, {length})")));
    }
    let l2 = length - b;
    let p2 = branch2_product(data, order)?;
    let a2 = p2.value / l2;
    Ok((b, l2, a2, GeometryDiagnostics { b_imag: b_c.im, a1l1: p1, a2l2: p2 }))
}

/// `A = lim exp(2 i rho_k2 a2 l2)` and `d1` with `arg d1` in `[0, pi)`.
///
/// The `k pi` part of `rho_k2 a2 l2` contributes nothing to the exponential,
/// so the limit is evaluated as `exp(2 i (a2 l2) C2)` with `C2 = lim (rho_k -
/// k (rho_{k+1} - rho_k))`. This keeps the error in `a2 l2` from being
/// multiplied by `k pi`.
pub fn recover_d1(data: &SpectralData, a1: C64, a2: C64, l2: f64) -> Result<(C64, C64, Extrapolation)> {
    let seq = branch2_sequence(data)?;
    let mut c: Vec<(f64, C64)> = Vec::new();
    for w in seq.windows(2) {
        let ((k0, r0), (k1, r1)) = (w[0], w[1]);
        if k1 - k0 == 1.0 {
            c.push((k0, r0 - (r1 - r0) * k0));
        }
    }
    // C2 is only defined modulo the seed spacing pi / (a2 l2)
    let spacing = PI / (a2 * l2).norm();
    let c2 = checked("C2", richardson(&tail_half(&c, 4), 1)?, spacing)?;
    let a = (C64::new(0.0, 2.0) * a2 * l2 * c2.value).exp();
    if (a - 1.0).norm() < DEGENERATE_RATIO * a.norm().max(1.0) {
        return Err(Error::DegenerateRatio(format!("{a}")));
    }
    Ok((a, d1_from_ratio(a1, a2, a), c2))
}

/// Root of `d1^2 = a1 (A + 1) / (a2 (A - 1))` with `arg d1` in `[0, pi)`.
pub fn d1_from_ratio(a1: C64, a2: C64, a: C64) -> C64 {
    let d = cdiv(a1 * (a + 1.0), a2 * (a - 1.0)).sqrt();
    // rounding can leave a real root at arg -0 or pi
    let arg = d.arg();
    let eps = 1e-12;
    if (-eps..PI - eps).contains(&arg) {
        d
    } else {
        -d
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveredConstants {
    pub a1: C64,
    pub a2: C64,
    pub d1: C64,
    #[serde(rename = "A_ratio")]
    pub a_ratio: C64,
    pub b: f64,
    pub l1: f64,
    pub l2: f64,
    /// Absent when the constants were supplied rather than recovered.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<RecoveryDiagnostics>,
}

impl RecoveredConstants {
    /// Constants of a known strict-mode problem.
    pub fn from_problem(spec: &ProblemSpec) -> Result<Self> {
        let c = validate_problem(spec, ValidationMode::Strict)?;
        Ok(RecoveredConstants {
            a1: spec.a1,
            a2: spec.a2,
            d1: spec.d1,
            a_ratio: c.a_ratio.ok_or(Error::UndefinedConstants("A needs omega- nonzero"))?,
            b: spec.interface,
            l1: c.l1,
            l2: c.l2,
            diagnostics: None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryDiagnostics {
    /// `"weyl-samples"` or `"weyl-coefficients"`.
    pub a1_source: String,
    pub a1: Extrapolation,
    pub geometry: GeometryDiagnostics,
    pub c2: Extrapolation,
    /// `|omega+ / omega- - A|` with omegas rebuilt from the recovered values.
    pub ratio_consistency: f64,
}

/// All constants; `weyl` samples are used for `a1` when given.
pub fn recover_constants(data: &SpectralData, weyl: Option<&[WeylSample]>, length: f64) -> Result<RecoveredConstants> {
    let (a1x, source) = match weyl {
        Some(w) if !w.is_empty() => (recover_a1(w)?, "weyl-samples"),
        _ => (recover_a1_from_coefficients(data)?, "weyl-coefficients"),
    };
    let a1 = a1x.value;
    let (b, l2, a2, geometry) = recover_geometry(data, a1, length)?;
    let (a_ratio, d1, c2) = recover_d1(data, a1, a2, l2)?;
    let wp = d1 * a2 + cdiv(a1, d1);
    let wm = d1 * a2 - cdiv(a1, d1);
    let ratio_consistency = (cdiv(wp, wm) - a_ratio).norm();
    Ok(RecoveredConstants {
        a1,
        a2,
        d1,
        a_ratio,
        b,
        l1: b,
        l2,
        diagnostics: Some(RecoveryDiagnostics { a1_source: source.into(), a1: a1x, geometry, c2, ratio_consistency }),
    })
}
