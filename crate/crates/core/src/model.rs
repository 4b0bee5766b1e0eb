//! Problem parameterization and the closed-form constants derived from it.
//!
//! The operator is `-y'' + q y = lambda r y` on `(0, T)` with Robin conditions
//! `y'(0) - h y(0) = 0`, `y'(T) + H y(T) = 0`, a piecewise-constant weight
//! `r = a1^2` on `(0, b)` and `r = a2^2` on `(b, T)`, and the transmission
//! condition `(y, y')(b+0) = J (y, y')(b-0)` with `J = [[d1, 0], [d2, 1/d1]]`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// A 2x2 complex matrix in row-major order.
pub type Mat2 = [[C64; 2]; 2];

/// Complex potential sampled on a strictly increasing grid covering `[0, T]`,
/// linearly interpolated between samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SampledPotential", into = "SampledPotential")]
pub struct Potential {
    nodes: Vec<f64>,
    values: Vec<C64>,
    uniform_step: Option<f64>,
}

/// Serialized form: `{"grid": [x...], "values": [[re, im]...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampledPotential {
    pub grid: Vec<f64>,
    pub values: Vec<C64>,
}

impl TryFrom<SampledPotential> for Potential {
    type Error = Error;
    fn try_from(s: SampledPotential) -> Result<Self> {
        Potential::from_samples(s.grid, s.values)
    }
}

impl From<Potential> for SampledPotential {
    fn from(p: Potential) -> Self {
        SampledPotential { grid: p.nodes, values: p.values }
    }
}

impl Potential {
    pub fn zero(length: f64, samples: usize) -> Self {
        Self::from_fn(length, samples, |_| C64::new(0.0, 0.0))
    }

    pub fn from_fn(length: f64, samples: usize, f: impl Fn(f64) -> C64) -> Self {
        let samples = samples.max(2);
        let step = length / (samples - 1) as f64;
        let nodes: Vec<f64> = (0..samples)
            .map(|i| if i + 1 == samples { length } else { i as f64 * step })
            .collect();
        let values = nodes.iter().map(|&x| f(x)).collect();
        Potential { nodes, values, uniform_step: Some(step) }
    }

    pub fn from_samples(nodes: Vec<f64>, values: Vec<C64>) -> Result<Self> {
        if nodes.len() < 2 || nodes.len() != values.len() {
            return Err(Error::Schema(format!(
                "potential needs matching grid/values of length >= 2 (got {} and {})",
                nodes.len(),
                values.len()
            )));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Schema("potential grid must be strictly increasing".into()));
        }
        if nodes.iter().any(|x| !x.is_finite()) || values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Schema("potential contains non-finite numbers".into()));
        }
        let mut p = Potential { nodes, values, uniform_step: None };
        p.detect_uniform();
        Ok(p)
    }

    fn detect_uniform(&mut self) {
        let n = self.nodes.len();
        let step = (self.nodes[n - 1] - self.nodes[0]) / (n - 1) as f64;
        let uniform = self
            .nodes
            .iter()
            .enumerate()
            .all(|(i, &x)| (x - (self.nodes[0] + i as f64 * step)).abs() <= 1e-12 * (1.0 + x.abs()));
        self.uniform_step = if uniform && self.nodes[0] == 0.0 { Some(step) } else { None };
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| v.re == 0.0 && v.im == 0.0)
    }

    /// Index `i` of the grid cell `[nodes[i], nodes[i+1]]` holding `x`.
    #[inline]
    pub fn cell(&self, x: f64) -> usize {
        let last = self.nodes.len() - 2;
        match self.uniform_step {
            Some(step) => ((x / step) as isize).clamp(0, last as isize) as usize,
            None => self.nodes.partition_point(|&t| t <= x).saturating_sub(1).min(last),
        }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> C64 {
        let i = self.cell(x);
        let (x0, x1) = (self.nodes[i], self.nodes[i + 1]);
        let t = (x - x0) / (x1 - x0);
        self.values[i] * (1.0 - t) + self.values[i + 1] * t
    }
}

/// Full parameterization of the boundary value problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    /// Interval length `T`.
    pub length: f64,
    /// Jump point `b`.
    pub interface: f64,
    pub potential: Potential,
    pub a1: C64,
    pub a2: C64,
    pub h: C64,
    #[serde(rename = "H")]
    pub big_h: C64,
    pub d1: C64,
    pub d2: C64,
}

impl ProblemSpec {
    pub fn l1(&self) -> f64 {
        self.interface
    }

    pub fn l2(&self) -> f64 {
        self.length - self.interface
    }

    /// Weight on the layer `x` belongs to; `x == b` counts as the left layer.
    #[inline]
    pub fn weight_left_inclusive(&self, x: f64) -> C64 {
        if x <= self.interface {
            self.a1 * self.a1
        } else {
            self.a2 * self.a2
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ValidationMode {
    #[default]
    Strict,
    Relaxed,
}

/// Quantities computed in closed form from a [`ProblemSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct DerivedConstants {
    pub mode: ValidationMode,
    pub l1: f64,
    pub l2: f64,
    pub r1: f64,
    pub r2: f64,
    pub phi1: f64,
    pub phi2: f64,
    pub omega_plus: C64,
    pub omega_minus: C64,
    /// `omega+ / omega-`; `None` when `omega- = 0`.
    pub a_ratio: Option<C64>,
    pub alpha: f64,
    pub c1: Option<C64>,
    pub c2: Option<C64>,
    /// Sector boundaries `-phi2, pi - phi1, pi - phi2, -phi1`.
    pub sector_angles: [f64; 4],
    pub warnings: Vec<String>,
}

impl DerivedConstants {
    /// Direction of the asymptotic ray of `rho` for the given branch.
    pub fn branch_ray(&self, branch: u8) -> f64 {
        if branch == 1 {
            self.sector_angles[1]
        } else {
            self.sector_angles[0]
        }
    }

    /// Spacing `pi / (r_j l_j)` of consecutive seeds along a branch.
    pub fn branch_spacing(&self, branch: u8) -> f64 {
        if branch == 1 {
            PI / (self.r1 * self.l1)
        } else {
            PI / (self.r2 * self.l2)
        }
    }

    pub fn c_branch(&self, branch: u8) -> Option<C64> {
        if branch == 1 {
            self.c1
        } else {
            self.c2
        }
    }

    /// Exponent of the branch-2 growth weight: `theta_k = exp(k * growth)`.
    pub fn theta_growth(&self) -> f64 {
        -PI * self.r1 * self.l1 * self.alpha.cos() / (self.r2 * self.l2)
    }
}

fn is_zero_rel(z: C64, scale: f64) -> bool {
    z.norm() <= 1e-14 * scale
}

pub fn validate_problem(spec: &ProblemSpec, mode: ValidationMode) -> Result<DerivedConstants> {
    let t = spec.length;
    let b = spec.interface;
    if !(t.is_finite() && b.is_finite() && t > 0.0 && b > 0.0 && b < t) {
        return Err(Error::InvalidInterval { b, length: t });
    }
    for (name, v) in [("a1", spec.a1), ("a2", spec.a2), ("d1", spec.d1)] {
        if v.norm() == 0.0 {
            return Err(Error::ZeroParameter(name));
        }
    }
    for (name, v) in [
        ("a1", spec.a1),
        ("a2", spec.a2),
        ("d1", spec.d1),
        ("d2", spec.d2),
        ("h", spec.h),
        ("H", spec.big_h),
    ] {
        if !(v.re.is_finite() && v.im.is_finite()) {
            return Err(Error::Schema(format!("{name} is not finite")));
        }
    }
    let mut warnings = Vec::new();

    let (r1, phi1) = spec.a1.to_polar();
    let (r2, phi2) = spec.a2.to_polar();
    let l1 = b;
    let l2 = t - b;

    let omega_plus = spec.d1 * spec.a2 + spec.a1 / spec.d1;
    let omega_minus = spec.d1 * spec.a2 - spec.a1 / spec.d1;
    let omega_scale = (spec.d1 * spec.a2).norm() + (spec.a1 / spec.d1).norm();
    let plus_zero = is_zero_rel(omega_plus, omega_scale);
    let minus_zero = is_zero_rel(omega_minus, omega_scale);

    let angle_ok = 0.0 <= phi2 && phi2 < phi1 && phi1 < PI;
    let d1_arg = spec.d1.arg();
    let d1_ok = (0.0..PI).contains(&d1_arg);

    match mode {
        ValidationMode::Strict => {
            if plus_zero || minus_zero {
                return Err(Error::RegularityViolation {
                    omega_plus: format!("{omega_plus}"),
                    omega_minus: format!("{omega_minus}"),
                });
            }
            if !angle_ok {
                return Err(Error::AngleOrderViolation(format!(
                    "need 0 <= phi2 < phi1 < pi, got phi1 = {phi1}, phi2 = {phi2}"
                )));
            }
            if !d1_ok {
                return Err(Error::AngleOrderViolation(format!("need arg d1 in [0, pi), got {d1_arg}")));
            }
        }
        ValidationMode::Relaxed => {
            if plus_zero || minus_zero {
                warnings.push(format!(
                    "regularity condition violated (omega+ = {omega_plus}, omega- = {omega_minus}); asymptotic constants undefined"
                ));
            }
            if !angle_ok {
                warnings.push(format!("weight arguments violate 0 <= phi2 < phi1 < pi (phi1 = {phi1}, phi2 = {phi2})"));
            }
            if !d1_ok {
                warnings.push(format!("arg d1 = {d1_arg} outside [0, pi)"));
            }
            for w in &warnings {
                log::warn!("{w}");
            }
        }
    }

    let a_ratio = (!minus_zero).then(|| omega_plus / omega_minus);
    let i = C64::i();
    let (c1, c2) = if plus_zero || minus_zero {
        (None, None)
    } else {
        let c1 = -(-omega_minus / omega_plus).ln() / (2.0 * i * spec.a1 * l1);
        let c2 = (omega_plus / omega_minus).ln() / (2.0 * i * spec.a2 * l2);
        (Some(c1), Some(c2))
    };

    Ok(DerivedConstants {
        mode,
        l1,
        l2,
        r1,
        r2,
        phi1,
        phi2,
        omega_plus,
        omega_minus,
        a_ratio,
        alpha: phi1 - phi2 + PI / 2.0,
        c1,
        c2,
        sector_angles: [-phi2, PI - phi1, PI - phi2, -phi1],
        warnings,
    })
}

/// Matrix mapping `(y, y')(b-0)` to `(y, y')(b+0)`.
pub fn transfer_matrix(d1: C64, d2: C64) -> Result<Mat2> {
    if d1.norm() == 0.0 {
        return Err(Error::ZeroParameter("d1"));
    }
    Ok([[d1, C64::new(0.0, 0.0)], [d2, d1.inv()]])
}

/// Inverse of [`transfer_matrix`], mapping `(y, y')(b+0)` back to `(y, y')(b-0)`.
pub fn inverse_transfer_matrix(d1: C64, d2: C64) -> Result<Mat2> {
    if d1.norm() == 0.0 {
        return Err(Error::ZeroParameter("d1"));
    }
    Ok([[d1.inv(), C64::new(0.0, 0.0)], [-d2, d1]])
}

pub fn det2(m: &Mat2) -> C64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

/// `a / b` without forming `|b|^2`, which overflows once `|b| > 1e154`.
#[inline]
pub fn cdiv(a: C64, b: C64) -> C64 {
    let s = b.norm();
    if s == 0.0 || !s.is_finite() {
        return a / b;
    }
    (a / s) * (b.conj() / s)
}

#[inline]
pub fn apply2(m: &Mat2, v: [C64; 2]) -> [C64; 2] {
    [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
}

pub fn weight_at(spec: &ProblemSpec, x: f64) -> Result<C64> {
    if x == spec.interface {
        return Err(Error::OnInterface(x));
    }
    Ok(if x < spec.interface { spec.a1 * spec.a1 } else { spec.a2 * spec.a2 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn base() -> ProblemSpec {
        ProblemSpec {
            length: 1.0,
            interface: 0.5,
            potential: Potential::zero(1.0, 11),
            a1: c(1.0, 0.0),
            a2: c(2.0, 0.0),
            h: c(0.0, 0.0),
            big_h: c(0.0, 0.0),
            d1: c(1.0, 0.0),
            d2: c(0.0, 0.0),
        }
    }

    #[test]
    fn omegas_for_real_weights() {
        // a1 = 1, a2 = 2 has phi1 = phi2 = 0, so only relaxed mode accepts it.
        let k = validate_problem(&base(), ValidationMode::Relaxed).unwrap();
        assert_eq!(k.omega_plus, c(3.0, 0.0));
        assert_eq!(k.omega_minus, c(1.0, 0.0));
        assert_eq!(k.a_ratio, Some(c(3.0, 0.0)));
        assert!(matches!(
            validate_problem(&base(), ValidationMode::Strict),
            Err(Error::AngleOrderViolation(_))
        ));
    }

    #[test]
    fn classical_weights_violate_regularity() {
        let mut s = base();
        s.a2 = c(1.0, 0.0);
        assert!(matches!(
            validate_problem(&s, ValidationMode::Strict),
            Err(Error::RegularityViolation { .. })
        ));
        let k = validate_problem(&s, ValidationMode::Relaxed).unwrap();
        assert!(k.a_ratio.is_none() && k.c1.is_none() && k.c2.is_none());
        assert!(!k.warnings.is_empty());
    }

    #[test]
    fn polar_parts_and_alpha() {
        let mut s = base();
        s.a1 = C64::from_polar(1.0, 1.2);
        s.a2 = c(1.0, 0.0);
        let k = validate_problem(&s, ValidationMode::Strict).unwrap();
        assert!((k.phi1 - 1.2).abs() < 1e-15);
        assert_eq!(k.phi2, 0.0);
        assert!((k.alpha - (1.2 + PI / 2.0)).abs() < 1e-15);
        assert!(k.alpha.cos() < 0.0);
        assert!(k.sector_angles[1] - k.sector_angles[0] > 0.0);
    }

    #[test]
    fn invalid_interval_and_zero_parameters() {
        let mut s = base();
        s.interface = 1.0;
        assert!(matches!(validate_problem(&s, ValidationMode::Relaxed), Err(Error::InvalidInterval { .. })));
        let mut s = base();
        s.a1 = c(0.0, 0.0);
        assert_eq!(validate_problem(&s, ValidationMode::Relaxed), Err(Error::ZeroParameter("a1")));
        let mut s = base();
        s.d1 = c(0.0, 0.0);
        assert_eq!(validate_problem(&s, ValidationMode::Relaxed), Err(Error::ZeroParameter("d1")));
    }

    #[test]
    fn asymptotic_constants_invert_their_definitions() {
        let mut s = base();
        s.a1 = C64::from_polar(1.0, 1.2);
        s.a2 = c(1.1, 0.0);
        s.d1 = C64::from_polar(1.0, 0.3);
        s.length = 1.5;
        s.interface = 0.6;
        let k = validate_problem(&s, ValidationMode::Strict).unwrap();
        let i = C64::i();
        let lhs1 = (-2.0 * i * s.a1 * k.l1 * k.c1.unwrap()).exp();
        let lhs2 = (2.0 * i * s.a2 * k.l2 * k.c2.unwrap()).exp();
        assert!((lhs1 - (-k.omega_minus / k.omega_plus)).norm() < 1e-12);
        assert!((lhs2 - k.omega_plus / k.omega_minus).norm() < 1e-12);
    }

    #[test]
    fn transfer_matrix_examples() {
        let m = transfer_matrix(c(1.0, 0.0), c(0.0, 0.0)).unwrap();
        assert_eq!(m, [[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(1.0, 0.0)]]);
        let m = transfer_matrix(c(2.0, 0.0), c(0.0, 0.0)).unwrap();
        assert_eq!(m[1][1], c(0.5, 0.0));
        assert_eq!(det2(&m), c(1.0, 0.0));
        let m = transfer_matrix(c(1.0, 1.0), c(3.0, 0.0)).unwrap();
        assert!((det2(&m) - 1.0).norm() <= 1e-15);
        assert_eq!(transfer_matrix(c(0.0, 0.0), c(1.0, 0.0)), Err(Error::ZeroParameter("d1")));
    }

    #[test]
    fn inverse_transfer_undoes_transfer() {
        let (d1, d2) = (c(0.7, -0.4), c(0.2, 1.3));
        let v = [c(0.3, 0.1), c(-1.0, 2.0)];
        let back = apply2(&inverse_transfer_matrix(d1, d2).unwrap(), apply2(&transfer_matrix(d1, d2).unwrap(), v));
        assert!((back[0] - v[0]).norm() < 1e-15 && (back[1] - v[1]).norm() < 1e-15);
    }

    #[test]
    fn weight_on_each_side() {
        let mut s = base();
        s.a1 = c(2.0, 0.0);
        assert_eq!(weight_at(&s, 0.2).unwrap(), c(4.0, 0.0));
        s.a1 = c(0.0, 1.0);
        assert_eq!(weight_at(&s, 0.2).unwrap(), c(-1.0, 0.0));
        assert_eq!(weight_at(&s, 0.7).unwrap(), c(4.0, 0.0));
        assert_eq!(weight_at(&s, 0.5), Err(Error::OnInterface(0.5)));
    }

    #[test]
    fn potential_interpolates_linearly() {
        let p = Potential::from_fn(2.0, 5, |x| c(x * x, -x));
        assert_eq!(p.eval(1.0), c(1.0, -1.0));
        // between nodes 0.5 and 1.0: (0.25 + 1.0) / 2
        assert!((p.eval(0.75) - c(0.625, -0.75)).norm() < 1e-15);
        let q = Potential::from_samples(vec![0.0, 0.3, 2.0], vec![c(1.0, 0.0), c(2.0, 0.0), c(0.0, 0.0)]).unwrap();
        assert!((q.eval(0.15) - c(1.5, 0.0)).norm() < 1e-15);
        assert!((q.eval(2.0) - c(0.0, 0.0)).norm() < 1e-15);
        assert!(Potential::from_samples(vec![0.0, 0.0], vec![c(0.0, 0.0); 2]).is_err());
    }
}
