//! Evaluations of `Delta`, `Delta'` and `Delta_0` behind one interface, so the
//! localization code runs unchanged on the ODE shooting and on the exact
//! propagators of the `q = 0` problem.

use crate::error::Result;
use crate::model::{apply2, transfer_matrix, Mat2, ProblemSpec, C64};
use crate::ode::{self, OdeConfig, SolutionSample};

/// `Delta` and its lambda-derivative at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaEval {
    pub delta: C64,
    pub ddelta: C64,
    /// Magnitude `Delta` is compared against: the product of the sizes of
    /// `phi` and `psi` at the matching point.
    pub scale: f64,
    /// Best ratio `psi / phi` at the matching point. At an eigenvalue the two
    /// are proportional and this equals `psi(0) = Delta_0`.
    pub psi_over_phi: C64,
}

pub trait Characteristic: Sync {
    fn spec(&self) -> &ProblemSpec;

    /// `(Delta(lambda), scale)`.
    fn delta(&self, lambda: C64) -> Result<(C64, f64)>;

    fn delta_with_derivative(&self, lambda: C64) -> Result<DeltaEval>;

    /// `Delta_0(lambda) = psi(0, lambda)`.
    fn delta0(&self, lambda: C64) -> Result<C64>;
}

pub(crate) fn kappa(spec: &ProblemSpec, lambda: C64) -> f64 {
    ode::frequency_scale(spec, lambda)
}

/// `Delta = <phi, psi>` evaluated at `b+0`, where `phi` comes from the left
/// and `psi` from the right. Each factor is then computed in the direction
/// in which it is dominant, so no exponential cancellation occurs at
/// eigenvalues of either branch.
fn matched(spec: &ProblemSpec, lambda: C64, p: [C64; 2], s: [C64; 2], dp: Option<[C64; 2]>, ds: Option<[C64; 2]>) -> DeltaEval {
    let k = kappa(spec, lambda);
    let delta = p[0] * s[1] - p[1] * s[0];
    let ddelta = match (dp, ds) {
        (Some(dp), Some(ds)) => dp[0] * s[1] - dp[1] * s[0] + p[0] * ds[1] - p[1] * ds[0],
        _ => C64::new(0.0, 0.0),
    };
    let scale = (k * p[0].norm() + p[1].norm()) * (k * s[0].norm() + s[1].norm()) / k;
    // least-squares ratio with phi normalized first, so nothing is squared at full size
    let pn = k * p[0].norm() + p[1].norm();
    let (u0, u1) = (p[0] * k / pn, p[1] / pn);
    let psi_over_phi = (s[0] * k * u0.conj() + s[1] * u1.conj()) / (u0.norm_sqr() + u1.norm_sqr()) / pn;
    DeltaEval { delta, ddelta, scale, psi_over_phi }
}

/// Shooting with the adaptive integrator.
pub struct OdeCharacteristic<'a> {
    pub spec: &'a ProblemSpec,
    pub cfg: OdeConfig,
}

impl OdeCharacteristic<'_> {
    fn phi_init(&self) -> SolutionSample {
        SolutionSample::new(0.0, C64::new(1.0, 0.0), self.spec.h)
    }

    fn psi_init(&self) -> SolutionSample {
        SolutionSample::new(self.spec.length, C64::new(1.0, 0.0), -self.spec.big_h)
    }
}

impl Characteristic for OdeCharacteristic<'_> {
    fn spec(&self) -> &ProblemSpec {
        self.spec
    }

    fn delta(&self, lambda: C64) -> Result<(C64, f64)> {
        let s = self.spec;
        let jump = transfer_matrix(s.d1, s.d2)?;
        let p = apply2(&jump, ode::shoot(s, &self.cfg, lambda, self.phi_init(), s.interface)?);
        let q = ode::shoot(s, &self.cfg, lambda, self.psi_init(), s.interface)?;
        let e = matched(s, lambda, p, q, None, None);
        Ok((e.delta, e.scale))
    }

    fn delta_with_derivative(&self, lambda: C64) -> Result<DeltaEval> {
        let s = self.spec;
        let jump = transfer_matrix(s.d1, s.d2)?;
        let a = ode::shoot_with_derivative(s, &self.cfg, lambda, self.phi_init(), s.interface)?;
        let b = ode::shoot_with_derivative(s, &self.cfg, lambda, self.psi_init(), s.interface)?;
        let p = apply2(&jump, [a[0], a[1]]);
        let dp = apply2(&jump, [a[2], a[3]]);
        Ok(matched(s, lambda, p, [b[0], b[1]], Some(dp), Some([b[2], b[3]])))
    }

    fn delta0(&self, lambda: C64) -> Result<C64> {
        Ok(ode::shoot(self.spec, &self.cfg, lambda, self.psi_init(), 0.0)?[0])
    }
}

/// Exact propagators for `q = 0`.
pub struct ClosedFormCharacteristic<'a> {
    pub spec: &'a ProblemSpec,
    jump: Mat2,
}

impl<'a> ClosedFormCharacteristic<'a> {
    pub fn new(spec: &'a ProblemSpec) -> Result<Self> {
        Ok(ClosedFormCharacteristic { spec, jump: transfer_matrix(spec.d1, spec.d2)? })
    }

    /// `(y, y')` at `x` of the solution starting from `init` at 0; the left
    /// limit at `x = b`.
    pub fn solution_at(&self, lambda: C64, init: [C64; 2], x: f64) -> [C64; 2] {
        let s = self.spec;
        if x <= s.interface {
            apply2(&layer(lambda, s.a1, x).0, init)
        } else {
            let left = apply2(&layer(lambda, s.a1, s.interface).0, init);
            apply2(&layer(lambda, s.a2, x - s.interface).0, apply2(&self.jump, left))
        }
    }

    /// `(y, y', dy/dlambda, dy'/dlambda)` at `x`; the left limit at `x = b`.
    pub fn solution_with_derivative_at(&self, lambda: C64, init: [C64; 2], x: f64) -> [C64; 4] {
        let s = self.spec;
        if x <= s.interface {
            let (p, d) = layer(lambda, s.a1, x);
            let (y, dy) = (apply2(&p, init), apply2(&d, init));
            [y[0], y[1], dy[0], dy[1]]
        } else {
            let (p1, d1) = layer(lambda, s.a1, s.interface);
            let (p2, d2) = layer(lambda, s.a2, x - s.interface);
            let left = apply2(&self.jump, apply2(&p1, init));
            let dleft = apply2(&self.jump, apply2(&d1, init));
            let y = apply2(&p2, left);
            let a = apply2(&d2, left);
            let b = apply2(&p2, dleft);
            [y[0], y[1], a[0] + b[0], a[1] + b[1]]
        }
    }

    /// Left and right limits at `b` of the solution starting from `init` at 0.
    pub fn interface_limits(&self, lambda: C64, init: [C64; 2]) -> ([C64; 2], [C64; 2]) {
        let left = apply2(&layer(lambda, self.spec.a1, self.spec.interface).0, init);
        (left, apply2(&self.jump, left))
    }

    fn phi_right_of_b(&self, lambda: C64) -> ([C64; 2], [C64; 2]) {
        let s = self.spec;
        let (p1, d1) = layer(lambda, s.a1, s.interface);
        let init = [C64::new(1.0, 0.0), s.h];
        (apply2(&self.jump, apply2(&p1, init)), apply2(&self.jump, apply2(&d1, init)))
    }

    fn psi_right_of_b(&self, lambda: C64) -> ([C64; 2], [C64; 2]) {
        let s = self.spec;
        let (p, d) = layer(lambda, s.a2, s.length - s.interface);
        // inverse of [[c, s], [-z s, c]] is [[c, -s], [z s, c]]
        let inv = [[p[1][1], -p[0][1]], [-p[1][0], p[0][0]]];
        let dinv = [[d[1][1], -d[0][1]], [-d[1][0], d[0][0]]];
        let end = [C64::new(1.0, 0.0), -s.big_h];
        (apply2(&inv, end), apply2(&dinv, end))
    }
}

/// `sin(sqrt(z) l) / sqrt(z)` and its z-derivative, both entire in z.
fn sinc_pair(z: C64, l: f64) -> (C64, C64, C64) {
    let w = z.sqrt() * l;
    let c = w.cos();
    if (z * l * l).norm() < 1e-2 {
        // series in u = z l^2
        let u = z * l * l;
        let mut s = C64::new(0.0, 0.0);
        let mut ds = C64::new(0.0, 0.0);
        let mut term = C64::new(1.0, 0.0);
        let mut denom = 1.0;
        for n in 0..12 {
            // term = (-u)^n, coefficient 1/(2n+1)!
            if n > 0 {
                denom *= ((2 * n) * (2 * n + 1)) as f64;
            }
            s += term / denom;
            if n + 1 < 12 {
                ds += term * (-((n + 1) as f64)) / (denom * ((2 * n + 2) * (2 * n + 3)) as f64);
            }
            term *= -u;
        }
        // d/dz of l * S(u) with u = z l^2
        (c, s * l, ds * l * l * l)
    } else {
        let sq = z.sqrt();
        let s = w.sin() / sq;
        let ds = (c * l - s) / (z * 2.0);
        (c, s, ds)
    }
}

/// Propagator over a layer of weight `a^2` and length `l`, with its lambda-derivative.
fn layer(lambda: C64, a: C64, l: f64) -> (Mat2, Mat2) {
    let r = a * a;
    let z = lambda * r;
    let (c, s, ds) = sinc_pair(z, l);
    // d/dz cos(sqrt(z) l) = -l S / 2
    let dc = -s * l / 2.0;
    let p = [[c, s], [-z * s, c]];
    let d = [[dc * r, ds * r], [(-s - z * ds) * r, dc * r]];
    (p, d)
}

impl Characteristic for ClosedFormCharacteristic<'_> {
    fn spec(&self) -> &ProblemSpec {
        self.spec
    }

    fn delta(&self, lambda: C64) -> Result<(C64, f64)> {
        let (p, _) = self.phi_right_of_b(lambda);
        let (q, _) = self.psi_right_of_b(lambda);
        let e = matched(self.spec, lambda, p, q, None, None);
        Ok((e.delta, e.scale))
    }

    fn delta_with_derivative(&self, lambda: C64) -> Result<DeltaEval> {
        let (p, dp) = self.phi_right_of_b(lambda);
        let (q, dq) = self.psi_right_of_b(lambda);
        Ok(matched(self.spec, lambda, p, q, Some(dp), Some(dq)))
    }

    /// Computed as `V(S)`, which equals `psi(0)`.
    fn delta0(&self, lambda: C64) -> Result<C64> {
        let end = self.solution_at(lambda, [C64::new(0.0, 0.0), C64::new(1.0, 0.0)], self.spec.length);
        Ok(end[1] + self.spec.big_h * end[0])
    }
}

/// Determinant of the q = 0 layer propagator; identically one.
pub fn propagator_determinant(lambda: C64, a: C64, l: f64) -> C64 {
    crate::model::det2(&layer(lambda, a, l).0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Potential;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn layered() -> ProblemSpec {
        ProblemSpec {
            length: 1.5,
            interface: 0.6,
            potential: Potential::zero(1.5, 11),
            a1: C64::from_polar(1.0, 1.2),
            a2: c(1.1, 0.0),
            h: c(0.2, -0.1),
            big_h: c(-0.4, 0.0),
            d1: C64::from_polar(1.0, 0.3),
            d2: c(0.1, 0.0),
        }
    }

    #[test]
    fn closed_form_matches_shooting() {
        let spec = layered();
        let cf = ClosedFormCharacteristic::new(&spec).unwrap();
        let od = OdeCharacteristic { spec: &spec, cfg: OdeConfig::default() };
        for lam in [c(0.0, 0.0), c(1e-9, 1e-9), c(3.0, -2.0), c(-40.0, 75.0), c(400.0, 10.0)] {
            let a = cf.delta_with_derivative(lam).unwrap();
            let b = od.delta_with_derivative(lam).unwrap();
            assert!((a.delta - b.delta).norm() < 1e-9 * a.scale, "{lam}");
            assert!((a.ddelta - b.ddelta).norm() < 1e-9 * a.ddelta.norm().max(1.0), "{lam}: {} {}", a.ddelta, b.ddelta);
            let d0a = cf.delta0(lam).unwrap();
            let d0b = od.delta0(lam).unwrap();
            assert!((d0a - d0b).norm() < 1e-9 * d0a.norm().max(1.0), "{lam}");
        }
    }

    #[test]
    fn derivative_matches_difference_quotient() {
        let spec = layered();
        let cf = ClosedFormCharacteristic::new(&spec).unwrap();
        for lam in [c(0.003, 0.0), c(20.0, 5.0)] {
            let e = 1e-5;
            let fd = (cf.delta(lam + e).unwrap().0 - cf.delta(lam - e).unwrap().0) / (2.0 * e);
            let d = cf.delta_with_derivative(lam).unwrap().ddelta;
            assert!((fd - d).norm() < 1e-7 * d.norm().max(1.0));
        }
    }

    #[test]
    fn propagator_is_unimodular() {
        for lam in [c(0.0, 0.0), c(1e-4, 0.0), c(50.0, -20.0), c(-300.0, 1.0)] {
            let d = propagator_determinant(lam, C64::from_polar(0.9, 0.7), 0.8);
            let size = layer(lam, C64::from_polar(0.9, 0.7), 0.8).0.iter().flatten().map(|v| v.norm()).fold(1.0f64, f64::max);
            assert!((d - 1.0).norm() < 1e-14 * size * size, "{lam}: {d}");
        }
    }
}
