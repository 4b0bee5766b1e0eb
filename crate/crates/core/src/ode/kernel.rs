//! `D(x, lambda, mu) = <phi(x, lambda), phi(x, mu)> / (lambda - mu) = int_0^x r phi_lambda phi_mu`.

use super::{frequency_scale, jump_matrix, pair_ratio, shoot, wronskian, OdeConfig, SolutionSample};
use crate::error::Result;
use crate::model::{apply2, ProblemSpec, C64};

/// Below `|lambda - mu| < D_SWITCH (1 + |lambda|)` the quotient is replaced by the integral.
pub const D_SWITCH: f64 = 1e-4;

fn phi_init(spec: &ProblemSpec) -> SolutionSample {
    SolutionSample::new(0.0, C64::new(1.0, 0.0), spec.h)
}

pub fn d_kernel(spec: &ProblemSpec, cfg: &OdeConfig, x: f64, lambda: C64, mu: C64) -> Result<C64> {
    if (lambda - mu).norm() < D_SWITCH * (1.0 + lambda.norm()) {
        d_kernel_integral(spec, cfg, x, lambda, mu)
    } else {
        d_kernel_quotient(spec, cfg, x, lambda, mu)
    }
}

/// Wronskian form; `lambda != mu` required.
pub fn d_kernel_quotient(spec: &ProblemSpec, cfg: &OdeConfig, x: f64, lambda: C64, mu: C64) -> Result<C64> {
    if x == 0.0 {
        return Ok(C64::new(0.0, 0.0));
    }
    let a = shoot(spec, cfg, lambda, phi_init(spec), x)?;
    let b = shoot(spec, cfg, mu, phi_init(spec), x)?;
    let w = wronskian(&SolutionSample::new(x, a[0], a[1]), &SolutionSample::new(x, b[0], b[1]));
    Ok(w / (lambda - mu))
}

/// Integral form, accumulated alongside both solutions by the same integrator.
pub fn d_kernel_integral(spec: &ProblemSpec, cfg: &OdeConfig, x: f64, lambda: C64, mu: C64) -> Result<C64> {
    if x == 0.0 {
        return Ok(C64::new(0.0, 0.0));
    }
    let rtol = cfg.rtol;
    let kappa = frequency_scale(spec, lambda).max(frequency_scale(spec, mu));
    let m = jump_matrix(spec, true);
    let one = C64::new(1.0, 0.0);
    let zero = C64::new(0.0, 0.0);
    let end = super::run_layered(
        spec,
        lambda,
        0.0,
        [one, spec.h, one, spec.h, zero, zero],
        x,
        |c, r, s| {
            // c carries lambda; rebuild the mu coefficient from it.
            let cm = c + (lambda - mu) * r;
            [s[1], c * s[0], s[3], cm * s[2], r * s[0] * s[2], C64::new(r.norm() * s[0].norm() * s[2].norm(), 0.0)]
        },
        |s, _| {
            let a = apply2(&m, [s[0], s[1]]);
            let b = apply2(&m, [s[2], s[3]]);
            [a[0], a[1], b[0], b[1], s[4], s[5]]
        },
        |e, a, b| {
            let p1 = pair_ratio(kappa, [e[0], e[1]], [a[0], a[1]], [b[0], b[1]], rtol);
            let p2 = pair_ratio(kappa, [e[2], e[3]], [a[2], a[3]], [b[2], b[3]], rtol);
            let scale = a[5].re.max(b[5].re).max(b[4].norm());
            p1.max(p2).max(e[4].norm() / (rtol * scale + f64::MIN_POSITIVE))
        },
        &[],
        |_, _, _| {},
        None,
    )?;
    Ok(end[4])
}

/// Exact diagonal `D(x, lambda, lambda) = -<phi, d/dlambda phi>(x)`.
pub fn d_kernel_diagonal(spec: &ProblemSpec, cfg: &OdeConfig, x: f64, lambda: C64) -> Result<C64> {
    if x == 0.0 {
        return Ok(C64::new(0.0, 0.0));
    }
    let rtol = cfg.rtol;
    let kappa = frequency_scale(spec, lambda);
    let m = jump_matrix(spec, true);
    let zero = C64::new(0.0, 0.0);
    let s = super::run_layered(
        spec,
        lambda,
        0.0,
        [C64::new(1.0, 0.0), spec.h, zero, zero],
        x,
        super::variational_rhs,
        |s, _| {
            let a = apply2(&m, [s[0], s[1]]);
            let d = apply2(&m, [s[2], s[3]]);
            [a[0], a[1], d[0], d[1]]
        },
        |e, a, b| super::variational_ratio(kappa, e, a, b, rtol),
        &[],
        |_, _, _| {},
        None,
    )?;
    Ok(-(s[0] * s[3] - s[1] * s[2]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Potential;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn spec(q: bool) -> ProblemSpec {
        ProblemSpec {
            length: 1.5,
            interface: 0.6,
            potential: if q {
                Potential::from_fn(1.5, 301, |x| c(0.3, 0.15) * (-25.0 * (x - 0.5f64).powi(2)).exp())
            } else {
                Potential::zero(1.5, 11)
            },
            a1: C64::from_polar(1.0, 0.5),
            a2: c(1.1, 0.0),
            h: c(0.2, -0.1),
            big_h: c(-0.4, 0.0),
            d1: C64::from_polar(1.0, 0.3),
            d2: c(0.1, 0.0),
        }
    }

    #[test]
    fn vanishes_at_origin() {
        let s = spec(true);
        let cfg = OdeConfig::default();
        assert_eq!(d_kernel(&s, &cfg, 0.0, c(3.0, 1.0), c(-2.0, 0.0)).unwrap(), c(0.0, 0.0));
        assert_eq!(d_kernel(&s, &cfg, 0.0, c(3.0, 1.0), c(3.0, 1.0)).unwrap(), c(0.0, 0.0));
    }

    #[test]
    fn cosine_closed_form() {
        let mut s = spec(false);
        s.a1 = c(1.0, 0.0);
        s.a2 = c(1.0, 0.0);
        s.d1 = c(1.0, 0.0);
        s.d2 = c(0.0, 0.0);
        s.h = c(0.0, 0.0);
        let cfg = OdeConfig::default();
        let (rho, sig) = (c(3.0, 0.2), c(5.5, -0.1));
        for x in [0.3, 0.6, 1.2] {
            let want = (rho * (rho * x).sin() * (sig * x).cos() - sig * (rho * x).cos() * (sig * x).sin()) / (rho * rho - sig * sig);
            let q = d_kernel_quotient(&s, &cfg, x, rho * rho, sig * sig).unwrap();
            let i = d_kernel_integral(&s, &cfg, x, rho * rho, sig * sig).unwrap();
            assert!((q - want).norm() < 1e-10 * want.norm().max(1.0), "x = {x}");
            assert!((i - want).norm() < 1e-10 * want.norm().max(1.0), "x = {x}");
        }
    }

    #[test]
    fn both_paths_agree_and_are_symmetric() {
        let s = spec(true);
        let cfg = OdeConfig::default();
        let (l, m) = (c(40.0, 12.0), c(-15.0, 30.0));
        for x in [0.4, 0.6, 1.0, 1.5] {
            let q = d_kernel_quotient(&s, &cfg, x, l, m).unwrap();
            let i = d_kernel_integral(&s, &cfg, x, l, m).unwrap();
            let sym = d_kernel_quotient(&s, &cfg, x, m, l).unwrap();
            assert!((q - i).norm() <= 1e-9 * q.norm().max(1e-3), "x = {x}: {q} vs {i}");
            assert!((q - sym).norm() <= 1e-10 * q.norm());
        }
    }

    #[test]
    fn diagonal_matches_integral_and_limit() {
        let s = spec(true);
        let cfg = OdeConfig::default();
        let l = c(25.0, -8.0);
        let x = 1.1;
        let diag = d_kernel_diagonal(&s, &cfg, x, l).unwrap();
        let int = d_kernel_integral(&s, &cfg, x, l, l).unwrap();
        assert!((diag - int).norm() < 1e-9 * diag.norm());
        // symmetric quotient at mu = lambda +- eps, then Richardson in eps^2
        let q = |eps: f64| {
            (d_kernel_quotient(&s, &cfg, x, l, l + eps).unwrap() + d_kernel_quotient(&s, &cfg, x, l, l - eps).unwrap()) / 2.0
        };
        let extrap = (q(1e-2) * 4.0 - q(2e-2)) / 3.0;
        assert!((extrap - diag).norm() < 1e-6 * diag.norm());
    }
}
