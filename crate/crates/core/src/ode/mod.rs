//! Shooting for `-y'' + q y = lambda r y` across the jump point.
//!
//! Everything is built on [`run_layered`], which advances a state vector
//! through one or two layers with the RKF7(8) pair, stopping exactly at the
//! potential's grid nodes, at requested output points and at `b`.

mod kernel;
pub mod rkf78;

pub use kernel::{d_kernel, d_kernel_diagonal, d_kernel_integral, d_kernel_quotient, D_SWITCH};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{apply2, inverse_transfer_matrix, transfer_matrix, Mat2, ProblemSpec, C64};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OdeConfig {
    /// Local relative tolerance of the embedded error estimate.
    pub rtol: f64,
    /// Number of points of the shared uniform x-grid.
    pub grid_points: usize,
}

impl Default for OdeConfig {
    fn default() -> Self {
        OdeConfig { rtol: 1e-11, grid_points: 201 }
    }
}

impl OdeConfig {
    pub fn grid(&self, length: f64) -> Vec<f64> {
        uniform_grid(length, self.grid_points)
    }
}

pub fn uniform_grid(length: f64, points: usize) -> Vec<f64> {
    let points = points.max(2);
    (0..points)
        .map(|i| if i + 1 == points { length } else { length * i as f64 / (points - 1) as f64 })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolutionSample {
    pub x: f64,
    pub y: C64,
    pub dy: C64,
}

impl SolutionSample {
    pub fn new(x: f64, y: C64, dy: C64) -> Self {
        SolutionSample { x, y, dy }
    }

    fn pair(&self) -> [C64; 2] {
        [self.y, self.dy]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolutionKind {
    Phi,
    Psi,
    Ssol,
    BigPhi,
    /// `d/dlambda` of phi.
    PhiLambda,
    /// `d/dlambda` of S.
    SsolLambda,
}

/// A solution sampled on the grid points its integration path covered.
/// A grid point equal to `b` carries the left limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionTrace {
    pub lambda: C64,
    pub kind: SolutionKind,
    pub samples: Vec<SolutionSample>,
    pub left: Option<SolutionSample>,
    pub right: Option<SolutionSample>,
}

impl SolutionTrace {
    pub fn first(&self) -> &SolutionSample {
        &self.samples[0]
    }

    pub fn last(&self) -> &SolutionSample {
        &self.samples[self.samples.len() - 1]
    }

    /// Sample at grid point `x`, if present.
    pub fn at(&self, x: f64) -> Option<&SolutionSample> {
        self.samples.iter().find(|s| s.x == x)
    }
}

pub fn wronskian(u: &SolutionSample, v: &SolutionSample) -> C64 {
    u.y * v.dy - u.dy * v.y
}

/// Upper bound for `|rho a_k|`, used to balance `y` against `y'` in the error norm.
pub(crate) fn frequency_scale(spec: &ProblemSpec, lambda: C64) -> f64 {
    let amax = spec.a1.norm().max(spec.a2.norm());
    let qmax = spec.potential.values().iter().fold(0.0f64, |m, v| m.max(v.norm()));
    1f64.max(lambda.norm().sqrt() * amax).max(qmax.sqrt())
}

/// Ratio of the error of a `(y, y')` pair to its tolerance.
#[inline]
pub(crate) fn pair_ratio(kappa: f64, e: [C64; 2], a: [C64; 2], b: [C64; 2], rtol: f64) -> f64 {
    let err = kappa * e[0].norm() + e[1].norm();
    let scale = (kappa * a[0].norm() + a[1].norm()).max(kappa * b[0].norm() + b[1].norm());
    err / (rtol * scale + f64::MIN_POSITIVE)
}

fn finite<const N: usize>(s: &[C64; N]) -> bool {
    s.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Advance a state through the layers between `x0` and `target`.
///
/// `rhs(c, r, s)` receives `c = q(x) - lambda r(x)` and `r(x)`. `jump(s, forward)`
/// maps the state across `b`. `outputs` must be sorted increasingly; every
/// output point on the path is passed to `record` together with its index.
/// `interface` receives the (left, right) limits when `b` is crossed.
#[allow(clippy::too_many_arguments)]
pub(crate) fn run_layered<const N: usize>(
    spec: &ProblemSpec,
    lambda: C64,
    x0: f64,
    s0: [C64; N],
    target: f64,
    rhs: impl Fn(C64, C64, &[C64; N]) -> [C64; N],
    jump: impl Fn(&[C64; N], bool) -> [C64; N],
    norm: impl Fn(&[C64; N], &[C64; N], &[C64; N]) -> f64,
    outputs: &[f64],
    mut record: impl FnMut(usize, f64, &[C64; N]),
    mut interface: Option<&mut ([C64; N], [C64; N])>,
) -> Result<[C64; N]> {
    let b = spec.interface;
    let forward = target >= x0;
    let kappa = frequency_scale(spec, lambda);
    let r1 = spec.a1 * spec.a1;
    let r2 = spec.a2 * spec.a2;
    let mut state = s0;
    let mut h_try = (0.25 / kappa).min((target - x0).abs().max(1e-300));

    let (lo, hi) = if forward { (x0, target) } else { (target, x0) };

    for (i, &x) in outputs.iter().enumerate() {
        if x == x0 {
            record(i, x, &state);
        }
    }

    let crosses = lo < b && b < hi;
    let segments: Vec<(f64, f64, C64)> = match (forward, crosses) {
        (true, true) => vec![(x0, b, r1), (b, target, r2)],
        (false, true) => vec![(x0, b, r2), (b, target, r1)],
        (true, false) => vec![(x0, target, if x0 < b { r1 } else { r2 })],
        (false, false) => vec![(x0, target, if x0 > b { r2 } else { r1 })],
    };

    for (si, &(from, to, r)) in segments.iter().enumerate() {
        let lam_r = lambda * r;
        let q = &spec.potential;
        let q_zero = q.is_zero();
        let f = |x: f64, s: &[C64; N]| {
            let c = if q_zero { -lam_r } else { q.eval(x) - lam_r };
            rhs(c, r, s)
        };
        // Stops strictly inside (from, to), in travel order, plus the end.
        let (slo, shi) = if forward { (from, to) } else { (to, from) };
        let mut stops: Vec<(f64, Option<usize>)> = Vec::new();
        if !q_zero {
            stops.extend(q.nodes().iter().filter(|&&x| x > slo && x < shi).map(|&x| (x, None)));
        }
        for (i, &x) in outputs.iter().enumerate() {
            if x > slo && x < shi {
                stops.push((x, Some(i)));
            }
        }
        stops.sort_by(|a, b| a.0.total_cmp(&b.0));
        if !forward {
            stops.reverse();
        }
        stops.push((to, None));

        let mut x = from;
        for (stop, out) in stops {
            while x != stop {
                let remaining = stop - x;
                let clipped = h_try >= remaining.abs() * 0.999_999;
                let h = if clipped { remaining } else { h_try.copysign(remaining) };
                let (next, err) = rkf78::step(&f, x, h, &state);
                let ratio = norm(&err, &state, &next);
                if ratio.is_nan() || !finite(&next) {
                    if h.abs() < 1e-3 * (hi - lo).max(1e-300) && !finite(&next) {
                        return Err(Error::NonFinite(x));
                    }
                    h_try = h.abs() * 0.2;
                } else if ratio <= 1.0 {
                    x = if clipped { stop } else { x + h };
                    state = next;
                    let grow = (0.9 * ratio.powf(-0.125)).min(5.0);
                    let proposal = h.abs() * grow;
                    h_try = if clipped { h_try.max(proposal) } else { proposal };
                } else {
                    h_try = h.abs() * (0.9 * ratio.powf(-0.125)).max(0.2);
                }
                if h_try < 1e-14 * (1.0 + x.abs()) {
                    return Err(Error::ToleranceNotMet { x, h: h_try });
                }
            }
            if let Some(i) = out {
                record(i, stop, &state);
            }
        }

        if crosses && si == 0 {
            let before = state;
            state = jump(&state, forward);
            if let Some(slot) = interface.as_deref_mut() {
                *slot = if forward { (before, state) } else { (state, before) };
            }
            let left = if forward { before } else { state };
            for (i, &x) in outputs.iter().enumerate() {
                if x == b {
                    record(i, x, &left);
                }
            }
        } else if x0 != target {
            for (i, &x) in outputs.iter().enumerate() {
                if x == to {
                    record(i, x, &state);
                }
            }
        }
    }
    Ok(state)
}

fn jump_matrix(spec: &ProblemSpec, forward: bool) -> Mat2 {
    if forward {
        transfer_matrix(spec.d1, spec.d2).expect("validated d1")
    } else {
        inverse_transfer_matrix(spec.d1, spec.d2).expect("validated d1")
    }
}

/// Grid points of the shared grid lying on the path between `x0` and `target`.
fn path_grid(grid: &[f64], x0: f64, target: f64) -> Vec<f64> {
    let (lo, hi) = if x0 <= target { (x0, target) } else { (target, x0) };
    grid.iter().copied().filter(|&x| x >= lo && x <= hi).collect()
}

fn check_range(spec: &ProblemSpec, x: f64) -> Result<()> {
    if !(0.0..=spec.length).contains(&x) {
        return Err(Error::Schema(format!("x = {x} outside [0, {}]", spec.length)));
    }
    Ok(())
}

/// Integrate `(y, y')` from `init` to `target`, sampling on the shared grid.
pub fn integrate(
    spec: &ProblemSpec,
    cfg: &OdeConfig,
    lambda: C64,
    init: SolutionSample,
    target: f64,
    kind: SolutionKind,
) -> Result<SolutionTrace> {
    check_range(spec, init.x)?;
    check_range(spec, target)?;
    let outputs = path_grid(&cfg.grid(spec.length), init.x, target);
    let mut slots: Vec<Option<SolutionSample>> = vec![None; outputs.len()];
    let mut iface = ([C64::default(); 2], [C64::default(); 2]);
    let crosses = init.x.min(target) < spec.interface && spec.interface < init.x.max(target);
    let rtol = cfg.rtol;
    let kappa = frequency_scale(spec, lambda);
    let m_fwd = jump_matrix(spec, true);
    let m_bwd = jump_matrix(spec, false);
    run_layered(
        spec,
        lambda,
        init.x,
        init.pair(),
        target,
        |c, _r, s| [s[1], c * s[0]],
        |s, fwd| apply2(if fwd { &m_fwd } else { &m_bwd }, *s),
        |e, a, b| pair_ratio(kappa, *e, *a, *b, rtol),
        &outputs,
        |i, x, s| slots[i] = Some(SolutionSample::new(x, s[0], s[1])),
        Some(&mut iface),
    )?;
    let samples: Vec<SolutionSample> = slots.into_iter().flatten().collect();
    let (left, right) = if crosses {
        (
            Some(SolutionSample::new(spec.interface, iface.0[0], iface.0[1])),
            Some(SolutionSample::new(spec.interface, iface.1[0], iface.1[1])),
        )
    } else {
        (None, None)
    };
    Ok(SolutionTrace { lambda, kind, samples, left, right })
}

pub fn phi(spec: &ProblemSpec, cfg: &OdeConfig, lambda: C64) -> Result<SolutionTrace> {
    let init = SolutionSample::new(0.0, C64::new(1.0, 0.0), spec.h);
    integrate(spec, cfg, lambda, init, spec.length, SolutionKind::Phi)
}

pub fn s_sol(spec: &ProblemSpec, cfg: &OdeConfig, lambda: C64) -> Result<SolutionTrace> {
    let init = SolutionSample::new(0.0, C64::new(0.0, 0.0), C64::new(1.0, 0.0));
    integrate(spec, cfg, lambda, init, spec.length, SolutionKind::Ssol)
}

pub fn psi(spec: &ProblemSpec, cfg: &OdeConfig, lambda: C64) -> Result<SolutionTrace> {
    let init = SolutionSample::new(spec.length, C64::new(1.0, 0.0), -spec.big_h);
    integrate(spec, cfg, lambda, init, 0.0, SolutionKind::Psi)
}

/// Relative size of `Delta` below which `lambda` is treated as an eigenvalue.
pub const NEAR_EIGENVALUE: f64 = 1e-10;

/// `Phi = S + M phi`. When `m_value` is the Weyl function at `lambda` the same
/// solution is returned as `psi / Delta`, which avoids the cancellation
/// between the growing `S` and `M phi` away from the real axis.
pub fn phi_solution(spec: &ProblemSpec, cfg: &OdeConfig, lambda: C64, m_value: C64) -> Result<SolutionTrace> {
    let p = phi(spec, cfg, lambda)?;
    let end = p.last();
    let delta = -(end.dy + spec.big_h * end.y);
    let scale = end.dy.norm() + (spec.big_h * end.y).norm();
    if delta.norm() <= NEAR_EIGENVALUE * scale {
        return Err(Error::NearEigenvalue(format!("{lambda}")));
    }
    let ps = psi(spec, cfg, lambda)?;
    // Delta and Delta_0 from the matched Wronskian at b, both free of cancellation
    let (l, r) = (p.right.unwrap_or(*end), ps.right.unwrap_or(*ps.first()));
    let delta = wronskian(&l, &r);
    let weyl = ps.first().y / delta;
    if (m_value - weyl).norm() <= 1e-8 * weyl.norm() {
        let scaled = |a: &SolutionSample| SolutionSample::new(a.x, a.y / delta, a.dy / delta);
        return Ok(SolutionTrace {
            lambda,
            kind: SolutionKind::BigPhi,
            samples: ps.samples.iter().map(scaled).collect(),
            left: ps.left.as_ref().map(scaled),
            right: ps.right.as_ref().map(scaled),
        });
    }
    let s = s_sol(spec, cfg, lambda)?;
    let combine = |a: &SolutionSample, b: &SolutionSample| SolutionSample::new(a.x, a.y + m_value * b.y, a.dy + m_value * b.dy);
    let samples = s.samples.iter().zip(&p.samples).map(|(a, b)| combine(a, b)).collect();
    let left = s.left.zip(p.left).map(|(a, b)| combine(&a, &b));
    let right = s.right.zip(p.right).map(|(a, b)| combine(&a, &b));
    Ok(SolutionTrace { lambda, kind: SolutionKind::BigPhi, samples, left, right })
}

/// Integrate a solution together with its lambda-derivative.
/// Returns `(trace, d/dlambda trace)`.
pub fn with_lambda_derivative(
    spec: &ProblemSpec,
    cfg: &OdeConfig,
    lambda: C64,
    kind: SolutionKind,
) -> Result<(SolutionTrace, SolutionTrace)> {
    let (y0, dy0, dkind) = match kind {
        SolutionKind::Phi => (C64::new(1.0, 0.0), spec.h, SolutionKind::PhiLambda),
        SolutionKind::Ssol => (C64::new(0.0, 0.0), C64::new(1.0, 0.0), SolutionKind::SsolLambda),
        other => return Err(Error::Schema(format!("lambda derivative not supported for {other:?}"))),
    };
    let outputs = cfg.grid(spec.length);
    let mut slots: Vec<Option<[C64; 4]>> = vec![None; outputs.len()];
    let mut iface = ([C64::default(); 4], [C64::default(); 4]);
    let rtol = cfg.rtol;
    let kappa = frequency_scale(spec, lambda);
    let m = jump_matrix(spec, true);
    let zero = C64::new(0.0, 0.0);
    run_layered(
        spec,
        lambda,
        0.0,
        [y0, dy0, zero, zero],
        spec.length,
        variational_rhs,
        |s, _| {
            let a = apply2(&m, [s[0], s[1]]);
            let d = apply2(&m, [s[2], s[3]]);
            [a[0], a[1], d[0], d[1]]
        },
        |e, a, b| variational_ratio(kappa, e, a, b, rtol),
        &outputs,
        |i, _x, s| slots[i] = Some(*s),
        Some(&mut iface),
    )?;
    let states: Vec<[C64; 4]> = slots.into_iter().map(|s| s.expect("full path")).collect();
    let b = spec.interface;
    let mk = |off: usize, k: SolutionKind| SolutionTrace {
        lambda,
        kind: k,
        samples: outputs.iter().zip(&states).map(|(&x, s)| SolutionSample::new(x, s[off], s[off + 1])).collect(),
        left: Some(SolutionSample::new(b, iface.0[off], iface.0[off + 1])),
        right: Some(SolutionSample::new(b, iface.1[off], iface.1[off + 1])),
    };
    Ok((mk(0, kind), mk(2, dkind)))
}

pub fn lambda_derivative(spec: &ProblemSpec, cfg: &OdeConfig, lambda: C64, kind: SolutionKind) -> Result<SolutionTrace> {
    Ok(with_lambda_derivative(spec, cfg, lambda, kind)?.1)
}

#[inline]
pub(crate) fn variational_rhs(c: C64, r: C64, s: &[C64; 4]) -> [C64; 4] {
    [s[1], c * s[0], s[3], c * s[2] - r * s[0]]
}

#[inline]
pub(crate) fn variational_ratio(kappa: f64, e: &[C64; 4], a: &[C64; 4], b: &[C64; 4], rtol: f64) -> f64 {
    let main = pair_ratio(kappa, [e[0], e[1]], [a[0], a[1]], [b[0], b[1]], rtol);
    let var = pair_ratio(kappa, [e[2], e[3]], [a[2], a[3]], [b[2], b[3]], rtol);
    main.max(var)
}

/// `(phi, phi', d phi/d lambda, d phi'/d lambda)` at the sorted points `xs`,
/// left limits at `b`; the derivative slots are zero unless requested.
pub fn phi_at_points(spec: &ProblemSpec, cfg: &OdeConfig, lambda: C64, xs: &[f64], with_derivative: bool) -> Result<Vec<[C64; 4]>> {
    for &x in xs {
        check_range(spec, x)?;
    }
    if xs.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Schema("evaluation points must be strictly increasing".into()));
    }
    let zero = C64::new(0.0, 0.0);
    let mut out = vec![[zero; 4]; xs.len()];
    let rtol = cfg.rtol;
    let kappa = frequency_scale(spec, lambda);
    let m = jump_matrix(spec, true);
    let target = xs.last().copied().unwrap_or(0.0);
    if with_derivative {
        run_layered(
            spec,
            lambda,
            0.0,
            [C64::new(1.0, 0.0), spec.h, zero, zero],
            target,
            variational_rhs,
            |s, _| {
                let a = apply2(&m, [s[0], s[1]]);
                let d = apply2(&m, [s[2], s[3]]);
                [a[0], a[1], d[0], d[1]]
            },
            |e, a, b| variational_ratio(kappa, e, a, b, rtol),
            xs,
            |i, _, s| out[i] = *s,
            None,
        )?;
    } else {
        run_layered(
            spec,
            lambda,
            0.0,
            [C64::new(1.0, 0.0), spec.h],
            target,
            |c, _r, s| [s[1], c * s[0]],
            |s, _| apply2(&m, *s),
            |e, a, b| pair_ratio(kappa, *e, *a, *b, rtol),
            xs,
            |i, _, s| out[i] = [s[0], s[1], zero, zero],
            None,
        )?;
    }
    Ok(out)
}

/// A solution and its lambda-derivative at the end of the path, without
/// sampling. `init` is lambda-independent, so the derivative starts at zero.
pub(crate) fn shoot_with_derivative(
    spec: &ProblemSpec,
    cfg: &OdeConfig,
    lambda: C64,
    init: SolutionSample,
    target: f64,
) -> Result<[C64; 4]> {
    let rtol = cfg.rtol;
    let kappa = frequency_scale(spec, lambda);
    let m_fwd = jump_matrix(spec, true);
    let m_bwd = jump_matrix(spec, false);
    let zero = C64::new(0.0, 0.0);
    run_layered(
        spec,
        lambda,
        init.x,
        [init.y, init.dy, zero, zero],
        target,
        variational_rhs,
        |s, fwd| {
            let m = if fwd { &m_fwd } else { &m_bwd };
            let a = apply2(m, [s[0], s[1]]);
            let d = apply2(m, [s[2], s[3]]);
            [a[0], a[1], d[0], d[1]]
        },
        |e, a, b| variational_ratio(kappa, e, a, b, rtol),
        &[],
        |_, _, _| {},
        None,
    )
}

/// `(y, y')` at the end of the path only.
pub(crate) fn shoot(spec: &ProblemSpec, cfg: &OdeConfig, lambda: C64, init: SolutionSample, target: f64) -> Result<[C64; 2]> {
    let rtol = cfg.rtol;
    let kappa = frequency_scale(spec, lambda);
    let m_fwd = jump_matrix(spec, true);
    let m_bwd = jump_matrix(spec, false);
    run_layered(
        spec,
        lambda,
        init.x,
        init.pair(),
        target,
        |c, _r, s| [s[1], c * s[0]],
        |s, fwd| apply2(if fwd { &m_fwd } else { &m_bwd }, *s),
        |e, a, b| pair_ratio(kappa, *e, *a, *b, rtol),
        &[],
        |_, _, _| {},
        None,
    )
}
