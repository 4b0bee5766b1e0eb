//! Zero counting by the argument principle on rectangles, cell subdivision,
//! Newton refinement, and the assignment of zeros to asymptotic seeds.

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::model::{cdiv, C64};

use super::characteristic::Characteristic;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub lo: C64,
    pub hi: C64,
}

impl Rect {
    pub fn contains(&self, z: C64) -> bool {
        z.re >= self.lo.re && z.re <= self.hi.re && z.im >= self.lo.im && z.im <= self.hi.im
    }

    pub fn center(&self) -> C64 {
        (self.lo + self.hi) / 2.0
    }

    pub fn diameter(&self) -> f64 {
        (self.hi - self.lo).norm()
    }

    fn corners(&self) -> [C64; 4] {
        [self.lo, C64::new(self.hi.re, self.lo.im), self.hi, C64::new(self.lo.re, self.hi.im)]
    }

    /// Split slightly off-centre so that child edges rarely pass through zeros
    /// lying on symmetry lines of the parent.
    fn quarters(&self) -> [Rect; 4] {
        let t = 0.5 + 0.0123;
        let m = C64::new(self.lo.re + t * (self.hi.re - self.lo.re), self.lo.im + (1.0 - t) * (self.hi.im - self.lo.im));
        [
            Rect { lo: self.lo, hi: m },
            Rect { lo: C64::new(m.re, self.lo.im), hi: C64::new(self.hi.re, m.im) },
            Rect { lo: C64::new(self.lo.re, m.im), hi: C64::new(m.re, self.hi.im) },
            Rect { lo: m, hi: self.hi },
        ]
    }
}

/// Initial samples on the segment `a -> b`. The `rho`-length of a segment of
/// length `s` at distance `d` from the origin is at most
/// `min(s / (2 sqrt d), sqrt(2 s))`.
fn edge_samples(a: C64, b: C64, phase_length: f64) -> usize {
    let s = (b - a).norm();
    let t = if s > 0.0 { (-(a.conj() * (b - a)).re / (s * s)).clamp(0.0, 1.0) } else { 0.0 };
    let d = (a + (b - a) * t).norm();
    let rho_len = if d > 0.0 { (s / (2.0 * d.sqrt())).min((2.0 * s).sqrt()) } else { (2.0 * s).sqrt() };
    ((rho_len * phase_length / (PI / 8.0)).ceil() as usize).clamp(8, 1 << 14)
}

/// Memoized `Delta` for contour work.
pub struct ContourEvaluator<'a, C: Characteristic> {
    chr: &'a C,
    cache: RefCell<HashMap<(u64, u64), C64>>,
    pub evaluations: RefCell<usize>,
}

impl<'a, C: Characteristic> ContourEvaluator<'a, C> {
    pub fn new(chr: &'a C) -> Self {
        ContourEvaluator { chr, cache: RefCell::new(HashMap::new()), evaluations: RefCell::new(0) }
    }

    fn eval(&self, z: C64) -> Result<C64> {
        let key = (z.re.to_bits(), z.im.to_bits());
        if let Some(v) = self.cache.borrow().get(&key) {
            return Ok(*v);
        }
        let (d, scale) = self.chr.delta(z)?;
        *self.evaluations.borrow_mut() += 1;
        if d.norm() <= 1e-13 * scale {
            return Err(Error::CountMismatch(format!("contour passes through a zero near {z}")));
        }
        self.cache.borrow_mut().insert(key, d);
        Ok(d)
    }

    /// Change of `arg Delta` along the segment `a -> b`, resolved by bisection
    /// until each increment is below pi/4 and consistent with its halves.
    fn arg_change(&self, a: C64, fa: C64, b: C64, fb: C64, depth: u32) -> Result<f64> {
        let whole = (fb / fa).arg();
        let m = (a + b) / 2.0;
        if depth > 40 {
            return Err(Error::CountMismatch(format!("argument increment unresolved near {m}")));
        }
        let fm = self.eval(m)?;
        let left = (fm / fa).arg();
        let right = (fb / fm).arg();
        if whole.abs() < PI / 4.0 && left.abs() < PI / 4.0 && right.abs() < PI / 4.0 && (left + right - whole).abs() < 1e-9 {
            return Ok(whole);
        }
        Ok(self.arg_change(a, fa, m, fm, depth + 1)? + self.arg_change(m, fm, b, fb, depth + 1)?)
    }

    /// `|a1| l1 + |a2| l2`, which bounds the rate of change of `arg Delta` in `rho`.
    fn phase_length(&self) -> f64 {
        let s = self.chr.spec();
        s.a1.norm() * s.interface + s.a2.norm() * (s.length - s.interface)
    }

    pub fn winding(&self, rect: &Rect) -> Result<i64> {
        let c = rect.corners();
        let mut total = 0.0;
        for i in 0..4 {
            let (a, b) = (c[i], c[(i + 1) % 4]);
            let (fa, fb) = (self.eval(a)?, self.eval(b)?);
            // enough starting samples that no piece turns by more than about
            // pi/8, so the bisection below cannot alias whole turns
            let n = edge_samples(a, b, self.phase_length());
            let mut prev = (a, fa);
            for j in 1..=n {
                let z = if j == n { b } else { a + (b - a) * (j as f64 / n as f64) };
                let fz = if j == n { fb } else { self.eval(z)? };
                total += self.arg_change(prev.0, prev.1, z, fz, 0)?;
                prev = (z, fz);
            }
        }
        let w = total / (2.0 * PI);
        let rounded = w.round();
        if (w - rounded).abs() > 0.1 {
            return Err(Error::CountMismatch(format!("non-integer winding number {w}")));
        }
        Ok(rounded as i64)
    }
}

/// Outcome of Newton refinement.
#[derive(Debug, Clone, Copy)]
pub struct Refined {
    pub lambda: C64,
    pub ddelta: C64,
    pub residual: f64,
    pub scale: f64,
    pub psi_over_phi: C64,
}

/// Newton in lambda; returns `None` if it leaves `region` or stalls.
pub fn newton_lambda<C: Characteristic>(chr: &C, start: C64, region: Option<&Rect>) -> Result<Option<Refined>> {
    let mut z = start;
    let mut last_step = f64::INFINITY;
    let mut stalls = 0;
    for _ in 0..60 {
        let e = chr.delta_with_derivative(z)?;
        if e.ddelta.norm() == 0.0 {
            return Ok(None);
        }
        let step = cdiv(e.delta, e.ddelta);
        let done = step.norm() <= 1e-14 * (1.0 + z.norm());
        if step.norm() >= last_step * 0.9 {
            stalls += 1;
        }
        if done || stalls >= 3 {
            if e.delta.norm() > 1e-6 * e.scale {
                return Ok(None);
            }
            let z_new = z - step;
            return Ok(Some(Refined { lambda: z_new, ddelta: e.ddelta, residual: e.delta.norm() / e.scale, scale: e.scale, psi_over_phi: e.psi_over_phi }));
        }
        last_step = step.norm();
        z -= step;
        if let Some(r) = region {
            let pad = 0.1 * r.diameter();
            let grown = Rect { lo: r.lo - C64::new(pad, pad), hi: r.hi + C64::new(pad, pad) };
            if !grown.contains(z) {
                return Ok(None);
            }
        }
    }
    Ok(None)
}

/// Newton in rho on `Delta(rho^2)`, steps capped at `max_step`.
pub fn newton_rho<C: Characteristic>(chr: &C, start: C64, max_step: f64) -> Result<Option<(C64, Refined)>> {
    let mut rho = start;
    let mut last_step = f64::INFINITY;
    let mut stalls = 0;
    for _ in 0..60 {
        let lambda = rho * rho;
        let e = chr.delta_with_derivative(lambda)?;
        let g = e.ddelta * rho * 2.0;
        if g.norm() == 0.0 {
            return Ok(None);
        }
        let mut step = cdiv(e.delta, g);
        if step.norm() > max_step {
            step *= max_step / step.norm();
        }
        let done = step.norm() <= 1e-15 * (1.0 + rho.norm());
        if step.norm() >= last_step * 0.9 {
            stalls += 1;
        }
        if done || stalls >= 3 {
            if e.delta.norm() > 1e-6 * e.scale {
                return Ok(None);
            }
            let rho_new = rho - step;
            return Ok(Some((
                rho_new,
                Refined { lambda: rho_new * rho_new, ddelta: e.ddelta, residual: e.delta.norm() / e.scale, scale: e.scale, psi_over_phi: e.psi_over_phi },
            )));
        }
        last_step = step.norm();
        rho -= step;
    }
    Ok(None)
}

/// All zeros of `Delta` inside `rect`, each a simple zero found in its own cell.
pub fn zeros_in_rect<C: Characteristic>(chr: &C, rect: Rect, simplicity: f64) -> Result<(Vec<Refined>, i64)> {
    let ev = ContourEvaluator::new(chr);
    let total = ev.winding(&rect)?;
    let mut found = Vec::new();
    let mut stack = vec![(rect, total, 0u32)];
    while let Some((cell, count, depth)) = stack.pop() {
        if count == 0 {
            continue;
        }
        if let Some(r) = newton_lambda(chr, cell.center(), Some(&cell))? {
            if cell.contains(r.lambda) {
                if r.ddelta.norm() * (1.0 + r.lambda.norm()) < simplicity * r.scale {
                    return Err(Error::MultipleZeroDetected(format!("{}", r.lambda)));
                }
                if count == 1 {
                    found.push(r);
                    continue;
                }
            }
        }
        if depth > 48 || cell.diameter() < 1e-9 * (1.0 + cell.center().norm()) {
            return Err(Error::MultipleZeroDetected(format!("{}", cell.center())));
        }
        let quarters = cell.quarters();
        let mut sub = 0;
        let mut children = Vec::with_capacity(4);
        for q in quarters {
            let w = ev.winding(&q)?;
            sub += w;
            children.push((q, w, depth + 1));
        }
        if sub != count {
            return Err(Error::CountMismatch(format!("cell counts {sub} disagree with parent count {count} near {}", cell.center())));
        }
        // Depth-first on the children in a fixed order keeps results deterministic.
        for c in children.into_iter().rev() {
            stack.push(c);
        }
    }
    if found.len() as i64 != total {
        return Err(Error::CountMismatch(format!("winding number {total}, located {}", found.len())));
    }
    Ok((found, total))
}

/// Minimum-cost assignment of rows to distinct columns (`rows <= cols`).
/// Returns the column of each row and the total cost.
pub fn min_cost_assignment(cost: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let n = cost.len();
    if n == 0 {
        return (Vec::new(), 0.0);
    }
    let m = cost[0].len();
    assert!(n <= m, "more rows than columns");
    // Shortest augmenting paths with potentials, 1-based bookkeeping.
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0usize; n];
    for j in 1..=m {
        if p[j] != 0 {
            assign[p[j] - 1] = j - 1;
        }
    }
    let total = assign.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
    (assign, total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Result;
    use crate::forward::characteristic::DeltaEval;
    use crate::model::{Potential, ProblemSpec};

    /// `Delta(lambda) = prod (lambda - z_i)` with the spec only as a placeholder.
    struct Poly {
        zeros: Vec<C64>,
        spec: ProblemSpec,
    }

    impl Poly {
        fn new(zeros: Vec<C64>) -> Self {
            let c0 = C64::new(0.0, 0.0);
            let spec = ProblemSpec {
                length: 1.0,
                interface: 0.5,
                potential: Potential::zero(1.0, 2),
                a1: C64::new(1.0, 0.0),
                a2: C64::new(1.0, 0.0),
                h: c0,
                big_h: c0,
                d1: C64::new(1.0, 0.0),
                d2: c0,
            };
            Poly { zeros, spec }
        }
    }

    impl Characteristic for Poly {
        fn spec(&self) -> &ProblemSpec {
            &self.spec
        }
        fn delta(&self, l: C64) -> Result<(C64, f64)> {
            let d: C64 = self.zeros.iter().map(|z| l - z).product();
            Ok((d, 1.0 + self.zeros.iter().map(|z| (l - z).norm()).product::<f64>()))
        }
        fn delta_with_derivative(&self, l: C64) -> Result<DeltaEval> {
            let (d, scale) = self.delta(l)?;
            let mut dd = C64::new(0.0, 0.0);
            for i in 0..self.zeros.len() {
                dd += self.zeros.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, z)| l - z).product::<C64>();
            }
            Ok(DeltaEval { delta: d, ddelta: dd, scale, psi_over_phi: C64::new(1.0, 0.0) })
        }
        fn delta0(&self, _l: C64) -> Result<C64> {
            Ok(C64::new(1.0, 0.0))
        }
    }

    #[test]
    fn counts_and_locates_polynomial_zeros() {
        let zs = vec![C64::new(0.3, 0.2), C64::new(-1.1, 0.7), C64::new(0.31, 0.25), C64::new(2.5, -1.0)];
        let p = Poly::new(zs.clone());
        let rect = Rect { lo: C64::new(-2.0, -2.0), hi: C64::new(2.0, 2.0) };
        let (found, total) = zeros_in_rect(&p, rect, 1e-8).unwrap();
        assert_eq!(total, 3);
        for z in &zs[..3] {
            assert!(found.iter().any(|r| (r.lambda - z).norm() < 1e-12), "missing {z}");
        }
    }

    #[test]
    fn double_zero_is_reported() {
        let p = Poly::new(vec![C64::new(0.1, 0.1), C64::new(0.1, 0.1)]);
        let rect = Rect { lo: C64::new(-1.0, -1.0), hi: C64::new(1.0, 1.0) };
        assert!(matches!(zeros_in_rect(&p, rect, 1e-8), Err(Error::MultipleZeroDetected(_))));
    }

    #[test]
    fn assignment_finds_optimum() {
        let cost = vec![vec![4.0, 1.0, 3.0], vec![2.0, 0.0, 5.0], vec![3.0, 2.0, 2.0]];
        let (a, total) = min_cost_assignment(&cost);
        assert_eq!(total, 5.0);
        assert_eq!(a, vec![1, 0, 2]);
        let rect = vec![vec![5.0, 1.0, 9.0, 0.5], vec![1.0, 7.0, 0.2, 3.0]];
        let (a, total) = min_cost_assignment(&rect);
        assert_eq!(a, vec![3, 2]);
        assert!((total - 0.7).abs() < 1e-15);
    }
}
