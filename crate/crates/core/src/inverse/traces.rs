//! Values of `phi(x, z)` at the evaluation stations and the kernel
//! `D(x, z_a, z_b) = <phi(z_a), phi(z_b)> / (z_a - z_b)` built from them.

use rayon::prelude::*;

use crate::error::Result;
use crate::forward::ClosedFormCharacteristic;
use crate::model::{apply2, cdiv, transfer_matrix, ProblemSpec, C64};
use crate::ode::{self, OdeConfig};

/// Below `|z_a - z_b| < NEAR_PAIR (1 + |z_a|)` the quotient loses too many
/// digits; the kernel is then taken on the diagonal at the midpoint, which is
/// second-order accurate because `D` is symmetric.
pub const NEAR_PAIR: f64 = 1e-7;

/// Evaluation point; `right` selects the right limit when `x = b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Station {
    pub x: f64,
    pub right: bool,
}

impl Station {
    pub fn left(x: f64) -> Self {
        Station { x, right: false }
    }
}

/// Source of `phi` values for one problem.
pub trait SolutionProvider: Sync {
    fn spec(&self) -> &ProblemSpec;

    /// `(phi, phi', dphi, dphi')` at sorted distinct points, left limits at `b`.
    fn phi_at(&self, z: C64, xs: &[f64], with_derivative: bool) -> Result<Vec<[C64; 4]>>;
}

pub struct ClosedFormProvider<'a> {
    chr: ClosedFormCharacteristic<'a>,
}

impl<'a> ClosedFormProvider<'a> {
    /// Requires `q = 0`.
    pub fn new(spec: &'a ProblemSpec) -> Result<Self> {
        if !spec.potential.is_zero() {
            return Err(crate::Error::Schema("closed-form solutions need q = 0".into()));
        }
        Ok(ClosedFormProvider { chr: ClosedFormCharacteristic::new(spec)? })
    }
}

impl SolutionProvider for ClosedFormProvider<'_> {
    fn spec(&self) -> &ProblemSpec {
        self.chr.spec
    }

    fn phi_at(&self, z: C64, xs: &[f64], _with_derivative: bool) -> Result<Vec<[C64; 4]>> {
        let init = [C64::new(1.0, 0.0), self.chr.spec.h];
        Ok(xs.iter().map(|&x| self.chr.solution_with_derivative_at(z, init, x)).collect())
    }
}

pub struct OdeProvider<'a> {
    pub spec: &'a ProblemSpec,
    pub cfg: OdeConfig,
}

impl SolutionProvider for OdeProvider<'_> {
    fn spec(&self) -> &ProblemSpec {
        self.spec
    }

    fn phi_at(&self, z: C64, xs: &[f64], with_derivative: bool) -> Result<Vec<[C64; 4]>> {
        ode::phi_at_points(self.spec, &self.cfg, z, xs, with_derivative)
    }
}

/// `phi` and `phi'` for every `z` at every station, plus the kernel on the
/// diagonal and for near pairs.
pub struct KernelTable {
    pub stations: Vec<Station>,
    pub zs: Vec<C64>,
    /// `values[a][s] = (phi, phi')(station s, z_a)`.
    values: Vec<Vec<[C64; 2]>>,
    /// `diag[a][s] = D(x_s, z_a, z_a)`.
    diag: Vec<Vec<C64>>,
    /// Near pairs `(a, b)` with `a < b` and their kernel per station.
    near: Vec<((usize, usize), Vec<C64>)>,
    weights: Vec<C64>,
}

fn is_near(a: C64, b: C64) -> bool {
    (a - b).norm() < NEAR_PAIR * (1.0 + a.norm().max(b.norm()))
}

impl KernelTable {
    pub fn build<P: SolutionProvider>(provider: &P, zs: &[C64], stations: &[Station]) -> Result<KernelTable> {
        let spec = provider.spec();
        let b = spec.interface;
        let jump = transfer_matrix(spec.d1, spec.d2)?;
        let mut xs: Vec<f64> = stations.iter().map(|s| s.x).collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        let pos = |x: f64| xs.partition_point(|&t| t < x);
        let expand = |raw: &[[C64; 4]]| -> Vec<[C64; 4]> {
            stations
                .iter()
                .map(|s| {
                    let v = raw[pos(s.x)];
                    if s.right && s.x == b {
                        let a = apply2(&jump, [v[0], v[1]]);
                        let d = apply2(&jump, [v[2], v[3]]);
                        [a[0], a[1], d[0], d[1]]
                    } else {
                        v
                    }
                })
                .collect()
        };
        let wrapped = |v: &[C64; 4]| -(v[0] * v[3] - v[1] * v[2]);

        let raw: Vec<Result<Vec<[C64; 4]>>> = zs.par_iter().map(|&z| provider.phi_at(z, &xs, true)).collect();
        let mut values = Vec::with_capacity(zs.len());
        let mut diag = Vec::with_capacity(zs.len());
        for r in raw {
            let st = expand(&r?);
            values.push(st.iter().map(|v| [v[0], v[1]]).collect());
            diag.push(st.iter().map(wrapped).collect());
        }

        let mut pairs = Vec::new();
        for i in 0..zs.len() {
            for j in i + 1..zs.len() {
                if zs[i] != zs[j] && is_near(zs[i], zs[j]) {
                    pairs.push((i, j));
                }
            }
        }
        let near: Vec<Result<((usize, usize), Vec<C64>)>> = pairs
            .par_iter()
            .map(|&(i, j)| {
                let mid = (zs[i] + zs[j]) / 2.0;
                let st = expand(&provider.phi_at(mid, &xs, true)?);
                Ok(((i, j), st.iter().map(wrapped).collect()))
            })
            .collect();
        let near = near.into_iter().collect::<Result<Vec<_>>>()?;
        let weights = stations.iter().map(|s| if s.x < b || (s.x == b && !s.right) { spec.a1 * spec.a1 } else { spec.a2 * spec.a2 }).collect();
        Ok(KernelTable { stations: stations.to_vec(), zs: zs.to_vec(), values, diag, near, weights })
    }

    #[inline]
    pub fn phi(&self, a: usize, s: usize) -> [C64; 2] {
        self.values[a][s]
    }

    /// `r` at station `s`.
    #[inline]
    pub fn weight(&self, s: usize) -> C64 {
        self.weights[s]
    }

    pub fn kernel(&self, s: usize, a: usize, b: usize) -> C64 {
        let (za, zb) = (self.zs[a], self.zs[b]);
        if a == b || za == zb {
            return self.diag[a][s];
        }
        if is_near(za, zb) {
            let key = (a.min(b), a.max(b));
            if let Some((_, v)) = self.near.iter().find(|(p, _)| *p == key) {
                return v[s];
            }
        }
        let (p, q) = (self.values[a][s], self.values[b][s]);
        cdiv(p[0] * q[1] - p[1] * q[0], za - zb)
    }

    /// `d/dx D(x, z_a, z_b) = r phi(z_a) phi(z_b)`.
    #[inline]
    pub fn kernel_dx(&self, s: usize, a: usize, b: usize) -> C64 {
        self.weights[s] * self.values[a][s][0] * self.values[b][s][0]
    }
}
