//! Characteristic and Weyl functions, eigenvalue localization and Weyl coefficients.

pub mod characteristic;
pub mod roots;

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{cdiv, validate_problem, DerivedConstants, ProblemSpec, ValidationMode, C64};
use crate::ode::{self, OdeConfig, SolutionSample};

pub use characteristic::{Characteristic, ClosedFormCharacteristic, DeltaEval, OdeCharacteristic};
use roots::{min_cost_assignment, newton_lambda, newton_rho, zeros_in_rect, Rect, Refined};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForwardConfig {
    pub ode: OdeConfig,
    /// Seeds with index below this are located by contour counting instead of Newton.
    pub crossover: usize,
    /// `|Delta'(lambda_k)| (1 + |lambda_k|) >= simplicity * scale` is required.
    pub simplicity: f64,
}

impl Default for ForwardConfig {
    fn default() -> Self {
        ForwardConfig { ode: OdeConfig::default(), crossover: 5, simplicity: 1e-8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralDatum {
    /// Serial index within the branch, from 0.
    pub k: usize,
    pub branch: u8,
    pub lambda: C64,
    pub rho: C64,
    #[serde(rename = "M")]
    pub m: C64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    #[default]
    Computed,
    Loaded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralData {
    /// Branch-major, then by `k`.
    pub data: Vec<SpectralDatum>,
    pub count_branch1: usize,
    pub count_branch2: usize,
    pub provenance: Provenance,
    /// Asymptotic index of serial index 0, per branch: entry `k` of branch `j`
    /// pairs with the seed of index `k + seed_offset[j - 1]`.
    pub seed_offset: [i64; 2],
}

impl SpectralData {
    pub fn new(mut data: Vec<SpectralDatum>, provenance: Provenance, seed_offset: [i64; 2]) -> Self {
        data.sort_by_key(|d| (d.branch, d.k));
        let count_branch1 = data.iter().filter(|d| d.branch == 1).count();
        let count_branch2 = data.iter().filter(|d| d.branch == 2).count();
        SpectralData { data, count_branch1, count_branch2, provenance, seed_offset }
    }

    pub fn branch(&self, branch: u8) -> impl Iterator<Item = &SpectralDatum> {
        self.data.iter().filter(move |d| d.branch == branch)
    }

    pub fn get(&self, branch: u8, k: usize) -> Option<&SpectralDatum> {
        self.data.iter().find(|d| d.branch == branch && d.k == k)
    }

    /// Asymptotic index of an entry.
    pub fn seed_index(&self, d: &SpectralDatum) -> i64 {
        d.k as i64 + self.seed_offset[(d.branch - 1) as usize]
    }

    /// First `n` entries of each branch.
    pub fn truncated(&self, n: usize) -> SpectralData {
        let data = self.data.iter().filter(|d| d.k < n).copied().collect();
        SpectralData::new(data, self.provenance, self.seed_offset)
    }

    /// Structural checks: consecutive indices per branch, finite values.
    pub fn check(&self) -> Result<()> {
        for j in [1u8, 2] {
            for (i, d) in self.branch(j).enumerate() {
                if d.k != i {
                    return Err(Error::Schema(format!("branch {j} indices are not consecutive from 0 (found k = {} at position {i})", d.k)));
                }
            }
        }
        for d in &self.data {
            if d.branch != 1 && d.branch != 2 {
                return Err(Error::Schema(format!("branch must be 1 or 2, got {}", d.branch)));
            }
            for v in [d.lambda, d.rho, d.m] {
                if !v.re.is_finite() || !v.im.is_finite() {
                    return Err(Error::Schema(format!("non-finite value in entry (branch {}, k {})", d.branch, d.k)));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsymptoticSeed {
    pub k: i64,
    pub branch: u8,
    pub rho_seed: C64,
}

/// Leading terms of the eigenvalue asymptotics along branch `branch`.
pub fn asymptotic_seed(k: i64, branch: u8, consts: &DerivedConstants) -> Result<AsymptoticSeed> {
    let c = consts.c_branch(branch).ok_or(Error::UndefinedConstants("C1/C2 need omega+ and omega- nonzero"))?;
    let rho_seed = C64::from_polar(k as f64 * consts.branch_spacing(branch), consts.branch_ray(branch)) + c;
    Ok(AsymptoticSeed { k, branch, rho_seed })
}

/// Leading term of the Weyl coefficients along branch `branch`.
pub fn asymptotic_weyl(k: i64, branch: u8, consts: &DerivedConstants) -> Result<C64> {
    if consts.omega_minus.norm() == 0.0 || consts.omega_plus.norm() == 0.0 {
        return Err(Error::UndefinedConstants("asymptotic Weyl coefficients need omega+ and omega- nonzero"));
    }
    if branch == 1 {
        let a1 = C64::from_polar(consts.r1, consts.phi1);
        Ok(C64::new(2.0, 0.0) / (a1 * a1 * consts.l1))
    } else {
        // exp(2 i rho a1 l1) at the seed: the k-linear exponent plus the
        // constant exp(2 i a1 l1 C2), which does not tend to 1
        let rate = 2.0 * k as f64 * PI * consts.r1 * consts.l1 / (consts.r2 * consts.l2);
        let a1 = C64::from_polar(consts.r1, consts.phi1);
        let c2 = consts.c2.ok_or(Error::UndefinedConstants("C2 needs omega+ and omega- nonzero"))?;
        let e = C64::from_polar(1.0, consts.alpha) * rate + C64::new(0.0, 2.0) * a1 * consts.l1 * c2;
        Ok(e.exp() * 8.0 / (consts.omega_minus * consts.omega_plus * consts.l2))
    }
}

/// One value of the Weyl function off the spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeylSample {
    pub rho: C64,
    #[serde(rename = "M")]
    pub m: C64,
}

/// Direction of `rho` halfway between the branch-2 ray `-phi2` and the
/// branch-1 ray `pi - phi1`; `Im(rho a1) > 0` there.
pub fn weyl_ray_angle(consts: &DerivedConstants) -> f64 {
    (PI - consts.phi1 - consts.phi2) / 2.0
}

/// `count` samples of `M` on the mid-sector ray, `|rho|` geometric in `[rho_min, rho_max]`.
pub fn sample_weyl_ray(spec: &ProblemSpec, mode: ValidationMode, cfg: &OdeConfig, count: usize, rho_min: f64, rho_max: f64) -> Result<Vec<WeylSample>> {
    let consts = validate_problem(spec, mode)?;
    let theta = weyl_ray_angle(&consts);
    let chr = OdeCharacteristic { spec, cfg: *cfg };
    (0..count)
        .into_par_iter()
        .map(|i| {
            let t = if count > 1 { i as f64 / (count - 1) as f64 } else { 0.0 };
            let rho = C64::from_polar(rho_min * (rho_max / rho_min).powf(t), theta);
            Ok(WeylSample { rho, m: weyl_m_with(&chr, rho * rho)? })
        })
        .collect()
}

/// `Delta(lambda) = -V(phi)`.
pub fn char_delta(spec: &ProblemSpec, cfg: &OdeConfig, lambda: C64) -> Result<C64> {
    Ok(OdeCharacteristic { spec, cfg: *cfg }.delta(lambda)?.0)
}

/// `U(psi) = psi'(0) - h psi(0)`, equal to `Delta`.
pub fn char_delta_from_psi(spec: &ProblemSpec, cfg: &OdeConfig, lambda: C64) -> Result<C64> {
    let init = SolutionSample::new(spec.length, C64::new(1.0, 0.0), -spec.big_h);
    let s = ode::shoot(spec, cfg, lambda, init, 0.0)?;
    Ok(s[1] - spec.h * s[0])
}

/// `Delta_0(lambda) = psi(0, lambda)`.
pub fn delta0(spec: &ProblemSpec, cfg: &OdeConfig, lambda: C64) -> Result<C64> {
    OdeCharacteristic { spec, cfg: *cfg }.delta0(lambda)
}

/// `V(S) = S'(T) + H S(T)`, equal to `Delta_0`.
pub fn delta0_from_s(spec: &ProblemSpec, cfg: &OdeConfig, lambda: C64) -> Result<C64> {
    let init = SolutionSample::new(0.0, C64::new(0.0, 0.0), C64::new(1.0, 0.0));
    let s = ode::shoot(spec, cfg, lambda, init, spec.length)?;
    Ok(s[1] + spec.big_h * s[0])
}

/// `M(lambda) = Delta_0 / Delta`.
pub fn weyl_m(spec: &ProblemSpec, cfg: &OdeConfig, lambda: C64) -> Result<C64> {
    weyl_m_with(&OdeCharacteristic { spec, cfg: *cfg }, lambda)
}

pub fn weyl_m_with<C: Characteristic>(chr: &C, lambda: C64) -> Result<C64> {
    let (d, scale) = chr.delta(lambda)?;
    if d.norm() <= ode::NEAR_EIGENVALUE * scale {
        return Err(Error::NearEigenvalue(format!("{lambda}")));
    }
    Ok(cdiv(chr.delta0(lambda)?, d))
}

/// Residue of `M` at the simple pole `lambda_k`: `Delta_0 / Delta'`. At an
/// eigenvalue `psi = psi(0) phi`, so `Delta_0` is read off as the ratio of
/// the two solutions at the matching point instead of shooting `psi` to 0.
pub fn weyl_coefficient_with<C: Characteristic>(chr: &C, lambda_k: C64, simplicity: f64) -> Result<C64> {
    let e = chr.delta_with_derivative(lambda_k)?;
    check_simple(&e, lambda_k, simplicity)?;
    Ok(cdiv(e.psi_over_phi, e.ddelta))
}

pub fn weyl_coefficient(spec: &ProblemSpec, cfg: &ForwardConfig, lambda_k: C64) -> Result<C64> {
    weyl_coefficient_with(&OdeCharacteristic { spec, cfg: cfg.ode }, lambda_k, cfg.simplicity)
}

fn check_simple(e: &DeltaEval, lambda: C64, simplicity: f64) -> Result<()> {
    if e.ddelta.norm() * (1.0 + lambda.norm()) < simplicity * e.scale {
        return Err(Error::MultipleZeroDetected(format!("{lambda}")));
    }
    Ok(())
}

/// Eigenvalues and Weyl coefficients by shooting.
pub fn locate_eigenvalues(spec: &ProblemSpec, mode: ValidationMode, n_per_branch: usize, cfg: &ForwardConfig) -> Result<SpectralData> {
    let consts = validate_problem(spec, mode)?;
    locate_with(&OdeCharacteristic { spec, cfg: cfg.ode }, &consts, n_per_branch, cfg)
}

/// Same localization on the exact propagators; requires `q = 0`.
pub fn closed_form_spectrum_q0(spec: &ProblemSpec, mode: ValidationMode, n_per_branch: usize, cfg: &ForwardConfig) -> Result<SpectralData> {
    if !spec.potential.is_zero() {
        return Err(Error::Schema("closed-form spectrum needs q = 0".into()));
    }
    let consts = validate_problem(spec, mode)?;
    locate_with(&ClosedFormCharacteristic::new(spec)?, &consts, n_per_branch, cfg)
}

pub fn locate_with<C: Characteristic>(chr: &C, consts: &DerivedConstants, n: usize, cfg: &ForwardConfig) -> Result<SpectralData> {
    let strict = consts.mode == ValidationMode::Strict && consts.c1.is_some() && consts.c2.is_some();
    if strict {
        locate_two_branches(chr, consts, n, cfg)
    } else {
        locate_merged(chr, consts, n, cfg)
    }
}

/// Square `[-s, s]^2` in the lambda-plane, shifted off the symmetry lines.
fn search_square(half: f64) -> Rect {
    Rect { lo: C64::new(-half * 1.003_1, -half * 1.001_7), hi: C64::new(half * 0.998_7, half * 1.002_3) }
}

fn nearer_sign(rho: C64, target: C64) -> C64 {
    if (rho - target).norm() <= (-rho - target).norm() {
        rho
    } else {
        -rho
    }
}

fn same_zero(a: C64, b: C64) -> bool {
    (a - b).norm() <= 1e-7 * (1.0 + a.norm())
}

/// Lowest seed index considered when pairing low zeros with seeds.
const MIN_SEED: i64 = -3;

fn locate_two_branches<C: Characteristic>(chr: &C, consts: &DerivedConstants, n: usize, cfg: &ForwardConfig) -> Result<SpectralData> {
    let k0 = cfg.crossover.max(1) as i64;
    let seed = |k: i64, j: u8| asymptotic_seed(k, j, consts).map(|s| s.rho_seed);

    // Newton from every seed that might be needed.
    let k_hi = n as i64 - 1 - MIN_SEED;
    let jobs: Vec<(u8, i64)> = [1u8, 2].iter().flat_map(|&j| (k0..=k_hi).map(move |k| (j, k))).collect();
    let high: Vec<Result<(u8, i64, C64, Refined)>> = jobs
        .par_iter()
        .map(|&(j, k)| {
            let s = seed(k, j)?;
            let spacing = consts.branch_spacing(j);
            match newton_rho(chr, s, 0.25 * spacing)? {
                Some((rho, r)) if (rho - s).norm() < 0.5 * spacing => Ok((j, k, rho, r)),
                Some((rho, _)) => Err(Error::SeedDivergence {
                    k: k as usize,
                    branch: j,
                    reason: format!("converged to rho = {rho}, too far from seed {s}"),
                }),
                None => Err(Error::SeedDivergence { k: k as usize, branch: j, reason: "no convergence".into() }),
            }
        })
        .collect();
    let high: Vec<(u8, i64, C64, Refined)> = high.into_iter().collect::<Result<_>>()?;
    for (i, a) in high.iter().enumerate() {
        for b in &high[i + 1..] {
            if same_zero(a.3.lambda, b.3.lambda) {
                return Err(Error::SeedDivergence {
                    k: b.1 as usize,
                    branch: b.0,
                    reason: format!("converged to the same eigenvalue as seed (k = {}, branch = {})", a.1, a.0),
                });
            }
        }
    }

    // Contour search below the crossover.
    let radius = [1u8, 2].iter().map(|&j| seed(k0, j).map(|s| s.norm())).collect::<Result<Vec<_>>>()?;
    let low_radius = [1u8, 2]
        .iter()
        .map(|&j| Ok((seed(k0, j)?.norm() + seed(k0 - 1, j)?.norm()) / 2.0))
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0f64, f64::max)
        .max(1.0);
    let rect = search_square(low_radius * low_radius);
    let (low, _) = zeros_in_rect(chr, rect, cfg.simplicity)?;
    for h in &high {
        if rect.contains(h.3.lambda) && !low.iter().any(|l| same_zero(l.lambda, h.3.lambda)) {
            return Err(Error::CountMismatch(format!("eigenvalue {} from seed (k = {}, branch = {}) missed by the contour count", h.3.lambda, h.1, h.0)));
        }
    }
    let low: Vec<Refined> = low.into_iter().filter(|l| !high.iter().any(|h| same_zero(l.lambda, h.3.lambda))).collect();
    log::debug!("low region |rho| < {low_radius:.3}: {} zeros (seed radii {radius:?})", low.len());

    // Pair low zeros with the top of each branch's low seeds.
    let w = low.len() as i64;
    let mut best: Option<(f64, i64, i64, Vec<usize>, Vec<(u8, i64)>)> = None;
    for s1 in MIN_SEED..=k0 {
        let s2 = 2 * k0 - s1 - w;
        if !(MIN_SEED..=k0).contains(&s2) {
            continue;
        }
        let cols: Vec<(u8, i64)> = (s1..k0).map(|k| (1u8, k)).chain((s2..k0).map(|k| (2u8, k))).collect();
        let seeds: Vec<C64> = cols.iter().map(|&(j, k)| seed(k, j)).collect::<Result<_>>()?;
        let cost: Vec<Vec<f64>> = low
            .iter()
            .map(|z| {
                let rho = z.lambda.sqrt();
                seeds.iter().map(|&s| (rho - s).norm().min((-rho - s).norm())).collect()
            })
            .collect();
        let (assign, total) = min_cost_assignment(&cost);
        if best.as_ref().is_none_or(|b| total < b.0) {
            best = Some((total, s1, s2, assign, cols));
        }
    }
    let (_, s1, s2, assign, cols) = best.ok_or_else(|| Error::CountMismatch(format!("{w} low eigenvalues cannot be paired with seeds of both branches")))?;
    let offsets = [s1, s2];

    let mut entries: Vec<(u8, i64, C64, C64)> = Vec::new();
    for (i, z) in low.iter().enumerate() {
        let (j, k) = cols[assign[i]];
        let rho = nearer_sign(z.lambda.sqrt(), seed(k, j)?);
        entries.push((j, k, z.lambda, rho));
    }
    for &(j, k, rho, r) in &high {
        entries.push((j, k, r.lambda, rho));
    }
    let mut data = Vec::new();
    for j in [1u8, 2] {
        let off = offsets[(j - 1) as usize];
        let mut branch: Vec<&(u8, i64, C64, C64)> = entries.iter().filter(|e| e.0 == j && e.1 >= off && e.1 < off + n as i64).collect();
        branch.sort_by_key(|e| e.1);
        for e in branch {
            data.push(SpectralDatum { k: (e.1 - off) as usize, branch: j, lambda: e.2, rho: e.3, m: C64::new(0.0, 0.0) });
        }
    }
    fill_weyl(chr, &mut data, cfg)?;
    Ok(SpectralData::new(data, Provenance::Computed, offsets))
}

fn fill_weyl<C: Characteristic>(chr: &C, data: &mut [SpectralDatum], cfg: &ForwardConfig) -> Result<()> {
    let m: Vec<Result<C64>> = data.par_iter().map(|d| weyl_coefficient_with(chr, d.lambda, cfg.simplicity)).collect();
    for (d, m) in data.iter_mut().zip(m) {
        d.m = m?;
    }
    Ok(())
}

/// Relaxed mode: one branch ordered by `|lambda|`, from growing search squares.
fn locate_merged<C: Characteristic>(chr: &C, consts: &DerivedConstants, n: usize, cfg: &ForwardConfig) -> Result<SpectralData> {
    let density = (consts.r1 * consts.l1 + consts.r2 * consts.l2) / PI;
    let mut radius = (n as f64 + 1.5) / density + 1.0;
    for _ in 0..12 {
        let half = radius * radius;
        let (mut zeros, _) = zeros_in_rect(chr, search_square(half), cfg.simplicity)?;
        zeros.sort_by(|a, b| a.lambda.norm().total_cmp(&b.lambda.norm()).then(a.lambda.arg().total_cmp(&b.lambda.arg())));
        if zeros.len() >= n && (n == 0 || zeros[n - 1].lambda.norm() <= half) {
            let mut data: Vec<SpectralDatum> = zeros
                .iter()
                .take(n)
                .enumerate()
                .map(|(k, z)| {
                    let mut rho = z.lambda.sqrt();
                    if rho.re < 0.0 || (rho.re == 0.0 && rho.im < 0.0) {
                        rho = -rho;
                    }
                    SpectralDatum { k, branch: 1, lambda: z.lambda, rho, m: C64::new(0.0, 0.0) }
                })
                .collect();
            fill_weyl(chr, &mut data, cfg)?;
            return Ok(SpectralData::new(data, Provenance::Computed, [0, 0]));
        }
        radius *= 1.5;
    }
    Err(Error::CountMismatch(format!("fewer than {n} eigenvalues found in the search region")))
}

/// Re-locate one eigenvalue near `guess` by Newton in lambda.
pub fn refine_near<C: Characteristic>(chr: &C, guess: C64) -> Result<Option<C64>> {
    Ok(newton_lambda(chr, guess, None)?.map(|r| r.lambda))
}
