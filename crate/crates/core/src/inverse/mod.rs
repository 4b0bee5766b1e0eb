//! Reconstruction of `q`, `h`, `H` and `d2` from spectral data through the
//! linear main equation `f~(x) = (I + A~(x)) f(x)` against a model problem
//! with `q~ = 0`.

pub mod linalg;
pub mod traces;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{closed_form_spectrum_q0, locate_eigenvalues, ForwardConfig, SpectralData, WeylSample};
use crate::model::{validate_problem, DerivedConstants, Potential, ProblemSpec, ValidationMode, C64};
use crate::ode::uniform_grid;
use crate::recovery::{recover_constants, RecoveredConstants};

use linalg::{Lu, Matrix};
use traces::{ClosedFormProvider, KernelTable, OdeProvider, SolutionProvider, Station};

fn zero() -> C64 {
    C64::new(0.0, 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InverseConfig {
    /// Entries used per branch.
    pub truncation: usize,
    /// Points of the uniform output grid on `[0, T]`.
    pub x_grid: usize,
    /// A pair is dropped when `xi < drop_tol (1 + |rho|)`.
    pub drop_tol: f64,
    /// Largest accepted 1-norm condition estimate of `I + A~`.
    pub cond_limit: f64,
    /// Largest accepted ratio of the last retained term to the sum.
    pub tail_fraction: f64,
    /// Largest accepted relative spread of the `h`, `H`, `d2` estimates.
    pub spread_limit: f64,
    pub forward: ForwardConfig,
    /// Eigenvalues per branch compared after re-solving the reconstruction; 0 skips it.
    pub resolve_count: usize,
}

impl Default for InverseConfig {
    fn default() -> Self {
        InverseConfig {
            truncation: 40,
            x_grid: 201,
            drop_tol: 1e-9,
            cond_limit: 1e12,
            tail_fraction: 1.0,
            spread_limit: 0.1,
            forward: ForwardConfig::default(),
            resolve_count: 21,
        }
    }
}

/// Model problem sharing `b`, `a1`, `a2`, `d1` with the data, zero elsewhere.
pub fn build_model(rec: &RecoveredConstants, length: f64) -> ProblemSpec {
    ProblemSpec {
        length,
        interface: rec.b,
        potential: Potential::zero(length, 2),
        a1: rec.a1,
        a2: rec.a2,
        h: zero(),
        big_h: zero(),
        d1: rec.d1,
        d2: zero(),
    }
}

/// `z_n0 = lambda_n` (data) and `z_n1 = lambda~_n` (model) with their weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedPair {
    pub branch: u8,
    /// Asymptotic index shared by the data and model entry.
    pub index: i64,
    pub z: [C64; 2],
    pub rho: [C64; 2],
    pub beta: [C64; 2],
    pub xi: f64,
    pub ln_theta: f64,
    pub dropped: bool,
}

impl WeightedPair {
    pub fn theta(&self) -> f64 {
        self.ln_theta.exp()
    }
}

/// Member `(n, i)` of the truncated index set; `n` counts pairs branch-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightedIndex {
    pub n: usize,
    pub i: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceWeights {
    pub pairs: Vec<WeightedPair>,
}

impl SequenceWeights {
    pub fn xi(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.xi).collect()
    }

    pub fn theta(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.theta()).collect()
    }

    pub fn dropped(&self) -> Vec<usize> {
        (0..self.pairs.len()).filter(|&n| self.pairs[n].dropped).collect()
    }

    pub fn active(&self) -> Vec<usize> {
        (0..self.pairs.len()).filter(|&n| !self.pairs[n].dropped).collect()
    }

    /// Unknowns in order: `(n, 0), (n, 1)` for every active pair `n`.
    pub fn indices(&self) -> Vec<WeightedIndex> {
        self.active().into_iter().flat_map(|n| [WeightedIndex { n, i: 0 }, WeightedIndex { n, i: 1 }]).collect()
    }

    /// Nodes `z_ni` at position `2n + i`, the layout expected by the kernel table.
    pub fn nodes(&self) -> Vec<C64> {
        self.pairs.iter().flat_map(|p| p.z).collect()
    }
}

/// Pairs the first `n` data entries of each branch with the model entries of
/// the same asymptotic index.
pub fn compute_weights(data: &SpectralData, model: &SpectralData, consts: &DerivedConstants, n: usize, drop_tol: f64) -> Result<SequenceWeights> {
    if data.count_branch1 != data.count_branch2 {
        return Err(Error::MisalignedData(format!(
            "branch counts differ: {} vs {}",
            data.count_branch1, data.count_branch2
        )));
    }
    let mut pairs = Vec::new();
    for j in [1u8, 2] {
        let by_index: BTreeMap<i64, _> = model.branch(j).map(|d| (model.seed_index(d), d)).collect();
        for d in data.branch(j).take(n) {
            let s = data.seed_index(d);
            let m = by_index.get(&s).ok_or_else(|| {
                Error::MisalignedData(format!("no model entry for branch {j}, asymptotic index {s}"))
            })?;
            let ln_theta = if j == 1 { 0.0 } else { s.max(0) as f64 * consts.theta_growth() };
            let theta2 = (2.0 * ln_theta).exp();
            let xi = (d.rho - m.rho).norm() + (d.m - m.m).norm() * theta2;
            pairs.push(WeightedPair {
                branch: j,
                index: s,
                z: [d.lambda, m.lambda],
                rho: [d.rho, m.rho],
                beta: [d.m, m.m],
                xi,
                ln_theta,
                dropped: xi < drop_tol * (1.0 + d.rho.norm()),
            });
        }
    }
    Ok(SequenceWeights { pairs })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MainEquationSystem {
    pub station: Station,
    pub indices: Vec<WeightedIndex>,
    /// `I + A~(x)`.
    pub matrix: Matrix,
    pub rhs: Vec<C64>,
    /// `A~'(x)`.
    pub derivative_matrix: Matrix,
    pub rhs_derivative: Vec<C64>,
}

/// `A(x)` built from `table` (model kernel gives `A~`, true kernel gives `A`);
/// `derivative` switches to `d/dx`.
pub fn operator_matrix(table: &KernelTable, s: usize, weights: &SequenceWeights, derivative: bool) -> Matrix {
    let active = weights.active();
    let pairs = &weights.pairs;
    let dim = 2 * active.len();
    let mut out = Matrix::zeros(dim);
    let kern = |a: usize, b: usize| if derivative { table.kernel_dx(s, a, b) } else { table.kernel(s, a, b) };
    for (r, &n) in active.iter().enumerate() {
        let pn = &pairs[n];
        for (c, &k) in active.iter().enumerate() {
            let pk = &pairs[k];
            let b = |i: usize, j: usize| kern(2 * n + i, 2 * k + j) * pk.beta[j];
            let (b00, b10, b01, b11) = (b(0, 0), b(1, 0), b(0, 1), b(1, 1));
            let ratio = (pk.ln_theta - pn.ln_theta).exp();
            out.set(2 * r, 2 * c, (b00 - b10) * (pk.xi / pn.xi * ratio));
            out.set(2 * r + 1, 2 * c + 1, (b10 - b11) * ratio);
            out.set(2 * r + 1, 2 * c, b10 * (pk.xi * ratio));
            out.set(2 * r, 2 * c + 1, (b00 - b10 - b01 + b11) * (ratio / pn.xi));
        }
    }
    out
}

/// `f(x)` from solution values: slot 0 is the value, 1 the x-derivative.
pub fn sequence_vector(table: &KernelTable, s: usize, weights: &SequenceWeights, slot: usize) -> Vec<C64> {
    let mut out = Vec::new();
    for n in weights.active() {
        let p = &weights.pairs[n];
        let theta = p.theta();
        let (u0, u1) = (table.phi(2 * n, s)[slot], table.phi(2 * n + 1, s)[slot]);
        out.push((u0 - u1) / (p.xi * theta));
        out.push(u1 / theta);
    }
    out
}

pub fn assemble_main_equation(model: &KernelTable, s: usize, weights: &SequenceWeights) -> Result<MainEquationSystem> {
    if s >= model.stations.len() {
        return Err(Error::MissingTrace(s));
    }
    if weights.active().is_empty() {
        return Err(Error::DroppedAll);
    }
    let mut matrix = operator_matrix(model, s, weights, false);
    for i in 0..matrix.n {
        let d = matrix.get(i, i);
        matrix.set(i, i, d + 1.0);
    }
    Ok(MainEquationSystem {
        station: model.stations[s],
        indices: weights.indices(),
        matrix,
        rhs: sequence_vector(model, s, weights, 0),
        derivative_matrix: operator_matrix(model, s, weights, true),
        rhs_derivative: sequence_vector(model, s, weights, 1),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MainEquationSolution {
    pub f: Vec<C64>,
    pub f_prime: Vec<C64>,
    pub condition: f64,
}

pub fn solve_main_equation(sys: &MainEquationSystem, cond_limit: f64) -> Result<MainEquationSolution> {
    let singular = |cond: f64| Error::SingularSystem { x: sys.station.x, cond, threshold: cond_limit };
    let lu = Lu::factor(&sys.matrix).ok_or_else(|| singular(f64::INFINITY))?;
    let condition = lu.condition_estimate();
    if !(condition <= cond_limit) {
        return Err(singular(condition));
    }
    let f = lu.solve(&sys.rhs);
    let af = sys.derivative_matrix.mul_vec(&f);
    let rhs: Vec<C64> = sys.rhs_derivative.iter().zip(&af).map(|(a, b)| a - b).collect();
    let f_prime = lu.solve(&rhs);
    Ok(MainEquationSolution { f, f_prime, condition })
}

/// `(phi_n0, phi_n0', phi_n1, phi_n1')` per pair at one station; dropped
/// pairs take the model values.
pub fn reconstruct_solutions(model: &KernelTable, s: usize, weights: &SequenceWeights, sol: &MainEquationSolution) -> Vec<[C64; 4]> {
    let mut out: Vec<[C64; 4]> = (0..weights.pairs.len())
        .map(|n| {
            let m = model.phi(2 * n + 1, s);
            [m[0], m[1], m[0], m[1]]
        })
        .collect();
    for (r, n) in weights.active().into_iter().enumerate() {
        let p = &weights.pairs[n];
        let theta = p.theta();
        let v1 = sol.f[2 * r + 1] * theta;
        let d1 = sol.f_prime[2 * r + 1] * theta;
        out[n] = [v1 + sol.f[2 * r] * p.xi * theta, d1 + sol.f_prime[2 * r] * p.xi * theta, v1, d1];
    }
    out
}

/// Terms of `d/dx sum_k (M_k phi~_k0 phi_k0 - M~_k phi~_k1 phi_k1)`, one per pair.
pub fn correction_terms(model: &KernelTable, s: usize, weights: &SequenceWeights, phis: &[[C64; 4]]) -> Vec<C64> {
    weights
        .pairs
        .iter()
        .enumerate()
        .map(|(n, p)| {
            if p.dropped {
                return zero();
            }
            let (m0, m1) = (model.phi(2 * n, s), model.phi(2 * n + 1, s));
            let v = phis[n];
            p.beta[0] * (m0[1] * v[0] + m0[0] * v[1]) - p.beta[1] * (m1[1] * v[2] + m1[0] * v[3])
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: C64,
    /// RMS deviation of the contributing estimates over `max(1, |value|)`.
    pub spread: f64,
    pub used: usize,
    /// True when the median replaced the mean because the spread was large.
    pub median_fallback: bool,
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

/// Mean with spread, falling back to the componentwise median.
pub fn robust_mean(what: &'static str, values: &[C64], limit: f64) -> Result<Estimate> {
    if values.is_empty() {
        return Err(Error::NoUsableIndex(what));
    }
    let n = values.len() as f64;
    let mean: C64 = values.iter().sum::<C64>() / n;
    let rms = |c: C64| (values.iter().map(|v| (v - c).norm_sqr()).sum::<f64>() / n).sqrt() / c.norm().max(1.0);
    let spread = rms(mean);
    if spread <= limit {
        return Ok(Estimate { value: mean, spread, used: values.len(), median_fallback: false });
    }
    let med = C64::new(
        median(&mut values.iter().map(|v| v.re).collect::<Vec<_>>()),
        median(&mut values.iter().map(|v| v.im).collect::<Vec<_>>()),
    );
    let mad = median(&mut values.iter().map(|v| (v - med).norm()).collect::<Vec<_>>()) / med.norm().max(1.0);
    if mad > limit {
        return Err(Error::InconsistentEstimates { what, spread, threshold: limit });
    }
    Ok(Estimate { value: med, spread: mad, used: values.len(), median_fallback: true })
}

/// Values below this fraction of the solution scale are not divided by.
const SMALL_VALUE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryEstimates {
    pub h: Estimate,
    #[serde(rename = "H")]
    pub big_h: Estimate,
    pub d2: Estimate,
}

/// `h`, `H`, `d2` from reconstructed data solutions at `0`, `b-`, `b+`, `T`.
pub fn extract_boundary_params(
    weights: &SequenceWeights,
    at0: &[[C64; 4]],
    at_b_left: &[[C64; 4]],
    at_b_right: &[[C64; 4]],
    at_t: &[[C64; 4]],
    d1: C64,
    limit: f64,
) -> Result<BoundaryEstimates> {
    let active = weights.active();
    let small = |v: [C64; 4], n: usize| v[0].norm() * (1.0 + weights.pairs[n].rho[0].norm()) <= SMALL_VALUE * v[1].norm();
    let hs: Vec<C64> = active.iter().map(|&n| at0[n][1] / at0[n][0]).collect();
    let bigs: Vec<C64> = active.iter().filter(|&&n| !small(at_t[n], n)).map(|&n| -at_t[n][1] / at_t[n][0]).collect();
    let ds: Vec<C64> = active
        .iter()
        .filter(|&&n| !small(at_b_left[n], n))
        .map(|&n| (at_b_right[n][1] - at_b_left[n][1] / d1) / at_b_left[n][0])
        .collect();
    Ok(BoundaryEstimates {
        h: robust_mean("h", &hs, limit)?,
        big_h: robust_mean("H", &bigs, limit)?,
        d2: robust_mean("d2", &ds, limit)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedEigenvalue {
    pub branch: u8,
    pub k: usize,
    pub data: C64,
    pub resolved: C64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub boundary: BoundaryEstimates,
    /// Largest last-term magnitude over the largest sum magnitude on the grid.
    pub tail_ratio: f64,
    pub max_condition: f64,
    pub dropped: usize,
    pub resolved: Vec<ResolvedEigenvalue>,
    pub max_resolve_error: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolve_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionResult {
    pub constants: RecoveredConstants,
    pub truncation: usize,
    pub x: Vec<f64>,
    pub q: Vec<C64>,
    pub h: C64,
    #[serde(rename = "H")]
    pub big_h: C64,
    pub d2: C64,
    pub residuals: Residuals,
}

impl ReconstructionResult {
    /// Problem with the reconstructed coefficients.
    pub fn to_problem(&self, length: f64) -> Result<ProblemSpec> {
        Ok(ProblemSpec {
            length,
            interface: self.constants.b,
            potential: Potential::from_samples(self.x.clone(), self.q.clone())?,
            a1: self.constants.a1,
            a2: self.constants.a2,
            h: self.h,
            big_h: self.big_h,
            d1: self.constants.d1,
            d2: self.d2,
        })
    }
}

/// Output grid plus the one-sided stations at `b`.
fn stations_for(length: f64, b: f64, points: usize) -> (Vec<Station>, usize, usize) {
    let xs = uniform_grid(length, points);
    let mut st: Vec<Station> = xs.iter().map(|&x| Station::left(x)).collect();
    st.push(Station::left(b));
    st.push(Station { x: b, right: true });
    (st, xs.len(), xs.len() + 1)
}

/// Full reconstruction; `weyl` samples improve the recovery of `a1`.
pub fn invert(data: &SpectralData, weyl: Option<&[WeylSample]>, length: f64, cfg: &InverseConfig) -> Result<ReconstructionResult> {
    data.check().map_err(|e| e.at_stage("input"))?;
    check_counts(data, cfg.truncation).map_err(|e| e.at_stage("input"))?;
    let rec = recover_constants(&data.truncated(data.count_branch1.min(data.count_branch2)), weyl, length)
        .map_err(|e| e.at_stage("param-recovery"))?;
    invert_with_constants(data, rec, length, cfg)
}

fn check_counts(data: &SpectralData, n: usize) -> Result<()> {
    let got = data.count_branch1.min(data.count_branch2);
    if got < n || n == 0 {
        return Err(Error::InsufficientSamples { what: "entries per branch for the truncation", needed: n.max(1), got });
    }
    Ok(())
}

/// Reconstruction against a model with the given constants.
pub fn invert_with_constants(data: &SpectralData, rec: RecoveredConstants, length: f64, cfg: &InverseConfig) -> Result<ReconstructionResult> {
    check_counts(data, cfg.truncation).map_err(|e| e.at_stage("input"))?;
    let n = cfg.truncation;
    let data = data.truncated(n);
    let model = build_model(&rec, length);
    let consts = validate_problem(&model, ValidationMode::Strict).map_err(|e| e.at_stage("build-model"))?;
    // a few extra entries so that shifted asymptotic indices still find a partner
    let model_data =
        closed_form_spectrum_q0(&model, ValidationMode::Strict, n + 4, &cfg.forward).map_err(|e| e.at_stage("model-spectrum"))?;
    let weights = compute_weights(&data, &model_data, &consts, n, cfg.drop_tol).map_err(|e| e.at_stage("weights"))?;

    let (stations, b_left, b_right) = stations_for(length, rec.b, cfg.x_grid);
    let xs: Vec<f64> = stations[..b_left].iter().map(|s| s.x).collect();
    let dropped = weights.dropped().len();
    let solve_stage = |e: Error| e.at_stage("main-equation");
    // the re-solve is a diagnostic; its failure is reported, not raised
    let resolve = |mut res: ReconstructionResult| -> Result<ReconstructionResult> {
        if cfg.resolve_count == 0 {
            return Ok(res);
        }
        match res.to_problem(length).and_then(|spec| resolve_check(&spec, &data, cfg)) {
            Ok(r) => {
                res.residuals.max_resolve_error = r.iter().map(|v| v.relative_error).reduce(f64::max);
                res.residuals.resolved = r;
            }
            Err(e) => {
                log::warn!("forward re-solve of the reconstruction failed: {e}");
                res.residuals.resolve_error = Some(e.to_string());
            }
        }
        Ok(res)
    };

    if weights.active().is_empty() {
        let zero_estimate = Estimate { value: zero(), spread: 0.0, used: 0, median_fallback: false };
        let boundary = BoundaryEstimates { h: zero_estimate.clone(), big_h: zero_estimate.clone(), d2: zero_estimate };
        return resolve(ReconstructionResult {
            constants: rec,
            truncation: n,
            q: vec![zero(); xs.len()],
            x: xs,
            h: zero(),
            big_h: zero(),
            d2: zero(),
            residuals: Residuals { boundary, tail_ratio: 0.0, max_condition: 1.0, dropped, resolved: vec![], max_resolve_error: None, resolve_error: None },
        });
    }

    let provider = ClosedFormProvider::new(&model).map_err(solve_stage)?;
    let table = KernelTable::build(&provider, &weights.nodes(), &stations).map_err(|e| e.at_stage("model-traces"))?;
    let per_station: Vec<Result<(Vec<[C64; 4]>, Vec<C64>, f64)>> = (0..stations.len())
        .into_par_iter()
        .map(|s| {
            let sys = assemble_main_equation(&table, s, &weights)?;
            let sol = solve_main_equation(&sys, cfg.cond_limit)?;
            let phis = reconstruct_solutions(&table, s, &weights, &sol);
            let terms = correction_terms(&table, s, &weights, &phis);
            Ok((phis, terms, sol.condition))
        })
        .collect();
    let per_station = per_station.into_iter().collect::<Result<Vec<_>>>().map_err(solve_stage)?;

    let last: Vec<usize> = [1u8, 2]
        .iter()
        .filter_map(|&j| weights.active().into_iter().filter(|&p| weights.pairs[p].branch == j).last())
        .collect();
    let mut q = Vec::with_capacity(xs.len());
    let (mut sum_scale, mut tail_scale, mut max_condition) = (0.0f64, 0.0f64, 0.0f64);
    for (s, (_, terms, cond)) in per_station.iter().enumerate().take(xs.len()) {
        let big_f: C64 = terms.iter().sum();
        q.push(-2.0 * table.weight(s) * big_f);
        sum_scale = sum_scale.max(big_f.norm());
        tail_scale = last.iter().map(|&p| terms[p].norm()).fold(tail_scale, f64::max);
        max_condition = max_condition.max(*cond);
    }
    let tail_ratio = if sum_scale > 0.0 { tail_scale / sum_scale } else { 0.0 };
    if tail_ratio > cfg.tail_fraction {
        return Err(Error::TailTooLarge { ratio: tail_ratio, threshold: cfg.tail_fraction }.at_stage("reconstruct-q"));
    }
    let boundary = extract_boundary_params(
        &weights,
        &per_station[0].0,
        &per_station[b_left].0,
        &per_station[b_right].0,
        &per_station[xs.len() - 1].0,
        rec.d1,
        cfg.spread_limit,
    )
    .map_err(|e| e.at_stage("boundary-params"))?;
    resolve(ReconstructionResult {
        constants: rec,
        truncation: n,
        x: xs,
        q,
        h: boundary.h.value,
        big_h: boundary.big_h.value,
        d2: boundary.d2.value,
        residuals: Residuals { boundary, tail_ratio, max_condition, dropped, resolved: vec![], max_resolve_error: None, resolve_error: None },
    })
}

/// Forward-solves the reconstruction and compares the leading eigenvalues,
/// each against the nearest re-solved one.
fn resolve_check(spec: &ProblemSpec, data: &SpectralData, cfg: &InverseConfig) -> Result<Vec<ResolvedEigenvalue>> {
    let count = cfg.resolve_count.min(data.count_branch1.min(data.count_branch2));
    let again = locate_eigenvalues(spec, ValidationMode::Strict, count + 4, &cfg.forward)?;
    Ok(data
        .data
        .iter()
        .filter(|d| d.k < count)
        .map(|d| {
            let l = again
                .data
                .iter()
                .map(|e| e.lambda)
                .min_by(|a, b| (a - d.lambda).norm().total_cmp(&(b - d.lambda).norm()))
                .unwrap_or(d.lambda);
            ResolvedEigenvalue {
                branch: d.branch,
                k: d.k,
                data: d.lambda,
                resolved: l,
                relative_error: (l - d.lambda).norm() / d.lambda.norm().max(1.0),
            }
        })
        .collect())
}

/// Sup-norm defect `|f~ - (I + A~) f|` of the main equation with `f` built
/// from the true solutions, at each station.
pub fn main_equation_defect<P: SolutionProvider>(truth: &P, model: &KernelTable, weights: &SequenceWeights) -> Result<Vec<f64>> {
    let true_table = KernelTable::build(truth, &model.zs, &model.stations)?;
    (0..model.stations.len())
        .map(|s| {
            let sys = assemble_main_equation(model, s, weights)?;
            let f = sequence_vector(&true_table, s, weights, 0);
            let af = sys.matrix.mul_vec(&f);
            Ok(sys.rhs.iter().zip(&af).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max))
        })
        .collect()
}

/// `|(I + A~)(I - A) - I|_inf` restricted to the rows and columns of the
/// first `lead` pairs of each branch, at each station.
pub fn operator_identity_residual<P: SolutionProvider>(truth: &P, model: &KernelTable, weights: &SequenceWeights, lead: usize) -> Result<Vec<f64>> {
    let true_table = KernelTable::build(truth, &model.zs, &model.stations)?;
    let active = weights.active();
    let mut seen = [0usize; 2];
    let mut keep = Vec::new();
    for (r, &n) in active.iter().enumerate() {
        let b = (weights.pairs[n].branch - 1) as usize;
        if seen[b] < lead {
            keep.push(2 * r);
            keep.push(2 * r + 1);
        }
        seen[b] += 1;
    }
    (0..model.stations.len())
        .map(|s| {
            let at = operator_matrix(model, s, weights, false);
            let a = operator_matrix(&true_table, s, weights, false);
            let dim = at.n;
            let mut worst = 0.0f64;
            for &i in &keep {
                let mut row = 0.0;
                for &j in &keep {
                    // (I + A~)(I - A) - I = A~ - A - A~ A
                    let mut v = at.get(i, j) - a.get(i, j);
                    for l in 0..dim {
                        v -= at.get(i, l) * a.get(l, j);
                    }
                    row += v.norm();
                }
                worst = worst.max(row);
            }
            Ok(worst)
        })
        .collect()
}

/// Main-equation defect and operator-identity residual at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityPoint {
    pub x: f64,
    pub defect: f64,
    pub residual: f64,
}

/// Checks the main equation against the true solutions of `truth`, with the
/// zero model built from `rec` and the first `n` entries of `data`; the
/// residual uses the leading `lead` pairs per branch.
pub fn identity_diagnostics(
    truth: &ProblemSpec,
    data: &SpectralData,
    rec: &RecoveredConstants,
    n: usize,
    xs: &[f64],
    lead: usize,
    cfg: &InverseConfig,
) -> Result<Vec<IdentityPoint>> {
    check_counts(data, n)?;
    let data = data.truncated(n);
    let model = build_model(rec, truth.length);
    let consts = validate_problem(&model, ValidationMode::Strict)?;
    let model_data = closed_form_spectrum_q0(&model, ValidationMode::Strict, n + 4, &cfg.forward)?;
    let weights = compute_weights(&data, &model_data, &consts, n, cfg.drop_tol)?;
    let stations: Vec<Station> = xs.iter().map(|&x| Station::left(x)).collect();
    let table = KernelTable::build(&ClosedFormProvider::new(&model)?, &weights.nodes(), &stations)?;
    let provider = OdeProvider { spec: truth, cfg: cfg.forward.ode };
    let defect = main_equation_defect(&provider, &table, &weights)?;
    let residual = operator_identity_residual(&provider, &table, &weights, lead)?;
    Ok(xs.iter().zip(defect).zip(residual).map(|((&x, defect), residual)| IdentityPoint { x, defect, residual }).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn robust_mean_prefers_mean_then_median() {
        let e = robust_mean("h", &[c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0)], 0.1).unwrap();
        assert_eq!(e.value, c(1.0, 0.0));
        assert!(!e.median_fallback);
        let vals = [c(1.0, 0.0), c(1.0, 0.0), c(1.001, 0.0), c(50.0, 0.0)];
        let e = robust_mean("h", &vals, 0.1).unwrap();
        assert!(e.median_fallback);
        assert!((e.value - c(1.0005, 0.0)).norm() < 1e-12);
        let wild = [c(1.0, 0.0), c(-5.0, 0.0), c(9.0, 3.0)];
        assert!(matches!(robust_mean("H", &wild, 0.1), Err(Error::InconsistentEstimates { .. })));
        assert!(matches!(robust_mean("d2", &[], 0.1), Err(Error::NoUsableIndex("d2"))));
    }

    #[test]
    fn identity_operator_returns_rhs() {
        let n = 4;
        let rhs: Vec<C64> = (0..n).map(|i| c(i as f64, 1.0)).collect();
        let sys = MainEquationSystem {
            station: Station::left(0.3),
            indices: vec![],
            matrix: Matrix::identity(n),
            rhs: rhs.clone(),
            derivative_matrix: Matrix::zeros(n),
            rhs_derivative: rhs.iter().map(|v| v * 2.0).collect(),
        };
        let sol = solve_main_equation(&sys, 1e12).unwrap();
        assert_eq!(sol.f, rhs);
        assert_eq!(sol.f_prime, rhs.iter().map(|v| v * 2.0).collect::<Vec<_>>());
        let mut bad = sys.clone();
        bad.matrix = Matrix::zeros(n);
        assert!(matches!(solve_main_equation(&bad, 1e12), Err(Error::SingularSystem { .. })));
    }
}
