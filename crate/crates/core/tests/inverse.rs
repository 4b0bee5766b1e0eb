use cwsl_core::cli::{compare, q_relative_l2};
use cwsl_core::forward::{closed_form_spectrum_q0, locate_eigenvalues, ForwardConfig};
use cwsl_core::inverse::{identity_diagnostics, invert_with_constants, InverseConfig};
use cwsl_core::recovery::RecoveredConstants;
use cwsl_core::{Potential, ProblemSpec, ValidationMode, C64};

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Zero-mean bump left of `b` on a nearly real geometry: the model and the
/// data share their `1/k` eigenvalue shifts, so the series for `q` converges.
fn well_posed() -> ProblemSpec {
    ProblemSpec {
        length: 1.5,
        interface: 0.6,
        potential: Potential::from_fn(1.5, 601, |x| c(3.0, 1.5) * (x - 0.3) * (-60.0 * (x - 0.3f64).powi(2)).exp()),
        a1: C64::from_polar(1.0, 0.001),
        a2: c(1.0, 0.0),
        h: c(0.0, 0.0),
        big_h: c(0.0, 0.0),
        d1: C64::from_polar(1.0, 0.3),
        d2: c(0.0, 0.0),
    }
}

fn layered() -> ProblemSpec {
    ProblemSpec {
        length: 1.5,
        interface: 0.6,
        potential: Potential::from_fn(1.5, 1001, |x| c(0.3, 0.15) * (-25.0 * (x - 0.5f64).powi(2)).exp()),
        a1: C64::from_polar(1.0, 1.2),
        a2: c(1.1, 0.0),
        h: c(0.2, -0.1),
        big_h: c(-0.4, 0.0),
        d1: C64::from_polar(1.0, 0.3),
        d2: c(0.1, 0.0),
    }
}

#[test]
fn reconstructs_a_well_posed_problem() {
    let spec = well_posed();
    let cfg = InverseConfig { truncation: 40, ..Default::default() };
    let data = locate_eigenvalues(&spec, ValidationMode::Strict, 40, &cfg.forward).unwrap();
    let rec = RecoveredConstants::from_problem(&spec).unwrap();
    let r = invert_with_constants(&data, rec, spec.length, &cfg).unwrap();
    let checks = compare(&r, &spec, 5e-2, 1e-3, 1e-4);
    for ch in &checks {
        assert!(ch.pass, "{ch:?}");
    }
    assert!(r.residuals.max_condition < 10.0);
    // the bump itself, away from the endpoint at T
    let left: Vec<usize> = (0..r.x.len()).filter(|&i| r.x[i] < spec.interface).collect();
    let worst = left.iter().map(|&i| (r.q[i] - spec.potential.eval(r.x[i])).norm()).fold(0.0, f64::max);
    assert!(worst < 2e-2, "max error left of b {worst:e}");
}

#[test]
fn model_spectrum_gives_the_model_back() {
    let mut spec = layered();
    spec.potential = Potential::zero(1.5, 11);
    spec.h = c(0.0, 0.0);
    spec.big_h = c(0.0, 0.0);
    spec.d2 = c(0.0, 0.0);
    let cfg = InverseConfig { truncation: 30, x_grid: 51, resolve_count: 0, ..Default::default() };
    let rec = RecoveredConstants::from_problem(&spec).unwrap();
    // the shooting spectrum agrees with the closed form to within the drop tolerance
    for data in [
        closed_form_spectrum_q0(&spec, ValidationMode::Strict, 30, &cfg.forward).unwrap(),
        locate_eigenvalues(&spec, ValidationMode::Strict, 30, &cfg.forward).unwrap(),
    ] {
        let r = invert_with_constants(&data, rec.clone(), spec.length, &cfg).unwrap();
        assert_eq!(r.residuals.dropped, 60);
        assert!(r.q.iter().all(|v| v.norm() == 0.0));
        assert_eq!(q_relative_l2(&r, &spec), 0.0);
    }
}

#[test]
fn main_equation_defect_left_of_b_halves_with_n() {
    let spec = layered();
    let cfg = InverseConfig::default();
    let data = locate_eigenvalues(&spec, ValidationMode::Strict, 80, &ForwardConfig::default()).unwrap();
    let rec = RecoveredConstants::from_problem(&spec).unwrap();
    let xs = [0.15, 0.45];
    let a = identity_diagnostics(&spec, &data, &rec, 40, &xs, 20, &cfg).unwrap();
    let b = identity_diagnostics(&spec, &data, &rec, 80, &xs, 20, &cfg).unwrap();
    for (p, q) in a.iter().zip(&b) {
        assert!(p.defect < 1e-3, "{p:?}");
        assert!(q.defect < 0.6 * p.defect, "{p:?} -> {q:?}");
    }
}

#[test]
fn defect_grows_exponentially_right_of_b() {
    // Right of b the true solutions at the model nodes grow like
    // exp(c k (x - b)); the main equation stops being bounded there.
    let spec = layered();
    let cfg = InverseConfig::default();
    let data = locate_eigenvalues(&spec, ValidationMode::Strict, 40, &ForwardConfig::default()).unwrap();
    let rec = RecoveredConstants::from_problem(&spec).unwrap();
    let d = identity_diagnostics(&spec, &data, &rec, 40, &[0.75, 1.05], 20, &cfg).unwrap();
    assert!(d[0].defect > 1e10 && d[1].defect > d[0].defect * 1e10, "{d:?}");
}
