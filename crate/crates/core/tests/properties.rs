use cwsl_core::forward::{Provenance, SpectralData, SpectralDatum, WeylSample};
use cwsl_core::io::{self, ProblemFile, SpectrumFile};
use cwsl_core::model::{transfer_matrix, validate_problem};
use cwsl_core::ode::{d_kernel_quotient, wronskian, OdeConfig, SolutionSample};
use cwsl_core::{Potential, ProblemSpec, ValidationMode, C64};
use proptest::prelude::*;

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1e6..1e6f64, -1e-300..1e-300f64, Just(0.0), Just(-0.0), Just(f64::MAX), Just(f64::MIN_POSITIVE)]
}

fn complex() -> impl Strategy<Value = C64> {
    (finite(), finite()).prop_map(|(a, b)| C64::new(a, b))
}

fn moderate() -> impl Strategy<Value = C64> {
    (-1e3..1e3f64, -1e3..1e3f64).prop_map(|(a, b)| C64::new(a, b))
}

prop_compose! {
    fn spec()(length in 0.5..3.0f64, frac in 0.1..0.9f64, qs in prop::collection::vec(complex(), 3..12),
              a1 in complex(), a2 in complex(), h in complex(), big_h in complex(), d1 in complex(), d2 in complex()) -> ProblemSpec {
        let n = qs.len();
        let nodes: Vec<f64> = (0..n).map(|i| if i + 1 == n { length } else { length * i as f64 / (n - 1) as f64 }).collect();
        ProblemSpec { length, interface: length * frac, potential: Potential::from_samples(nodes, qs).unwrap(), a1, a2, h, big_h, d1, d2 }
    }
}

prop_compose! {
    fn strict_spec()(length in 0.8..2.0f64, frac in 0.3..0.7f64, phi1 in 0.4..2.7f64, gap in 0.2..0.4f64,
                     r1 in 0.7..1.4f64, r2 in 0.7..1.4f64, t1 in 0.0..3.0f64, amp in -2.0..2.0f64) -> ProblemSpec {
        ProblemSpec {
            length,
            interface: length * frac,
            potential: Potential::from_fn(length, 101, |x| C64::new(amp, 0.5 * amp) * (x - 0.3).cos()),
            a1: C64::from_polar(r1, phi1),
            a2: C64::from_polar(r2, phi1 - gap),
            h: C64::new(0.3, -0.2),
            big_h: C64::new(-0.1, 0.4),
            d1: C64::from_polar(1.1, t1),
            d2: C64::new(0.2, 0.1),
        }
    }
}

proptest! {
    #[test]
    fn problem_file_round_trips_exactly(s in spec(), relaxed in any::<bool>()) {
        let mode = if relaxed { ValidationMode::Relaxed } else { ValidationMode::Strict };
        let file = ProblemFile::from_spec(&s, mode);
        let back: ProblemFile = io::parse_versioned(&io::to_json(&file).unwrap(), "problem").unwrap();
        prop_assert_eq!(&back, &file);
        prop_assert_eq!(back.to_spec().unwrap(), s);
    }

    #[test]
    fn spectrum_file_round_trips_exactly(vals in prop::collection::vec((complex(), complex(), complex()), 1..20),
                                         offset in (-3i64..3, -3i64..3), weyl in prop::collection::vec((complex(), complex()), 0..5)) {
        let data: Vec<SpectralDatum> = vals
            .iter()
            .enumerate()
            .map(|(i, &(lambda, rho, m))| SpectralDatum { k: i / 2, branch: 1 + (i % 2) as u8, lambda, rho, m })
            .collect();
        let data = SpectralData::new(data, Provenance::Computed, [offset.0, offset.1]);
        let weyl = weyl.into_iter().map(|(rho, m)| WeylSample { rho, m }).collect();
        let file = SpectrumFile::new(1.5, ValidationMode::Strict, &data, weyl, &Default::default(), None).unwrap();
        let text = io::to_json(&file).unwrap();
        let back: SpectrumFile = io::parse_versioned(&text, "spectrum").unwrap();
        prop_assert_eq!(&back, &file);
        prop_assert_eq!(io::to_json(&back).unwrap(), text);
        prop_assert_eq!(back.to_data().unwrap().data, data.data);
    }

    #[test]
    fn wronskian_is_antisymmetric(a in moderate(), b in moderate(), c in moderate(), d in moderate()) {
        let u = SolutionSample::new(0.0, a, b);
        let v = SolutionSample::new(0.0, c, d);
        prop_assert_eq!(wronskian(&u, &u), C64::new(0.0, 0.0));
        prop_assert_eq!(wronskian(&u, &v), -wronskian(&v, &u));
    }

    #[test]
    fn transfer_matrix_is_unimodular(r in 1e-3..1e3f64, t in -3.1..3.1f64, d2 in moderate()) {
        let d1 = C64::from_polar(r, t);
        let m = transfer_matrix(d1, d2).unwrap();
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        prop_assert!((det - 1.0).norm() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn d_kernel_is_symmetric(s in strict_spec(), x in 0.05..0.95f64, l in (-60.0..60.0f64, -60.0..60.0f64), m in (-60.0..60.0f64, -60.0..60.0f64)) {
        prop_assume!(validate_problem(&s, ValidationMode::Strict).is_ok());
        let (l, m) = (C64::new(l.0, l.1), C64::new(m.0, m.1));
        prop_assume!((l - m).norm() > 1.0);
        let cfg = OdeConfig::default();
        let a = d_kernel_quotient(&s, &cfg, x * s.length, l, m).unwrap();
        let b = d_kernel_quotient(&s, &cfg, x * s.length, m, l).unwrap();
        prop_assert!((a - b).norm() <= 1e-10 * a.norm());
    }
}
