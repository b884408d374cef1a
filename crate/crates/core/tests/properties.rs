use proptest::prelude::*;

use vecrad::classes::{
    project_w, sup_mixed_norm, sup_trace_norm, HiddenNorm, MixedNormSpec, TraceNormSpec,
};
use vecrad::datagen::{load_dataset, parse_csv, save_dataset, to_csv};
use vecrad::index_map::{make_mc, make_mt, make_one_vs_one, IndexMap};
use vecrad::numerics::{
    empirical_covariance, lambda_max, min_eigenvalue, sigma_max, symmetric_eigenvalues, DataSample,
    Matrix, DEFAULT_REL_TOL,
};
use vecrad::rng::{sample_noise, NoiseKind, RngStream};

fn rows(n: usize, d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-3.0f64..3.0, d), n)
}

fn sample() -> impl Strategy<Value = DataSample> {
    (1usize..10, 1usize..6)
        .prop_flat_map(|(n, d)| rows(n, d).prop_map(|r| DataSample::new(r).unwrap()))
}

fn matrix() -> impl Strategy<Value = Matrix> {
    (1usize..6, 1usize..6)
        .prop_flat_map(|(k, d)| rows(k, d).prop_map(|r| Matrix::from_rows(&r).unwrap()))
}

fn hidden_norm() -> impl Strategy<Value = HiddenNorm> {
    prop_oneof![
        Just(HiddenNorm::TwoInf),
        Just(HiddenNorm::TwoTwo),
        Just(HiddenNorm::TwoOne)
    ]
}

fn dist(a: &Matrix, b: &Matrix) -> f64 {
    a.sub(b).unwrap().frobenius()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn covariance_is_psd(x in sample()) {
        let c = empirical_covariance(&x);
        prop_assert!(c.asymmetry() == 0.0);
        prop_assert!(min_eigenvalue(&c).unwrap() >= -1e-10 * c.trace().max(1.0));
    }

    #[test]
    fn power_iteration_matches_jacobi(x in sample()) {
        let c = empirical_covariance(&x);
        let lam = lambda_max(&c, DEFAULT_REL_TOL).unwrap();
        let ev = symmetric_eigenvalues(&c).unwrap();
        let top = *ev.last().unwrap();
        prop_assert!((lam - top).abs() <= 1e-6 * top.max(1e-12), "{} vs {}", lam, top);
        let s = sigma_max(x.as_matrix(), DEFAULT_REL_TOL).unwrap();
        prop_assert!((s * s / x.len() as f64 - top).abs() <= 1e-6 * top.max(1e-12));
    }

    #[test]
    fn theta_between_one_and_sqrt_t(labels in prop::collection::vec(1usize..5, 2..14), t in 1usize..6, n in 1usize..8) {
        let mut maps: Vec<IndexMap> = vec![make_mc(t, n * t).unwrap(), make_mt(t, n).unwrap()];
        if let Ok(m) = make_one_vs_one(&labels) {
            maps.push(m);
        }
        for m in maps {
            let th = m.theta();
            prop_assert!(th >= 1.0);
            prop_assert!(th <= (m.t() as f64).sqrt() + 1e-12);
            let mult = m.multiplicities().into_iter().max().unwrap();
            prop_assert!((th * th - mult as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn projection_idempotent_and_nonexpansive(
        norm in hidden_norm(), b in 0.0f64..3.0, pair in (1usize..5, 1usize..5)
            .prop_flat_map(|(k, d)| (rows(k, d), rows(k, d)))
    ) {
        let u = Matrix::from_rows(&pair.0).unwrap();
        let v = Matrix::from_rows(&pair.1).unwrap();
        let pu = project_w(norm, b, &u);
        let pv = project_w(norm, b, &v);
        prop_assert!(norm.norm_of(&pu) <= b * (1.0 + 1e-9) + 1e-12);
        prop_assert!(dist(&project_w(norm, b, &pu), &pu) <= 1e-9 * (1.0 + pu.frobenius()));
        prop_assert!(dist(&pu, &pv) <= dist(&u, &v) * (1.0 + 1e-9) + 1e-12);
    }

    #[test]
    fn projection_keeps_feasible_points(norm in hidden_norm(), w in matrix()) {
        let b = norm.norm_of(&w) * 1.01 + 1e-9;
        prop_assert!(dist(&project_w(norm, b, &w), &w) <= 1e-12 * (1.0 + w.frobenius()));
    }

    #[test]
    fn suprema_are_homogeneous_and_nested(
        seed in any::<u64>(), t in 1usize..5, n in 1usize..5, d in 1usize..5, b in 0.1f64..4.0
    ) {
        let x = vecrad::datagen::generate(
            &vecrad::datagen::SpectrumSpec::whitened(d, true), n * t, &RngStream::new(seed)).unwrap();
        let map = make_mt(t, n).unwrap();
        let noise = sample_noise(NoiseKind::Gaussian, &mut RngStream::new(seed ^ 1).rng(), &map);
        let s = |p: f64, b: f64| sup_mixed_norm(&MixedNormSpec::new(p, b).unwrap(), &noise, &x, &map).unwrap();
        let one = s(3.0, 1.0);
        prop_assert!((s(3.0, b) - b * one).abs() <= 1e-12 * b * one.max(1.0));
        prop_assert!(s(f64::INFINITY, 1.0) <= s(4.0, 1.0));
        prop_assert!(s(4.0, 1.0) <= s(2.0, 1.0));
        let tr = |b: f64| sup_trace_norm(&TraceNormSpec { b }, &noise, &x, &map).unwrap();
        prop_assert!((tr(b) - b * tr(1.0)).abs() <= 1e-9 * b * tr(1.0).max(1.0));
        // ‖W‖_F ≤ ‖W‖_tr: the trace ball lies inside the W_{2,2} ball of equal radius
        prop_assert!(tr(1.0) <= s(2.0, 1.0) * (1.0 + 1e-9));
    }

    #[test]
    fn csv_round_trip_is_bit_exact(r in (1usize..8, 1usize..6).prop_flat_map(|(n, d)|
        prop::collection::vec(prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO, d), n)))
    {
        let x = DataSample::new(r).unwrap();
        let back = parse_csv(&to_csv(&x)).unwrap();
        for (a, b) in x.iter().zip(back.iter()) {
            for (u, v) in a.iter().zip(b) {
                prop_assert_eq!(u.to_bits(), v.to_bits());
            }
        }
    }
}

#[test]
fn file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.csv");
    let x = vecrad::datagen::generate(
        &vecrad::datagen::SpectrumSpec::whitened(5, false),
        17,
        &RngStream::new(3),
    )
    .unwrap();
    save_dataset(&x, &path).unwrap();
    assert_eq!(load_dataset(&path).unwrap(), x);
}
