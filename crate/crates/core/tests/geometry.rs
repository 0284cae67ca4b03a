use proptest::prelude::*;
use spdkmeans::seed;
use spdkmeans::spd::{self, EmbeddedPoint, SpdMatrix};

fn spd_set(max_m: usize, max_len: usize) -> impl Strategy<Value = Vec<SpdMatrix>> {
    (1..=max_m, 1..=max_len, any::<u64>(), 0.05f64..1.5).prop_map(|(m, len, s, spread)| {
        (0..len as u64)
            .map(|i| spd::sample_spd(m, seed::derive(s, &[i]), spread))
            .collect()
    })
}

fn triple() -> impl Strategy<Value = (SpdMatrix, SpdMatrix, SpdMatrix)> {
    (1usize..=8, any::<u64>(), 0.05f64..2.0).prop_map(|(m, s, spread)| {
        let d = |i| spd::sample_spd(m, seed::derive(s, &[i]), spread);
        (d(0), d(1), d(2))
    })
}

fn rel_frob(a: &SpdMatrix, b: &SpdMatrix) -> f64 {
    (a.as_matrix() - b.as_matrix()).norm() / b.as_matrix().norm()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn metric_axioms((a, b, c) in triple()) {
        let d = |x: &SpdMatrix, y: &SpdMatrix| spd::log_cholesky_distance(x, y).unwrap();
        prop_assert_eq!(d(&a, &a), 0.0);
        prop_assert!(d(&a, &b) >= 0.0);
        prop_assert!((d(&a, &b) - d(&b, &a)).abs() <= 1e-14);
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-12);
        if a != b {
            prop_assert!(d(&a, &b) > 0.0);
        }
    }

    #[test]
    fn distance_equals_embedded_euclidean((a, b, _c) in triple()) {
        let d = spd::log_cholesky_distance(&a, &b).unwrap();
        let e = spd::embed(&a).unwrap().distance_sq(&spd::embed(&b).unwrap()).sqrt();
        prop_assert!((d - e).abs() <= 1e-12 * d.max(1.0));
    }

    #[test]
    fn round_trips(m in 1usize..=20, s in any::<u64>(), spread in 0.05f64..1.0) {
        let a = spd::sample_spd(m, s, spread);
        let l = spd::cholesky(&a).unwrap();
        prop_assert!(rel_frob(&spd::from_cholesky(&l), &a) <= 1e-10);
        let v = spd::embed(&a).unwrap();
        prop_assert_eq!(v.coords().len(), m * (m + 1) / 2);
        prop_assert!(rel_frob(&spd::unembed(&v), &a) <= 1e-10);
        // coordinates pass through the matrix, so keep to well-conditioned sizes
        if m <= 8 {
            let v2 = spd::embed(&spd::unembed(&v)).unwrap();
            for (x, y) in v.coords().iter().zip(v2.coords()) {
                prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
            }
        }
    }

    #[test]
    fn frechet_routes_agree(set in spd_set(10, 100)) {
        let via_embedding = spd::frechet_mean(&set).unwrap();
        let via_factor = spd::frechet_mean_cholesky(&set).unwrap();
        let scale = via_factor.as_matrix().amax().max(1.0);
        let gap = (via_embedding.as_matrix() - via_factor.as_matrix()).amax() / scale;
        prop_assert!(gap <= 1e-12, "gap {}", gap);
    }

    #[test]
    fn frechet_mean_minimizes_dispersion(
        set in spd_set(5, 30),
        dir_seed in any::<u64>(),
        step in 1e-4f64..1.0,
    ) {
        let mean = spd::frechet_mean(&set).unwrap();
        let base = spd::dispersion(&mean, &set).unwrap();
        let v = spd::embed(&mean).unwrap();
        let mut rng = seed::rng(dir_seed);
        let moved = spd::sample_embedded(v.dim_m(), step, Some(&v), &mut rng);
        let other = spd::dispersion(&spd::unembed(&moved), &set).unwrap();
        prop_assert!(base <= other * (1.0 + 1e-12));
    }

    #[test]
    fn singleton_mean_is_the_matrix(set in spd_set(6, 1)) {
        let mean = spd::frechet_mean(&set).unwrap();
        prop_assert!(rel_frob(&mean, &set[0]) <= 1e-12);
    }

    #[test]
    fn embedded_points_validate_length(m in 1usize..6, extra in 1usize..4) {
        let len = m * (m + 1) / 2;
        prop_assert!(EmbeddedPoint::new(m, vec![0.0; len]).is_ok());
        prop_assert!(EmbeddedPoint::new(m, vec![0.0; len + extra]).is_err());
    }
}

#[test]
fn dispersion_matches_embedded_sum() {
    let set: Vec<SpdMatrix> = (0..20).map(|i| spd::sample_spd(3, i, 0.8)).collect();
    let a = spd::sample_spd(3, 99, 0.8);
    let va = spd::embed(&a).unwrap();
    let expected: f64 = set
        .iter()
        .map(|s| va.distance_sq(&spd::embed(s).unwrap()))
        .sum();
    let got = spd::dispersion(&a, &set).unwrap();
    assert!((got - expected).abs() <= 1e-12 * expected);
}

#[test]
fn asymmetric_and_indefinite_inputs_are_rejected() {
    assert!(SpdMatrix::from_row_major(2, &[1.0, 0.5, 0.4, 1.0]).is_err());
    assert!(SpdMatrix::from_row_major(2, &[1.0, 2.0, 2.0, 1.0]).is_err());
    assert!(SpdMatrix::from_row_major(2, &[1.0, 0.0, 0.0, f64::NAN]).is_err());
    // asymmetry at rounding level is accepted and symmetrized
    let s = SpdMatrix::from_row_major(2, &[2.0, 0.5, 0.5 + 1e-12, 2.0]).unwrap();
    assert_eq!(s.get(0, 1), s.get(1, 0));
}
