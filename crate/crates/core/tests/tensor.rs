use nalgebra::DMatrix;
use proptest::prelude::*;
use pspin_core::linalg::{dot, norm, sym_eigenvalues_desc};
use pspin_core::seeds;
use pspin_core::tensor::*;
use pspin_core::{DenseTensor, DisorderTensor, Error, Hamiltonian, Landscape};

fn ones(n: usize, p: usize) -> Hamiltonian {
    Hamiltonian::new(DisorderTensor::from_entries(n, p, vec![1.0; n.pow(p as u32)], None).unwrap())
}

/// Direct sum over all index tuples.
fn naive_value(h: &Hamiltonian, x: &[f64]) -> f64 {
    let n = h.n();
    let p = h.p();
    let g = h.coefficients().data();
    let mut total = 0.0;
    for (flat, &c) in g.iter().enumerate() {
        let mut rest = flat;
        let mut prod = c;
        for _ in 0..p {
            prod *= x[rest % n];
            rest /= n;
        }
        total += prod;
    }
    h.normalization() * total
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-12)
}

#[test]
fn sampling_shape_and_determinism() {
    let a = sample_disorder(2, 3, 9).unwrap();
    assert_eq!(a.entries().len(), 8);
    let b = sample_disorder(2, 3, 9).unwrap();
    assert_eq!(a.entries(), b.entries());
    assert_eq!(a.seed(), Some(9));
}

#[test]
fn sampled_moments() {
    let t = sample_disorder(30, 3, 4).unwrap();
    let m = t.entries().len() as f64;
    let mean = t.entries().iter().sum::<f64>() / m;
    let var = t.entries().iter().map(|x| (x - mean).powi(2)).sum::<f64>() / m;
    assert!(mean.abs() < 4.0 / m.sqrt());
    assert!((var - 1.0).abs() < 4.0 * (2.0 / m).sqrt());
    assert!((0.93..=1.07).contains(&var));
}

#[test]
fn memory_budget_message() {
    let err = sample_disorder_with_budget(1000, 3, 1, 1 << 20).unwrap_err();
    match err {
        Error::MemoryBudget { required, budget } => {
            assert_eq!(required, 8_000_000_000);
            assert_eq!(budget, 1 << 20);
        }
        other => panic!("unexpected {other:?}"),
    }
    assert!(sample_disorder(1, 3, 1).is_err());
    assert!(sample_disorder(3, 1, 1).is_err());
}

#[test]
fn all_ones_oracles() {
    let h = ones(2, 3);
    let x = [1.0, 1.0];
    assert!((h.value(&x) - 4.0).abs() < 1e-12);
    let g = h.gradient(&x);
    assert!((g[0] - 6.0).abs() < 1e-12 && (g[1] - 6.0).abs() < 1e-12);
    let hs = h.hessian(&x);
    assert!((hs - DMatrix::from_element(2, 2, 6.0)).norm() < 1e-12);
}

#[test]
fn zero_point_and_dimension_errors() {
    let h = Hamiltonian::sample(5, 3, 1).unwrap();
    assert_eq!(h.value(&[0.0; 5]), 0.0);
    assert!(h.gradient(&[0.0; 5]).iter().all(|&v| v == 0.0));
    assert!(matches!(h.evaluate(&[1.0; 4]), Err(Error::DimensionMismatch { .. })));
    assert!(h.try_gradient(&[1.0; 6]).is_err());
    assert!(h.try_hessian(&[1.0; 3]).is_err());
}

#[test]
fn value_matches_naive_sum() {
    for (n, p, seed) in [(4, 2, 1u64), (5, 3, 2), (4, 4, 3), (3, 5, 4)] {
        let h = Hamiltonian::sample(n, p, seed).unwrap();
        let x = seeds::gaussian_vec(&mut seeds::rng(seed + 10), n);
        assert!(rel(h.value(&x), naive_value(&h, &x)) < 1e-12);
    }
}

#[test]
fn derivatives_match_finite_differences() {
    for case in 0..20u64 {
        let (n, p) = if case % 2 == 0 { (25, 3) } else { (12, 4) };
        let h = Hamiltonian::sample(n, p, 100 + case).unwrap();
        let mut rng = seeds::rng(200 + case);
        let x = seeds::sphere_vec(&mut rng, n, (n as f64).sqrt());
        let step = 1e-4 * (n as f64).sqrt();
        let (g, hs) = h.gradient_hessian(&x);
        let gscale = norm(&g) / (n as f64).sqrt();
        for i in 0..n {
            let mut a = x.clone();
            let mut b = x.clone();
            a[i] += step;
            b[i] -= step;
            let fd = (h.value(&a) - h.value(&b)) / (2.0 * step);
            assert!((fd - g[i]).abs() <= 1e-5 * g[i].abs().max(gscale), "case {case} coord {i}");
            let ga = h.gradient(&a);
            let gb = h.gradient(&b);
            for j in 0..n {
                let fd2 = (ga[j] - gb[j]) / (2.0 * step);
                assert!((fd2 - hs[(j, i)]).abs() <= 1e-5 * hs[(j, i)].abs().max(1.0), "case {case} hess {j},{i}");
            }
        }
    }
}

#[test]
fn hessian_euler_identity_and_symmetry() {
    let h = Hamiltonian::sample(15, 3, 8).unwrap();
    let x = seeds::gaussian_vec(&mut seeds::rng(1), 15);
    let hs = h.hessian(&x);
    assert!((&hs - hs.transpose()).norm() < 1e-10 * hs.norm());
    let quad = dot(&x, (&hs * nalgebra::DVector::from_column_slice(&x)).as_slice());
    assert!(rel(quad, 6.0 * h.value(&x)) < 1e-10);
}

#[test]
fn p2_hessian_independent_of_point() {
    let h = Hamiltonian::sample(6, 2, 3).unwrap();
    let a = h.hessian(&seeds::gaussian_vec(&mut seeds::rng(1), 6));
    let b = h.hessian(&seeds::gaussian_vec(&mut seeds::rng(2), 6));
    assert!((a - b).norm() < 1e-12);
}

#[test]
fn covariance_law() {
    let n = 20;
    let mut rng = seeds::rng(5);
    let sigma = seeds::sphere_vec(&mut rng, n, (n as f64).sqrt());
    let rho = seeds::sphere_vec(&mut rng, n, (n as f64).sqrt());
    let target = n as f64 * (dot(&sigma, &rho) / n as f64).powi(3);
    let samples: Vec<f64> = (0..2000)
        .map(|i| {
            let h = Hamiltonian::sample(n, 3, seeds::derive(77, "cov", i)).unwrap();
            h.value(&sigma) * h.value(&rho)
        })
        .collect();
    let m = samples.iter().sum::<f64>() / 2000.0;
    let sd = (samples.iter().map(|s| (s - m).powi(2)).sum::<f64>() / 1999.0).sqrt();
    assert!((m - target).abs() < 4.0 * sd / 2000f64.sqrt(), "{m} vs {target}");
}

#[test]
fn correlated_copy_limits_and_correlation() {
    let h = Hamiltonian::sample(10, 3, 1).unwrap();
    let same = correlated_copy(&h, CorrelationParam::new(1.0).unwrap(), 2).unwrap();
    assert_eq!(same.coefficients().data(), h.coefficients().data());
    assert!(CorrelationParam::new(1.5).is_err());
    assert!(CorrelationParam::new(-0.1).is_err());
    let m = 1000.0f64;
    let corr = |a: &Hamiltonian, b: &Hamiltonian| dot(a.coefficients().data(), b.coefficients().data()) / m;
    let ind = correlated_copy(&h, CorrelationParam::new(0.0).unwrap(), 3).unwrap();
    assert!(corr(&h, &ind).abs() < 4.0 / m.sqrt() * 1.2);
    let c8 = correlated_copy(&h, CorrelationParam::new(0.8).unwrap(), 4).unwrap();
    assert!((corr(&h, &c8) - 0.8).abs() < 4.0 / m.sqrt());
}

#[test]
fn correlated_copy_composes() {
    // Twice at q is once at q² in distribution; pooled coefficient correlation.
    let q = 0.7;
    let mut num = 0.0;
    let mut count = 0.0;
    for r in 0..40u64 {
        let h = Hamiltonian::sample(8, 3, seeds::derive(3, "h", r)).unwrap();
        let c = CorrelationParam::new(q).unwrap();
        let h2 = correlated_copy(&correlated_copy(&h, c, seeds::derive(3, "a", r)).unwrap(), c, seeds::derive(3, "b", r)).unwrap();
        num += dot(h.coefficients().data(), h2.coefficients().data());
        count += 512.0;
    }
    let r = num / count;
    let se = ((1.0 + q.powi(4)) / count).sqrt();
    assert!((r - q * q).abs() < 4.0 * se, "{r}");
}

#[test]
fn coeff_distance_examples() {
    let h = Hamiltonian::sample(6, 3, 1).unwrap();
    assert_eq!(coeff_distance(&h, &h).unwrap(), 0.0);
    let neg = h.scaled(-1.0);
    assert!(rel(coeff_distance(&h, &neg).unwrap(), 2.0 * norm(h.coefficients().data())) < 1e-12);
    assert!(coeff_distance(&h, &Hamiltonian::sample(5, 3, 1).unwrap()).is_err());
    let eps = 0.1;
    let mean = (0..100u64)
        .map(|i| {
            let a = Hamiltonian::sample(6, 3, seeds::derive(9, "d", i)).unwrap();
            let b = correlated_copy(&a, CorrelationParam::new(1.0 - eps).unwrap(), seeds::derive(9, "e", i)).unwrap();
            coeff_distance(&a, &b).unwrap().powi(2)
        })
        .sum::<f64>()
        / 100.0;
    assert!(rel(mean, 2.0 * eps * 216.0) < 0.1, "{mean}");
}

#[test]
fn opnorm_estimates() {
    let mut rng = seeds::rng(3);
    let v = seeds::sphere_vec(&mut rng, 7, 1.0);
    let t = DenseTensor::outer(&[&v, &v, &v]);
    assert!((tensor_opnorm_estimate(&t, 20, 2, 1) - 1.0).abs() < 1e-6);
    let m = DenseTensor::new(2, 6, seeds::gaussian_vec(&mut rng, 36)).unwrap();
    let dm = DMatrix::from_row_slice(6, 6, m.data());
    let sv = dm.singular_values().max();
    assert!((tensor_opnorm_estimate(&m, 200, 4, 2) - sv).abs() < 1e-6);
    let g = sample_disorder(40, 3, 11).unwrap();
    // The multilinear norm dominates the symmetric ground state (about 1.66√N).
    let est = tensor_opnorm_estimate(g.tensor(), 30, 4, 5) / 40f64.sqrt();
    assert!((1.6..=3.0).contains(&est), "{est}");
    let fewer = tensor_opnorm_estimate(g.tensor(), 5, 1, 5);
    let more = tensor_opnorm_estimate(g.tensor(), 10, 1, 5);
    assert!(more >= fewer);
}

#[test]
fn k_n_examples() {
    let n = 20;
    let probes: Vec<Vec<f64>> = (0..5).map(|i| seeds::ball_vec(&mut seeds::rng(i), n, (n as f64).sqrt())).collect();
    let zero = Hamiltonian::zero(n, 3);
    assert!(in_k_n(&zero, &probes, &BoundednessProbe::new(1e-6)).unwrap().inside);
    let big = Hamiltonian::sample(n, 3, 1).unwrap().scaled(1e4);
    assert!(!in_k_n(&big, &probes, &BoundednessProbe::new(pspin_core::presets::BDD_CONSTANT_P3)).unwrap().inside);
    let outside = vec![vec![10.0; n]];
    assert!(in_k_n(&zero, &outside, &BoundednessProbe::new(1.0)).is_err());
}

#[test]
fn k_n_rate_at_calibrated_constant() {
    let n = 60;
    let cfg = BoundednessProbe::new(pspin_core::presets::BDD_CONSTANT_P3);
    let inside = (0..20u64)
        .filter(|&i| {
            let h = Hamiltonian::sample(n, 3, seeds::derive(31, "kn", i)).unwrap();
            let mut rng = seeds::rng(seeds::derive(31, "probe", i));
            let probes: Vec<Vec<f64>> = (0..50).map(|_| seeds::ball_vec(&mut rng, n, (n as f64).sqrt())).collect();
            in_k_n_with_hints(&h, &probes, &probes[..2], &cfg).unwrap().inside
        })
        .count();
    assert!(inside >= 19, "{inside}/20");
}

#[test]
fn io_round_trip_and_sidecar() {
    let dir = std::env::temp_dir().join(format!("pspin-io-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let t = sample_disorder(4, 3, 12).unwrap();
    let path = dir.join("g.bin");
    let prov = pspin_core::io::Provenance { n: 4, p: 3, seed: Some(12), description: "test".into(), code_version: "x".into() };
    pspin_core::io::save(&path, &t, &prov).unwrap();
    let back = pspin_core::io::load(&path).unwrap();
    assert_eq!(back, t);
    assert!(std::fs::read_dir(&dir).unwrap().count() >= 2);
    std::fs::remove_dir_all(&dir).ok();
}

fn eigen_is_finite(m: &DMatrix<f64>) -> bool {
    sym_eigenvalues_desc(m).iter().all(|v| v.is_finite())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn homogeneity_and_parity(seed in 0u64..1000, c in -3.0f64..3.0) {
        let h = Hamiltonian::sample(6, 3, seed).unwrap();
        let x = seeds::gaussian_vec(&mut seeds::rng(seed ^ 0xAB), 6);
        let cx: Vec<f64> = x.iter().map(|v| c * v).collect();
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        let v = h.value(&x);
        prop_assert!((h.value(&cx) - c.powi(3) * v).abs() <= 1e-10 * (1.0 + (c.powi(3) * v).abs()));
        prop_assert!((h.value(&neg) + v).abs() <= 1e-12 * (1.0 + v.abs()));
    }

    #[test]
    fn euler_gradient_identity(seed in 0u64..1000, p in 2usize..5) {
        let n = 7;
        let h = Hamiltonian::sample(n, p, seed).unwrap();
        let x = seeds::sphere_vec(&mut seeds::rng(seed + 1), n, (n as f64).sqrt());
        let lhs = dot(&x, &h.gradient(&x));
        let rhs = p as f64 * h.value(&x);
        prop_assert!((lhs - rhs).abs() <= 1e-10 * rhs.abs().max(1e-3));
        prop_assert!(eigen_is_finite(&h.hessian(&x)));
    }

    #[test]
    fn combine_is_linear(seed in 0u64..1000, a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let h1 = Hamiltonian::sample(5, 3, seed).unwrap();
        let h2 = Hamiltonian::sample(5, 3, seed + 1).unwrap();
        let x = seeds::gaussian_vec(&mut seeds::rng(seed + 2), 5);
        let c = h1.combine(a, &h2, b).unwrap();
        let want = a * h1.value(&x) + b * h2.value(&x);
        prop_assert!((c.value(&x) - want).abs() <= 1e-10 * (1.0 + want.abs()));
    }

    #[test]
    fn coeff_distance_triangle(s1 in 0u64..500, s2 in 500u64..1000, s3 in 1000u64..1500) {
        let a = Hamiltonian::sample(4, 3, s1).unwrap();
        let b = Hamiltonian::sample(4, 3, s2).unwrap();
        let c = Hamiltonian::sample(4, 3, s3).unwrap();
        prop_assert_eq!(coeff_distance(&a, &b).unwrap(), coeff_distance(&b, &a).unwrap());
        prop_assert!(coeff_distance(&a, &c).unwrap() <= coeff_distance(&a, &b).unwrap() + coeff_distance(&b, &c).unwrap() + 1e-12);
    }

    #[test]
    fn encode_decode_round_trip(seed in 0u64..1000, n in 2usize..5, p in 2usize..4) {
        let t = sample_disorder(n, p, seed).unwrap();
        prop_assert_eq!(pspin_core::io::decode(&pspin_core::io::encode(&t)).unwrap(), t);
    }
}
