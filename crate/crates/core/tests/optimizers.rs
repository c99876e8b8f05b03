use proptest::prelude::*;
use pspin_core::linalg::{dist, norm};
use pspin_core::optimizers::*;
use pspin_core::par::Execution;
use pspin_core::seeds;
use pspin_core::wells::plant_well;
use pspin_core::{Hamiltonian, SpherePoint};

fn spike(n: usize, mu: f64, seed: u64) -> (Hamiltonian, SpherePoint) {
    let w = SpherePoint::random(n, &mut seeds::rng(seed));
    (plant_well(&Hamiltonian::zero(n, 3), &w, mu).unwrap(), w)
}

#[test]
fn config_validation() {
    assert!(AscentConfig::new(0.0, 10, 0.1, 0).is_err());
    assert!(AscentConfig::new(0.01, 0, 0.1, 0).is_err());
    assert!(AscentConfig::new(0.01, 10, 0.0, 0).is_err());
    assert!((safe_step(2.5) - 0.1).abs() < 1e-15);
}

#[test]
fn gd_fixed_point_stops_immediately() {
    let (h, w) = spike(10, 2.0, 1);
    let t = gd_ascent(&h, &w, &AscentConfig::new(0.01, 100, 0.01, 0).unwrap()).unwrap();
    assert_eq!(t.stop_reason, StopReason::GradientThreshold);
    assert_eq!(t.energies.len(), 1);
    assert_eq!(t.final_point(), &w);
}

#[test]
fn gd_rejects_bad_start() {
    let h = Hamiltonian::sample(5, 3, 0).unwrap();
    let cfg = AscentConfig::new(0.01, 10, 0.01, 0).unwrap();
    assert!(gd_ascent(&h, &SpherePoint::random(6, &mut seeds::rng(0)), &cfg).is_err());
}

#[test]
fn gd_planted_energy_strictly_increases() {
    let n = 80;
    let w = SpherePoint::random(n, &mut seeds::rng(2));
    let h = plant_well(&Hamiltonian::sample(n, 3, 3).unwrap(), &w, 2.0).unwrap();
    let start = SpherePoint::random(n, &mut seeds::rng(4));
    let mut cfg = AscentConfig::new(0.01, 3000, 0.01, 0).unwrap();
    cfg.keep_points = true;
    let t = gd_ascent(&h, &start, &cfg).unwrap();
    assert!(t.energies.windows(2).all(|e| e[1] > e[0]));
    assert_eq!(t.gain_violations, 0);
    assert_eq!(t.points.len(), t.energies.len());
    assert!(t.points.iter().all(|p| (norm(p.coords()) - (n as f64).sqrt()).abs() < 1e-9));
}

#[test]
fn gd_stop_implies_small_gradient() {
    let n = 40;
    for seed in 0..4u64 {
        let h = Hamiltonian::sample(n, 3, seed).unwrap();
        let start = SpherePoint::random(n, &mut seeds::rng(seed + 10));
        let t = gd_ascent(&h, &start, &AscentConfig::new(0.05, 4000, 0.05, 0).unwrap()).unwrap();
        assert_eq!(t.stop_reason, StopReason::GradientThreshold);
        let last = *t.grad_norms.last().unwrap();
        assert!(last <= 0.05 * (n as f64).sqrt());
        let r = pspin_core::wells::well_report(&h, 3, t.final_point(), &pspin_core::wells::WellParams::new(0.01, 0.05).unwrap(), false);
        assert!(r.margins.gradient >= 0.0);
        assert!(t.final_energy() > 1.2 && t.final_energy() < 1.9, "{}", t.final_energy());
    }
}

#[test]
fn trajectory_csv_columns() {
    let (h, w) = spike(6, 2.0, 3);
    let t = gd_ascent(&h, &w, &AscentConfig::new(0.01, 5, 0.01, 0).unwrap()).unwrap();
    let csv = t.to_csv(6);
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "iter,energy_per_N,grad_norm_per_sqrtN,radial_derivative");
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row.len(), 4);
    assert!((row[1].parse::<f64>().unwrap() - 2.0).abs() < 1e-10);
}

#[test]
fn hessian_ascent_zero_and_spike() {
    let cfg = HessianAscentConfig::default();
    let t = hessian_ascent(&Hamiltonian::zero(12, 3), &cfg).unwrap();
    assert!(t.energies.iter().all(|&e| e == 0.0));
    assert_eq!(t.stop_reason, StopReason::ReachedSphere);

    // For odd p the spike only curves upward on the side where <x,w> > 0.
    let n = 30;
    let (h, w) = spike(n, 2.0, 5);
    let noise = seeds::gaussian_vec(&mut seeds::rng(6), n);
    let start: Vec<f64> = w.coords().iter().zip(&noise).map(|(a, b)| 0.3 * a + b).collect();
    let cfg = HessianAscentConfig { step: 0.02, start: Some(start), ..HessianAscentConfig::default() };
    let t = hessian_ascent(&h, &cfg).unwrap();
    assert!((t.final_energy() / 2.0 - 1.0).abs() < 0.05, "{}", t.final_energy());
    assert_eq!(hessian_ascent(&h, &cfg).unwrap(), t);
}

#[test]
fn hessian_ascent_on_random_instance() {
    let n = 40;
    let h = Hamiltonian::sample(n, 3, 8).unwrap();
    let t = hessian_ascent(&h, &HessianAscentConfig { step: 0.02, seed: 3, ..Default::default() }).unwrap();
    assert!(t.final_energy() > 1.2, "{}", t.final_energy());
    assert!((norm(t.final_point().coords()) - (n as f64).sqrt()).abs() < 1e-9);
}

#[test]
fn rounding_examples() {
    let n = 16;
    let half: Vec<f64> = vec![0.5; n];
    assert_eq!(round_to_ball(&half), half);
    let double: Vec<f64> = vec![2.0; n];
    let r = round_to_ball(&double);
    assert!((norm(&r) - 4.0).abs() < 1e-12);
    assert!(dist(&r, &vec![1.0; n]) < 1e-12);
}

#[test]
fn constant_algorithm_is_perfectly_stable() {
    let alg = ConstantAlgorithm { point: vec![0.3; 10] };
    for coupling in [OmegaCoupling::Shared, OmegaCoupling::Independent] {
        let s = estimate_stability(&alg, 0.1, 5, 10, 3, 1, coupling, Execution::Sequential).unwrap();
        assert_eq!(s.s_hat, 0.0);
        assert_eq!(s.stderr, 0.0);
    }
    assert!(estimate_stability(&alg, 0.0, 5, 10, 3, 1, OmegaCoupling::Shared, Execution::Sequential).is_err());
    assert!(estimate_stability(&alg, 0.1, 1, 10, 3, 1, OmegaCoupling::Shared, Execution::Sequential).is_err());
}

#[test]
fn rounded_linear_stability_near_closed_form() {
    let eps = 0.1;
    let s = estimate_stability(&RoundedLinear, eps, 400, 30, 3, 7, OmegaCoupling::Shared, Execution::Sequential).unwrap();
    assert!((s.s_hat - (2.0 - eps)).abs() <= 4.0 * s.stderr + 0.15, "{} ± {}", s.s_hat, s.stderr);
}

#[test]
fn stability_is_replayable_and_execution_independent() {
    let alg = GdAlgorithm { eta: 0.05, max_iters: 50, delta: 0.05 };
    let a = estimate_stability(&alg, 0.05, 4, 15, 3, 11, OmegaCoupling::Shared, Execution::Sequential).unwrap();
    let b = estimate_stability(&alg, 0.05, 4, 15, 3, 11, OmegaCoupling::Shared, Execution::Parallel).unwrap();
    assert_eq!(a, b);
}

#[test]
fn overlap_examples() {
    let point = vec![0.5; 8];
    let rows = measure_overlap(&ConstantAlgorithm { point }, &[0.0, 0.5, 1.0], 4, 8, 3, 1, Execution::Sequential).unwrap();
    for r in &rows {
        assert!((r.mean - 0.25).abs() < 1e-15);
        assert_eq!(r.variance, 0.0);
    }
    let alg = GdAlgorithm { eta: 0.05, max_iters: 30, delta: 0.05 };
    let rows = measure_overlap(&alg, &[1.0], 5, 12, 3, 2, Execution::Sequential).unwrap();
    assert!((rows[0].mean - 1.0).abs() < 1e-10);
    assert!(rows[0].variance < 1e-20);
    assert!(measure_overlap(&alg, &[1.5], 2, 12, 3, 2, Execution::Sequential).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn rounding_is_idempotent_and_lipschitz(
        x in proptest::collection::vec(-5.0f64..5.0, 9),
        y in proptest::collection::vec(-5.0f64..5.0, 9),
    ) {
        let rx = round_to_ball(&x);
        prop_assert!(norm(&rx) <= 3.0 + 1e-12);
        prop_assert!(dist(&round_to_ball(&rx), &rx) <= 1e-12);
        prop_assert!(dist(&rx, &round_to_ball(&y)) <= dist(&x, &y) + 1e-12);
        // Nearest point: no sampled ball point is closer.
        let z = round_to_ball(&y);
        prop_assert!(dist(&x, &rx) <= dist(&x, &z) + 1e-12);
    }
}
