use nalgebra::DMatrix;
use proptest::prelude::*;
use pspin_core::linalg::{dist, dot, norm, sym_eigenvalues_desc};
use pspin_core::seeds;
use pspin_core::sphere::*;
use pspin_core::{DisorderTensor, Hamiltonian, Landscape};

fn random_point(n: usize, seed: u64) -> SpherePoint {
    SpherePoint::random(n, &mut seeds::rng(seed))
}

fn random_tangent(sigma: &SpherePoint, len: f64, seed: u64) -> TangentVector {
    let x = seeds::gaussian_vec(&mut seeds::rng(seed), sigma.dim());
    let t = tangent_project(sigma, &x);
    let s = len / t.norm();
    TangentVector::new(sigma, t.ambient().iter().map(|v| v * s).collect()).unwrap()
}

#[test]
fn projection_examples() {
    let sigma = random_point(9, 1);
    assert!(tangent_project(&sigma, sigma.coords()).norm() < 1e-12);
    let t = random_tangent(&sigma, 1.0, 2);
    assert!(dist(tangent_project(&sigma, t.ambient()).ambient(), t.ambient()) < 1e-12);
    let x = seeds::gaussian_vec(&mut seeds::rng(3), 9);
    let once = tangent_project(&sigma, &x);
    let twice = tangent_project(&sigma, once.ambient());
    assert!(dist(once.ambient(), twice.ambient()) < 1e-12);
}

#[test]
fn frame_at_first_axis_is_standard() {
    let n = 6;
    let f = TangentFrame::new(&SpherePoint::axis(n, 0));
    let cols = f.columns();
    let want = DMatrix::from_fn(n, n - 1, |r, c| if r == c + 1 { 1.0 } else { 0.0 });
    assert!((cols - want).norm() < 1e-12);
}

#[test]
fn frame_invariants_and_determinism() {
    for seed in 0..5 {
        let sigma = random_point(30, seed);
        let f = TangentFrame::new(&sigma);
        let cols = f.columns();
        assert!((cols.transpose() * &cols - DMatrix::identity(29, 29)).norm() < 1e-10);
        let s = nalgebra::DVector::from_column_slice(sigma.coords());
        assert!((cols.transpose() * s).norm() < 1e-10);
        assert_eq!(cols, TangentFrame::new(&sigma).columns());
    }
}

#[test]
fn off_sphere_points_rejected() {
    assert!(SpherePoint::new(vec![1.0, 1.0, 0.5]).is_err());
    assert!(SpherePoint::new(vec![1.0, 1.0]).is_ok());
}

#[test]
fn all_ones_sphere_calculus() {
    let h = Hamiltonian::new(DisorderTensor::from_entries(2, 3, vec![1.0; 8], None).unwrap());
    let sigma = SpherePoint::new(vec![1.0, 1.0]).unwrap();
    assert!(spherical_gradient(&h, &sigma).norm() < 1e-12);
    assert!((radial_derivative(&h, &sigma) - 6.0).abs() < 1e-12);
}

#[test]
fn radial_derivative_is_euler() {
    for seed in 0..20u64 {
        let (n, p) = if seed % 2 == 0 { (20, 3) } else { (12, 4) };
        let h = Hamiltonian::sample(n, p, seed).unwrap();
        let sigma = random_point(n, seed + 50);
        let r = radial_derivative(&h, &sigma);
        let want = p as f64 * h.value(sigma.coords()) / n as f64;
        assert!((r - want).abs() <= 1e-10 * want.abs());
    }
}

#[test]
fn geodesic_derivatives() {
    for case in 0..20u64 {
        let n = 15;
        let h = Hamiltonian::sample(n, 3, case).unwrap();
        let sigma = random_point(n, 100 + case);
        let u = random_tangent(&sigma, (n as f64).sqrt(), 200 + case);
        let f = |t: f64| h.value(&exp_unchecked(sigma.coords(), &u.ambient().iter().map(|v| t * v).collect::<Vec<_>>()));
        let dt = 1e-4;
        let d1 = (f(dt) - f(-dt)) / (2.0 * dt);
        let d2 = (f(dt) - 2.0 * f(0.0) + f(-dt)) / (dt * dt);
        let g = spherical_gradient(&h, &sigma);
        let want1 = dot(g.ambient(), u.ambient());
        assert!((d1 - want1).abs() <= 1e-5 * want1.abs().max(1.0), "case {case}");
        let frame = TangentFrame::new(&sigma);
        let rh = riemannian_hessian(&h, &sigma, &frame);
        let uf = nalgebra::DVector::from_vec(frame.to_frame(u.ambient()));
        let want2 = uf.dot(&(&rh * &uf));
        assert!((d2 - want2).abs() <= 1e-4 * want2.abs().max(1.0), "case {case}: {d2} vs {want2}");
    }
}

#[test]
fn hessian_spectrum_is_frame_independent() {
    let n = 20;
    let h = Hamiltonian::sample(n, 3, 4).unwrap();
    let sigma = random_point(n, 5);
    let a = sym_eigenvalues_desc(&riemannian_hessian(&h, &sigma, &TangentFrame::new(&sigma)));
    let b = sym_eigenvalues_desc(&riemannian_hessian(&h, &sigma, &TangentFrame::with_axis(&sigma, 3)));
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-8);
    }
}

#[test]
fn semicircle_support_at_random_point() {
    let n = 120;
    let h = Hamiltonian::sample(n, 3, 9).unwrap();
    let sigma = random_point(n, 10);
    let geom = LocalGeometry::at(&h, &sigma);
    let eig = sym_eigenvalues_desc(&geom.riemannian_hessian);
    for e in eig {
        assert!((e + geom.radial).abs() <= 5.40);
    }
}

#[test]
fn exp_map_examples() {
    let n = 5;
    let e1 = SpherePoint::axis(n, 0);
    let sq = (n as f64).sqrt();
    assert_eq!(exp_map(&e1, &TangentVector::zero(n)).unwrap(), e1);
    let mut u = vec![0.0; n];
    u[1] = 0.5 * sq;
    let out = exp_map(&e1, &TangentVector::new(&e1, u).unwrap()).unwrap();
    let mut want = vec![0.0; n];
    want[0] = sq * 0.5f64.cos();
    want[1] = sq * 0.5f64.sin();
    assert!(dist(out.coords(), &want) < 1e-12);
    let mut far = vec![0.0; n];
    far[2] = sq;
    assert!(exp_map(&e1, &TangentVector::new(&e1, far).unwrap()).is_err());
}

#[test]
fn log_map_rejections() {
    let n = 4;
    let e1 = SpherePoint::axis(n, 0);
    let anti = SpherePoint::new(e1.coords().iter().map(|v| -v).collect()).unwrap();
    assert!(log_map(&e1, &anti).is_err());
    assert!(log_map(&e1, &SpherePoint::axis(n, 1)).is_err());
    assert!(log_map(&e1, &e1).unwrap().norm() < 1e-12);
}

#[test]
fn tangent_vector_orthogonality_checked() {
    let sigma = random_point(6, 1);
    assert!(TangentVector::new(&sigma, sigma.coords().to_vec()).is_err());
}

#[test]
fn chart_coefficients_are_smooth_across_the_switch() {
    let a = chart_coefficients(0.05 - 1e-12);
    let b = chart_coefficients(0.05 + 1e-12);
    assert!((a.cos - b.cos).abs() < 1e-10);
    assert!((a.sinc - b.sinc).abs() < 1e-10);
    assert!((a.dcos - b.dcos).abs() < 1e-9);
    assert!((a.dsinc - b.dsinc).abs() < 1e-9);
}

/// Lipschitz ratio of `(σ, u) ↦ exp(σ, u)` stays bounded across `N`.
#[test]
fn exp_map_smoothness_is_dimension_free() {
    let mut worst = Vec::new();
    for n in [40usize, 80, 160] {
        let mut w = 0.0f64;
        for i in 0..100u64 {
            let sigma = random_point(n, i);
            let u = random_tangent(&sigma, 0.5 * (n as f64).sqrt(), 1000 + i);
            let bump = seeds::sphere_vec(&mut seeds::rng(2000 + i), n, 1e-3 * (n as f64).sqrt());
            let sigma2 = SpherePoint::normalize(sigma.coords().iter().zip(&bump).map(|(a, b)| a + b).collect()).unwrap();
            let u2 = tangent_project(&sigma2, u.ambient());
            let a = exp_map(&sigma, &u).unwrap();
            let b = exp_map(&sigma2, &u2).unwrap();
            let denom = dist(sigma.coords(), sigma2.coords()) + dist(u.ambient(), u2.ambient());
            w = w.max(dist(a.coords(), b.coords()) / denom);
        }
        worst.push(w);
    }
    assert!(worst.iter().all(|&w| w < 3.0), "{worst:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn exp_log_round_trip(seed in 0u64..10_000, theta in 0.0f64..0.9, n in 3usize..40) {
        let sigma = random_point(n, seed);
        let u = random_tangent(&sigma, theta * (n as f64).sqrt(), seed + 1);
        let x = exp_map(&sigma, &u).unwrap();
        prop_assert!((norm(x.coords()) / (n as f64).sqrt() - 1.0).abs() < 1e-10);
        let back = log_map(&sigma, &x).unwrap();
        prop_assert!(dist(back.ambient(), u.ambient()) <= 1e-9 * (n as f64).sqrt());
    }

    #[test]
    fn log_exp_round_trip(seed in 0u64..10_000, theta in 0.01f64..0.9) {
        let n = 12;
        let sigma = random_point(n, seed);
        let x = exp_map(&sigma, &random_tangent(&sigma, theta * (n as f64).sqrt(), seed + 7)).unwrap();
        let again = exp_map(&sigma, &log_map(&sigma, &x).unwrap()).unwrap();
        prop_assert!(dist(again.coords(), x.coords()) <= 1e-8 * (n as f64).sqrt());
    }

    #[test]
    fn exp_linearization_bound(seed in 0u64..10_000, theta in 0.0f64..0.5) {
        let n = 10;
        let sigma = random_point(n, seed);
        let u = random_tangent(&sigma, theta * (n as f64).sqrt(), seed + 3);
        let x = exp_map(&sigma, &u).unwrap();
        let lin: Vec<f64> = sigma.coords().iter().zip(u.ambient()).map(|(a, b)| a + b).collect();
        prop_assert!(dist(x.coords(), &lin) <= u.norm() * u.norm() / (n as f64).sqrt() + 1e-12);
    }

    #[test]
    fn frame_round_trip(seed in 0u64..10_000, n in 2usize..30) {
        let sigma = random_point(n, seed);
        let f = TangentFrame::new(&sigma);
        let y = seeds::gaussian_vec(&mut seeds::rng(seed + 9), n - 1);
        let x = f.to_ambient(&y);
        prop_assert!(dot(&x, sigma.coords()).abs() < 1e-10 * (n as f64));
        let back = f.to_frame(&x);
        prop_assert!(dist(&back, &y) < 1e-10 * (1.0 + norm(&y)));
    }
}
