use nalgebra::{DMatrix, DVector};
use pspin_core::ensemble::*;
use pspin_core::error::Error;
use pspin_core::following::BddSettings;
use pspin_core::linalg::dot;
use pspin_core::par::Execution;
use pspin_core::presets::bdd_constant;
use pspin_core::seeds;
use pspin_core::tensor::{correlated_copy, CorrelationParam};
use pspin_core::Hamiltonian;

/// Coefficient correlation pooled over replicas.
fn pooled_corr(pairs: &[(Hamiltonian, Hamiltonian)]) -> (f64, f64) {
    let mut s = 0.0;
    let mut count = 0usize;
    for (a, b) in pairs {
        s += dot(a.coefficients().data(), b.coefficients().data());
        count += a.coefficients().len();
    }
    let r = s / count as f64;
    (r, ((1.0 + r * r) / count as f64).sqrt())
}

fn ar1_cov(len: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(len, len, |i, j| rho.powi((i as i32 - j as i32).abs()))
}

/// Regression coefficients and residual variance of index `k` on `given`.
fn condition(cov: &DMatrix<f64>, k: usize, given: &[usize]) -> (Vec<f64>, f64) {
    let s = DMatrix::from_fn(given.len(), given.len(), |a, b| cov[(given[a], given[b])]);
    let c = DVector::from_fn(given.len(), |a, _| cov[(k, given[a])]);
    let w = s.lu().solve(&c).unwrap();
    let var = cov[(k, k)] - c.dot(&w);
    (w.iter().copied().collect(), var)
}

#[test]
fn bridge_coefficients_match_dense_conditioning() {
    for k_steps in 2..=8usize {
        for &eps in &[0.01, 0.1, 0.3, 0.5, 0.9] {
            let cov = ar1_cov(k_steps + 1, 1.0 - eps);
            for k in 1..k_steps {
                let c = bridge_coeffs(k, k_steps, eps).unwrap();
                let (w, var) = condition(&cov, k, &[k - 1, k_steps]);
                assert!((c.mean_prev - w[0]).abs() < 1e-12, "K={k_steps} k={k} eps={eps}");
                assert!((c.mean_end - w[1]).abs() < 1e-12);
                assert!((c.noise_scale * c.noise_scale - var).abs() < 1e-12);
                assert!((0.0..=1.0).contains(&c.noise_scale));
                // Conditioning on the whole past gives the same law.
                let mut all: Vec<usize> = (0..k).collect();
                all.push(k_steps);
                let (w_all, var_all) = condition(&cov, k, &all);
                assert!(w_all[..k - 1].iter().all(|x| x.abs() < 1e-10));
                assert!((var_all - var).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn bridge_coefficients_worked_example() {
    let c = bridge_coeffs(2, 4, 0.5).unwrap();
    let (w, var) = condition(&ar1_cov(5, 0.5), 2, &[1, 4]);
    assert!((c.mean_prev - w[0]).abs() < 1e-12);
    assert!((c.mean_end - w[1]).abs() < 1e-12);
    assert!((c.noise_scale.powi(2) - var).abs() < 1e-12);
    // ρ(1-ρ⁴)/(1-ρ⁶) at ρ = 1/2.
    assert!((c.mean_prev - 0.5 * (1.0 - 0.0625) / (1.0 - 0.015625)).abs() < 1e-15);
}

#[test]
fn bridge_fill_at_epsilon_zero_interpolates() {
    let a = Hamiltonian::sample(5, 3, 1).unwrap();
    let b = Hamiltonian::sample(5, 3, 2).unwrap();
    let g = Hamiltonian::sample(5, 3, 3).unwrap();
    let out = bridge_fill(&a, &b, 1, 3, 0.0, &g).unwrap();
    let want = a.combine(2.0 / 3.0, &b, 1.0 / 3.0).unwrap();
    assert_eq!(out, want);
    let wrong = Hamiltonian::sample(6, 3, 3).unwrap();
    assert!(matches!(bridge_fill(&a, &b, 1, 3, 0.1, &wrong), Err(Error::ShapeMismatch { .. }) | Err(Error::DimensionMismatch { .. })));
}

#[test]
fn forward_chain_examples() {
    let c = ou_chain(6, 3, 4, 0.0, 1).unwrap();
    assert!(c.hams.windows(2).all(|w| w[0] == w[1]));
    assert!(ou_chain(6, 3, 0, 0.1, 1).is_err());
    assert!(ou_chain(6, 3, 2, 1.5, 1).is_err());

    let eps = 0.1;
    let pairs: Vec<_> = (0..200u64)
        .map(|s| {
            let c = ou_chain(10, 3, 1, eps, s).unwrap();
            (c.hams[0].clone(), c.hams[1].clone())
        })
        .collect();
    let (r, se) = pooled_corr(&pairs);
    assert!((r - (1.0 - eps)).abs() <= 4.0 * se, "{r}");

    let pairs: Vec<_> = (0..200u64)
        .map(|s| {
            let c = ou_chain(10, 3, 5, 0.2, 1000 + s).unwrap();
            (c.hams[0].clone(), c.hams[5].clone())
        })
        .collect();
    let (r, se) = pooled_corr(&pairs);
    assert!((r - 0.32768).abs() <= 4.0 * se, "{r}");
}

#[test]
fn endpoint_embedding() {
    let h0 = Hamiltonian::sample(10, 3, 1).unwrap();
    let h = Hamiltonian::sample(10, 3, 2).unwrap();
    assert_eq!(endpoint_embed(&h0, &h, 5, 0.0).unwrap(), h0);
    let far = endpoint_embed(&h0, &h, 700, 0.01).unwrap();
    let (r, _) = pooled_corr(&[(far, h.clone())]);
    assert!(r > 0.999);

    let mut sq = 0.0;
    let mut count = 0;
    for s in 0..100u64 {
        let a = Hamiltonian::sample(10, 3, 2 * s + 10).unwrap();
        let b = Hamiltonian::sample(10, 3, 2 * s + 11).unwrap();
        let e = endpoint_embed(&a, &b, 4, 0.2).unwrap();
        sq += e.coefficients().data().iter().map(|x| x * x).sum::<f64>();
        count += e.coefficients().len();
    }
    let var = sq / count as f64;
    assert!((var - 1.0).abs() <= 4.0 * (2.0 / count as f64).sqrt(), "{var}");
    assert!(endpoint_embed(&h0, &Hamiltonian::sample(9, 3, 2).unwrap(), 2, 0.1).is_err());
}

fn replicas(n_rep: usize, k_steps: usize, eps: f64, factor: f64, seed: u64) -> Vec<HamiltonianChain> {
    (0..n_rep as u64)
        .map(|r| sample_bridge_chain_scaled(8, 3, k_steps, eps, seeds::split(seed, r), factor).unwrap())
        .collect()
}

#[test]
fn bridge_chain_law() {
    let reps = replicas(300, 6, 0.3, 1.0, 1);
    let check = verify_chain_covariance(&reps, Execution::Parallel).unwrap();
    assert!(check.pass, "max z {}", check.max_z);
    let e = &check.empirical;
    for i in 0..7 {
        assert!((e[i][i] - 1.0).abs() < 0.05);
    }
    // Markov factorization through the middle element.
    assert!((e[1][5] - e[1][3] * e[3][5] / e[3][3]).abs() < 0.05);
}

#[test]
fn forward_chain_passes_and_matches_bridge() {
    let fwd: Vec<_> = (0..300u64).map(|s| ou_chain(8, 3, 6, 0.3, s).unwrap()).collect();
    let a = verify_chain_covariance(&fwd, Execution::Sequential).unwrap();
    assert!(a.pass, "{}", a.max_z);
    let b = verify_chain_covariance(&replicas(300, 6, 0.3, 1.0, 2), Execution::Sequential).unwrap();
    for i in 0..7 {
        for j in 0..7 {
            assert!((a.empirical[i][j] - b.empirical[i][j]).abs() < 0.05);
        }
    }
}

#[test]
fn misscaled_noise_is_rejected() {
    let check = verify_chain_covariance(&replicas(300, 6, 0.3, 1.5, 3), Execution::Sequential).unwrap();
    assert!(!check.pass);
}

#[test]
fn covariance_check_needs_replicas() {
    let reps = replicas(10, 3, 0.3, 1.0, 4);
    assert!(matches!(
        verify_chain_covariance(&reps, Execution::Sequential),
        Err(Error::InsufficientReplicas { needed: 30, got: 10 })
    ));
}

#[test]
fn single_step_chain_agrees_with_correlated_copy() {
    let eps = 0.25;
    let reps = replicas(100, 1, eps, 1.0, 5);
    let chain = verify_chain_covariance(&reps, Execution::Sequential).unwrap();
    let pairs: Vec<_> = (0..100u64)
        .map(|s| {
            let h = Hamiltonian::sample(8, 3, 5000 + s).unwrap();
            let c = correlated_copy(&h, CorrelationParam::new(1.0 - eps).unwrap(), 9000 + s).unwrap();
            (h, c)
        })
        .collect();
    let (r, se) = pooled_corr(&pairs);
    assert!((chain.empirical[0][1] - r).abs() <= 6.0 * se);
    assert!(chain.pass);
}

#[test]
fn manifest_rebuilds_bit_exactly() {
    for chain in [ou_chain(6, 3, 4, 0.2, 7).unwrap(), sample_bridge_chain(6, 3, 4, 0.2, 7).unwrap()] {
        let m = chain.manifest();
        let json = serde_json::to_string(&m).unwrap();
        let back: ChainManifest = serde_json::from_str(&json).unwrap();
        let again = HamiltonianChain::rebuild(&back).unwrap();
        assert_eq!(again.hams, chain.hams);
    }
}

#[test]
fn successive_differences_stay_bounded() {
    let (n, k_steps, eps) = (60, 20, 0.01);
    let mut s = BddSettings::new(bdd_constant(3));
    s.random_probes = 5;
    let chains = 100u64;
    let good = pspin_core::par::map_indexed(Execution::Parallel, chains as usize, |c| {
        let chain = sample_bridge_chain(n, 3, k_steps, eps, 700 + c as u64).unwrap();
        (0..k_steps).all(|i| {
            let d = pspin_core::following::events::diff_bdd_ratio(&chain.hams[i], &chain.hams[i + 1], eps, &[], &s, i as u64);
            d < 1.0
        })
    })
    .into_iter()
    .filter(|&ok| ok)
    .count();
    assert!(good >= 95, "{good}/{chains}");
}
