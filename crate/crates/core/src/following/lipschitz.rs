//! Empirical local Lipschitz ratios of maps of a Hamiltonian (or of a vector).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::{dist, norm};
use crate::seeds;
use crate::sphere::{LocalGeometry, SpherePoint, TangentVector};
use crate::tensor::{DenseTensor, Hamiltonian};
use crate::wells::lenience;

use super::events::{clip_tau, EventParams};
use super::step::{follow_step, StepParams};

/// How the coefficient perturbations `E` (with `|E| = step·√N`) are drawn.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum PerturbationFamily {
    /// `E` a uniformly random direction of coefficient space.
    Isotropic,
    /// `E = ±step√N x^{⊗p}` with `x = cos φ·σ̂ + sin φ·v̂`, `φ` uniform in
    /// `[0, π/2]` and `v̂` a random unit vector orthogonal to the anchor.
    /// These are the directions that move the landscape near the anchor at
    /// order one, independent of `N`.
    RankOneAligned { anchor: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LipschitzProbe {
    /// Largest ratio over the probes that stayed in the domain.
    pub ratio: f64,
    pub ratios: Vec<f64>,
    /// Probes that left the map's domain, with the reason.
    pub failures: Vec<(usize, String)>,
}

impl LipschitzProbe {
    fn from_results(results: Vec<std::result::Result<f64, String>>) -> Self {
        let mut ratios = Vec::new();
        let mut failures = Vec::new();
        for (i, r) in results.into_iter().enumerate() {
            match r {
                Ok(v) => ratios.push(v),
                Err(e) => failures.push((i, e)),
            }
        }
        let ratio = ratios.iter().fold(0.0f64, |a, &b| a.max(b));
        Self { ratio, ratios, failures }
    }
}

/// Perturbation tensor of Frobenius norm `size`.
pub fn draw_perturbation<R: Rng>(rng: &mut R, n: usize, p: usize, family: &PerturbationFamily, size: f64) -> DenseTensor {
    match family {
        PerturbationFamily::Isotropic => {
            let data = seeds::sphere_vec(rng, n.pow(p as u32), size);
            DenseTensor::new(p, n, data).expect("shape is consistent")
        }
        PerturbationFamily::RankOneAligned { anchor } => {
            let na = norm(anchor);
            let a: Vec<f64> = anchor.iter().map(|x| x / na).collect();
            let mut v = seeds::gaussian_vec(rng, n);
            let c = crate::linalg::dot(&v, &a);
            crate::linalg::axpy(-c, &a, &mut v);
            let nv = norm(&v);
            v.iter_mut().for_each(|x| *x /= nv);
            let phi: f64 = rng.random::<f64>() * std::f64::consts::FRAC_PI_2;
            let x: Vec<f64> = a.iter().zip(&v).map(|(ai, vi)| phi.cos() * ai + phi.sin() * vi).collect();
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let factors: Vec<&[f64]> = vec![&x; p];
            let mut t = DenseTensor::outer(&factors);
            t.scale(sign * size);
            t
        }
    }
}

/// Max over `n_probes` perturbations `E` of size `step·√N` of
/// `|f(H + E) - f(H)| / |E|`, with `|E|` the coefficient norm.
pub fn empirical_lipschitz_probe<F>(
    base: &Hamiltonian,
    f: F,
    family: &PerturbationFamily,
    n_probes: usize,
    step: f64,
    seed: u64,
) -> std::result::Result<LipschitzProbe, String>
where
    F: Fn(&Hamiltonian) -> std::result::Result<Vec<f64>, String>,
{
    let n = base.n();
    let p = base.p();
    let y0 = f(base)?;
    let size = step * (n as f64).sqrt();
    let mut rng = seeds::rng(seed);
    let results = (0..n_probes)
        .map(|_| {
            let e = draw_perturbation(&mut rng, n, p, family, size);
            let mut h = base.clone();
            h.coefficients_mut().add_scaled(1.0, &e);
            let y = f(&h)?;
            if y.len() != y0.len() {
                return Err("output length changed".to_string());
            }
            Ok(dist(&y, &y0) / e.frobenius_norm())
        })
        .collect();
    Ok(LipschitzProbe::from_results(results))
}

/// The same ratio for a map of vectors, with isotropic perturbations of norm `step`.
pub fn empirical_lipschitz_probe_vec<F>(base: &[f64], f: F, n_probes: usize, step: f64, seed: u64) -> LipschitzProbe
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let y0 = f(base);
    let mut rng = seeds::rng(seed);
    let results = (0..n_probes)
        .map(|_| {
            let e = seeds::sphere_vec(&mut rng, base.len(), step);
            let x: Vec<f64> = base.iter().zip(&e).map(|(a, b)| a + b).collect();
            Ok(dist(&f(&x), &y0) / step)
        })
        .collect();
    LipschitzProbe::from_results(results)
}

/// `H ↦ follow_step(H, H + E, σ, u)` at a fixed base point.
pub fn follow_step_probe(
    h: &Hamiltonian,
    sigma: &SpherePoint,
    params: &StepParams,
    family: &PerturbationFamily,
    n_probes: usize,
    step: f64,
    seed: u64,
) -> std::result::Result<LipschitzProbe, String> {
    let u = TangentVector::zero(h.n());
    empirical_lipschitz_probe(
        h,
        |ht| follow_step(h, ht, sigma, &u, params).map(|o| o.point.into_coords()).map_err(|e| e.to_string()),
        family,
        n_probes,
        step,
        seed,
    )
}

/// `H ↦ √N·τ*_solve(H, σ)` at a fixed point; the `√N` makes the ratio
/// `|Δτ| / step`, which stays bounded in `N` for an `L/√N`-Lipschitz `τ`.
pub fn tau_probe(
    h: &Hamiltonian,
    sigma: &SpherePoint,
    params: &EventParams,
    family: &PerturbationFamily,
    n_probes: usize,
    step: f64,
    seed: u64,
) -> std::result::Result<LipschitzProbe, String> {
    let sq = (h.n() as f64).sqrt();
    empirical_lipschitz_probe(
        h,
        |ht| {
            let geom = LocalGeometry::at(ht, sigma);
            let eig = crate::linalg::sym_eigenvalues_desc(&geom.riemannian_hessian);
            let l = lenience(geom.grad_norm(), geom.radial, &eig, ht.n(), ht.p(), params.gamma, params.delta, params.d, params.iota);
            Ok(vec![clip_tau(l.worst()) * sq])
        },
        family,
        n_probes,
        step,
        seed,
    )
}
