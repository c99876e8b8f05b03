//! Ascent algorithms on the sphere, the rounding map into the ball, and
//! Monte Carlo meters for stability and overlap of arbitrary algorithms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm};
use crate::par::{self, Execution};
use crate::seeds;
use crate::sphere::{project_out, SpherePoint, TangentFrame};
use crate::tensor::{correlated_copy, CorrelationParam, Hamiltonian, Landscape};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AscentConfig {
    pub eta: f64,
    pub max_iters: usize,
    /// Stop once `|∇_sp H| ≤ δ√N`.
    pub delta: f64,
    pub seed: u64,
    /// Keep every iterate (otherwise only the first and last).
    pub keep_points: bool,
}

impl AscentConfig {
    pub fn new(eta: f64, max_iters: usize, delta: f64, seed: u64) -> Result<Self> {
        if !(eta > 0.0 && delta > 0.0 && max_iters >= 1) {
            return Err(Error::InvalidParameter(format!(
                "need eta > 0, delta > 0, max_iters >= 1; got {eta}, {delta}, {max_iters}"
            )));
        }
        Ok(Self { eta, max_iters, delta, seed, keep_points: false })
    }
}

/// `⌈10 C δ^{-2} η^{-1}⌉`, the iteration count that guarantees a well is visited.
pub fn default_iterations(c: f64, delta: f64, eta: f64) -> usize {
    (10.0 * c / (delta * delta * eta)).ceil() as usize
}

/// `1/(4C)` for the derivative constant `C`.
pub fn safe_step(c: f64) -> f64 {
    1.0 / (4.0 * c)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    GradientThreshold,
    MaxIters,
    ReachedSphere,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub points: Vec<SpherePoint>,
    /// `H/N` at each recorded iterate.
    pub energies: Vec<f64>,
    /// `|∇_sp H|` at each iterate.
    pub grad_norms: Vec<f64>,
    pub radials: Vec<f64>,
    pub stop_reason: StopReason,
    /// Steps whose energy gain fell short of `η|∇_sp H|²/(2N)`.
    pub gain_violations: usize,
}

impl Trajectory {
    pub fn final_point(&self) -> &SpherePoint {
        self.points.last().expect("trajectory has at least one point")
    }

    pub fn final_energy(&self) -> f64 {
        *self.energies.last().expect("trajectory has at least one energy")
    }

    /// Rows `(iter, energy_per_N, grad_norm_per_sqrtN, radial_derivative)`.
    pub fn to_csv(&self, n: usize) -> String {
        let sq = (n as f64).sqrt();
        let mut s = String::from("iter,energy_per_N,grad_norm_per_sqrtN,radial_derivative\n");
        for i in 0..self.energies.len() {
            s.push_str(&format!("{},{:.12e},{:.12e},{:.12e}\n", i, self.energies[i], self.grad_norms[i] / sq, self.radials[i]));
        }
        s
    }
}

/// Spherical gradient ascent `σ ← √N (σ + η∇_sp H)/|σ + η∇_sp H|`.
pub fn gd_ascent(h: &Hamiltonian, sigma0: &SpherePoint, cfg: &AscentConfig) -> Result<Trajectory> {
    let n = h.n();
    if sigma0.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, got: sigma0.dim() });
    }
    SpherePoint::new(sigma0.coords().to_vec())?;
    let nf = n as f64;
    let mut sigma = sigma0.coords().to_vec();
    let mut traj = Trajectory {
        points: vec![sigma0.clone()],
        energies: Vec::new(),
        grad_norms: Vec::new(),
        radials: Vec::new(),
        stop_reason: StopReason::MaxIters,
        gain_violations: 0,
    };
    let mut prev: Option<(f64, f64)> = None;
    for i in 0..=cfg.max_iters {
        let e = h.expand(&sigma);
        let value = e.value();
        let grad = e.gradient();
        let radial = dot(&sigma, &grad) / nf;
        let sp = project_out(&sigma, &grad);
        let gn = norm(&sp);
        if let Some((pv, pg)) = prev {
            if value / nf < pv + cfg.eta * pg * pg / (2.0 * nf) - 1e-12 * pv.abs().max(1.0) {
                traj.gain_violations += 1;
            }
        }
        traj.energies.push(value / nf);
        traj.grad_norms.push(gn);
        traj.radials.push(radial);
        if i > 0 {
            let pt = SpherePoint::normalize(sigma.clone())?;
            if cfg.keep_points || traj.points.len() < 2 {
                traj.points.push(pt);
            } else {
                *traj.points.last_mut().unwrap() = pt;
            }
        }
        if gn <= cfg.delta * nf.sqrt() {
            traj.stop_reason = StopReason::GradientThreshold;
            return Ok(traj);
        }
        if i == cfg.max_iters {
            break;
        }
        prev = Some((value / nf, gn));
        let mut next: Vec<f64> = sigma.iter().zip(&sp).map(|(s, g)| s + cfg.eta * g).collect();
        let c = nf.sqrt() / norm(&next);
        next.iter_mut().for_each(|x| *x *= c);
        sigma = next;
    }
    traj.stop_reason = StopReason::MaxIters;
    Ok(traj)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HessianAscentConfig {
    /// Starting radius as a fraction of `√N`.
    pub r0: f64,
    /// Step length as a fraction of `√N`.
    pub step: f64,
    pub power_tol: f64,
    pub power_iters: usize,
    pub seed: u64,
    /// Overrides the random start (rescaled to radius `r0√N`).
    pub start: Option<Vec<f64>>,
}

impl Default for HessianAscentConfig {
    fn default() -> Self {
        Self { r0: 0.1, step: 0.01, power_tol: 1e-8, power_iters: 500, seed: 0, start: None }
    }
}

/// Top eigenpair of a symmetric matrix by shifted power iteration.
fn top_eigenvector(m: &nalgebra::DMatrix<f64>, warm: &[f64], tol: f64, iters: usize) -> (f64, Vec<f64>) {
    let n = m.nrows();
    // Gershgorin bound makes the shifted matrix positive semidefinite
    let shift = (0..n).map(|i| (0..n).map(|j| m[(i, j)].abs()).sum::<f64>()).fold(0.0f64, f64::max);
    let mut x = nalgebra::DVector::from_column_slice(warm);
    if x.norm() == 0.0 {
        x = nalgebra::DVector::from_element(n, 1.0);
    }
    x /= x.norm();
    let mut lambda = x.dot(&(m * &x));
    for _ in 0..iters {
        let mut y = m * &x + &x * shift;
        let ny = y.norm();
        if ny == 0.0 {
            break;
        }
        y /= ny;
        let l2 = y.dot(&(m * &y));
        let done = (l2 - lambda).abs() <= tol * lambda.abs().max(1.0);
        x = y;
        lambda = l2;
        if done {
            break;
        }
    }
    (lambda, x.iter().copied().collect())
}

/// Reference optimizer: grow a point from radius `r0√N` to `√N` by steps of
/// length `s√N` along the top eigenvector of the Riemannian Hessian at the
/// renormalized point, with the sign that increases the energy.
pub fn hessian_ascent(h: &Hamiltonian, cfg: &HessianAscentConfig) -> Result<Trajectory> {
    let n = h.n();
    let nf = n as f64;
    if !(cfg.r0 > 0.0 && cfg.r0 < 1.0 && cfg.step > 0.0) {
        return Err(Error::InvalidParameter("need 0 < r0 < 1 and step > 0".into()));
    }
    let mut rng = seeds::rng(cfg.seed);
    let mut x = match &cfg.start {
        Some(s) if s.len() == n && norm(s) > 0.0 => crate::linalg::scaled(s, cfg.r0 * nf.sqrt() / norm(s)),
        Some(s) => return Err(Error::DimensionMismatch { expected: n, got: s.len() }),
        None => seeds::sphere_vec(&mut rng, n, cfg.r0 * nf.sqrt()),
    };
    let mut energies = Vec::new();
    let mut grad_norms = Vec::new();
    let mut radials = Vec::new();
    let mut warm: Vec<f64> = Vec::new();
    let s = cfg.step * nf.sqrt();
    loop {
        let sigma = SpherePoint::normalize(x.clone())?;
        let e = h.expand(sigma.coords());
        let g = e.gradient();
        let radial = dot(sigma.coords(), &g) / nf;
        energies.push(h.expand(&x).value() / nf);
        grad_norms.push(norm(&project_out(&x, &h.gradient(&x))));
        radials.push(radial);
        let remaining = nf - dot(&x, &x);
        if remaining <= 1e-12 * nf {
            break;
        }
        let frame = TangentFrame::new(&sigma);
        let rh = crate::sphere::riemannian_hessian_from(&g, &e.hessian(), &sigma, &frame);
        if warm.len() != n - 1 {
            warm = seeds::gaussian_vec(&mut rng, n - 1);
        }
        let (_, v) = top_eigenvector(&rh, &warm, cfg.power_tol, cfg.power_iters);
        warm = v.clone();
        let mut dir = frame.to_ambient(&v);
        if dot(&dir, &h.gradient(&x)) < 0.0 {
            dir.iter_mut().for_each(|d| *d = -*d);
        }
        let len = s.min(remaining.sqrt());
        crate::linalg::axpy(len, &dir, &mut x);
        if len < s {
            let c = nf.sqrt() / norm(&x);
            x.iter_mut().for_each(|v| *v *= c);
        }
    }
    let last = SpherePoint::normalize(x)?;
    Ok(Trajectory {
        points: vec![last],
        energies,
        grad_norms,
        radials,
        stop_reason: StopReason::ReachedSphere,
        gain_violations: 0,
    })
}

/// Nearest point of the ball `|x| ≤ √N`: `x·min(1, √N/|x|)`.
pub fn round_to_ball(x: &[f64]) -> Vec<f64> {
    let r = (x.len() as f64).sqrt();
    let nx = norm(x);
    if nx <= r {
        x.to_vec()
    } else {
        crate::linalg::scaled(x, r / nx)
    }
}

/// A seedable map from a Hamiltonian and auxiliary randomness to the ball.
pub trait Algorithm: Send + Sync {
    fn name(&self) -> String;
    fn params(&self) -> serde_json::Value;
    fn run(&self, h: &Hamiltonian, omega: u64) -> Vec<f64>;
}

/// Always returns the same point.
pub struct ConstantAlgorithm {
    pub point: Vec<f64>,
}

impl Algorithm for ConstantAlgorithm {
    fn name(&self) -> String {
        "constant".into()
    }
    fn params(&self) -> serde_json::Value {
        serde_json::json!({ "norm": norm(&self.point) })
    }
    fn run(&self, _h: &Hamiltonian, _omega: u64) -> Vec<f64> {
        self.point.clone()
    }
}

/// Rounds the coefficients `g[0,…,0,i]` into the ball.
pub struct RoundedLinear;

impl Algorithm for RoundedLinear {
    fn name(&self) -> String {
        "rounded-linear".into()
    }
    fn params(&self) -> serde_json::Value {
        serde_json::json!({})
    }
    fn run(&self, h: &Hamiltonian, _omega: u64) -> Vec<f64> {
        round_to_ball(&h.coefficients().data()[..h.n()])
    }
}

/// Gradient ascent from a uniform start drawn from the auxiliary seed.
pub struct GdAlgorithm {
    pub eta: f64,
    pub max_iters: usize,
    pub delta: f64,
}

impl Algorithm for GdAlgorithm {
    fn name(&self) -> String {
        "gd-ascent".into()
    }
    fn params(&self) -> serde_json::Value {
        serde_json::json!({ "eta": self.eta, "max_iters": self.max_iters, "delta": self.delta })
    }
    fn run(&self, h: &Hamiltonian, omega: u64) -> Vec<f64> {
        let mut rng = seeds::rng(omega);
        let start = SpherePoint::random(h.n(), &mut rng);
        let cfg = AscentConfig { eta: self.eta, max_iters: self.max_iters, delta: self.delta, seed: omega, keep_points: false };
        match gd_ascent(h, &start, &cfg) {
            Ok(t) => t.final_point().coords().to_vec(),
            Err(_) => vec![0.0; h.n()],
        }
    }
}

pub struct HessianAscentAlgorithm {
    pub cfg: HessianAscentConfig,
}

impl Algorithm for HessianAscentAlgorithm {
    fn name(&self) -> String {
        "hessian-ascent".into()
    }
    fn params(&self) -> serde_json::Value {
        serde_json::to_value(&self.cfg).unwrap_or_default()
    }
    fn run(&self, h: &Hamiltonian, omega: u64) -> Vec<f64> {
        let cfg = HessianAscentConfig { seed: omega, ..self.cfg.clone() };
        match hessian_ascent(h, &cfg) {
            Ok(t) => t.final_point().coords().to_vec(),
            Err(_) => vec![0.0; h.n()],
        }
    }
}

/// How the auxiliary randomness is shared between the two runs of a pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum OmegaCoupling {
    #[default]
    Shared,
    Independent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityEstimate {
    pub epsilon: f64,
    pub s_hat: f64,
    pub stderr: f64,
    pub samples: Vec<f64>,
}

fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Seeds of replica `r`: (Hamiltonian, fresh noise, ω, ω̃).
fn pair_seeds(seed: u64, r: usize, coupling: OmegaCoupling) -> (u64, u64, u64, u64) {
    let s = seeds::split(seed, r as u64);
    let omega = seeds::derive(s, "omega", 0);
    let omega2 = match coupling {
        OmegaCoupling::Shared => omega,
        OmegaCoupling::Independent => seeds::derive(s, "omega", 1),
    };
    (seeds::derive(s, "hamiltonian", 0), seeds::derive(s, "fresh", 0), omega, omega2)
}

/// Monte Carlo estimate of `E|A(H) - A(H̃)|²/(Nε)` over `(1-ε)`-correlated pairs.
#[allow(clippy::too_many_arguments)]
pub fn estimate_stability(
    alg: &dyn Algorithm,
    epsilon: f64,
    reps: usize,
    n: usize,
    p: usize,
    seed: u64,
    coupling: OmegaCoupling,
    exec: Execution,
) -> Result<StabilityEstimate> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::InvalidParameter(format!("epsilon={epsilon} outside (0, 1]")));
    }
    if reps < 2 {
        return Err(Error::InsufficientReplicas { needed: 2, got: reps });
    }
    let q = CorrelationParam::new(1.0 - epsilon)?;
    let samples: Vec<Result<f64>> = par::map_indexed(exec, reps, |r| {
        let (hs, fs, om, om2) = pair_seeds(seed, r, coupling);
        let h = Hamiltonian::sample(n, p, hs)?;
        let h2 = correlated_copy(&h, q, fs)?;
        let a = alg.run(&h, om);
        let b = alg.run(&h2, om2);
        let d = crate::linalg::dist(&a, &b);
        Ok(d * d / (n as f64 * epsilon))
    });
    let samples = samples.into_iter().collect::<Result<Vec<_>>>()?;
    let (s_hat, stderr) = mean_stderr(&samples);
    Ok(StabilityEstimate { epsilon, s_hat, stderr, samples })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlapRow {
    pub q: f64,
    pub mean: f64,
    pub variance: f64,
}

/// Statistics of `<A(H), A(H_q)>/N` over `q`-correlated pairs, ω shared.
pub fn measure_overlap(
    alg: &dyn Algorithm,
    qs: &[f64],
    reps: usize,
    n: usize,
    p: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<OverlapRow>> {
    let mut rows = Vec::new();
    for (qi, &q) in qs.iter().enumerate() {
        let qp = CorrelationParam::new(q)?;
        let vals: Vec<Result<f64>> = par::map_indexed(exec, reps, |r| {
            let (hs, fs, om, _) = pair_seeds(seeds::split(seed, qi as u64), r, OmegaCoupling::Shared);
            let h = Hamiltonian::sample(n, p, hs)?;
            let h2 = correlated_copy(&h, qp, fs)?;
            Ok(dot(&alg.run(&h, om), &alg.run(&h2, om)) / n as f64)
        });
        let vals = vals.into_iter().collect::<Result<Vec<_>>>()?;
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = if vals.len() > 1 {
            vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (vals.len() - 1) as f64
        } else {
            0.0
        };
        rows.push(OverlapRow { q, mean: m, variance: var });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_to_ball_cases() {
        let x = vec![0.5; 4];
        assert_eq!(round_to_ball(&x), x);
        let y = vec![2.0; 4];
        assert!((norm(&round_to_ball(&y)) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn default_iteration_formula() {
        assert_eq!(default_iterations(2.0, 0.1, 0.01), 200_000);
    }
}
