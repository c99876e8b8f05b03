//! Chains of Hamiltonians with correlation `(1-ε)^{|i-j|}`: the forward AR(1)
//! recursion and the bridge construction that pins the last element first.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::seeds;
use crate::tensor::Hamiltonian;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChainMode {
    Forward,
    Bridge,
}

#[derive(Clone, Debug)]
pub struct HamiltonianChain {
    pub hams: Vec<Hamiltonian>,
    pub epsilon: f64,
    /// Seeds of the Gaussian inputs, in construction order.
    pub seeds: Vec<u64>,
    pub mode: ChainMode,
}

/// Everything needed to rebuild a chain bit for bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainManifest {
    pub n: usize,
    pub p: usize,
    pub k_steps: usize,
    pub epsilon: f64,
    pub seeds: Vec<u64>,
    pub mode: ChainMode,
}

impl HamiltonianChain {
    pub fn k_steps(&self) -> usize {
        self.hams.len() - 1
    }

    pub fn manifest(&self) -> ChainManifest {
        ChainManifest {
            n: self.hams[0].n(),
            p: self.hams[0].p(),
            k_steps: self.k_steps(),
            epsilon: self.epsilon,
            seeds: self.seeds.clone(),
            mode: self.mode,
        }
    }

    pub fn rebuild(m: &ChainManifest) -> Result<Self> {
        match m.mode {
            ChainMode::Forward => forward_chain_from_seeds(m.n, m.p, m.k_steps, m.epsilon, &m.seeds),
            ChainMode::Bridge => {
                if m.seeds.len() != m.k_steps + 1 {
                    return Err(Error::InvalidParameter("bridge manifest needs K+1 seeds".into()));
                }
                let h0 = Hamiltonian::sample(m.n, m.p, m.seeds[0])?;
                let h = Hamiltonian::sample(m.n, m.p, m.seeds[1])?;
                bridge_chain(&h0, &h, m.k_steps, m.epsilon, &m.seeds[2..], 1.0)
            }
        }
    }
}

fn check_epsilon(eps: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::InvalidParameter(format!("epsilon={eps} outside [0, 1]")));
    }
    Ok(())
}

/// `√(1-ρ^{2j})` computed without cancellation.
fn noise_scale(rho: f64, j: f64) -> f64 {
    one_minus_rho_pow(rho, 2.0 * j).max(0.0).sqrt()
}

fn one_minus_rho_pow(rho: f64, e: f64) -> f64 {
    if rho <= 0.0 {
        return 1.0;
    }
    -(e * rho.ln()).exp_m1()
}

/// `H^{(0)}` fresh, `H^{(i+1)} = (1-ε)H^{(i)} + √(1-(1-ε)²) G^{(i)}`.
pub fn ou_chain(n: usize, p: usize, k_steps: usize, epsilon: f64, seed: u64) -> Result<HamiltonianChain> {
    let seeds: Vec<u64> = (0..=k_steps as u64).map(|i| seeds::derive(seed, "forward", i)).collect();
    forward_chain_from_seeds(n, p, k_steps, epsilon, &seeds)
}

fn forward_chain_from_seeds(n: usize, p: usize, k_steps: usize, epsilon: f64, seeds: &[u64]) -> Result<HamiltonianChain> {
    check_epsilon(epsilon)?;
    if k_steps < 1 {
        return Err(Error::InvalidParameter("need K >= 1".into()));
    }
    if seeds.len() != k_steps + 1 {
        return Err(Error::InvalidParameter("forward chain needs K+1 seeds".into()));
    }
    let rho = 1.0 - epsilon;
    let b = noise_scale(rho, 1.0);
    let mut hams = vec![Hamiltonian::sample(n, p, seeds[0])?];
    for &s in &seeds[1..] {
        let prev = hams.last().unwrap();
        let next = if b == 0.0 { prev.clone() } else { prev.combine(rho, &Hamiltonian::sample(n, p, s)?, b)? };
        hams.push(next);
    }
    Ok(HamiltonianChain { hams, epsilon, seeds: seeds.to_vec(), mode: ChainMode::Forward })
}

/// `(1-ε)^K H0 + √(1-(1-ε)^{2K}) H`.
pub fn endpoint_embed(h0: &Hamiltonian, h: &Hamiltonian, k_steps: usize, epsilon: f64) -> Result<Hamiltonian> {
    check_epsilon(epsilon)?;
    let rho = 1.0 - epsilon;
    let a = rho.powi(k_steps as i32);
    let b = noise_scale(rho, k_steps as f64);
    if b == 0.0 {
        h0.check_shape(h)?;
        return Ok(h0.clone());
    }
    h0.combine(a, h, b)
}

/// Conditional law of `H^{(k)}` given `H^{(k-1)}` and `H^{(K)}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BridgeCoefficients {
    pub k: usize,
    pub k_steps: usize,
    pub mean_prev: f64,
    pub mean_end: f64,
    pub noise_scale: f64,
}

/// With `m = K-k`, `ρ = 1-ε`:
/// `mean_prev = ρ(1-ρ^{2m})/(1-ρ^{2m+2})`, `mean_end = ρ^m(1-ρ²)/(1-ρ^{2m+2})`,
/// `a² = (1-ρ²)(1-ρ^{2m})/(1-ρ^{2m+2})`; at `ρ = 1` the limits `m/(m+1)`, `1/(m+1)`, `0`.
pub fn bridge_coeffs(k: usize, k_steps: usize, epsilon: f64) -> Result<BridgeCoefficients> {
    check_epsilon(epsilon)?;
    if k < 1 || k + 1 > k_steps {
        return Err(Error::InvalidParameter(format!("bridge index k={k} outside 1..=K-1 (K={k_steps})")));
    }
    let m = (k_steps - k) as f64;
    let rho = 1.0 - epsilon;
    let (mean_prev, mean_end, a2) = if epsilon == 0.0 {
        (m / (m + 1.0), 1.0 / (m + 1.0), 0.0)
    } else {
        let denom = one_minus_rho_pow(rho, 2.0 * m + 2.0);
        let num_m = one_minus_rho_pow(rho, 2.0 * m);
        let one_minus_rho2 = one_minus_rho_pow(rho, 2.0);
        (rho * num_m / denom, rho.powf(m) * one_minus_rho2 / denom, one_minus_rho2 * num_m / denom)
    };
    Ok(BridgeCoefficients { k, k_steps, mean_prev, mean_end, noise_scale: a2.max(0.0).sqrt() })
}

pub fn bridge_fill(
    h_prev: &Hamiltonian,
    h_end: &Hamiltonian,
    k: usize,
    k_steps: usize,
    epsilon: f64,
    g_fresh: &Hamiltonian,
) -> Result<Hamiltonian> {
    let c = bridge_coeffs(k, k_steps, epsilon)?;
    bridge_fill_with(h_prev, h_end, &c, g_fresh, 1.0)
}

fn bridge_fill_with(
    h_prev: &Hamiltonian,
    h_end: &Hamiltonian,
    c: &BridgeCoefficients,
    g_fresh: &Hamiltonian,
    noise_factor: f64,
) -> Result<Hamiltonian> {
    h_prev.check_shape(g_fresh)?;
    let mean = h_prev.combine(c.mean_prev, h_end, c.mean_end)?;
    if c.noise_scale == 0.0 {
        return Ok(mean);
    }
    mean.combine(1.0, g_fresh, c.noise_scale * noise_factor)
}

/// `H^{(0)} = h0`, `H^{(K)} = endpoint_embed(h0, h)`, then bridge fills with
/// fresh tensors from `fill_seeds` (K-1 of them). `noise_factor` scales the
/// bridge noise and is 1 except in negative controls.
pub fn bridge_chain(
    h0: &Hamiltonian,
    h: &Hamiltonian,
    k_steps: usize,
    epsilon: f64,
    fill_seeds: &[u64],
    noise_factor: f64,
) -> Result<HamiltonianChain> {
    if k_steps < 1 {
        return Err(Error::InvalidParameter("need K >= 1".into()));
    }
    if fill_seeds.len() + 1 != k_steps {
        return Err(Error::InvalidParameter(format!("need K-1 = {} fill seeds, got {}", k_steps - 1, fill_seeds.len())));
    }
    let end = endpoint_embed(h0, h, k_steps, epsilon)?;
    let mut hams = vec![h0.clone()];
    for k in 1..k_steps {
        let c = bridge_coeffs(k, k_steps, epsilon)?;
        let g = Hamiltonian::sample(h0.n(), h0.p(), fill_seeds[k - 1])?;
        let next = bridge_fill_with(hams.last().unwrap(), &end, &c, &g, noise_factor)?;
        hams.push(next);
    }
    hams.push(end);
    let mut seeds = vec![h0.disorder().seed().unwrap_or(0), h.disorder().seed().unwrap_or(0)];
    seeds.extend_from_slice(fill_seeds);
    Ok(HamiltonianChain { hams, epsilon, seeds, mode: ChainMode::Bridge })
}

/// Fresh bridge chain from a single seed.
pub fn sample_bridge_chain(n: usize, p: usize, k_steps: usize, epsilon: f64, seed: u64) -> Result<HamiltonianChain> {
    sample_bridge_chain_scaled(n, p, k_steps, epsilon, seed, 1.0)
}

pub fn sample_bridge_chain_scaled(
    n: usize,
    p: usize,
    k_steps: usize,
    epsilon: f64,
    seed: u64,
    noise_factor: f64,
) -> Result<HamiltonianChain> {
    let h0 = Hamiltonian::sample(n, p, seeds::derive(seed, "bridge-start", 0))?;
    let h = Hamiltonian::sample(n, p, seeds::derive(seed, "bridge-end", 0))?;
    let fills: Vec<u64> = (1..k_steps as u64).map(|k| seeds::derive(seed, "bridge-fill", k)).collect();
    bridge_chain(&h0, &h, k_steps, epsilon, &fills, noise_factor)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovarianceCheck {
    /// Empirical second moments `E[g_i g_j]`, pooled over replicas and coefficients.
    pub empirical: Vec<Vec<f64>>,
    pub max_abs_deviation: f64,
    /// Largest `|empirical - target| / se` with `se = √((1+r²)/n)`.
    pub max_z: f64,
    pub pass: bool,
}

pub const MIN_REPLICAS: usize = 30;

/// Compare pooled coefficient moments of replica chains with `ρ^{|i-j|}` at 4σ.
pub fn verify_chain_covariance(replicas: &[HamiltonianChain], exec: Execution) -> Result<CovarianceCheck> {
    if replicas.len() < MIN_REPLICAS {
        return Err(Error::InsufficientReplicas { needed: MIN_REPLICAS, got: replicas.len() });
    }
    let len = replicas[0].hams.len();
    let rho = 1.0 - replicas[0].epsilon;
    for r in replicas {
        if r.hams.len() != len || r.epsilon != replicas[0].epsilon {
            return Err(Error::InvalidParameter("replicas must share K and epsilon".into()));
        }
    }
    let pairs: Vec<(usize, usize)> = (0..len).flat_map(|i| (i..len).map(move |j| (i, j))).collect();
    let sums: Vec<(f64, usize)> = par::map_indexed(exec, pairs.len(), |pi| {
        let (i, j) = pairs[pi];
        let mut s = 0.0;
        let mut count = 0;
        for r in replicas {
            s += crate::linalg::dot(r.hams[i].coefficients().data(), r.hams[j].coefficients().data());
            count += r.hams[i].coefficients().len();
        }
        (s, count)
    });
    let mut empirical = vec![vec![0.0; len]; len];
    let mut max_dev = 0.0f64;
    let mut max_z = 0.0f64;
    for (pi, &(i, j)) in pairs.iter().enumerate() {
        let (s, count) = sums[pi];
        let e = s / count as f64;
        empirical[i][j] = e;
        empirical[j][i] = e;
        let target = rho.powi((j - i) as i32);
        let se = ((1.0 + target * target) / count as f64).sqrt();
        max_dev = max_dev.max((e - target).abs());
        max_z = max_z.max((e - target).abs() / se);
    }
    Ok(CovarianceCheck { empirical, max_abs_deviation: max_dev, max_z, pass: max_z <= 4.0 })
}
