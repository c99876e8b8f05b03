//! Monte Carlo study of the success-and-stability event over independent chains.

use serde::{Deserialize, Serialize};

use crate::ensemble::ou_chain;
use crate::error::{Error, Result};
use crate::linalg::dist;
use crate::optimizers::Algorithm;
use crate::par::{map_indexed, Execution};
use crate::seeds;
use crate::sphere::SpherePoint;

use super::events::{ham_bdd_ratio, diff_bdd_ratio, point_events, BddSettings, EventParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainEvents {
    pub solve: Vec<bool>,
    pub stable: Vec<bool>,
    /// `None` when boundedness was not evaluated (no settings, or an earlier event failed).
    pub bounded: Option<bool>,
    pub all: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuccessStabilityReport {
    pub chains: usize,
    pub k_steps: usize,
    pub epsilon: f64,
    /// Fraction of `(chain, i)` with `S_solve(i)`.
    pub p_solve: f64,
    /// Fraction of `(chain, i)` with `S_stab(i)` failing.
    pub p_unstable: f64,
    pub p_all: f64,
    /// Monte Carlo standard error of `p_all`.
    pub sigma_mc: f64,
    /// `(p_solve² - p_unstable)_+^{2K}`.
    pub bound: f64,
    /// The same bound with `p_unstable` replaced by `S ε / δ²`, when a stability estimate is given.
    pub plugin_bound: Option<f64>,
    pub per_chain: Vec<ChainEvents>,
}

impl SuccessStabilityReport {
    /// `P[S_all] ≥ bound - 2σ_MC`.
    pub fn bound_holds(&self) -> bool {
        self.p_all >= self.bound - 2.0 * self.sigma_mc
    }
}

pub fn success_bound(p_solve: f64, p_unstable: f64, k_steps: usize) -> f64 {
    (p_solve * p_solve - p_unstable).max(0.0).powi(2 * k_steps as i32)
}

/// Run `alg` (same `ω` along a chain) on `chains` stationary chains and
/// tabulate the events. The boundedness probes only run on chains where
/// every solve and stability event held, since `S_all` is false otherwise.
#[allow(clippy::too_many_arguments)]
pub fn success_stability_study(
    alg: &dyn Algorithm,
    n: usize,
    p: usize,
    params: &EventParams,
    k_steps: usize,
    chains: usize,
    bdd: Option<&BddSettings>,
    s_hat: Option<f64>,
    seed: u64,
    exec: Execution,
) -> Result<SuccessStabilityReport> {
    if chains < 2 {
        return Err(Error::InsufficientReplicas { needed: 2, got: chains });
    }
    if k_steps < 1 {
        return Err(Error::InvalidParameter("need K >= 1".into()));
    }
    let sq = (n as f64).sqrt();
    let per: Vec<Result<ChainEvents>> = map_indexed(exec, chains, |c| {
        let chain = ou_chain(n, p, k_steps, params.epsilon, seeds::derive(seed, "study-chain", c as u64))?;
        let omega = seeds::derive(seed, "study-omega", c as u64);
        let pts: Vec<Vec<f64>> = chain.hams.iter().map(|h| alg.run(h, omega)).collect();
        let solve: Vec<bool> = chain
            .hams
            .iter()
            .zip(&pts)
            .map(|(h, x)| SpherePoint::new(x.clone()).map(|s| point_events(h, &s, params).solve).unwrap_or(false))
            .collect();
        let stable: Vec<bool> = pts.windows(2).map(|w| dist(&w[0], &w[1]) / sq < params.delta).collect();
        let cheap = solve.iter().all(|&b| b) && stable.iter().all(|&b| b);
        let bounded = match bdd {
            Some(s) if cheap => {
                let ok_h = (0..=k_steps).all(|i| ham_bdd_ratio(&chain.hams[i], &[pts[i].clone()], s, 2 * i as u64) < 1.0);
                let ok_d = ok_h
                    && (0..k_steps).all(|i| {
                        let probe = [pts[i].clone(), pts[i + 1].clone()];
                        diff_bdd_ratio(&chain.hams[i], &chain.hams[i + 1], params.epsilon, &probe, s, 2 * i as u64 + 1) < 1.0
                    });
                Some(ok_d)
            }
            _ => None,
        };
        let all = cheap && bounded.unwrap_or(bdd.is_none());
        Ok(ChainEvents { solve, stable, bounded, all })
    });
    let per_chain = per.into_iter().collect::<Result<Vec<_>>>()?;
    let count = |f: &dyn Fn(&ChainEvents) -> usize| per_chain.iter().map(f).sum::<usize>() as f64;
    let p_solve = count(&|c| c.solve.iter().filter(|&&b| b).count()) / (chains * (k_steps + 1)) as f64;
    let p_unstable = count(&|c| c.stable.iter().filter(|&&b| !b).count()) / (chains * k_steps) as f64;
    let p_all = count(&|c| c.all as usize) / chains as f64;
    let sigma_mc = (p_all * (1.0 - p_all) / chains as f64).sqrt();
    let plugin_bound = s_hat.map(|s| success_bound(p_solve, (s * params.epsilon / (params.delta * params.delta)).min(1.0), k_steps));
    Ok(SuccessStabilityReport {
        chains,
        k_steps,
        epsilon: params.epsilon,
        p_solve,
        p_unstable,
        p_all,
        sigma_mc,
        bound: success_bound(p_solve, p_unstable, k_steps),
        plugin_bound,
        per_chain,
    })
}
