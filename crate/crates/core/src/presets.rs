//! Named parameter sets and the calibrated boundedness constants.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::optimizers::{gd_ascent, AscentConfig};
use crate::par::{map_indexed, Execution};
use crate::seeds;
use crate::sphere::SpherePoint;
use crate::tensor::{in_k_n, BoundednessProbe, Hamiltonian};

/// Boundedness constant `C` for `p = 3` (calibrated, see [`calibrate_constant`]).
pub const BDD_CONSTANT_P3: f64 = 12.85;
/// Boundedness constant `C` for `p = 4`.
pub const BDD_CONSTANT_P4: f64 = 53.5;

/// Boundedness constant for planted Hamiltonians with spike strength up to 2.
pub const BDD_CONSTANT_PLANTED: f64 = 25.0;

pub fn bdd_constant(p: usize) -> f64 {
    match p {
        2 | 3 => BDD_CONSTANT_P3,
        _ => BDD_CONSTANT_P4 * (p as f64 / 4.0).powi(2).max(1.0),
    }
}

/// A full parameter set for one experiment family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub name: String,
    pub n: usize,
    pub p: usize,
    pub k_steps: usize,
    pub epsilon: f64,
    pub gamma: f64,
    pub delta: f64,
    pub d: usize,
    pub iota: f64,
    pub eta: f64,
    pub max_iters: usize,
    pub tol: f64,
    /// Spike strength for planted runs.
    pub mu: f64,
    pub replicas: usize,
    pub seed: u64,
}

impl Preset {
    /// Respects `γ ≫ ι ≫ δ ≫ ε` with a factor of at least 2 at each link.
    pub fn paper_regime() -> Self {
        Self {
            name: "paper-regime".into(),
            n: 80,
            p: 3,
            k_steps: 500,
            epsilon: 0.004,
            gamma: 0.5,
            delta: 0.02,
            d: 0,
            iota: 0.1,
            eta: 0.01,
            max_iters: 2000,
            tol: 1e-6,
            mu: 0.0,
            replicas: 20,
            seed: 1,
        }
    }

    pub fn planted() -> Self {
        Self {
            name: "planted".into(),
            n: 80,
            p: 3,
            k_steps: 40,
            epsilon: 0.005,
            gamma: 0.5,
            delta: 0.02,
            d: 0,
            iota: 0.01,
            eta: 0.01,
            max_iters: 2000,
            tol: 1e-6,
            mu: 2.0,
            replicas: 20,
            seed: 1,
        }
    }

    pub fn fast_ci() -> Self {
        Self {
            name: "fast-ci".into(),
            n: 30,
            p: 3,
            k_steps: 5,
            epsilon: 0.005,
            gamma: 0.5,
            delta: 0.02,
            d: 0,
            iota: 0.01,
            eta: 0.02,
            max_iters: 300,
            tol: 1e-6,
            mu: 2.0,
            replicas: 4,
            seed: 1,
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "paper-regime" => Some(Self::paper_regime()),
            "planted" => Some(Self::planted()),
            "fast-ci" => Some(Self::fast_ci()),
            _ => None,
        }
    }

    /// Violations of the ordering `γ > 2ι > 4δ > 8ε` (empty when it holds).
    pub fn ordering_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let chain = [("gamma", self.gamma), ("iota", self.iota), ("delta", self.delta), ("epsilon", self.epsilon)];
        for w in chain.windows(2) {
            if !(w[0].1 >= 2.0 * w[1].1) {
                out.push(format!("{} = {} is not at least twice {} = {}", w[0].0, w[0].1, w[1].0, w[1].1));
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub n: usize,
    pub p: usize,
    pub samples: usize,
    /// Largest `|∇^k H|_op / N^{1-k/2}` seen, per order.
    pub max_ratios: Vec<f64>,
    /// `safety ×` the largest ratio.
    pub constant: f64,
}

/// Estimate `C` as `safety ×` the largest derivative ratio over `samples`
/// Hamiltonians, probing random ball points and gradient-ascent endpoints
/// (where the low orders peak).
pub fn calibrate_constant(n: usize, p: usize, samples: usize, safety: f64, seed: u64, exec: Execution) -> Result<Calibration> {
    let probe = BoundednessProbe { constant: f64::INFINITY, opnorm_iters: 30, opnorm_restarts: 4, seed };
    let per = map_indexed(exec, samples, |i| -> Result<Vec<f64>> {
        let h = Hamiltonian::sample(n, p, seeds::derive(seed, "calibrate", i as u64))?;
        let mut rng = seeds::rng(seeds::derive(seed, "calibrate-probe", i as u64));
        let mut probes: Vec<Vec<f64>> = (0..10).map(|_| seeds::ball_vec(&mut rng, n, (n as f64).sqrt())).collect();
        let start = SpherePoint::random(n, &mut rng);
        let cfg = AscentConfig::new(0.02, 3000, 1e-3, seeds::derive(seed, "calibrate-gd", i as u64))?;
        probes.push(gd_ascent(&h, &start, &cfg)?.final_point().coords().to_vec());
        Ok(in_k_n(&h, &probes, &probe)?.max_ratios)
    });
    let mut max_ratios = vec![0.0f64; p + 1];
    for r in per {
        for (k, v) in r?.into_iter().enumerate() {
            max_ratios[k] = max_ratios[k].max(v);
        }
    }
    let worst = max_ratios.iter().fold(0.0f64, |a, &b| a.max(b));
    Ok(Calibration { n, p, samples, max_ratios, constant: safety * worst })
}
