#![allow(dead_code)]

use pspin_core::following::{AuxRandomness, BddSettings, PolishedAscent, TrackingParams};
use pspin_core::seeds;
use pspin_core::wells::plant_well;
use pspin_core::{Hamiltonian, SpherePoint};

/// Boundedness constant used for planted Hamiltonians (the spike inflates the
/// low-order derivative norms well above those of the pure model).
pub const PLANTED_BDD_CONSTANT: f64 = pspin_core::presets::BDD_CONSTANT_PLANTED;

pub struct Planted {
    pub w: SpherePoint,
    pub h0: Hamiltonian,
    pub h: Hamiltonian,
    pub params: TrackingParams,
    pub omega: AuxRandomness,
}

pub fn planted_params(epsilon: f64, k_steps: usize, with_bdd: bool) -> TrackingParams {
    let p = TrackingParams::new(0.5, 0.02, 0, 0.01, epsilon, k_steps).unwrap();
    if with_bdd {
        p.with_bdd(BddSettings::new(PLANTED_BDD_CONSTANT))
    } else {
        p
    }
}

/// Spike `mu` along a random `w` on top of two independent pure Hamiltonians.
pub fn planted(n: usize, p: usize, mu: f64, params: TrackingParams, seed: u64) -> Planted {
    let mut rng = seeds::rng(seeds::derive(seed, "planted-w", 0));
    let w = SpherePoint::random(n, &mut rng);
    let h0 = plant_well(&Hamiltonian::sample(n, p, seeds::derive(seed, "planted-h0", 0)).unwrap(), &w, mu).unwrap();
    let h = plant_well(&Hamiltonian::sample(n, p, seeds::derive(seed, "planted-h", 0)).unwrap(), &w, mu).unwrap();
    let base = PolishedAscent::new(0.01, 300, 1e-3).from_start(w.coords().to_vec());
    let omega = AuxRandomness::with_start(h0.clone(), &params, &base, seed).unwrap();
    Planted { w, h0, h, params, omega }
}
