//! Success, stability and boundedness events along a chain, their lenient
//! versions, the lenience `τ*` and the clamp `a*`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dist, sym_eigenvalues_desc};
use crate::par::{map_indexed, Execution};
use crate::seeds;
use crate::sphere::{LocalGeometry, SpherePoint};
use crate::tensor::{in_k_n_with_hints, BoundednessProbe, Hamiltonian};
use crate::wells::{lenience, spectrum_has_type, LenienceBreakdown, WellType};

/// Largest lenience considered; anything beyond is clipped here.
pub const TAU_MAX: f64 = 1.6;

/// `a* = max(0, min(1, 14 - 10τ))`.
pub fn a_star(tau_all: f64) -> f64 {
    if tau_all.is_nan() {
        return 0.0;
    }
    (14.0 - 10.0 * tau_all).clamp(0.0, 1.0)
}

/// Lenience of the intersection event. Each family's lenient event is monotone
/// in `τ`, so the smallest `τ` at which both hold is the larger of the two.
pub fn tau_all(tau_solve: f64, tau_bdd: f64) -> f64 {
    clip_tau(tau_solve.max(tau_bdd))
}

/// Clip to `[1, 1.6]`; NaN and unsatisfiable (`+∞`) map to 1.6.
pub fn clip_tau(tau: f64) -> f64 {
    if tau.is_nan() || tau > TAU_MAX {
        TAU_MAX
    } else {
        tau.max(1.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventParams {
    pub gamma: f64,
    pub delta: f64,
    pub d: usize,
    pub iota: f64,
    pub epsilon: f64,
}

/// Probe settings for the boundedness event. Membership in `K_N` can only be
/// refuted by probes, so every flag derived from these is probe-based.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BddSettings {
    pub probe: BoundednessProbe,
    /// Uniform points in the ball added to the trajectory points.
    pub random_probes: usize,
    pub seed: u64,
}

impl BddSettings {
    pub fn new(constant: f64) -> Self {
        Self { probe: BoundednessProbe::new(constant), random_probes: 20, seed: 0xB0DD }
    }
}

/// Worst `|∇^k H|_op / (C N^{1-k/2})` over the probes: `H ∈ τK_N` iff this is below `τ`.
pub fn ham_bdd_ratio(h: &Hamiltonian, points: &[Vec<f64>], s: &BddSettings, tag: u64) -> f64 {
    let n = h.n();
    let mut rng = seeds::rng(seeds::derive(s.seed, "bdd-probe", tag));
    let mut probes: Vec<Vec<f64>> = points.to_vec();
    for _ in 0..s.random_probes {
        probes.push(seeds::ball_vec(&mut rng, n, (n as f64).sqrt()));
    }
    match in_k_n_with_hints(h, &probes, points, &s.probe) {
        Ok(r) => r.worst_ratio() / s.probe.constant,
        Err(_) => f64::INFINITY,
    }
}

/// `(H̃ - H)/√(2ε)`; the zero Hamiltonian when `ε = 0`.
pub fn scaled_difference(h: &Hamiltonian, h2: &Hamiltonian, epsilon: f64) -> Result<Hamiltonian> {
    if epsilon <= 0.0 {
        h.check_shape(h2)?;
        return Ok(Hamiltonian::zero(h.n(), h.p()));
    }
    let c = 1.0 / (2.0 * epsilon).sqrt();
    h2.combine(c, h, -c)
}

pub fn diff_bdd_ratio(h: &Hamiltonian, h2: &Hamiltonian, epsilon: f64, points: &[Vec<f64>], s: &BddSettings, tag: u64) -> f64 {
    if epsilon <= 0.0 {
        return 0.0;
    }
    match scaled_difference(h, h2, epsilon) {
        Ok(d) => ham_bdd_ratio(&d, points, s, tag),
        Err(_) => f64::INFINITY,
    }
}

/// Largest boundedness ratio of `H`, `H̃` and their scaled difference.
pub fn pair_bdd_tau(h: &Hamiltonian, h2: &Hamiltonian, epsilon: f64, points: &[Vec<f64>], s: &BddSettings, tag: u64) -> f64 {
    ham_bdd_ratio(h, points, s, 2 * tag)
        .max(ham_bdd_ratio(h2, points, s, 2 * tag + 2))
        .max(diff_bdd_ratio(h, h2, epsilon, points, s, 2 * tag + 1))
}

/// Strict (τ = 1) success flag and lenience of one point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointEvents {
    pub solve: bool,
    pub lenience: LenienceBreakdown,
}

pub fn point_events_from(grad_norm: f64, radial: f64, eigenvalues: &[f64], n: usize, p: usize, params: &EventParams) -> PointEvents {
    let margin = radial - crate::bulk_edge(p);
    let solve = grad_norm < params.delta * (n as f64).sqrt()
        && margin > params.gamma
        && WellType::iota(params.d, params.iota).map(|wt| spectrum_has_type(eigenvalues, &wt)).unwrap_or(false);
    let lenience = lenience(grad_norm, radial, eigenvalues, n, p, params.gamma, params.delta, params.d, params.iota);
    PointEvents { solve, lenience }
}

pub fn point_events(h: &Hamiltonian, sigma: &SpherePoint, params: &EventParams) -> PointEvents {
    let geom = LocalGeometry::at(h, sigma);
    let eig = sym_eigenvalues_desc(&geom.riemannian_hessian);
    point_events_from(geom.grad_norm(), geom.radial, &eig, h.n(), h.p(), params)
}

/// Events of one chain. The boundedness part is probe-based.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventLedger {
    pub s_solve: Vec<bool>,
    pub s_stab: Vec<bool>,
    pub s_bdd: bool,
    pub s_all: bool,
    pub lenience: Vec<LenienceBreakdown>,
    /// Boundedness ratios (already divided by `C`) of each `H^{(i)}`.
    pub ham_ratios: Vec<f64>,
    /// Boundedness ratios of each `(H^{(i+1)} - H^{(i)})/√(2ε)`.
    pub diff_ratios: Vec<f64>,
    pub bdd_checked: bool,
    pub tau_solve: f64,
    pub tau_bdd: f64,
    pub tau_all: f64,
    pub a_star: f64,
}

impl EventLedger {
    /// Assemble the flags and lenience values; `undefined` forces `τ* = 1.6`.
    pub fn assemble(
        points: Vec<PointEvents>,
        s_stab: Vec<bool>,
        ham_ratios: Vec<f64>,
        diff_ratios: Vec<f64>,
        bdd_checked: bool,
        undefined: bool,
    ) -> Self {
        let s_solve: Vec<bool> = points.iter().map(|p| p.solve).collect();
        let lenience: Vec<LenienceBreakdown> = points.into_iter().map(|p| p.lenience).collect();
        let worst_ratio = ham_ratios.iter().chain(&diff_ratios).fold(0.0f64, |a, &b| if b.is_nan() { f64::INFINITY } else { a.max(b) });
        let s_bdd = worst_ratio < 1.0;
        let mut tau_solve = clip_tau(lenience.iter().fold(1.0f64, |a, l| {
            let w = l.worst();
            if w.is_nan() {
                f64::INFINITY
            } else {
                a.max(w)
            }
        }));
        let tau_bdd = clip_tau(worst_ratio);
        if lenience.is_empty() {
            tau_solve = TAU_MAX;
        }
        if undefined {
            tau_solve = TAU_MAX;
        }
        let tau_all = tau_all(tau_solve, tau_bdd);
        let s_all = !undefined && s_bdd && !s_solve.is_empty() && s_solve.iter().all(|&b| b) && s_stab.iter().all(|&b| b);
        Self {
            s_solve,
            s_stab,
            s_bdd,
            s_all,
            lenience,
            ham_ratios,
            diff_ratios,
            bdd_checked,
            tau_solve,
            tau_bdd,
            tau_all,
            a_star: a_star(tau_all),
        }
    }
}

/// Evaluate all events on a chain `H^{(0..=K)}` with points `σ^{(0..=K)}`.
/// Without `bdd` the boundedness event is taken to hold and `bdd_checked` is false.
pub fn event_report(
    hams: &[Hamiltonian],
    sigmas: &[SpherePoint],
    params: &EventParams,
    bdd: Option<&BddSettings>,
    exec: Execution,
) -> Result<EventLedger> {
    if hams.is_empty() || hams.len() != sigmas.len() {
        return Err(Error::InvalidParameter(format!("{} Hamiltonians but {} points", hams.len(), sigmas.len())));
    }
    for (h, s) in hams.iter().zip(sigmas) {
        hams[0].check_shape(h)?;
        if s.dim() != h.n() {
            return Err(Error::DimensionMismatch { expected: h.n(), got: s.dim() });
        }
    }
    let k = hams.len() - 1;
    let sq = (hams[0].n() as f64).sqrt();
    let points = map_indexed(exec, k + 1, |i| point_events(&hams[i], &sigmas[i], params));
    let s_stab: Vec<bool> = (0..k).map(|i| dist(sigmas[i].coords(), sigmas[i + 1].coords()) / sq < params.delta).collect();
    let (ham_ratios, diff_ratios) = match bdd {
        Some(s) => {
            let hr = map_indexed(exec, k + 1, |i| ham_bdd_ratio(&hams[i], &[sigmas[i].coords().to_vec()], s, 2 * i as u64));
            let dr = map_indexed(exec, k, |i| {
                let pts = [sigmas[i].coords().to_vec(), sigmas[i + 1].coords().to_vec()];
                diff_bdd_ratio(&hams[i], &hams[i + 1], params.epsilon, &pts, s, 2 * i as u64 + 1)
            });
            (hr, dr)
        }
        None => (Vec::new(), Vec::new()),
    };
    Ok(EventLedger::assemble(points, s_stab, ham_ratios, diff_ratios, bdd.is_some(), false))
}

/// `(τ*_solve, τ*_bdd, τ*_all)` together with the full ledger.
pub fn compute_tau_star(
    hams: &[Hamiltonian],
    sigmas: &[SpherePoint],
    params: &EventParams,
    bdd: Option<&BddSettings>,
    exec: Execution,
) -> Result<((f64, f64, f64), EventLedger)> {
    let ledger = event_report(hams, sigmas, params, bdd, exec)?;
    Ok(((ledger.tau_solve, ledger.tau_bdd, ledger.tau_all), ledger))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clamp_table() {
        assert_eq!(a_star(1.0), 1.0);
        assert_eq!(a_star(1.3), 1.0);
        assert!((a_star(1.35) - 0.5).abs() < 1e-12);
        assert_eq!(a_star(1.4), 0.0);
        assert_eq!(a_star(1.6), 0.0);
        assert_eq!(a_star(f64::NAN), 0.0);
    }

    #[test]
    fn clipping() {
        assert_eq!(clip_tau(0.5), 1.0);
        assert_eq!(clip_tau(f64::INFINITY), 1.6);
        assert_eq!(clip_tau(f64::NAN), 1.6);
        assert_eq!(tau_all(1.2, 1.4), 1.4);
    }
}
