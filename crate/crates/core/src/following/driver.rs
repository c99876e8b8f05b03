//! The K-step tracker and its globally Lipschitz extension.

use std::panic::{catch_unwind, AssertUnwindSafe};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::events::{diff_bdd_ratio, ham_bdd_ratio, point_events_from, BddSettings, EventLedger, EventParams, PointEvents};
use super::step::{restricted_newton, smallest_magnitude_basis, NewtonSettings};
use super::transport::{choose_u_oracle, project_and_orthonormalize};
use super::FollowError;
use crate::ensemble::{bridge_fill, endpoint_embed};
use crate::error::{Error, Result};
use crate::linalg::{dist, dot, norm};
use crate::optimizers::Algorithm;
use crate::seeds;
use crate::sphere::{LocalGeometry, SpherePoint};
use crate::tensor::Hamiltonian;
use crate::wells::{lenient_parameters, spectrum_has_type, LenienceBreakdown};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackingParams {
    pub gamma: f64,
    pub delta: f64,
    pub d: usize,
    pub iota: f64,
    pub epsilon: f64,
    pub k_steps: usize,
    pub newton: NewtonSettings,
    /// Boundedness gate; `None` skips it (and marks the ledger unchecked).
    pub bdd: Option<BddSettings>,
}

impl TrackingParams {
    pub fn new(gamma: f64, delta: f64, d: usize, iota: f64, epsilon: f64, k_steps: usize) -> Result<Self> {
        let ok = gamma > 0.0 && delta > 0.0 && delta < 1.0 && iota > 0.0 && (0.0..1.0).contains(&epsilon) && k_steps >= 1;
        if !ok {
            return Err(Error::InvalidParameter(format!(
                "tracking parameters gamma={gamma} delta={delta} iota={iota} epsilon={epsilon} K={k_steps}"
            )));
        }
        Ok(Self { gamma, delta, d, iota, epsilon, k_steps, newton: NewtonSettings::new(delta), bdd: None })
    }

    pub fn with_bdd(mut self, bdd: BddSettings) -> Self {
        self.bdd = Some(bdd);
        self
    }

    pub fn events(&self) -> EventParams {
        EventParams { gamma: self.gamma, delta: self.delta, d: self.d, iota: self.iota, epsilon: self.epsilon }
    }

    /// Largest allowed `|u|`, `δ^{0.6}√N`.
    pub fn max_offset(&self, n: usize) -> f64 {
        self.delta.powf(0.6) * (n as f64).sqrt()
    }
}

/// Everything the tracker uses besides the input Hamiltonian. Bridge noise is
/// kept as seeds and regenerated one tensor at a time.
#[derive(Clone, Debug, PartialEq)]
pub struct AuxRandomness {
    pub h0: Hamiltonian,
    pub sigma0: SpherePoint,
    /// Ambient `N×d` orthonormal columns tangent at `sigma0`.
    pub basis0: DMatrix<f64>,
    /// `K` coordinate vectors in `ℝ^d`.
    pub u_tilde: Vec<Vec<f64>>,
    /// `K-1` seeds of the fresh tensors used by the bridge fills.
    pub fill_seeds: Vec<u64>,
    pub seed: u64,
}

/// The `d` smallest-magnitude Riemannian Hessian eigenvectors, as ambient columns.
pub fn tracked_basis(h: &Hamiltonian, sigma: &SpherePoint, d: usize) -> DMatrix<f64> {
    let geom = LocalGeometry::at(h, sigma);
    let (_, vf) = smallest_magnitude_basis(&geom.riemannian_hessian, d.min(h.n() - 1));
    geom.frame.matrix_to_ambient(&vf)
}

impl AuxRandomness {
    /// Draw `H0` and the seeds from `seed`, run `base` on `H0`, and draw each
    /// `ũ^{(j)}` uniformly from the ball of radius `√N` in `ℝ^d`.
    pub fn sample(n: usize, p: usize, params: &TrackingParams, base: &dyn Algorithm, seed: u64) -> Result<Self> {
        let h0 = Hamiltonian::sample(n, p, seeds::derive(seed, "aux-h0", 0))?;
        Self::with_start(h0, params, base, seed)
    }

    /// As [`AuxRandomness::sample`] with a given `H0`.
    pub fn with_start(h0: Hamiltonian, params: &TrackingParams, base: &dyn Algorithm, seed: u64) -> Result<Self> {
        let n = h0.n();
        let out = base.run(&h0, seeds::derive(seed, "aux-alg", 0));
        let sigma0 = SpherePoint::normalize(out).unwrap_or_else(|_| SpherePoint::axis(n, 0));
        let mut rng = seeds::rng(seeds::derive(seed, "aux-u", 0));
        let u_tilde = (0..params.k_steps).map(|_| seeds::ball_vec(&mut rng, params.d, (n as f64).sqrt())).collect();
        Self::from_parts(h0, sigma0, params, u_tilde, seed)
    }

    pub fn from_parts(h0: Hamiltonian, sigma0: SpherePoint, params: &TrackingParams, u_tilde: Vec<Vec<f64>>, seed: u64) -> Result<Self> {
        if sigma0.dim() != h0.n() {
            return Err(Error::DimensionMismatch { expected: h0.n(), got: sigma0.dim() });
        }
        let basis0 = tracked_basis(&h0, &sigma0, params.d);
        let fill_seeds = (1..params.k_steps as u64).map(|k| seeds::derive(seed, "aux-fill", k)).collect();
        Ok(Self { h0, sigma0, basis0, u_tilde, fill_seeds, seed })
    }

    /// Same randomness with every `ũ^{(j)} = 0`.
    pub fn with_zero_u(mut self) -> Self {
        for u in &mut self.u_tilde {
            u.iter_mut().for_each(|x| *x = 0.0);
        }
        self
    }
}

#[derive(Debug, Error, Clone, PartialEq, Serialize, Deserialize)]
pub enum UndefinedReason {
    #[error("point is not in the lenient well at tau = 1.6 (lenience {lenience:?})")]
    SolveGate { lenience: LenienceBreakdown },
    #[error("boundedness ratio {ratio:.3} >= 1.6")]
    BddGate { ratio: f64 },
    #[error("|u| = {norm:.3e} >= {bound:.3e}")]
    StepTooLong { norm: f64, bound: f64 },
    #[error("step failed: {0}")]
    Follow(FollowError),
    #[error("basis transport failed: {0}")]
    Transport(FollowError),
    #[error("inconsistent inputs: {0}")]
    BadInput(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

#[derive(Debug, Error, Clone, PartialEq, Serialize, Deserialize)]
#[error("undefined at step {step}: {reason}")]
pub struct Undefined {
    pub step: usize,
    pub reason: UndefinedReason,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub j: usize,
    pub energy: f64,
    pub grad_norm: f64,
    pub radial: f64,
    /// Eigenvalues of the tracked directions.
    pub tracked_eigenvalues: Vec<f64>,
    pub lenience: LenienceBreakdown,
    pub bdd_ratio: Option<f64>,
    pub newton_iterations: usize,
    pub z_norm: f64,
    pub residual: f64,
}

impl StepRecord {
    pub const CSV_HEADER: &'static str =
        "step,energy,grad_norm,radial,tau_radial,tau_gradient,tau_spectral,bdd_ratio,newton_iterations,z_norm,residual";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.j,
            self.energy,
            self.grad_norm,
            self.radial,
            self.lenience.radial,
            self.lenience.gradient,
            self.lenience.spectral,
            self.bdd_ratio.map(|r| r.to_string()).unwrap_or_default(),
            self.newton_iterations,
            self.z_norm,
            self.residual
        )
    }
}

/// State after the last completed step.
#[derive(Clone, Debug, PartialEq)]
pub struct FollowState {
    pub j: usize,
    pub sigma: SpherePoint,
    pub basis: DMatrix<f64>,
    pub ham: Hamiltonian,
}

#[derive(Clone, Debug)]
pub struct LocLipRun {
    pub outcome: std::result::Result<SpherePoint, Undefined>,
    /// `σ^{(0)}, σ^{(1)}, …` up to the last point reached.
    pub points: Vec<SpherePoint>,
    pub steps: Vec<StepRecord>,
    pub ledger: EventLedger,
    pub state: Option<FollowState>,
}

impl LocLipRun {
    pub fn is_defined(&self) -> bool {
        self.outcome.is_ok()
    }
}

struct Tracker<'a> {
    params: &'a TrackingParams,
    events: EventParams,
    points: Vec<SpherePoint>,
    steps: Vec<StepRecord>,
    point_events: Vec<PointEvents>,
    ham_ratios: Vec<f64>,
    diff_ratios: Vec<f64>,
}

impl Tracker<'_> {
    fn finish(self, outcome: std::result::Result<SpherePoint, Undefined>, state: Option<FollowState>) -> LocLipRun {
        let sq = self.points.first().map(|s| (s.dim() as f64).sqrt()).unwrap_or(1.0);
        let s_stab = self.points.windows(2).map(|w| dist(w[0].coords(), w[1].coords()) / sq < self.events.delta).collect();
        let ledger = EventLedger::assemble(
            self.point_events,
            s_stab,
            self.ham_ratios,
            self.diff_ratios,
            self.params.bdd.is_some(),
            outcome.is_err(),
        );
        LocLipRun { outcome, points: self.points, steps: self.steps, ledger, state }
    }
}

fn check_inputs(h: &Hamiltonian, omega: &AuxRandomness, params: &TrackingParams) -> std::result::Result<(), String> {
    h.check_shape(&omega.h0).map_err(|e| e.to_string())?;
    let n = h.n();
    if omega.sigma0.dim() != n {
        return Err(format!("sigma0 has dimension {}", omega.sigma0.dim()));
    }
    if omega.u_tilde.len() != params.k_steps || omega.fill_seeds.len() + 1 != params.k_steps {
        return Err(format!(
            "{} offsets and {} fill seeds for K = {}",
            omega.u_tilde.len(),
            omega.fill_seeds.len(),
            params.k_steps
        ));
    }
    if omega.u_tilde.iter().any(|u| u.len() != params.d) {
        return Err("offset of the wrong dimension".into());
    }
    let b = &omega.basis0;
    if b.nrows() != n || b.ncols() != params.d {
        return Err(format!("basis0 is {}x{}", b.nrows(), b.ncols()));
    }
    let gram = b.transpose() * b - DMatrix::identity(params.d, params.d);
    let tangent = b.transpose() * DVector::from_column_slice(omega.sigma0.coords());
    if !(gram.norm() < 1e-8 && tangent.norm() < 1e-8 * (n as f64).sqrt()) {
        return Err("basis0 is not orthonormal and tangent".into());
    }
    Ok(())
}

/// The locally Lipschitz tracker. Builds the bridge chain from `ω.H0` to the
/// embedded endpoint of `h`, and at each step gates on the lenient events at
/// `τ = 1.6`, moves by `u = Σ ũ_i v_i` plus a restricted Newton correction, and
/// transports the basis. Never panics on valid shapes; every failure is an
/// [`Undefined`] outcome.
pub fn run_loclip(h: &Hamiltonian, omega: &AuxRandomness, params: &TrackingParams) -> LocLipRun {
    track(h, omega, params, &Offsets::Fixed)
}

/// Verification variant: the base algorithm is available along the chain, and
/// the offset at step `j` is the projection of `log_{σ^{(j)}} A(H^{(j+1)})` onto
/// the tracked directions (`ω.u_tilde` is ignored).
pub fn run_loclip_verified(h: &Hamiltonian, omega: &AuxRandomness, params: &TrackingParams, base: &dyn Algorithm, alg_seed: u64) -> LocLipRun {
    track(h, omega, params, &Offsets::Oracle(base, alg_seed))
}

enum Offsets<'a> {
    Fixed,
    Oracle(&'a dyn Algorithm, u64),
}

fn track(h: &Hamiltonian, omega: &AuxRandomness, params: &TrackingParams, offsets: &Offsets) -> LocLipRun {
    let mut tr = Tracker {
        params,
        events: params.events(),
        points: Vec::new(),
        steps: Vec::new(),
        point_events: Vec::new(),
        ham_ratios: Vec::new(),
        diff_ratios: Vec::new(),
    };
    let undefined = |step, reason| Undefined { step, reason };
    if let Err(msg) = check_inputs(h, omega, params) {
        return tr.finish(Err(undefined(0, UndefinedReason::BadInput(msg))), None);
    }
    let n = h.n();
    let p = h.p();
    let k_steps = params.k_steps;
    let end = match endpoint_embed(&omega.h0, h, k_steps, params.epsilon) {
        Ok(e) => e,
        Err(e) => return tr.finish(Err(undefined(0, UndefinedReason::BadInput(e.to_string()))), None),
    };
    let (g16, d16, wt16) = match lenient_parameters(params.gamma, params.delta, params.d, params.iota, 1.6) {
        Ok(x) => x,
        Err(e) => return tr.finish(Err(undefined(0, UndefinedReason::BadInput(e.to_string()))), None),
    };
    let sq = (n as f64).sqrt();
    let mut ham = omega.h0.clone();
    let mut sigma = omega.sigma0.clone();
    let mut basis = omega.basis0.clone();
    let mut last_newton = (0usize, 0.0f64, 0.0f64);
    for j in 0..=k_steps {
        tr.points.push(sigma.clone());
        let geom = LocalGeometry::at(&ham, &sigma);
        if !geom.value.is_finite() || !geom.riemannian_hessian.iter().all(|v| v.is_finite()) {
            return tr.finish(Err(undefined(j, UndefinedReason::Numerical("non-finite derivatives".into()))), None);
        }
        let (eigs, near) = smallest_magnitude_basis(&geom.riemannian_hessian, params.d);
        if j > 0 {
            let target = geom.frame.matrix_to_ambient(&near);
            match project_and_orthonormalize(&target, &basis) {
                Ok(b) => basis = b,
                Err(e) => return tr.finish(Err(undefined(j, UndefinedReason::Transport(e))), None),
            }
        }
        let pe = point_events_from(geom.grad_norm(), geom.radial, &eigs, n, p, &tr.events);
        let lenience = pe.lenience;
        tr.point_events.push(pe);
        let in_lenient = geom.grad_norm() < d16 * sq && geom.radial - crate::bulk_edge(p) > g16 && spectrum_has_type(&eigs, &wt16);
        let tracked: Vec<f64> = {
            let rh = &geom.riemannian_hessian;
            (0..near.ncols()).map(|c| near.column(c).dot(&(rh * near.column(c)))).collect()
        };
        let bdd_ratio = params.bdd.as_ref().map(|s| ham_bdd_ratio(&ham, &[sigma.coords().to_vec()], s, 2 * j as u64));
        tr.steps.push(StepRecord {
            j,
            energy: geom.value / n as f64,
            grad_norm: geom.grad_norm(),
            radial: geom.radial,
            tracked_eigenvalues: tracked,
            lenience,
            bdd_ratio,
            newton_iterations: last_newton.0,
            z_norm: last_newton.1,
            residual: last_newton.2,
        });
        if !in_lenient {
            return tr.finish(Err(undefined(j, UndefinedReason::SolveGate { lenience })), None);
        }
        if let Some(r) = bdd_ratio {
            tr.ham_ratios.push(r);
            if !(r < 1.6) {
                return tr.finish(Err(undefined(j, UndefinedReason::BddGate { ratio: r })), None);
            }
        }
        if j == k_steps {
            break;
        }
        let next = if j + 1 < k_steps {
            let fresh = match Hamiltonian::sample(n, p, omega.fill_seeds[j]) {
                Ok(g) => g,
                Err(e) => return tr.finish(Err(undefined(j, UndefinedReason::Numerical(e.to_string()))), None),
            };
            match bridge_fill(&ham, &end, j + 1, k_steps, params.epsilon, &fresh) {
                Ok(x) => x,
                Err(e) => return tr.finish(Err(undefined(j, UndefinedReason::Numerical(e.to_string()))), None),
            }
        } else {
            end.clone()
        };
        let coeffs = match offsets {
            Offsets::Fixed => omega.u_tilde[j].clone(),
            Offsets::Oracle(alg, seed) => {
                let target = SpherePoint::normalize(alg.run(&next, *seed));
                match target.map_err(|e| e.to_string()).and_then(|t| choose_u_oracle(&sigma, &basis, &t).map_err(|e| e.to_string())) {
                    Ok(c) => c,
                    Err(e) => return tr.finish(Err(undefined(j, UndefinedReason::BadInput(format!("offset oracle: {e}")))), None),
                }
            }
        };
        let u: Vec<f64> = (0..n).map(|r| (0..params.d).map(|c| basis[(r, c)] * coeffs[c]).sum()).collect();
        let bound = params.max_offset(n);
        if !(norm(&u) < bound) {
            return tr.finish(Err(undefined(j, UndefinedReason::StepTooLong { norm: norm(&u), bound })), None);
        }
        if let Some(s) = params.bdd.as_ref() {
            let r = diff_bdd_ratio(&ham, &next, params.epsilon, &[sigma.coords().to_vec()], s, 2 * j as u64 + 1);
            tr.diff_ratios.push(r);
            if !(r < 1.6) {
                return tr.finish(Err(undefined(j, UndefinedReason::BddGate { ratio: r })), None);
            }
        }
        let basis_f = geom.frame.matrix_to_frame(&basis);
        let uf = geom.frame.to_frame(&u);
        let zero = vec![0.0; n - 1];
        let out = match restricted_newton(&next, &sigma, &geom.frame, &basis_f, &uf, &zero, &params.newton) {
            Ok(o) => o,
            Err(e) => return tr.finish(Err(undefined(j, UndefinedReason::Follow(e))), None),
        };
        last_newton = (out.iterations, out.z_norm, out.residual);
        sigma = out.point;
        ham = next;
    }
    let state = FollowState { j: k_steps, sigma: sigma.clone(), basis, ham };
    tr.finish(Ok(sigma), Some(state))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LipOutput {
    pub point: Vec<f64>,
    pub a_star: f64,
    pub tau_all: f64,
    pub defined: bool,
    pub reason: Option<String>,
}

/// `a*·run_loclip`, and `0` wherever the tracker is undefined. Total: any input
/// produces a finite point of the ball.
pub fn run_lip(h: &Hamiltonian, omega: &AuxRandomness, params: &TrackingParams) -> LipOutput {
    let n = h.n();
    let zero = |reason: String, tau: f64| LipOutput { point: vec![0.0; n], a_star: 0.0, tau_all: tau, defined: false, reason: Some(reason) };
    let run = match catch_unwind(AssertUnwindSafe(|| run_loclip(h, omega, params))) {
        Ok(r) => r,
        Err(_) => return zero("panic inside the tracker".into(), 1.6),
    };
    match run.outcome {
        Ok(sigma) => {
            let a = run.ledger.a_star;
            let mut point: Vec<f64> = sigma.coords().iter().map(|x| a * x).collect();
            let radius = (n as f64).sqrt();
            if point.len() != n || point.iter().any(|x| !x.is_finite()) {
                return zero("non-finite output".into(), 1.6);
            }
            let nr = dot(&point, &point).sqrt();
            if nr > radius {
                point.iter_mut().for_each(|x| *x *= radius / nr);
            }
            LipOutput { point, a_star: a, tau_all: run.ledger.tau_all, defined: true, reason: None }
        }
        Err(u) => zero(u.to_string(), run.ledger.tau_all),
    }
}
