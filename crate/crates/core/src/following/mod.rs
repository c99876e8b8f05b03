//! Tracking a well along a chain of correlated Hamiltonians.
//!
//! One step solves for the stationary point of the next Hamiltonian restricted
//! to the complement of the near-zero eigenspace (projected Newton in the
//! exponential chart), then transports the eigenspace basis. The driver chains
//! these steps, gates every step on the lenient well and boundedness events,
//! and the globally Lipschitz wrapper shrinks the output by the lenience clamp.

pub mod driver;
pub mod events;
pub mod lipschitz;
pub mod step;
pub mod study;
pub mod transport;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use driver::{run_lip, run_loclip, run_loclip_verified, tracked_basis, AuxRandomness, FollowState, LipOutput, LocLipRun, StepRecord, TrackingParams, Undefined, UndefinedReason};
pub use events::{a_star, clip_tau, compute_tau_star, event_report, point_events, tau_all, BddSettings, EventLedger, EventParams};
pub use lipschitz::{empirical_lipschitz_probe, empirical_lipschitz_probe_vec, follow_step_probe, tau_probe, LipschitzProbe, PerturbationFamily};
pub use step::{follow_step, polish_critical_point, restricted_newton, NewtonSettings, PolishedAscent, StepOutcome, StepParams};
pub use study::{success_bound, success_stability_study, SuccessStabilityReport};
pub use transport::{choose_u_oracle, transport_basis, transport_basis_matrices};

#[derive(Debug, Error, Clone, PartialEq, Serialize, Deserialize)]
pub enum FollowError {
    #[error("Newton iteration did not converge: residual {residual:.3e} after {iterations} iterations")]
    NewtonDiverged { residual: f64, iterations: usize },

    #[error("correction norm {norm:.3e} exceeds the trust bound {bound:.3e}")]
    StepTooLarge { norm: f64, bound: f64 },

    #[error("precondition failed: {quantity}")]
    PreconditionFailed { quantity: String },

    #[error("Davis-Kahan condition failed: {detail}; eigenvalues {eigenvalues:?}")]
    DavisKahanFailed { eigenvalues: Vec<f64>, detail: String },

    #[error("Gram-Schmidt pivot {pivot:.3e} is below 1e-3")]
    GramSchmidtDegenerate { pivot: f64 },
}
