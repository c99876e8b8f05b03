//! One tracking step: restricted Newton in the exponential chart at σ.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::FollowError;
use crate::linalg::dot;
use crate::sphere::{chart_coefficients, LocalGeometry, SpherePoint, TangentFrame, TangentVector};
use crate::optimizers::{gd_ascent, Algorithm, AscentConfig};
use crate::tensor::{Hamiltonian, Landscape};
use crate::wells::{lenient_parameters, typed_well_from};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewtonSettings {
    /// Converged when the restricted residual is at most `tol·√N`.
    pub tol: f64,
    pub max_iters: usize,
    /// Trust bound on the correction: `|z| ≤ trust_c·δ√N`.
    pub trust_c: f64,
    pub delta: f64,
    pub max_halvings: usize,
}

impl NewtonSettings {
    pub fn new(delta: f64) -> Self {
        Self { tol: 1e-6, max_iters: 30, trust_c: 10.0, delta, max_halvings: 30 }
    }

    pub fn trust_bound(&self, n: usize) -> f64 {
        self.trust_c * self.delta * (n as f64).sqrt()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub point: SpherePoint,
    /// Chart coordinates `y = u + z` in the frame at σ.
    pub chart_coords: Vec<f64>,
    pub z_norm: f64,
    /// Final restricted residual divided by `√N`.
    pub residual: f64,
    pub iterations: usize,
}

fn chart_point(sigma: &[f64], frame: &TangentFrame, yf: &[f64]) -> (Vec<f64>, Vec<f64>, f64) {
    let n = sigma.len() as f64;
    let y = frame.to_ambient(yf);
    let t = dot(yf, yf) / n;
    let c = chart_coefficients(t);
    let x = sigma.iter().zip(&y).map(|(s, v)| c.cos * s + c.sinc * v).collect();
    (x, y, t)
}

/// Gradient of `F(y) = H̃(T_σ(F y))` in frame coordinates.
fn pullback_gradient<L: Landscape + ?Sized>(h: &L, sigma: &[f64], frame: &TangentFrame, yf: &[f64]) -> DVector<f64> {
    let n = sigma.len() as f64;
    let (x, y, t) = chart_point(sigma, frame, yf);
    let c = chart_coefficients(t);
    let g = h.gradient(&x);
    let alpha = 2.0 / n * (c.dcos * dot(&g, sigma) + c.dsinc * dot(&g, &y));
    let gf = frame.to_frame(&g);
    DVector::from_iterator(yf.len(), yf.iter().zip(&gf).map(|(b, gi)| alpha * b + c.sinc * gi))
}

fn pullback_gradient_hessian<L: Landscape + ?Sized>(
    h: &L,
    sigma: &[f64],
    frame: &TangentFrame,
    yf: &[f64],
) -> (DVector<f64>, DMatrix<f64>) {
    let n = sigma.len() as f64;
    let m = yf.len();
    let (x, y, t) = chart_point(sigma, frame, yf);
    let c = chart_coefficients(t);
    let (g, hm) = h.gradient_hessian(&x);
    let gs = dot(&g, sigma);
    let gy = dot(&g, &y);
    let alpha = 2.0 / n * (c.dcos * gs + c.dsinc * gy);
    let gf = DVector::from_vec(frame.to_frame(&g));
    let b = DVector::from_column_slice(yf);
    let grad = &b * alpha + &gf * c.sinc;
    // Jacobian in frame coordinates: s·F + a bᵀ with a = (2/N)(c'σ + s'y)
    let a: Vec<f64> = sigma.iter().zip(&y).map(|(s, v)| 2.0 / n * (c.dcos * s + c.dsinc * v)).collect();
    let av = DVector::from_vec(a);
    let hm_a = &hm * &av;
    let ha = DVector::from_vec(frame.to_frame(hm_a.as_slice()));
    let a_h_a = av.dot(&hm_a);
    let mut hess = frame.conjugate(&hm) * (c.sinc * c.sinc);
    hess += (&ha * b.transpose() + &b * ha.transpose()) * c.sinc;
    hess += &b * b.transpose() * a_h_a;
    let beta = 4.0 / (n * n) * (c.d2cos * gs + c.d2sinc * gy);
    hess += &b * b.transpose() * beta;
    for i in 0..m {
        hess[(i, i)] += alpha;
    }
    hess += (&b * gf.transpose() + &gf * b.transpose()) * (2.0 * c.dsinc / n);
    (grad, hess)
}

fn project_w(v: &DVector<f64>, basis: &DMatrix<f64>) -> DVector<f64> {
    if basis.ncols() == 0 {
        return v.clone();
    }
    v - basis * (basis.transpose() * v)
}

/// Solve `P_W ∇F(u + z) = 0` for `z ∈ W = span(basis)^⊥` (frame coordinates at σ)
/// by damped Newton. `basis` holds orthonormal frame-coordinate columns.
pub fn restricted_newton<L: Landscape + ?Sized>(
    h_tilde: &L,
    sigma: &SpherePoint,
    frame: &TangentFrame,
    basis: &DMatrix<f64>,
    u: &[f64],
    z0: &[f64],
    settings: &NewtonSettings,
) -> Result<StepOutcome, FollowError> {
    let n = sigma.dim();
    let m = n - 1;
    let sq = (n as f64).sqrt();
    let bound = settings.trust_bound(n);
    let s = sigma.coords();
    let mut z = project_w(&DVector::from_column_slice(z0), basis);
    let uv = DVector::from_column_slice(u);
    let pw = if basis.ncols() == 0 {
        DMatrix::identity(m, m)
    } else {
        DMatrix::identity(m, m) - basis * basis.transpose()
    };
    let in_chart = |y: &DVector<f64>| y.norm() < sq;
    let mut y = &uv + &z;
    if !in_chart(&y) {
        return Err(FollowError::PreconditionFailed { quantity: format!("|u + z|/√N = {} >= 1", y.norm() / sq) });
    }
    let (mut grad, mut hess) = pullback_gradient_hessian(h_tilde, s, frame, y.as_slice());
    let mut res = project_w(&grad, basis);
    let mut iterations = 0;
    loop {
        let rn = res.norm();
        if !rn.is_finite() {
            return Err(FollowError::NewtonDiverged { residual: rn, iterations });
        }
        if rn <= settings.tol * sq {
            break;
        }
        if iterations >= settings.max_iters {
            return Err(FollowError::NewtonDiverged { residual: rn / sq, iterations });
        }
        iterations += 1;
        let mut sys = &pw * &hess * &pw;
        sys += DMatrix::identity(m, m) - &pw;
        let delta = match sys.lu().solve(&(-&res)) {
            Some(d) => project_w(&d, basis),
            None => return Err(FollowError::NewtonDiverged { residual: rn / sq, iterations }),
        };
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=settings.max_halvings {
            let zt = &z + &delta * step;
            let yt = &uv + &zt;
            if in_chart(&yt) {
                let pb = pullback_gradient(h_tilde, s, frame, yt.as_slice());
                let rt = project_w(&pb, basis);
                if rt.norm() < rn {
                    accepted = Some((zt, yt));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((zt, yt)) = accepted else {
            return Err(FollowError::NewtonDiverged { residual: rn / sq, iterations });
        };
        if zt.norm() > bound {
            return Err(FollowError::StepTooLarge { norm: zt.norm(), bound });
        }
        z = zt;
        y = yt;
        let gh = pullback_gradient_hessian(h_tilde, s, frame, y.as_slice());
        grad = gh.0;
        hess = gh.1;
        res = project_w(&grad, basis);
    }
    if z.norm() > bound {
        return Err(FollowError::StepTooLarge { norm: z.norm(), bound });
    }
    let (x, _, _) = chart_point(s, frame, y.as_slice());
    let point = SpherePoint::normalize(x)
        .map_err(|e| FollowError::PreconditionFailed { quantity: e.to_string() })?;
    Ok(StepOutcome {
        point,
        chart_coords: y.iter().copied().collect(),
        z_norm: z.norm(),
        residual: res.norm() / sq,
        iterations,
    })
}

/// Full-tangent Newton from σ to a nearby critical point of `h` (no fixed
/// directions, zero offset).
pub fn polish_critical_point<L: Landscape + ?Sized>(
    h: &L,
    sigma: &SpherePoint,
    settings: &NewtonSettings,
) -> Result<StepOutcome, FollowError> {
    let frame = TangentFrame::new(sigma);
    let m = sigma.dim() - 1;
    restricted_newton(h, sigma, &frame, &DMatrix::zeros(m, 0), &vec![0.0; m], &vec![0.0; m], settings)
}

/// Parameters of one tracking step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepParams {
    pub gamma: f64,
    pub delta: f64,
    pub d: usize,
    pub iota: f64,
    pub newton: NewtonSettings,
    /// Optional boundedness check on `H̃` and `(H̃ - H)/√(2ε)`.
    pub bdd: Option<(super::events::BddSettings, f64)>,
}

/// Eigenvectors (frame coordinates) of the `d` smallest-magnitude eigenvalues.
pub(crate) fn smallest_magnitude_basis(rh: &DMatrix<f64>, d: usize) -> (Vec<f64>, DMatrix<f64>) {
    let (vals, vecs) = crate::linalg::sym_eigen_desc(rh);
    let mut idx: Vec<usize> = (0..vals.len()).collect();
    idx.sort_by(|&i, &j| vals[i].abs().total_cmp(&vals[j].abs()));
    idx.truncate(d);
    idx.sort_unstable();
    (vals, DMatrix::from_fn(rh.nrows(), idx.len(), |r, c| vecs[(r, idx[c])]))
}

/// One tracking step from the point σ of `h` to `h_tilde`. Checks that σ is in
/// the lenient well at `τ = 1.6`, that `u` lies in the near-zero space with
/// `|u| < δ^{0.6}√N`, and optionally the boundedness of both Hamiltonians.
pub fn follow_step(
    h: &Hamiltonian,
    h_tilde: &Hamiltonian,
    sigma: &SpherePoint,
    u: &TangentVector,
    params: &StepParams,
) -> Result<StepOutcome, FollowError> {
    let n = h.n();
    let pre = |q: String| FollowError::PreconditionFailed { quantity: q };
    if h_tilde.n() != n || h_tilde.p() != h.p() || sigma.dim() != n || u.ambient().len() != n {
        return Err(pre("shape mismatch".into()));
    }
    let geom = LocalGeometry::at(h, sigma);
    let (g16, d16, wt) = lenient_parameters(params.gamma, params.delta, params.d, params.iota, 1.6)
        .map_err(|e| pre(e.to_string()))?;
    if !typed_well_from(&geom, h.p(), g16, d16, &wt) {
        return Err(pre("lenient well at tau = 1.6".into()));
    }
    let sq = (n as f64).sqrt();
    let umax = params.delta.powf(0.6) * sq;
    if u.norm() >= umax {
        return Err(pre(format!("|u| = {:.3e} >= delta^0.6 sqrt(N) = {umax:.3e}", u.norm())));
    }
    let (_, basis) = smallest_magnitude_basis(&geom.riemannian_hessian, params.d);
    let uf = geom.frame.to_frame(u.ambient());
    let off = project_w(&DVector::from_column_slice(&uf), &basis).norm();
    if off > 1e-8 * (u.norm() + 1e-300) && off > 1e-12 * sq {
        return Err(pre(format!("u has component {off:.3e} outside the near-zero space")));
    }
    if let Some((bdd, eps)) = &params.bdd {
        let tau = super::events::pair_bdd_tau(h, h_tilde, *eps, &[sigma.coords().to_vec()], bdd, 0);
        if tau >= 1.6 {
            return Err(pre(format!("boundedness at tau = 1.6 (ratio/C = {tau:.3})")));
        }
    }
    restricted_newton(h_tilde, sigma, &geom.frame, &basis, &uf, &vec![0.0; n - 1], &params.newton)
}

/// Gradient ascent (from `start`, or a uniform point drawn from the auxiliary
/// seed) followed by a Newton polish to the nearby critical point. Falls back
/// to the ascent endpoint when the polish fails.
pub struct PolishedAscent {
    pub eta: f64,
    pub max_iters: usize,
    pub delta: f64,
    pub start: Option<Vec<f64>>,
    pub newton: NewtonSettings,
}

impl PolishedAscent {
    pub fn new(eta: f64, max_iters: usize, delta: f64) -> Self {
        Self { eta, max_iters, delta, start: None, newton: NewtonSettings { trust_c: 1e6, ..NewtonSettings::new(delta) } }
    }

    pub fn from_start(mut self, start: Vec<f64>) -> Self {
        self.start = Some(start);
        self
    }
}

impl Algorithm for PolishedAscent {
    fn name(&self) -> String {
        "polished-ascent".into()
    }

    fn params(&self) -> serde_json::Value {
        serde_json::json!({ "eta": self.eta, "max_iters": self.max_iters, "delta": self.delta, "fixed_start": self.start.is_some() })
    }

    fn run(&self, h: &Hamiltonian, omega: u64) -> Vec<f64> {
        let n = h.n();
        let start = match self.start.as_ref().map(|s| SpherePoint::normalize(s.clone())) {
            Some(Ok(s)) => s,
            _ => SpherePoint::random(n, &mut crate::seeds::rng(omega)),
        };
        let Ok(cfg) = AscentConfig::new(self.eta, self.max_iters, self.delta, omega) else {
            return start.into_coords();
        };
        let Ok(traj) = gd_ascent(h, &start, &cfg) else {
            return start.into_coords();
        };
        let end = traj.final_point().clone();
        match polish_critical_point(h, &end, &self.newton) {
            Ok(o) => o.point.into_coords(),
            Err(_) => end.into_coords(),
        }
    }
}
