//! Wells: points with small spherical gradient and radial derivative above the
//! bulk edge, their near-zero eigenspaces and the `(d, ι)` type ladder.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::bulk_edge;
use crate::error::{Error, Result};
use crate::linalg::{col_to_vec, projector_distance, sym_eigen_desc, sym_opnorm};
use crate::sphere::{LocalGeometry, SpherePoint};
use crate::tensor::{DenseTensor, Hamiltonian, Landscape};

/// Relative tolerance for eigenvalue band endpoints.
pub const BAND_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WellParams {
    pub gamma: f64,
    pub delta: f64,
    /// Largest number of near-zero eigenvalues the type ladder is sized for.
    pub k: usize,
}

impl WellParams {
    pub fn new(gamma: f64, delta: f64) -> Result<Self> {
        if !(gamma > 0.0 && delta > 0.0) {
            return Err(Error::InvalidParameter(format!("need gamma > 0 and delta > 0, got {gamma}, {delta}")));
        }
        Ok(Self { gamma, delta, k: 4 })
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }
}

/// Near-zero count `d` and forbidden band `±[a, b]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WellType {
    pub d: usize,
    pub a: f64,
    pub b: f64,
}

impl WellType {
    pub fn new(d: usize, a: f64, b: f64) -> Result<Self> {
        if !(0.0 < a && a < b) {
            return Err(Error::InvalidParameter(format!("need 0 < a < b, got [{a}, {b}]")));
        }
        Ok(Self { d, a, b })
    }

    /// The `[ι, 3ι]` shorthand.
    pub fn iota(d: usize, iota: f64) -> Result<Self> {
        Self::new(d, iota, 3.0 * iota)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub rung: usize,
    pub d: usize,
    pub iota: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WellMargins {
    /// `radial - 2√(p(p-1)) - γ`.
    pub radial: f64,
    /// `δ√N - |∇_sp H|`.
    pub gradient: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WellReport {
    pub grad_norm: f64,
    pub radial: f64,
    pub is_well: bool,
    /// Riemannian Hessian eigenvalues, descending; empty unless requested.
    pub eigenvalues: Vec<f64>,
    pub classification: Option<Classification>,
    pub margins: WellMargins,
}

/// `|λ| ≤ ι`, with ties within the tolerance counted as near-zero.
fn in_near_zero(lambda: f64, iota: f64) -> bool {
    lambda.abs() <= iota * (1.0 + BAND_TOL)
}

/// `|λ| ∈ [a, b]` with the lower endpoint resolved toward the near-zero set.
fn in_band(lambda: f64, a: f64, b: f64) -> bool {
    let m = lambda.abs();
    m > a * (1.0 + BAND_TOL) && m <= b * (1.0 + BAND_TOL)
}

pub fn well_report<L: Landscape + ?Sized>(
    h: &L,
    p: usize,
    sigma: &SpherePoint,
    params: &WellParams,
    with_spectrum: bool,
) -> WellReport {
    let geom = LocalGeometry::at(h, sigma);
    report_from_geometry(&geom, p, params, with_spectrum)
}

pub fn report_from_geometry(geom: &LocalGeometry, p: usize, params: &WellParams, with_spectrum: bool) -> WellReport {
    let n = geom.frame.dim() as f64;
    let grad_norm = geom.grad_norm();
    let margins = WellMargins {
        radial: geom.radial - bulk_edge(p) - params.gamma,
        gradient: params.delta * n.sqrt() - grad_norm,
    };
    let is_well = margins.radial > 0.0 && margins.gradient > 0.0;
    let (eigenvalues, classification) = if with_spectrum {
        let ev = crate::linalg::sym_eigenvalues_desc(&geom.riemannian_hessian);
        let class = classify_spectrum(&ev, params.gamma, params.k);
        (ev, class)
    } else {
        (Vec::new(), None)
    };
    WellReport { grad_norm, radial: geom.radial, is_well, eigenvalues, classification, margins }
}

/// `ι_i = 10^{i-k-5} γ` for `i = 0..=k+3`.
pub fn ladder(gamma: f64, k: usize) -> Vec<f64> {
    (0..k + 4).map(|i| gamma * 10f64.powi(i as i32 - k as i32 - 5)).collect()
}

/// First rung `i` with no `|λ|` in `[ι_i, ι_{i+1})`; `d` counts `|λ| ≤ ι_i`.
pub fn classify_spectrum(eigenvalues: &[f64], gamma: f64, k: usize) -> Option<Classification> {
    let l = ladder(gamma, k);
    for i in 0..l.len() - 1 {
        let (lo, hi) = (l[i], l[i + 1]);
        let occupied = eigenvalues.iter().any(|&x| {
            let m = x.abs();
            m > lo * (1.0 + BAND_TOL) && m < hi
        });
        if !occupied {
            let d = eigenvalues.iter().filter(|&&x| in_near_zero(x, lo)).count();
            return Some(Classification { rung: i, d, iota: lo });
        }
    }
    None
}

/// Classify the type of a well. Points that are not `(γ,δ)`-wells are refused.
pub fn classify_well(h: &Hamiltonian, sigma: &SpherePoint, params: &WellParams) -> Result<Option<Classification>> {
    let r = well_report(h, h.p(), sigma, params, true);
    if !r.is_well {
        return Err(Error::InvalidParameter(format!(
            "not a well: radial margin {:.3e}, gradient margin {:.3e}",
            r.margins.radial, r.margins.gradient
        )));
    }
    Ok(r.classification)
}

/// Spectral part of the typed-well condition.
pub fn spectrum_has_type(eigenvalues: &[f64], wt: &WellType) -> bool {
    let d = eigenvalues.iter().filter(|&&x| in_near_zero(x, wt.a)).count();
    d == wt.d && !eigenvalues.iter().any(|&x| in_band(x, wt.a, wt.b))
}

pub fn typed_well_from(geom: &LocalGeometry, p: usize, gamma: f64, delta: f64, wt: &WellType) -> bool {
    let n = geom.frame.dim() as f64;
    if !(geom.grad_norm() < delta * n.sqrt() && geom.radial - bulk_edge(p) > gamma) {
        return false;
    }
    spectrum_has_type(&crate::linalg::sym_eigenvalues_desc(&geom.riemannian_hessian), wt)
}

/// Membership in `W(γ, δ, d, [a, b])`.
pub fn in_typed_well(h: &Hamiltonian, sigma: &SpherePoint, gamma: f64, delta: f64, wt: &WellType) -> bool {
    typed_well_from(&LocalGeometry::at(h, sigma), h.p(), gamma, delta, wt)
}

/// The lenient type `W(γ/τ, δ^{1/τ}, d, [τι, 3ι/τ])`.
pub fn lenient_parameters(gamma: f64, delta: f64, d: usize, iota: f64, tau: f64) -> Result<(f64, f64, WellType)> {
    if !(1.0..=1.6).contains(&tau) {
        return Err(Error::InvalidParameter(format!("tau={tau} outside [1, 1.6]")));
    }
    Ok((gamma / tau, delta.powf(1.0 / tau), WellType::new(d, tau * iota, 3.0 * iota / tau)?))
}

pub fn in_lenient_well(
    h: &Hamiltonian,
    sigma: &SpherePoint,
    gamma: f64,
    delta: f64,
    d: usize,
    iota: f64,
    tau: f64,
) -> Result<bool> {
    let (g, dl, wt) = lenient_parameters(gamma, delta, d, iota, tau)?;
    Ok(in_typed_well(h, sigma, g, dl, &wt))
}

/// Smallest `τ ≥ 1` at which each lenient well condition holds, unclipped
/// (`+∞` when no `τ` works).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LenienceBreakdown {
    pub radial: f64,
    pub gradient: f64,
    pub spectral: f64,
}

impl LenienceBreakdown {
    pub fn worst(&self) -> f64 {
        self.radial.max(self.gradient).max(self.spectral)
    }
}

pub fn lenience(
    grad_norm: f64,
    radial: f64,
    eigenvalues: &[f64],
    n: usize,
    p: usize,
    gamma: f64,
    delta: f64,
    d: usize,
    iota: f64,
) -> LenienceBreakdown {
    let margin = radial - bulk_edge(p);
    let radial_tau = if margin > 0.0 { (gamma / margin).max(1.0) } else { f64::INFINITY };
    let g = grad_norm / (n as f64).sqrt();
    let gradient_tau = if g < delta {
        1.0
    } else if g >= 1.0 || !g.is_finite() {
        f64::INFINITY
    } else {
        (delta.ln() / g.ln()).max(1.0)
    };
    let mut mags: Vec<f64> = eigenvalues.iter().map(|x| x.abs()).collect();
    mags.sort_by(f64::total_cmp);
    let mut spectral = 1.0f64;
    if d > mags.len() {
        spectral = f64::INFINITY;
    } else {
        if d > 0 {
            spectral = spectral.max(mags[d - 1] / iota);
        }
        if d < mags.len() {
            spectral = if mags[d] > 0.0 { spectral.max(3.0 * iota / mags[d]) } else { f64::INFINITY };
        }
    }
    if mags.iter().any(|m| !m.is_finite()) {
        spectral = f64::INFINITY;
    }
    LenienceBreakdown { radial: radial_tau, gradient: gradient_tau, spectral }
}

/// Orthonormal `N×d` basis of a subspace of `σ^⊥`.
#[derive(Clone, Debug, PartialEq)]
pub struct Subspace {
    pub basis: DMatrix<f64>,
}

impl Subspace {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }
}

/// Indices (into a descending list) of eigenvalues in `[-ι, ι]`.
pub fn near_zero_indices(eigenvalues: &[f64], iota: f64) -> Vec<usize> {
    (0..eigenvalues.len()).filter(|&i| in_near_zero(eigenvalues[i], iota)).collect()
}

/// Eigenvectors of a symmetric matrix with eigenvalues in `[-ι, ι]`, as columns
/// in the matrix's own coordinates.
pub fn near_zero_of_matrix(m: &DMatrix<f64>, iota: f64) -> (Vec<f64>, DMatrix<f64>) {
    let (vals, vecs) = sym_eigen_desc(m);
    let idx = near_zero_indices(&vals, iota);
    let cols = DMatrix::from_fn(m.nrows(), idx.len(), |r, c| vecs[(r, idx[c])]);
    (idx.iter().map(|&i| vals[i]).collect(), cols)
}

/// `U_ι(σ; H)` in ambient coordinates.
pub fn near_zero_eigenspace<L: Landscape + ?Sized>(h: &L, sigma: &SpherePoint, iota: f64) -> Subspace {
    let geom = LocalGeometry::at(h, sigma);
    let (_, cols) = near_zero_of_matrix(&geom.riemannian_hessian, iota);
    Subspace { basis: geom.frame.matrix_to_ambient(&cols) }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DkDiagnostics {
    pub eigenvalues_in_band: Vec<f64>,
    pub projector_distance: f64,
    pub perturbation_norm: f64,
    /// `projector_distance / perturbation_norm` (0 when unperturbed).
    pub ratio: f64,
    /// The sin-theta constant `1/(1.9ι)`.
    pub bound_constant: f64,
}

fn band_violations(vals: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    vals.iter().copied().filter(|&x| in_band(x, lo, hi)).collect()
}

/// Track the near-zero eigenspace of `a` to `a2`. Requires `a` to have exactly
/// `d` eigenvalues in `[-ι, ι]` and none in `±(ι, 3ι]`; then checks `a2` has
/// exactly `d` in `[-1.1ι, 1.1ι]` and none in `±[1.1ι, 2.9ι]`.
pub fn davis_kahan_track(a: &DMatrix<f64>, a2: &DMatrix<f64>, iota: f64, d: usize) -> Result<(Subspace, DkDiagnostics)> {
    let (vals, vecs) = sym_eigen_desc(a);
    let idx = near_zero_indices(&vals, iota);
    let bad = band_violations(&vals, iota, 3.0 * iota);
    if idx.len() != d || !bad.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "reference matrix has {} eigenvalues in [-ι, ι] (want {d}) and {:?} in ±(ι, 3ι]",
            idx.len(),
            bad
        )));
    }
    let v = DMatrix::from_fn(a.nrows(), d, |r, c| vecs[(r, idx[c])]);
    let (vals2, vecs2) = sym_eigen_desc(a2);
    let idx2 = near_zero_indices(&vals2, 1.1 * iota);
    let bad2 = band_violations(&vals2, 1.1 * iota, 2.9 * iota);
    if !bad2.is_empty() {
        return Err(Error::Tracking { eigenvalues: bad2, detail: "eigenvalue in ±[1.1ι, 2.9ι]".into() });
    }
    if idx2.len() != d {
        return Err(Error::Tracking {
            eigenvalues: idx2.iter().map(|&i| vals2[i]).collect(),
            detail: format!("{} eigenvalues in [-1.1ι, 1.1ι], expected {d}", idx2.len()),
        });
    }
    let v2 = DMatrix::from_fn(a2.nrows(), d, |r, c| vecs2[(r, idx2[c])]);
    let pd = if d == 0 { 0.0 } else { projector_distance(&v, &v2) };
    let pert = sym_opnorm(&(a2 - a));
    let diag = DkDiagnostics {
        eigenvalues_in_band: idx2.iter().map(|&i| vals2[i]).collect(),
        projector_distance: pd,
        perturbation_norm: pert,
        ratio: if pert > 0.0 { pd / pert } else { 0.0 },
        bound_constant: 1.0 / (1.9 * iota),
    };
    Ok((Subspace { basis: v2 }, diag))
}

/// `H'(σ) = H(σ) + μN(<σ,w>/N)^p`, i.e. `G += μ N^{-(p-1)/2} w^{⊗p}`.
pub fn plant_well(h: &Hamiltonian, w: &SpherePoint, mu: f64) -> Result<Hamiltonian> {
    if w.dim() != h.n() {
        return Err(Error::DimensionMismatch { expected: h.n(), got: w.dim() });
    }
    if mu == 0.0 {
        return Ok(h.clone());
    }
    let p = h.p();
    let factors: Vec<&[f64]> = vec![w.coords(); p];
    let spike = DenseTensor::outer(&factors);
    let mut out = h.clone();
    out.coefficients_mut().add_scaled(mu * h.normalization(), &spike);
    Ok(out)
}

/// Coordinates `Vᵀx` of an ambient vector in an orthonormal basis.
pub fn coordinates_in(basis: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    (0..basis.ncols()).map(|j| crate::linalg::dot(&col_to_vec(basis, j), x)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ladder_values() {
        let l = ladder(0.1, 2);
        let want = [1e-8, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3];
        assert_eq!(l.len(), 6);
        for (a, b) in l.iter().zip(want) {
            assert!((a / b - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn lenience_radial_inversion() {
        let edge = bulk_edge(3);
        let b = lenience(0.0, edge + 0.2 / 1.25, &[-1.0; 4], 10, 3, 0.2, 0.1, 0, 0.01);
        assert!((b.radial - 1.25).abs() < 1e-12);
        assert_eq!(b.gradient, 1.0);
        assert_eq!(b.spectral, 1.0);
    }
}
