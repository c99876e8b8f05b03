//! Carrying the near-zero eigenbasis from one tracked point to the next.

use nalgebra::DMatrix;

use super::FollowError;
use crate::error::{Error, Result};
use crate::sphere::{log_map, LocalGeometry, SpherePoint};
use crate::tensor::Hamiltonian;
use crate::wells::{coordinates_in, davis_kahan_track, DkDiagnostics};

/// Smallest acceptable Gram-Schmidt pivot, measured against the unit input vectors.
pub const MIN_PIVOT: f64 = 1e-3;

/// Gram-Schmidt of `W Wᵀ v_i` for the orthonormal columns `v_i` of `basis`,
/// where `target` has orthonormal columns `W`. Keeps the nested-span order.
pub fn project_and_orthonormalize(target: &DMatrix<f64>, basis: &DMatrix<f64>) -> std::result::Result<DMatrix<f64>, FollowError> {
    let projected = target * (target.transpose() * basis);
    let mut q = projected.clone();
    for j in 0..q.ncols() {
        let mut v = projected.column(j).into_owned();
        for _ in 0..2 {
            for i in 0..j {
                let c = q.column(i).dot(&v);
                v.axpy(-c, &q.column(i).into_owned(), 1.0);
            }
        }
        let nv = v.norm();
        if !(nv >= MIN_PIVOT) {
            return Err(FollowError::GramSchmidtDegenerate { pivot: nv });
        }
        q.set_column(j, &(v / nv));
    }
    Ok(q)
}

fn dk_error(e: Error) -> FollowError {
    match e {
        Error::Tracking { eigenvalues, detail } => FollowError::DavisKahanFailed { eigenvalues, detail },
        other => FollowError::DavisKahanFailed { eigenvalues: Vec::new(), detail: other.to_string() },
    }
}

/// Transport with both Hessians written in one coordinate system: checks the
/// Davis-Kahan conditions for `(a, a2)`, then projects `basis` onto the
/// `1.1ι` eigenspace of `a2` and orthonormalizes.
pub fn transport_basis_matrices(
    a: &DMatrix<f64>,
    a2: &DMatrix<f64>,
    basis: &DMatrix<f64>,
    iota: f64,
    d: usize,
) -> std::result::Result<(DMatrix<f64>, DkDiagnostics), FollowError> {
    if basis.ncols() != d {
        return Err(FollowError::PreconditionFailed { quantity: format!("basis has {} columns, expected {d}", basis.ncols()) });
    }
    let (sub, diag) = davis_kahan_track(a, a2, iota, d).map_err(dk_error)?;
    let out = project_and_orthonormalize(&sub.basis, basis)?;
    Ok((out, diag))
}

/// Riemannian Hessian lifted to `ℝ^N`, with the normal direction pushed to
/// `-4ι` so that it stays out of every band the checks look at.
fn lifted_hessian(geom: &LocalGeometry, sigma: &SpherePoint, iota: f64) -> DMatrix<f64> {
    let n = sigma.dim();
    let cols = geom.frame.columns();
    let mut m = &cols * &geom.riemannian_hessian * cols.transpose();
    let s = sigma.coords();
    let shift = -4.0 * iota / n as f64;
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] += shift * s[i] * s[j];
        }
    }
    m
}

/// Move the ambient orthonormal `basis` of `U_ι(σ; H)` to a basis of
/// `U_{1.1ι}(σ̃; H̃)`. Returns ambient columns tangent at `σ̃`.
pub fn transport_basis(
    h: &Hamiltonian,
    h2: &Hamiltonian,
    sigma: &SpherePoint,
    sigma2: &SpherePoint,
    basis: &DMatrix<f64>,
    iota: f64,
    d: usize,
) -> std::result::Result<(DMatrix<f64>, DkDiagnostics), FollowError> {
    let g1 = LocalGeometry::at(h, sigma);
    let g2 = LocalGeometry::at(h2, sigma2);
    let a = lifted_hessian(&g1, sigma, iota);
    let a2 = lifted_hessian(&g2, sigma2, iota);
    transport_basis_matrices(&a, &a2, basis, iota, d)
}

/// Coordinates in `basis` of the projection of `log_σ(target)` onto its span.
pub fn choose_u_oracle(sigma: &SpherePoint, basis: &DMatrix<f64>, target: &SpherePoint) -> Result<Vec<f64>> {
    let v = log_map(sigma, target)?;
    if v.norm() >= (sigma.dim() as f64).sqrt() {
        return Err(Error::Chart(format!("target at geodesic length {} outside the chart", v.norm())));
    }
    Ok(coordinates_in(basis, v.ambient()))
}
