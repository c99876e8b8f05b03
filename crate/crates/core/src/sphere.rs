//! Calculus on the sphere `S_N = {|σ| = √N}`.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm};
use crate::seeds;
use crate::tensor::Landscape;

/// Relative tolerance on `|σ| = √N` accepted by sphere operations.
pub const SPHERE_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpherePoint {
    coords: Vec<f64>,
}

impl SpherePoint {
    /// Validates `|coords| = √N` to relative error `SPHERE_TOL`.
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        let expected = (coords.len() as f64).sqrt();
        let nrm = norm(&coords);
        if coords.is_empty() || !nrm.is_finite() || (nrm - expected).abs() > SPHERE_TOL * expected {
            return Err(Error::OffSphere { norm: nrm, expected });
        }
        Ok(Self { coords })
    }

    /// Rescales a nonzero vector onto the sphere.
    pub fn normalize(mut coords: Vec<f64>) -> Result<Self> {
        let nrm = norm(&coords);
        if !(nrm > 0.0 && nrm.is_finite()) {
            return Err(Error::InvalidParameter("cannot normalize a zero or non-finite vector".into()));
        }
        let c = (coords.len() as f64).sqrt() / nrm;
        coords.iter_mut().for_each(|x| *x *= c);
        Ok(Self { coords })
    }

    pub fn random<R: Rng>(n: usize, rng: &mut R) -> Self {
        Self { coords: seeds::sphere_vec(rng, n, (n as f64).sqrt()) }
    }

    /// `√N e_axis`.
    pub fn axis(n: usize, axis: usize) -> Self {
        let mut coords = vec![0.0; n];
        coords[axis] = (n as f64).sqrt();
        Self { coords }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    /// `<σ, ρ>/N`.
    pub fn overlap(&self, other: &SpherePoint) -> f64 {
        dot(&self.coords, &other.coords) / self.dim() as f64
    }

    pub fn distance(&self, other: &SpherePoint) -> f64 {
        crate::linalg::dist(&self.coords, &other.coords)
    }
}

impl AsRef<[f64]> for SpherePoint {
    fn as_ref(&self) -> &[f64] {
        &self.coords
    }
}

/// A vector orthogonal to its base point. The base is not stored; the
/// constructor checks orthogonality against the base it is given.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TangentVector {
    ambient: Vec<f64>,
}

impl TangentVector {
    pub fn new(base: &SpherePoint, ambient: Vec<f64>) -> Result<Self> {
        if ambient.len() != base.dim() {
            return Err(Error::DimensionMismatch { expected: base.dim(), got: ambient.len() });
        }
        let n = base.dim() as f64;
        let tol = 1e-8 * norm(&ambient) * n.sqrt() + 1e-300;
        if dot(&ambient, base.coords()).abs() / n.sqrt() > tol {
            return Err(Error::InvalidParameter("vector is not tangent at the base point".into()));
        }
        Ok(Self { ambient })
    }

    pub fn zero(n: usize) -> Self {
        Self { ambient: vec![0.0; n] }
    }

    pub fn ambient(&self) -> &[f64] {
        &self.ambient
    }

    pub fn into_ambient(self) -> Vec<f64> {
        self.ambient
    }

    pub fn norm(&self) -> f64 {
        norm(&self.ambient)
    }
}

/// `x - σ<σ,x>/N`.
pub fn tangent_project(sigma: &SpherePoint, x: &[f64]) -> TangentVector {
    TangentVector { ambient: project_out(sigma.coords(), x) }
}

pub(crate) fn project_out(sigma: &[f64], x: &[f64]) -> Vec<f64> {
    let c = dot(sigma, x) / dot(sigma, sigma);
    x.iter().zip(sigma).map(|(xi, si)| xi - c * si).collect()
}

/// Orthonormal basis of `σ^⊥` given by the Householder reflection sending the
/// reference axis `e_a` to `-σ/√N`; the frame is its other `N-1` columns.
/// Applying the frame costs `O(N)` per vector and `O(N²)` per matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentFrame {
    base: SpherePoint,
    axis: usize,
    w: Vec<f64>,
    beta: f64,
}

impl TangentFrame {
    /// Frame with reference axis `e_1`, switching to the axis of the largest
    /// coordinate when σ is within `1e-3` of `-√N e_1`.
    pub fn new(base: &SpherePoint) -> Self {
        let n = base.dim();
        let s0 = base.coords()[0] / (n as f64).sqrt();
        let axis = if s0 < -1.0 + 1e-3 {
            (0..n).max_by(|&i, &j| base.coords()[i].total_cmp(&base.coords()[j])).unwrap()
        } else {
            0
        };
        Self::with_axis(base, axis)
    }

    pub fn with_axis(base: &SpherePoint, axis: usize) -> Self {
        let n = base.dim();
        let sq = (n as f64).sqrt();
        let mut w: Vec<f64> = base.coords().iter().map(|x| x / sq).collect();
        w[axis] += 1.0;
        let beta = 2.0 / dot(&w, &w);
        Self { base: base.clone(), axis, w, beta }
    }

    pub fn base(&self) -> &SpherePoint {
        &self.base
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    fn reflect(&self, x: &mut [f64]) {
        let c = self.beta * dot(&self.w, x);
        crate::linalg::axpy(-c, &self.w, x);
    }

    /// Frame coordinates (length N-1) to an ambient tangent vector.
    pub fn to_ambient(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len() + 1, self.dim());
        let mut z = Vec::with_capacity(self.dim());
        z.extend_from_slice(&y[..self.axis]);
        z.push(0.0);
        z.extend_from_slice(&y[self.axis..]);
        self.reflect(&mut z);
        z
    }

    /// Ambient vector to frame coordinates (its component along σ is dropped).
    pub fn to_frame(&self, x: &[f64]) -> Vec<f64> {
        let mut z = x.to_vec();
        self.reflect(&mut z);
        z.remove(self.axis);
        z
    }

    /// `Fᵀ M F` for an ambient `N×N` matrix.
    pub fn conjugate(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.dim();
        let w = nalgebra::DVector::from_column_slice(&self.w);
        let mw = m * &w;
        let wm = m.transpose() * &w;
        let wmw = w.dot(&mw);
        let b = self.beta;
        let full = DMatrix::from_fn(n, n, |i, j| {
            m[(i, j)] - b * w[i] * wm[j] - b * mw[i] * w[j] + b * b * wmw * w[i] * w[j]
        });
        full.remove_row(self.axis).remove_column(self.axis)
    }

    /// Frame-coordinate columns `(N-1)×d` to ambient `N×d`.
    pub fn matrix_to_ambient(&self, v: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.dim(), v.ncols());
        for j in 0..v.ncols() {
            let col: Vec<f64> = v.column(j).iter().copied().collect();
            out.set_column(j, &nalgebra::DVector::from_vec(self.to_ambient(&col)));
        }
        out
    }

    /// Ambient `N×d` columns to frame coordinates `(N-1)×d`.
    pub fn matrix_to_frame(&self, v: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.dim() - 1, v.ncols());
        for j in 0..v.ncols() {
            let col: Vec<f64> = v.column(j).iter().copied().collect();
            out.set_column(j, &nalgebra::DVector::from_vec(self.to_frame(&col)));
        }
        out
    }

    /// The `N×(N-1)` orthonormal column matrix.
    pub fn columns(&self) -> DMatrix<f64> {
        self.matrix_to_ambient(&DMatrix::identity(self.dim() - 1, self.dim() - 1))
    }
}

pub fn make_frame(sigma: &SpherePoint) -> TangentFrame {
    TangentFrame::new(sigma)
}

fn check_dim<L: Landscape + ?Sized>(h: &L, sigma: &SpherePoint) {
    assert_eq!(h.dim(), sigma.dim(), "landscape and point dimensions differ");
}

/// `P_σ^⊥ ∇H(σ)`.
pub fn spherical_gradient<L: Landscape + ?Sized>(h: &L, sigma: &SpherePoint) -> TangentVector {
    check_dim(h, sigma);
    tangent_project(sigma, &h.gradient(sigma.coords()))
}

/// `<σ, ∇H(σ)>/N`.
pub fn radial_derivative<L: Landscape + ?Sized>(h: &L, sigma: &SpherePoint) -> f64 {
    check_dim(h, sigma);
    dot(sigma.coords(), &h.gradient(sigma.coords())) / sigma.dim() as f64
}

/// `Fᵀ ∇²H(σ) F - ∂_rad H(σ) I` in frame coordinates.
pub fn riemannian_hessian<L: Landscape + ?Sized>(h: &L, sigma: &SpherePoint, frame: &TangentFrame) -> DMatrix<f64> {
    check_dim(h, sigma);
    let (g, hess) = h.gradient_hessian(sigma.coords());
    riemannian_hessian_from(&g, &hess, sigma, frame)
}

pub fn riemannian_hessian_from(
    grad: &[f64],
    hess: &DMatrix<f64>,
    sigma: &SpherePoint,
    frame: &TangentFrame,
) -> DMatrix<f64> {
    let radial = dot(sigma.coords(), grad) / sigma.dim() as f64;
    let mut m = frame.conjugate(hess);
    for i in 0..m.nrows() {
        m[(i, i)] -= radial;
    }
    m
}

/// Local data at a point: gradient norms, radial derivative and the Riemannian
/// Hessian in a frame, computed from one derivative evaluation.
#[derive(Clone, Debug)]
pub struct LocalGeometry {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub spherical_gradient: Vec<f64>,
    pub radial: f64,
    pub frame: TangentFrame,
    pub riemannian_hessian: DMatrix<f64>,
    /// Euclidean Hessian, kept for callers that need it again.
    pub hessian: DMatrix<f64>,
}

impl LocalGeometry {
    pub fn at<L: Landscape + ?Sized>(h: &L, sigma: &SpherePoint) -> Self {
        check_dim(h, sigma);
        let (gradient, hessian) = h.gradient_hessian(sigma.coords());
        let value = h.value(sigma.coords());
        let frame = TangentFrame::new(sigma);
        let radial = dot(sigma.coords(), &gradient) / sigma.dim() as f64;
        let riemannian_hessian = riemannian_hessian_from(&gradient, &hessian, sigma, &frame);
        let spherical_gradient = project_out(sigma.coords(), &gradient);
        Self { value, gradient, spherical_gradient, radial, frame, riemannian_hessian, hessian }
    }

    pub fn grad_norm(&self) -> f64 {
        norm(&self.spherical_gradient)
    }
}

/// `T_σ(u) = cos θ σ + sin θ √N u/|u|`, `θ = |u|/√N`, defined for `|u| < √N`.
pub fn exp_map(sigma: &SpherePoint, u: &TangentVector) -> Result<SpherePoint> {
    let n = sigma.dim();
    if u.ambient().len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: u.ambient().len() });
    }
    let theta = u.norm() / (n as f64).sqrt();
    if theta >= 1.0 {
        return Err(Error::Chart(format!("|u|/√N = {theta} >= 1")));
    }
    Ok(SpherePoint { coords: exp_unchecked(sigma.coords(), u.ambient()) })
}

/// The exponential map formula without the chart restriction.
pub fn exp_unchecked(sigma: &[f64], u: &[f64]) -> Vec<f64> {
    let n = sigma.len() as f64;
    let t = dot(u, u) / n;
    let c = chart_coefficients(t);
    sigma.iter().zip(u).map(|(s, v)| c.cos * s + c.sinc * v).collect()
}

/// Inverse of [`exp_map`] on the chart `<σ,x> > 0`, `θ < 1`.
pub fn log_map(sigma: &SpherePoint, x: &SpherePoint) -> Result<TangentVector> {
    let n = sigma.dim();
    if x.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x.dim() });
    }
    let nf = n as f64;
    let c = dot(sigma.coords(), x.coords()) / nf;
    if c <= 0.0 {
        return Err(Error::Chart(format!("<σ,x>/N = {c} is not positive")));
    }
    let perp = project_out(sigma.coords(), x.coords());
    let pn = norm(&perp);
    let theta = (pn / nf.sqrt()).atan2(c);
    if theta >= 1.0 {
        return Err(Error::Chart(format!("geodesic angle {theta} >= 1")));
    }
    if pn == 0.0 {
        return Ok(TangentVector::zero(n));
    }
    let scale = theta * nf.sqrt() / pn;
    Ok(TangentVector { ambient: perp.iter().map(|v| v * scale).collect() })
}

/// `cos √t`, `sin √t / √t` and their first two derivatives in `t`,
/// where `t = |y|²/N` parametrizes the exponential chart.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChartCoefficients {
    pub cos: f64,
    pub sinc: f64,
    pub dcos: f64,
    pub dsinc: f64,
    pub d2cos: f64,
    pub d2sinc: f64,
}

pub fn chart_coefficients(t: f64) -> ChartCoefficients {
    let (cos, sinc, dsinc, d2sinc);
    if t < 0.05 {
        // Taylor series; cancellation makes the closed forms inaccurate here.
        let t2 = t * t;
        let t3 = t2 * t;
        let t4 = t3 * t;
        cos = 1.0 - t / 2.0 + t2 / 24.0 - t3 / 720.0 + t4 / 40320.0 - t4 * t / 3628800.0;
        sinc = 1.0 - t / 6.0 + t2 / 120.0 - t3 / 5040.0 + t4 / 362880.0 - t4 * t / 39916800.0;
        dsinc = -1.0 / 6.0 + t / 60.0 - t2 / 1680.0 + t3 / 90720.0 - t4 / 7983360.0;
        d2sinc = 1.0 / 60.0 - t / 840.0 + t2 / 30240.0 - t3 / 1995840.0;
    } else {
        let r = t.sqrt();
        cos = r.cos();
        sinc = r.sin() / r;
        dsinc = (cos - sinc) / (2.0 * t);
        d2sinc = (-sinc / 2.0 - 3.0 * dsinc) / (2.0 * t);
    }
    ChartCoefficients { cos, sinc, dcos: -sinc / 2.0, dsinc, d2cos: -dsinc / 2.0, d2sinc }
}
