//! Small dense helpers on slices and nalgebra matrices.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    // four accumulators keep the loop vectorizable
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let j = 4 * i;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for j in 4 * chunks..a.len() {
        s += a[j] * b[j];
    }
    s
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn scaled(a: &[f64], c: f64) -> Vec<f64> {
    a.iter().map(|x| x * c).collect()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Eigen-decomposition of a symmetric matrix, eigenvalues sorted descending.
/// Column `i` of the returned matrix is the eigenvector of value `i`.
pub fn sym_eigen_desc(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), DMatrix::zeros(0, 0));
    }
    let sym = symmetrized(m);
    let eig = match finite_eigen(sym) {
        Some(e) => e,
        None => return (vec![f64::NAN; n], DMatrix::from_element(n, n, f64::NAN)),
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Eigenvalues only, descending.
pub fn sym_eigenvalues_desc(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let n = m.nrows();
    let mut v: Vec<f64> = match finite_eigen(symmetrized(m)) {
        Some(e) => e.eigenvalues.iter().copied().collect(),
        None => return vec![f64::NAN; n],
    };
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// Bounded-iteration eigensolver; `None` for non-finite input or no convergence.
fn finite_eigen(m: DMatrix<f64>) -> Option<SymmetricEigen<f64, nalgebra::Dyn>> {
    if m.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let cap = 1000 * m.nrows().max(10);
    SymmetricEigen::try_new(m, f64::EPSILON, cap)
}

fn symmetrized(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest singular value via the symmetric eigenproblem of `MᵀM`.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    let g = m.transpose() * m;
    sym_eigenvalues_desc(&g).first().map_or(0.0, |v| v.max(0.0).sqrt())
}

/// Modified Gram-Schmidt on the columns of `m`, in order.
/// Returns the orthonormal columns and the smallest pivot (norm of the residual
/// of each column before normalization, relative to the column's own norm).
pub fn gram_schmidt(m: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let mut q = m.clone();
    let mut min_pivot = f64::INFINITY;
    for j in 0..q.ncols() {
        let orig = q.column(j).norm();
        let mut v: DVector<f64> = q.column(j).into_owned();
        for _ in 0..2 {
            for i in 0..j {
                let c = q.column(i).dot(&v);
                v.axpy(-c, &q.column(i).into_owned(), 1.0);
            }
        }
        let nv = v.norm();
        let pivot = if orig > 0.0 { nv / orig } else { 0.0 };
        min_pivot = min_pivot.min(pivot);
        if nv > 0.0 {
            v /= nv;
        }
        q.set_column(j, &v);
    }
    (q, min_pivot)
}

/// Operator-norm distance between the orthogonal projectors onto the column spans.
pub fn projector_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let pa = a * a.transpose();
    let pb = b * b.transpose();
    let d = pa - pb;
    sym_eigenvalues_desc(&d).iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

pub fn col_to_vec(m: &DMatrix<f64>, j: usize) -> Vec<f64> {
    m.column(j).iter().copied().collect()
}

/// Largest absolute eigenvalue of a symmetric matrix.
pub fn sym_opnorm(m: &DMatrix<f64>) -> f64 {
    let ev = sym_eigenvalues_desc(m);
    if ev.iter().any(|v| v.is_nan()) {
        return f64::NAN;
    }
    ev.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}
