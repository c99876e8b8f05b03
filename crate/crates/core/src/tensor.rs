//! Dense coefficient tensors and the pure p-spin Hamiltonians built on them.
//!
//! Coefficients are stored raw (not symmetrized) in row-major order. All
//! derivatives are obtained by contracting one mode at a time, so evaluation,
//! gradient and Hessian each cost `O(N^p)`.

use std::sync::OnceLock;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm};
use crate::par::{self, Execution};
use crate::seeds;

/// Default cap on the bytes of a single coefficient tensor.
pub const DEFAULT_MEMORY_BUDGET: u128 = 2 << 30;

const PAR_THRESHOLD: usize = 1 << 15;
const PAR_CHUNK: usize = 1 << 13;

#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor {
    order: usize,
    dim: usize,
    data: Vec<f64>,
}

fn checked_len(order: usize, dim: usize) -> Option<usize> {
    let mut len = 1usize;
    for _ in 0..order {
        len = len.checked_mul(dim)?;
    }
    Some(len)
}

impl DenseTensor {
    pub fn new(order: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        let len = checked_len(order, dim)
            .ok_or_else(|| Error::InvalidParameter(format!("{dim}^{order} overflows")))?;
        if data.len() != len {
            return Err(Error::DimensionMismatch { expected: len, got: data.len() });
        }
        Ok(Self { order, dim, data })
    }

    pub fn zeros(order: usize, dim: usize) -> Self {
        let len = checked_len(order, dim).expect("tensor size overflows usize");
        Self { order, dim, data: vec![0.0; len] }
    }

    /// `v_1 ⊗ v_2 ⊗ ... ⊗ v_k`, all factors of the same length.
    pub fn outer(factors: &[&[f64]]) -> Self {
        let dim = factors.first().map_or(1, |f| f.len());
        let mut data = vec![1.0];
        for f in factors {
            assert_eq!(f.len(), dim, "factors must share a length");
            let mut next = Vec::with_capacity(data.len() * dim);
            for a in &data {
                next.extend(f.iter().map(|b| a * b));
            }
            data = next;
        }
        Self { order: factors.len(), dim, data }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm(&self.data)
    }

    /// Contract mode `mode` with `v`; the result has order one less.
    pub fn contract_mode(&self, mode: usize, v: &[f64]) -> DenseTensor {
        self.contract_mode_with(default_exec(self.data.len()), mode, v)
    }

    pub fn contract_mode_with(&self, exec: Execution, mode: usize, v: &[f64]) -> DenseTensor {
        assert!(mode < self.order, "mode {mode} out of range for order {}", self.order);
        assert_eq!(v.len(), self.dim);
        let data = contract_raw(exec, &self.data, self.order, self.dim, mode, v);
        DenseTensor { order: self.order - 1, dim: self.dim, data }
    }

    /// Contract every mode that has `Some(v)`; free modes keep their relative order.
    pub fn contract(&self, assign: &[Option<&[f64]>]) -> DenseTensor {
        assert_eq!(assign.len(), self.order);
        let mut order = self.order;
        let mut cur: Option<Vec<f64>> = None;
        for m in (0..self.order).rev() {
            if let Some(v) = assign[m] {
                assert_eq!(v.len(), self.dim);
                let src = cur.as_deref().unwrap_or(&self.data);
                let next = contract_raw(default_exec(src.len()), src, order, self.dim, m, v);
                cur = Some(next);
                order -= 1;
            }
        }
        DenseTensor { order, dim: self.dim, data: cur.unwrap_or_else(|| self.data.clone()) }
    }

    /// `<A, v_1 ⊗ ... ⊗ v_k>`.
    pub fn multilinear(&self, vs: &[&[f64]]) -> f64 {
        let assign: Vec<Option<&[f64]>> = vs.iter().map(|v| Some(*v)).collect();
        self.contract(&assign).data[0]
    }

    pub fn scale(&mut self, c: f64) {
        self.data.iter_mut().for_each(|x| *x *= c);
    }

    /// `self += c * other`.
    pub fn add_scaled(&mut self, c: f64, other: &DenseTensor) {
        assert_eq!((self.order, self.dim), (other.order, other.dim));
        crate::linalg::axpy(c, &other.data, &mut self.data);
    }
}

fn default_exec(len: usize) -> Execution {
    if len >= PAR_THRESHOLD {
        Execution::Parallel
    } else {
        Execution::Sequential
    }
}

/// Contract mode `mode` of a row-major `order`-tensor of side `n` with `v`.
fn contract_raw(exec: Execution, data: &[f64], order: usize, n: usize, mode: usize, v: &[f64]) -> Vec<f64> {
    let inner = n.pow((order - mode - 1) as u32);
    let outer = data.len() / (n * inner);
    let mut out = vec![0.0; outer * inner];
    if out.len() < PAR_THRESHOLD / n.max(1) {
        kernel(data, n, inner, v, &mut out, 0);
    } else {
        par::for_chunks_mut(exec, &mut out, PAR_CHUNK, |ci, chunk| {
            kernel(data, n, inner, v, chunk, ci * PAR_CHUNK)
        });
    }
    out
}

fn kernel(data: &[f64], n: usize, inner: usize, v: &[f64], out: &mut [f64], offset: usize) {
    if inner == 1 {
        for (k, o) in out.iter_mut().enumerate() {
            let row = offset + k;
            *o = dot(&data[row * n..(row + 1) * n], v);
        }
        return;
    }
    let mut k = 0;
    while k < out.len() {
        let idx = offset + k;
        let o = idx / inner;
        let j0 = idx % inner;
        let seg = (inner - j0).min(out.len() - k);
        let dst = &mut out[k..k + seg];
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            let start = (o * n + i) * inner + j0;
            crate::linalg::axpy(vi, &data[start..start + seg], dst);
        }
        k += seg;
    }
}

/// Lower bound on the injective (operator) norm `max <A, x_1 ⊗ ... ⊗ x_k>` over
/// unit vectors, by alternating power iteration from `restarts` random starts.
/// The best value seen is returned, so the estimate never decreases when
/// `iters` or `restarts` grow.
pub fn tensor_opnorm_estimate(a: &DenseTensor, iters: usize, restarts: usize, seed: u64) -> f64 {
    let k = a.order();
    let n = a.dim();
    if k == 0 {
        return a.data[0].abs();
    }
    if k == 1 {
        return a.frobenius_norm();
    }
    let mut best = 0.0f64;
    for r in 0..restarts.max(1) {
        let mut rng = seeds::rng(seeds::split(seed, r as u64));
        let mut xs: Vec<Vec<f64>> = (0..k).map(|_| seeds::sphere_vec(&mut rng, n, 1.0)).collect();
        best = best.max(a.multilinear(&xs.iter().map(|x| x.as_slice()).collect::<Vec<_>>()).abs());
        for _ in 0..iters {
            for s in 0..k {
                let assign: Vec<Option<&[f64]>> =
                    (0..k).map(|t| if t == s { None } else { Some(xs[t].as_slice()) }).collect();
                let y = a.contract(&assign).into_data();
                let ny = norm(&y);
                best = best.max(ny);
                if ny > 0.0 {
                    xs[s] = y.iter().map(|v| v / ny).collect();
                }
            }
        }
    }
    best
}

/// Raw Gaussian coefficients of a Hamiltonian with their sampling seed
/// (`None` when the tensor was derived from others).
#[derive(Clone, Debug, PartialEq)]
pub struct DisorderTensor {
    tensor: DenseTensor,
    seed: Option<u64>,
}

impl DisorderTensor {
    pub fn from_tensor(tensor: DenseTensor, seed: Option<u64>) -> Result<Self> {
        if tensor.order() < 2 || tensor.dim() < 2 {
            return Err(Error::InvalidParameter(format!(
                "need p >= 2 and N >= 2, got p={} N={}",
                tensor.order(),
                tensor.dim()
            )));
        }
        Ok(Self { tensor, seed })
    }

    pub fn from_entries(n: usize, p: usize, entries: Vec<f64>, seed: Option<u64>) -> Result<Self> {
        Self::from_tensor(DenseTensor::new(p, n, entries)?, seed)
    }

    pub fn zeros(n: usize, p: usize) -> Self {
        Self { tensor: DenseTensor::zeros(p, n), seed: None }
    }

    pub fn p(&self) -> usize {
        self.tensor.order()
    }

    pub fn n(&self) -> usize {
        self.tensor.dim()
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn entries(&self) -> &[f64] {
        self.tensor.data()
    }

    pub fn tensor(&self) -> &DenseTensor {
        &self.tensor
    }

    pub fn tensor_mut(&mut self) -> &mut DenseTensor {
        self.seed = None;
        &mut self.tensor
    }
}

pub fn required_bytes(n: usize, p: usize) -> u128 {
    (n as u128).pow(p as u32) * 8
}

pub fn sample_disorder(n: usize, p: usize, seed: u64) -> Result<DisorderTensor> {
    sample_disorder_with_budget(n, p, seed, DEFAULT_MEMORY_BUDGET)
}

pub fn sample_disorder_with_budget(n: usize, p: usize, seed: u64, budget: u128) -> Result<DisorderTensor> {
    if n < 2 || p < 2 {
        return Err(Error::InvalidParameter(format!("need N >= 2 and p >= 2, got N={n} p={p}")));
    }
    let required = required_bytes(n, p);
    if required > budget {
        return Err(Error::MemoryBudget { required, budget });
    }
    let mut rng = seeds::rng(seed);
    let len = n.pow(p as u32);
    let data = seeds::gaussian_vec(&mut rng, len);
    Ok(DisorderTensor { tensor: DenseTensor { order: p, dim: n, data }, seed: Some(seed) })
}

/// A smooth function on `R^N` with exact first and second derivatives.
/// Sphere calculus and the well tracker are written against this trait.
pub trait Landscape: Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
    fn hessian(&self, x: &[f64]) -> DMatrix<f64>;

    fn gradient_hessian(&self, x: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
        (self.gradient(x), self.hessian(x))
    }
}

/// `H(σ) = N^{-(p-1)/2} <G, σ^{⊗p}>`.
#[derive(Clone, Debug, PartialEq)]
pub struct Hamiltonian {
    disorder: DisorderTensor,
    normalization: f64,
}

impl Hamiltonian {
    pub fn new(disorder: DisorderTensor) -> Self {
        let normalization = (disorder.n() as f64).powf(-(disorder.p() as f64 - 1.0) / 2.0);
        Self { disorder, normalization }
    }

    pub fn sample(n: usize, p: usize, seed: u64) -> Result<Self> {
        Ok(Self::new(sample_disorder(n, p, seed)?))
    }

    pub fn zero(n: usize, p: usize) -> Self {
        Self::new(DisorderTensor::zeros(n, p))
    }

    pub fn n(&self) -> usize {
        self.disorder.n()
    }

    pub fn p(&self) -> usize {
        self.disorder.p()
    }

    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    pub fn disorder(&self) -> &DisorderTensor {
        &self.disorder
    }

    pub fn coefficients(&self) -> &DenseTensor {
        self.disorder.tensor()
    }

    pub fn coefficients_mut(&mut self) -> &mut DenseTensor {
        self.disorder.tensor_mut()
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), got: x.len() });
        }
        Ok(())
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.expand(x).value())
    }

    pub fn try_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        Ok(self.expand(x).gradient())
    }

    pub fn try_hessian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.check_dim(x)?;
        Ok(self.expand(x).hessian())
    }

    /// Derivative cache at `x`, sharing once-contracted tensors between
    /// value, gradient and Hessian.
    pub fn expand<'a>(&'a self, x: &'a [f64]) -> Expansion<'a> {
        assert_eq!(x.len(), self.n(), "point has wrong dimension");
        Expansion { ham: self, x, once: [OnceLock::new(), OnceLock::new(), OnceLock::new()] }
    }

    /// `a·self + b·other` coefficientwise.
    pub fn combine(&self, a: f64, other: &Hamiltonian, b: f64) -> Result<Hamiltonian> {
        self.check_shape(other)?;
        let mut t = self.coefficients().clone();
        t.scale(a);
        t.add_scaled(b, other.coefficients());
        Ok(Hamiltonian::new(DisorderTensor { tensor: t, seed: None }))
    }

    pub fn scaled(&self, c: f64) -> Hamiltonian {
        let mut t = self.coefficients().clone();
        t.scale(c);
        Hamiltonian::new(DisorderTensor { tensor: t, seed: None })
    }

    pub fn check_shape(&self, other: &Hamiltonian) -> Result<()> {
        if self.n() != other.n() || self.p() != other.p() {
            return Err(Error::ShapeMismatch { n1: self.n(), p1: self.p(), n2: other.n(), p2: other.p() });
        }
        Ok(())
    }
}

impl Landscape for Hamiltonian {
    fn dim(&self) -> usize {
        self.n()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.expand(x).value()
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.expand(x).gradient()
    }

    fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        self.expand(x).hessian()
    }

    fn gradient_hessian(&self, x: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
        let e = self.expand(x);
        (e.gradient(), e.hessian())
    }
}

pub struct Expansion<'a> {
    ham: &'a Hamiltonian,
    x: &'a [f64],
    once: [OnceLock<Vec<f64>>; 3],
}

impl Expansion<'_> {
    /// Coefficients with mode `m` contracted against `x` (order p-1).
    fn once(&self, m: usize) -> &[f64] {
        self.once[m].get_or_init(|| {
            let g = self.ham.coefficients();
            contract_raw(default_exec(g.len()), g.data(), g.order(), g.dim(), m, self.x)
        })
    }

    fn reduced(&self, m: usize) -> DenseTensor {
        let p = self.ham.p();
        DenseTensor { order: p - 1, dim: self.ham.n(), data: self.once(m).to_vec() }
    }

    pub fn value(&self) -> f64 {
        let t = self.reduced(0);
        let assign = vec![Some(self.x); t.order()];
        self.ham.normalization * t.contract(&assign).data[0]
    }

    pub fn gradient(&self) -> Vec<f64> {
        let p = self.ham.p();
        let n = self.ham.n();
        let mut g = vec![0.0; n];
        for s in 0..p {
            let m = if s == 0 { 1 } else { 0 };
            let keep = s - usize::from(s > m);
            let t = self.reduced(m);
            let assign: Vec<Option<&[f64]>> =
                (0..p - 1).map(|i| if i == keep { None } else { Some(self.x) }).collect();
            let part = t.contract(&assign);
            crate::linalg::axpy(1.0, part.data(), &mut g);
        }
        g.iter_mut().for_each(|v| *v *= self.ham.normalization);
        g
    }

    pub fn hessian(&self) -> DMatrix<f64> {
        let p = self.ham.p();
        let n = self.ham.n();
        let c = self.ham.normalization;
        let mut h = DMatrix::<f64>::zeros(n, n);
        if p == 2 {
            let g = self.ham.coefficients().data();
            for i in 0..n {
                for j in 0..n {
                    h[(i, j)] = c * (g[i * n + j] + g[j * n + i]);
                }
            }
            return h;
        }
        for s in 0..p {
            for t in s + 1..p {
                let m = (0..3).find(|m| *m != s && *m != t).unwrap();
                let s2 = s - usize::from(s > m);
                let t2 = t - usize::from(t > m);
                let red = self.reduced(m);
                let assign: Vec<Option<&[f64]>> = (0..p - 1)
                    .map(|i| if i == s2 || i == t2 { None } else { Some(self.x) })
                    .collect();
                let mat = red.contract(&assign);
                let d = mat.data();
                for i in 0..n {
                    for j in 0..n {
                        let v = d[i * n + j];
                        h[(i, j)] += v;
                        h[(j, i)] += v;
                    }
                }
            }
        }
        h * c
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationParam(f64);

impl CorrelationParam {
    pub fn new(q: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::InvalidParameter(format!("correlation q={q} outside [0,1]")));
        }
        Ok(Self(q))
    }

    pub fn q(self) -> f64 {
        self.0
    }
}

/// `q·H + √(1-q²)·H'` with `H'` sampled fresh from `seed`.
pub fn correlated_copy(h: &Hamiltonian, q: CorrelationParam, seed: u64) -> Result<Hamiltonian> {
    let fresh = Hamiltonian::sample(h.n(), h.p(), seed)?;
    let q = q.q();
    h.combine(q, &fresh, (1.0 - q * q).max(0.0).sqrt())
}

/// Euclidean distance between coefficient tensors.
pub fn coeff_distance(a: &Hamiltonian, b: &Hamiltonian) -> Result<f64> {
    a.check_shape(b)?;
    Ok(crate::linalg::dist(a.coefficients().data(), b.coefficients().data()))
}

/// Settings for probing the bounded-derivative set `K_N`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundednessProbe {
    /// The constant `C` in `|∇^k H(σ)|_op < C N^{1-k/2}`.
    pub constant: f64,
    pub opnorm_iters: usize,
    pub opnorm_restarts: usize,
    pub seed: u64,
}

impl BoundednessProbe {
    pub fn new(constant: f64) -> Self {
        Self { constant, opnorm_iters: 20, opnorm_restarts: 2, seed: 0x5EED }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnReport {
    pub inside: bool,
    /// `C - max ratio` over all probes and orders.
    pub slack: f64,
    /// Largest `|∇^k H|_op / N^{1-k/2}` seen, per order `k = 0..=p`.
    pub max_ratios: Vec<f64>,
}

impl KnReport {
    pub fn worst_ratio(&self) -> f64 {
        self.max_ratios.iter().fold(0.0f64, |a, &b| a.max(b))
    }
}

/// Best `|f(x)|` over unit `x` for the symmetric form
/// `f(x) = Σ_{|S|=k} <G, x on S, σ elsewhere>`, by power iteration.
fn symmetric_form_max(h: &Hamiltonian, sigma: &[f64], k: usize, starts: &[Vec<f64>], iters: usize) -> f64 {
    let p = h.p();
    let subsets = subsets_of_size(p, k);
    let g = h.coefficients();
    let form = |x: &[f64]| -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; x.len()];
        for s in &subsets {
            for &j in s {
                let assign: Vec<Option<&[f64]>> = (0..p)
                    .map(|slot| {
                        if slot == j {
                            None
                        } else if s.contains(&slot) {
                            Some(x)
                        } else {
                            Some(sigma)
                        }
                    })
                    .collect();
                crate::linalg::axpy(1.0, g.contract(&assign).data(), &mut grad);
            }
        }
        // Euler: <x, ∇f(x)> = k f(x)
        (dot(x, &grad) / k as f64, grad)
    };
    let mut best = 0.0f64;
    for start in starts {
        let ns = norm(start);
        if ns == 0.0 {
            continue;
        }
        let mut x: Vec<f64> = start.iter().map(|v| v / ns).collect();
        for _ in 0..=iters {
            let (f, grad) = form(&x);
            best = best.max(f.abs());
            let sign = if f < 0.0 { -1.0 } else { 1.0 };
            let ng = norm(&grad);
            if ng == 0.0 {
                break;
            }
            x = grad.iter().map(|v| sign * v / ng).collect();
        }
    }
    best
}

fn subsets_of_size(p: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for mask in 0u32..(1 << p) {
        if mask.count_ones() as usize == k {
            out.push((0..p).filter(|i| mask & (1 << i) != 0).collect());
        }
    }
    out
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// Ratios `|∇^k H(σ)|_op / N^{1-k/2}` for `k = 0..p-1` at one probe point.
/// Orders `k ≥ 3` use power iteration, warm-started at `σ` itself.
pub fn derivative_ratios(h: &Hamiltonian, sigma: &[f64], cfg: &BoundednessProbe) -> Vec<f64> {
    let p = h.p();
    let nf = h.n() as f64;
    let e = h.expand(sigma);
    let mut out = Vec::with_capacity(p);
    out.push(e.value().abs() / nf);
    out.push(norm(&e.gradient()) / nf.sqrt());
    if p > 2 {
        out.push(crate::linalg::sym_opnorm(&e.hessian()));
    }
    for k in 3..p {
        let starts = opnorm_starts(h.n(), Some(sigma), cfg, k as u64);
        let f = symmetric_form_max(h, sigma, k, &starts, cfg.opnorm_iters);
        let op = h.normalization() * factorial(k) * f;
        out.push(op * nf.powf(k as f64 / 2.0 - 1.0));
    }
    out
}

/// Ratio for the constant top derivative `∇^p H`, warm-started at `hints`.
pub fn top_derivative_ratio(h: &Hamiltonian, hints: &[Vec<f64>], cfg: &BoundednessProbe) -> f64 {
    let p = h.p();
    let nf = h.n() as f64;
    if p == 2 {
        let e = h.expand(&vec![0.0; h.n()][..]).hessian();
        return crate::linalg::sym_opnorm(&e);
    }
    let mut starts = opnorm_starts(h.n(), None, cfg, p as u64);
    starts.extend(hints.iter().cloned());
    let zero = vec![0.0; h.n()];
    let f = symmetric_form_max(h, &zero, p, &starts, cfg.opnorm_iters);
    h.normalization() * factorial(p) * f * nf.powf(p as f64 / 2.0 - 1.0)
}

fn opnorm_starts(n: usize, warm: Option<&[f64]>, cfg: &BoundednessProbe, tag: u64) -> Vec<Vec<f64>> {
    let mut rng = seeds::rng(seeds::split(cfg.seed, tag));
    let mut starts: Vec<Vec<f64>> = warm.map(|w| vec![w.to_vec()]).unwrap_or_default();
    for _ in 0..cfg.opnorm_restarts {
        starts.push(seeds::sphere_vec(&mut rng, n, 1.0));
    }
    starts
}

/// Probe-based membership test for `K_N`: every derivative order `k = 0..=p`
/// must satisfy `|∇^k H(σ)|_op < C N^{1-k/2}` at every probe. Finite probing
/// can only refute membership; a `true` answer is evidence, not proof.
pub fn in_k_n(h: &Hamiltonian, probes: &[Vec<f64>], cfg: &BoundednessProbe) -> Result<KnReport> {
    in_k_n_with_hints(h, probes, probes, cfg)
}

/// As [`in_k_n`], warm-starting the top-order power iteration only at `hints`.
pub fn in_k_n_with_hints(h: &Hamiltonian, probes: &[Vec<f64>], hints: &[Vec<f64>], cfg: &BoundednessProbe) -> Result<KnReport> {
    let n = h.n();
    let radius = (n as f64).sqrt() * (1.0 + 1e-9);
    for x in probes {
        if x.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: x.len() });
        }
        if norm(x) > radius {
            return Err(Error::InvalidParameter(format!("probe of norm {} outside the ball", norm(x))));
        }
    }
    let p = h.p();
    let mut max_ratios = vec![0.0f64; p + 1];
    for x in probes {
        for (k, r) in derivative_ratios(h, x, cfg).into_iter().enumerate() {
            max_ratios[k] = max_ratios[k].max(r);
        }
    }
    max_ratios[p] = top_derivative_ratio(h, hints, cfg);
    let worst = max_ratios.iter().fold(0.0f64, |a, &b| a.max(b));
    Ok(KnReport { inside: worst < cfg.constant, slack: cfg.constant - worst, max_ratios })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ones(n: usize, p: usize) -> Hamiltonian {
        Hamiltonian::new(DisorderTensor::from_entries(n, p, vec![1.0; n.pow(p as u32)], None).unwrap())
    }

    #[test]
    fn all_ones_cube_values() {
        let h = ones(2, 3);
        let s = [1.0, 1.0];
        assert!((h.evaluate(&s).unwrap() - 4.0).abs() < 1e-12);
        let g = h.try_gradient(&s).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-12 && (g[1] - 6.0).abs() < 1e-12);
        let hs = h.try_hessian(&s).unwrap();
        for v in hs.iter() {
            assert!((v - 6.0).abs() < 1e-12);
        }
    }

    #[test]
    fn contract_matches_naive_sum() {
        let g = sample_disorder(3, 3, 4).unwrap();
        let t = g.tensor();
        let v = [0.3, -1.2, 0.7];
        let c = t.contract_mode(1, &v);
        for i in 0..3 {
            for k in 0..3 {
                let want: f64 = (0..3).map(|j| t.data()[i * 9 + j * 3 + k] * v[j]).sum();
                assert!((c.data()[i * 3 + k] - want).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_error() {
        let h = ones(2, 3);
        assert!(matches!(h.evaluate(&[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn memory_budget_refuses() {
        let e = sample_disorder_with_budget(100, 4, 1, 1 << 20).unwrap_err();
        assert!(matches!(e, Error::MemoryBudget { required: 800_000_000, .. }));
    }

    #[test]
    fn outer_product_opnorm() {
        let v = [0.6, 0.8, 0.0];
        let t = DenseTensor::outer(&[&v, &v, &v]);
        assert!((tensor_opnorm_estimate(&t, 20, 2, 1) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn p2_hessian_is_constant() {
        let h = Hamiltonian::sample(5, 2, 9).unwrap();
        let a = h.hessian(&[1.0, 0.0, 2.0, 0.0, -1.0]);
        let b = h.hessian(&[0.0, 3.0, 0.0, 1.0, 0.0]);
        assert!((a - b).norm() < 1e-13);
    }
}
