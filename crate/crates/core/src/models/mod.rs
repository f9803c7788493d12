//! Forward models, the Gaussian likelihood and the likelihood abstraction the
//! samplers and pipelines work against.

mod elliptic;
mod gomos;
mod kl;

pub use elliptic::{elliptic1d_forward, Elliptic1d, EllipticKlModel};
pub use gomos::{gomos_forward, GomosModel};
pub use kl::{kernel_matrix, kl_build, KernelKind, KlField};

use alloc::boxed::Box;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicUsize, Ordering};

use core::f64::consts::PI;
use libm::log;
use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, CisError, Result};
use crate::linalg::SpdMatrix;

/// Default relative step of [`fd_jacobian`].
pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// A deterministic map `R^n -> R^m`.
pub trait ForwardModel {
    fn n_in(&self) -> usize;
    fn n_out(&self) -> usize;
    fn evaluate(&self, x: &DVector<f64>) -> Result<DVector<f64>>;

    /// `m x n` Jacobian; central finite differences unless overridden.
    fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        fd_jacobian(self, x, DEFAULT_FD_STEP)
    }
}

impl<M: ForwardModel + ?Sized> ForwardModel for &M {
    fn n_in(&self) -> usize {
        (**self).n_in()
    }
    fn n_out(&self) -> usize {
        (**self).n_out()
    }
    fn evaluate(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        (**self).evaluate(x)
    }
    fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        (**self).jacobian(x)
    }
}

/// Central differences with step `h_rel * max(1, |x_i|)` per coordinate.
pub fn fd_jacobian<M: ForwardModel + ?Sized>(model: &M, x: &DVector<f64>, h_rel: f64) -> Result<DMatrix<f64>> {
    if !(h_rel > 0.0) {
        return Err(invalid!("finite-difference step must be positive, got {h_rel}"));
    }
    let n = model.n_in();
    if x.len() != n {
        return Err(invalid!("point has length {}, model expects {}", x.len(), n));
    }
    let mut jac = DMatrix::zeros(model.n_out(), n);
    let mut xp = x.clone();
    for i in 0..n {
        let h = h_rel * x[i].abs().max(1.0);
        xp[i] = x[i] + h;
        let fp = model.evaluate(&xp)?;
        xp[i] = x[i] - h;
        let fm = model.evaluate(&xp)?;
        xp[i] = x[i];
        jac.set_column(i, &((fp - fm) / (2.0 * h)));
    }
    Ok(jac)
}

/// `F(x) = M x`.
#[derive(Debug, Clone)]
pub struct LinearModel {
    matrix: DMatrix<f64>,
}

impl LinearModel {
    pub fn new(matrix: DMatrix<f64>) -> Self {
        Self { matrix }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
}

impl ForwardModel for LinearModel {
    fn n_in(&self) -> usize {
        self.matrix.ncols()
    }
    fn n_out(&self) -> usize {
        self.matrix.nrows()
    }
    fn evaluate(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.n_in() {
            return Err(invalid!("point has length {}, model expects {}", x.len(), self.n_in()));
        }
        Ok(&self.matrix * x)
    }
    fn jacobian(&self, _x: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(self.matrix.clone())
    }
}

/// Scalar polynomial `F(x) = sum_k c_k x^k`.
#[derive(Debug, Clone)]
pub struct Polynomial1d {
    coeffs: Vec<f64>,
}

impl Polynomial1d {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    /// `F(x) = coeff * x^power`.
    pub fn monomial(coeff: f64, power: usize) -> Self {
        let mut coeffs = alloc::vec![0.0; power + 1];
        coeffs[power] = coeff;
        Self { coeffs }
    }

    pub fn value(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }
}

impl ForwardModel for Polynomial1d {
    fn n_in(&self) -> usize {
        1
    }
    fn n_out(&self) -> usize {
        1
    }
    fn evaluate(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != 1 {
            return Err(invalid!("scalar model evaluated at a point of length {}", x.len()));
        }
        Ok(DVector::from_element(1, self.value(x[0])))
    }
}

/// Anything that yields `log L(x)` for a parameter vector.
pub trait LogLikelihood {
    fn dim(&self) -> usize;
    fn log_likelihood(&self, x: &DVector<f64>) -> Result<f64>;

    /// Evaluates a batch in order. Implementations may evaluate in parallel
    /// but must return results in input order.
    fn log_likelihood_batch(&self, xs: &[DVector<f64>]) -> Result<Vec<f64>> {
        xs.iter().map(|x| self.log_likelihood(x)).collect()
    }
}

impl<L: LogLikelihood + ?Sized> LogLikelihood for &L {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn log_likelihood(&self, x: &DVector<f64>) -> Result<f64> {
        (**self).log_likelihood(x)
    }
    fn log_likelihood_batch(&self, xs: &[DVector<f64>]) -> Result<Vec<f64>> {
        (**self).log_likelihood_batch(xs)
    }
}

impl<L: LogLikelihood + ?Sized> LogLikelihood for Box<L> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn log_likelihood(&self, x: &DVector<f64>) -> Result<f64> {
        (**self).log_likelihood(x)
    }
    fn log_likelihood_batch(&self, xs: &[DVector<f64>]) -> Result<Vec<f64>> {
        (**self).log_likelihood_batch(xs)
    }
}

/// `log L(x)` with a failed model evaluation read as zero likelihood, for
/// points a sampler proposed rather than chose.
pub fn log_likelihood_or_zero<L: LogLikelihood + ?Sized>(lik: &L, x: &DVector<f64>) -> Result<f64> {
    match lik.log_likelihood(x) {
        Err(CisError::Model(_)) => Ok(f64::NEG_INFINITY),
        other => other,
    }
}

/// Batch form of [`log_likelihood_or_zero`]. Falls back to one evaluation at
/// a time only when the batch fails.
pub fn log_likelihood_batch_or_zero<L: LogLikelihood + ?Sized>(lik: &L, xs: &[DVector<f64>]) -> Result<Vec<f64>> {
    match lik.log_likelihood_batch(xs) {
        Err(CisError::Model(_)) => xs.iter().map(|x| log_likelihood_or_zero(lik, x)).collect(),
        other => other,
    }
}

/// `log N(y; F(x), C_eps)`, normalization included.
#[derive(Debug, Clone)]
pub struct GaussianLikelihood<M> {
    model: M,
    data: DVector<f64>,
    noise: SpdMatrix,
    log_norm: f64,
}

impl<M: ForwardModel> GaussianLikelihood<M> {
    pub fn new(model: M, data: DVector<f64>, noise: SpdMatrix) -> Result<Self> {
        if data.len() != model.n_out() || noise.dim() != model.n_out() {
            return Err(invalid!(
                "model has {} outputs, data has {} and noise covariance {}",
                model.n_out(),
                data.len(),
                noise.dim()
            ));
        }
        let log_norm = -0.5 * (data.len() as f64 * log(2.0 * PI) + noise.log_det());
        Ok(Self { model, data, noise, log_norm })
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    pub fn data(&self) -> &DVector<f64> {
        &self.data
    }

    pub fn noise(&self) -> &SpdMatrix {
        &self.noise
    }

    /// `J(x)^T C_eps^{-1} (y - F(x))`.
    pub fn grad_log_likelihood(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let residual = &self.data - self.model.evaluate(x)?;
        let jac = self.model.jacobian(x)?;
        Ok(jac.transpose() * self.noise.solve(&residual))
    }
}

impl<M: ForwardModel> LogLikelihood for GaussianLikelihood<M> {
    fn dim(&self) -> usize {
        self.model.n_in()
    }

    fn log_likelihood(&self, x: &DVector<f64>) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(invalid!("point has length {}, model expects {}", x.len(), self.dim()));
        }
        let pred = self.model.evaluate(x)?;
        if pred.iter().any(|v| !v.is_finite()) {
            return Err(CisError::Model("forward model returned non-finite output".into()));
        }
        Ok(self.log_norm - 0.5 * self.noise.inv_quad_form(&(pred - &self.data)))
    }
}

/// Wraps a closure as a likelihood. Handy for toy targets.
pub struct FnLikelihood<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&DVector<f64>) -> f64> FnLikelihood<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&DVector<f64>) -> f64> LogLikelihood for FnLikelihood<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn log_likelihood(&self, x: &DVector<f64>) -> Result<f64> {
        Ok((self.f)(x))
    }
}

/// Counts every likelihood evaluation that goes through it.
pub struct CountingLikelihood<L> {
    inner: L,
    count: AtomicUsize,
}

impl<L: LogLikelihood> CountingLikelihood<L> {
    pub fn new(inner: L) -> Self {
        Self { inner, count: AtomicUsize::new(0) }
    }

    pub fn count(&self) -> usize {
        self.count.load(Ordering::Relaxed)
    }

    pub fn inner(&self) -> &L {
        &self.inner
    }
}

impl<L: LogLikelihood> LogLikelihood for CountingLikelihood<L> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn log_likelihood(&self, x: &DVector<f64>) -> Result<f64> {
        self.count.fetch_add(1, Ordering::Relaxed);
        self.inner.log_likelihood(x)
    }
    fn log_likelihood_batch(&self, xs: &[DVector<f64>]) -> Result<Vec<f64>> {
        self.count.fetch_add(xs.len(), Ordering::Relaxed);
        self.inner.log_likelihood_batch(xs)
    }
}
