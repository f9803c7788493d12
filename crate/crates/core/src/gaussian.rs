//! Gaussian distributions and the prior in reduced coordinates.
//!
//! With the CIS basis `U` (`U^T C_prior U = I`), the coordinates `z = U^T x`
//! of `x ~ N(mu, C_prior)` are `N(U^T mu, I)`. The informed and non-informed
//! blocks are therefore independent under the prior, and the conditional
//! prior of `z_perp` given `z_r` does not depend on `z_r`.

use alloc::vec::Vec;

use core::f64::consts::PI;
use libm::log;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Result};
use crate::linalg::SpdMatrix;
use crate::reduction::Projector;

#[derive(Debug, Clone)]
pub struct GaussianDist {
    mean: DVector<f64>,
    cov: SpdMatrix,
}

impl GaussianDist {
    pub fn new(mean: DVector<f64>, cov: SpdMatrix) -> Result<Self> {
        if mean.len() != cov.dim() {
            return Err(invalid!("mean has length {}, covariance is {}-dimensional", mean.len(), cov.dim()));
        }
        Ok(Self { mean, cov })
    }

    pub fn standard(n: usize) -> Self {
        Self { mean: DVector::zeros(n), cov: SpdMatrix::identity(n) }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &SpdMatrix {
        &self.cov
    }

    pub fn log_pdf(&self, x: &DVector<f64>) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(invalid!("point has length {}, distribution is {}-dimensional", x.len(), self.dim()));
        }
        let d = x - &self.mean;
        let n = self.dim() as f64;
        Ok(-0.5 * (n * log(2.0 * PI) + self.cov.log_det() + self.cov.inv_quad_form(&d)))
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        &self.mean + self.cov.color(&standard_normal(rng, self.dim()))
    }

    /// `count` i.i.d. draws, one per row.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> DMatrix<f64> {
        let rows: Vec<_> = (0..count).map(|_| self.sample_one(rng).transpose()).collect();
        if rows.is_empty() {
            return DMatrix::zeros(0, self.dim());
        }
        DMatrix::from_rows(&rows)
    }
}

pub(crate) fn standard_normal<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Coordinates of a point in the informed / non-informed decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedCoordinates {
    pub z_r: DVector<f64>,
    pub z_perp: Option<DVector<f64>>,
}

/// Marginal prior of the informed coordinates, `N(U_r^T mu, I_r)`.
pub fn reduced_prior(prior: &GaussianDist, proj: &Projector) -> Result<GaussianDist> {
    check_projector(prior, proj)?;
    GaussianDist::new(proj.u_r().transpose() * prior.mean(), SpdMatrix::identity(proj.rank()))
}

/// Conditional prior of `z_perp` given `z_r`: `N(U_perp^T mu, I)` whatever
/// `z_r` is. Its mean is the deterministic completion used by the
/// prior-mean approximation of the likelihood.
pub fn conditional_perp(prior: &GaussianDist, proj: &Projector, z_r: &DVector<f64>) -> Result<GaussianDist> {
    check_projector(prior, proj)?;
    if z_r.len() != proj.rank() {
        return Err(invalid!("z_r has length {}, projector rank is {}", z_r.len(), proj.rank()));
    }
    let k = proj.dim() - proj.rank();
    GaussianDist::new(perp_prior_mean(prior, proj), SpdMatrix::identity(k))
}

pub(crate) fn perp_prior_mean(prior: &GaussianDist, proj: &Projector) -> DVector<f64> {
    proj.u_perp().transpose() * prior.mean()
}

fn check_projector(prior: &GaussianDist, proj: &Projector) -> Result<()> {
    if proj.dim() != prior.dim() {
        return Err(invalid!("projector is {}-dimensional, prior is {}-dimensional", proj.dim(), prior.dim()));
    }
    let res = proj.prior_orthonormality_residual(prior.cov().matrix());
    if res > 1e-6 {
        return Err(invalid!("projector basis is not orthonormal under this prior covariance (residual {res:e})"));
    }
    Ok(())
}
