//! Closed forms for linear models with Gaussian prior and noise.

use nalgebra::{DMatrix, DVector};

use super::projector::Projector;
use crate::error::{invalid, Result};
use crate::gaussian::GaussianDist;
use crate::linalg::{generalized_eig, symmetrize, EigenOrder, SpdMatrix};

/// Posterior of `y = F x + eps`, `eps ~ N(0, C_eps)`, `x ~ prior`:
/// `C_P = (F^T C_eps^{-1} F + C_prior^{-1})^{-1}`,
/// `mu_P = C_P (F^T C_eps^{-1} y + C_prior^{-1} mu_prior)`.
pub fn blg_posterior(f: &DMatrix<f64>, c_eps: &SpdMatrix, prior: &GaussianDist, y: &DVector<f64>) -> Result<GaussianDist> {
    if f.ncols() != prior.dim() || f.nrows() != c_eps.dim() || y.len() != f.nrows() {
        return Err(invalid!(
            "inconsistent dimensions: F is {}x{}, noise {}, data {}, prior {}",
            f.nrows(),
            f.ncols(),
            c_eps.dim(),
            y.len(),
            prior.dim()
        ));
    }
    let cinv_f = c_eps.solve_matrix(f);
    let precision = SpdMatrix::new(symmetrize(&(f.transpose() * &cinv_f + prior.cov().inverse())))?;
    let cov = SpdMatrix::new(symmetrize(&precision.inverse()))?;
    let rhs = cinv_f.transpose() * y + prior.cov().solve(prior.mean());
    let mean = precision.solve(&rhs);
    GaussianDist::new(mean, cov)
}

/// Posterior obtained by replacing the likelihood with `L(Pi_r x)`, i.e. the
/// linear model `F Pi_r`.
pub fn projected_model_posterior(
    f: &DMatrix<f64>,
    c_eps: &SpdMatrix,
    prior: &GaussianDist,
    y: &DVector<f64>,
    proj: &Projector,
) -> Result<GaussianDist> {
    blg_posterior(&(f * proj.pi_r()), c_eps, prior, y)
}

/// Posterior obtained with the marginalized likelihood:
/// `mu = Pi mu_P + (I - Pi) mu_prior`,
/// `C = Pi C_P Pi^T + (I - Pi) C_prior (I - Pi)^T`.
pub fn approx_posterior_blg(proj: &Projector, posterior: &GaussianDist, prior: &GaussianDist) -> Result<GaussianDist> {
    let n = prior.dim();
    if posterior.dim() != n || proj.dim() != n {
        return Err(invalid!("projector, posterior and prior dimensions differ"));
    }
    let pi = proj.pi_r();
    let q = DMatrix::identity(n, n) - pi;
    let mean = pi * posterior.mean() + &q * prior.mean();
    let cov = pi * posterior.cov().matrix() * pi.transpose() + &q * prior.cov().matrix() * q.transpose();
    GaussianDist::new(mean, SpdMatrix::new(symmetrize(&cov))?)
}

/// Low-rank update built from the pencil `(H, C_prior^{-1})`.
#[derive(Debug, Clone)]
pub struct SpantiniProjector {
    /// Basis `u_i = C_prior^{-1} w_i`, eigenvalues `1 / (1 + delta_i)`.
    pub projector: Projector,
    /// Descending `delta_i`.
    pub deltas: DVector<f64>,
    /// `w_i`, normalized so that `W^T C_prior^{-1} W = I`.
    pub w: DMatrix<f64>,
}

/// `Pi_r = W_r U_r^T` from the leading eigenvectors of `(H, C_prior^{-1})`.
pub fn spantini_projector(h: &DMatrix<f64>, c_prior_inv: &SpdMatrix, r: usize) -> Result<SpantiniProjector> {
    let n = c_prior_inv.dim();
    if r > n {
        return Err(invalid!("rank {r} exceeds dimension {n}"));
    }
    let eig = generalized_eig(h, c_prior_inv, EigenOrder::Descending)?;
    let w = eig.eigenvectors;
    let u = c_prior_inv.matrix() * &w;
    let lambdas = eig.eigenvalues.map(|d| 1.0 / (1.0 + d));
    let projector = Projector::from_parts(u, w.clone(), r, lambdas);
    Ok(SpantiniProjector { projector, deltas: eig.eigenvalues, w })
}

/// `C_prior - sum_{i <= r} delta_i / (1 + delta_i) w_i w_i^T`.
pub fn spantini_cov_approx(h: &DMatrix<f64>, c_prior_inv: &SpdMatrix, r: usize) -> Result<SpdMatrix> {
    let sp = spantini_projector(h, c_prior_inv, r)?;
    let mut c = c_prior_inv.inverse();
    for i in 0..r {
        let d = sp.deltas[i];
        let wi = sp.w.column(i);
        c -= wi * wi.transpose() * (d / (1.0 + d));
    }
    SpdMatrix::new(symmetrize(&c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{forstner_distance, max_abs, principal_angles};
    use crate::reduction::cis_projector_with_rank;
    use libm::log;
    use nalgebra::dmatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct Instance {
        f: DMatrix<f64>,
        c_eps: SpdMatrix,
        prior: GaussianDist,
        y: DVector<f64>,
    }

    fn instance(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Instance {
        let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let cp = &g * g.transpose() + DMatrix::identity(n, n) * 0.3;
        let f = DMatrix::from_fn(m, n, |_, _| rng.random_range(-2.0..2.0));
        let noise = DVector::from_fn(m, |_, _| rng.random_range(0.05..0.5));
        Instance {
            f,
            c_eps: SpdMatrix::from_diagonal(&noise).unwrap(),
            prior: GaussianDist::new(DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)), SpdMatrix::new(cp).unwrap())
                .unwrap(),
            y: DVector::from_fn(m, |_, _| rng.random_range(-3.0..3.0)),
        }
    }

    #[test]
    fn scalar_case_closed_form() {
        let prior = GaussianDist::standard(1);
        let post = blg_posterior(&dmatrix![0.05], &SpdMatrix::identity(1), &prior, &DVector::from_element(1, 30.0)).unwrap();
        let c = 1.0 / (1.0 + 0.0025);
        assert!((post.cov().matrix()[(0, 0)] - c).abs() < 1e-15);
        assert!((post.mean()[0] - c * 1.5).abs() < 1e-14);
    }

    #[test]
    fn zero_model_returns_prior() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let inst = instance(&mut rng, 4, 2);
        let post = blg_posterior(&DMatrix::zeros(2, 4), &inst.c_eps, &inst.prior, &inst.y).unwrap();
        assert!((post.mean() - inst.prior.mean()).norm() < 1e-12);
        assert!(max_abs(&(post.cov().matrix() - inst.prior.cov().matrix())) < 1e-12);
    }

    #[test]
    fn spantini_cov_examples() {
        let h = DMatrix::from_diagonal(&DVector::from_vec(alloc::vec![3.0, 1.0, 0.0]));
        let c = spantini_cov_approx(&h, &SpdMatrix::identity(3), 1).unwrap();
        let expect = DMatrix::from_diagonal(&DVector::from_vec(alloc::vec![0.25, 1.0, 1.0]));
        assert!(max_abs(&(c.matrix() - expect)) < 1e-14);
        let c0 = spantini_cov_approx(&h, &SpdMatrix::identity(3), 0).unwrap();
        assert!(max_abs(&(c0.matrix() - DMatrix::identity(3, 3))) < 1e-14);
    }

    #[test]
    fn full_rank_update_recovers_posterior() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let inst = instance(&mut rng, 6, 4);
        let post = blg_posterior(&inst.f, &inst.c_eps, &inst.prior, &inst.y).unwrap();
        let h = inst.f.transpose() * inst.c_eps.solve_matrix(&inst.f);
        let pinv = SpdMatrix::new(inst.prior.cov().inverse()).unwrap();
        let c = spantini_cov_approx(&h, &pinv, 6).unwrap();
        assert!(max_abs(&(c.matrix() - post.cov().matrix())) < 1e-8);
    }

    #[test]
    fn cis_and_spantini_projectors_coincide() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let inst = instance(&mut rng, 12, 6);
        let post = blg_posterior(&inst.f, &inst.c_eps, &inst.prior, &inst.y).unwrap();
        let (cis, eig) = cis_projector_with_rank(post.cov().matrix(), inst.prior.cov(), 4).unwrap();
        let h = inst.f.transpose() * inst.c_eps.solve_matrix(&inst.f);
        let sp = spantini_projector(&h, &SpdMatrix::new(inst.prior.cov().inverse()).unwrap(), 4).unwrap();
        let angles = principal_angles(cis.v_r(), sp.projector.v_r()).unwrap();
        assert!(angles.iter().all(|a| *a <= 1e-7), "{angles:?}");
        for i in 0..6 {
            assert!((eig.eigenvalues[i] - 1.0 / (1.0 + sp.deltas[i])).abs() < 1e-8);
        }
        assert!(max_abs(&(cis.pi_r() - sp.projector.pi_r())) < 1e-6);
    }

    #[test]
    fn approximation_extremes_and_forstner_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let inst = instance(&mut rng, 5, 3);
        let post = blg_posterior(&inst.f, &inst.c_eps, &inst.prior, &inst.y).unwrap();
        let (full, eig) = cis_projector_with_rank(post.cov().matrix(), inst.prior.cov(), 5).unwrap();
        let a = approx_posterior_blg(&full, &post, &inst.prior).unwrap();
        assert!(max_abs(&(a.cov().matrix() - post.cov().matrix())) < 1e-8);
        let none = full.with_rank(0).unwrap();
        let a0 = approx_posterior_blg(&none, &post, &inst.prior).unwrap();
        assert!(max_abs(&(a0.cov().matrix() - inst.prior.cov().matrix())) < 1e-12);
        let two = full.with_rank(2).unwrap();
        let a2 = approx_posterior_blg(&two, &post, &inst.prior).unwrap();
        let expect: f64 = eig.eigenvalues.iter().skip(2).map(|l| log(*l) * log(*l)).sum();
        assert!((forstner_distance(a2.cov(), post.cov()).unwrap() - expect).abs() < 1e-8);
    }
}
