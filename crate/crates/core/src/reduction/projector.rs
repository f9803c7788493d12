use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use super::rank::{select_rank, RankRule};
use super::COV_EIGEN_FLOOR;
use crate::error::{invalid, CisError, Result};
use crate::gaussian::ReducedCoordinates;
use crate::linalg::{floor_eigenvalues, generalized_eig, max_abs, EigenOrder, PencilEigen, SpdMatrix};

/// Rank-`r` split of the parameter space built from a `C_prior`-orthonormal
/// basis `U` (informed directions first).
#[derive(Debug, Clone)]
pub struct Projector {
    rank: usize,
    eigenvalues: DVector<f64>,
    u_r: DMatrix<f64>,
    u_perp: DMatrix<f64>,
    v_r: DMatrix<f64>,
    v_perp: DMatrix<f64>,
    pi_r: DMatrix<f64>,
}

impl Projector {
    /// `u_full` is `n x n` with `U^T C_prior U = I`; its first `r` columns
    /// span the informed subspace. `eigenvalues` are stored as given.
    pub fn from_basis(u_full: DMatrix<f64>, c_prior: &SpdMatrix, r: usize, eigenvalues: DVector<f64>) -> Result<Self> {
        let n = c_prior.dim();
        if u_full.nrows() != n || u_full.ncols() != n {
            return Err(invalid!("basis is {}x{}, expected {n}x{n}", u_full.nrows(), u_full.ncols()));
        }
        if r > n {
            return Err(invalid!("rank {r} exceeds dimension {n}"));
        }
        if eigenvalues.len() != n {
            return Err(invalid!("{} eigenvalues for dimension {n}", eigenvalues.len()));
        }
        let v = c_prior.matrix() * &u_full;
        Ok(Self::from_parts(u_full, v, r, eigenvalues))
    }

    /// Builds from the basis and precomputed `V = C_prior U`, e.g. when read
    /// back from disk.
    pub fn from_parts(u_full: DMatrix<f64>, v_full: DMatrix<f64>, r: usize, eigenvalues: DVector<f64>) -> Self {
        let n = u_full.nrows();
        let u_r = u_full.columns(0, r).into_owned();
        let u_perp = u_full.columns(r, n - r).into_owned();
        let v_r = v_full.columns(0, r).into_owned();
        let v_perp = v_full.columns(r, n - r).into_owned();
        let pi_r = &v_r * u_r.transpose();
        Self { rank: r, eigenvalues, u_r, u_perp, v_r, v_perp, pi_r }
    }

    /// Builds from an ascending pencil solve of `(C_post, C_prior)`.
    pub fn from_pencil(eig: &PencilEigen, c_prior: &SpdMatrix, r: usize) -> Result<Self> {
        if eig.order != EigenOrder::Ascending {
            return Err(invalid!("projector needs eigenpairs in ascending order"));
        }
        Self::from_basis(eig.eigenvectors.clone(), c_prior, r, eig.eigenvalues.clone())
    }

    /// Same basis, different rank.
    pub fn with_rank(&self, r: usize) -> Result<Self> {
        if r > self.dim() {
            return Err(invalid!("rank {r} exceeds dimension {}", self.dim()));
        }
        let u = concat(&self.u_r, &self.u_perp);
        let v = concat(&self.v_r, &self.v_perp);
        Ok(Self::from_parts(u, v, r, self.eigenvalues.clone()))
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn dim(&self) -> usize {
        self.pi_r.nrows()
    }

    /// Pencil eigenvalues for every direction, informed first.
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn u_r(&self) -> &DMatrix<f64> {
        &self.u_r
    }

    pub fn u_perp(&self) -> &DMatrix<f64> {
        &self.u_perp
    }

    pub fn v_r(&self) -> &DMatrix<f64> {
        &self.v_r
    }

    pub fn v_perp(&self) -> &DMatrix<f64> {
        &self.v_perp
    }

    /// `Pi_r = C_prior U_r U_r^T`.
    pub fn pi_r(&self) -> &DMatrix<f64> {
        &self.pi_r
    }

    pub fn u_full(&self) -> DMatrix<f64> {
        concat(&self.u_r, &self.u_perp)
    }

    pub fn v_full(&self) -> DMatrix<f64> {
        concat(&self.v_r, &self.v_perp)
    }

    pub fn reduce(&self, x: &DVector<f64>) -> ReducedCoordinates {
        ReducedCoordinates { z_r: self.u_r.transpose() * x, z_perp: Some(self.u_perp.transpose() * x) }
    }

    /// `V_r z_r + V_perp z_perp`.
    pub fn reconstruct(&self, z_r: &DVector<f64>, z_perp: &DVector<f64>) -> DVector<f64> {
        &self.v_r * z_r + &self.v_perp * z_perp
    }

    /// `max|U^T C U - I|` over the full basis.
    pub fn prior_orthonormality_residual(&self, c_prior: &DMatrix<f64>) -> f64 {
        let u = self.u_full();
        let n = u.ncols();
        max_abs(&(u.transpose() * c_prior * &u - DMatrix::identity(n, n)))
    }

    /// `max|Pi_r C (I - Pi_r^T)|`: zero when the informed and non-informed
    /// subspaces are `C`-orthogonal.
    pub fn c_orthogonality_residual(&self, c_prior: &DMatrix<f64>) -> f64 {
        let n = self.dim();
        max_abs(&(&self.pi_r * c_prior * (DMatrix::identity(n, n) - self.pi_r.transpose())))
    }
}

fn concat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    m.columns_mut(0, a.ncols()).copy_from(a);
    m.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    m
}

/// Solves the pencil `(C_hat, C_prior)` and keeps the `r` smallest
/// eigenvalues, `r` chosen by `rule`. `C_hat` may be an estimate; its
/// spectrum is floored to keep it positive definite.
pub fn cis_projector(c_hat: &DMatrix<f64>, c_prior: &SpdMatrix, rule: &RankRule) -> Result<(Projector, PencilEigen)> {
    let eig = cis_pencil(c_hat, c_prior)?;
    let r = select_rank(eig.eigenvalues.as_slice(), rule)?;
    if r == 0 {
        return Err(CisError::EmptySubspace);
    }
    Ok((Projector::from_pencil(&eig, c_prior, r)?, eig))
}

/// As [`cis_projector`] with a fixed rank.
pub fn cis_projector_with_rank(c_hat: &DMatrix<f64>, c_prior: &SpdMatrix, r: usize) -> Result<(Projector, PencilEigen)> {
    let eig = cis_pencil(c_hat, c_prior)?;
    Ok((Projector::from_pencil(&eig, c_prior, r)?, eig))
}

fn cis_pencil(c_hat: &DMatrix<f64>, c_prior: &SpdMatrix) -> Result<PencilEigen> {
    if c_hat.nrows() != c_prior.dim() || c_hat.ncols() != c_prior.dim() {
        return Err(invalid!("covariance is {}x{}, prior is {}-dimensional", c_hat.nrows(), c_hat.ncols(), c_prior.dim()));
    }
    generalized_eig(&floor_eigenvalues(c_hat, COV_EIGEN_FLOOR), c_prior, EigenOrder::Ascending)
}

/// `u^T C_post u / u^T C_prior u` for each column of `u`.
pub fn rayleigh_quotients(u: &DMatrix<f64>, c_post: &DMatrix<f64>, c_prior: &DMatrix<f64>) -> Vec<f64> {
    u.column_iter().map(|c| (c.transpose() * c_post * c)[(0, 0)] / (c.transpose() * c_prior * c)[(0, 0)]).collect()
}
