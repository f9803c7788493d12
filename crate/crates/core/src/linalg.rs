//! Dense symmetric linear algebra: SPD matrices with cached factorizations,
//! generalized eigenproblems of SPD pencils, the Förstner distance and
//! principal angles between subspaces.

use alloc::vec::Vec;

use libm::{acos, asin, log, sqrt};
use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{invalid, CisError, Result};

/// Relative tolerance on `max|A - A^T|` accepted as "symmetric".
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Largest condition number accepted for the second matrix of a pencil.
pub const MAX_PENCIL_CONDITION: f64 = 1e12;

pub(crate) fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Checks `m` is square and symmetric within [`SYMMETRY_TOL`] (relative to its
/// largest entry).
pub fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(invalid!("matrix is {}x{}, expected square", m.nrows(), m.ncols()));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(invalid!("matrix has non-finite entries"));
    }
    let scale = max_abs(m).max(f64::MIN_POSITIVE);
    let asym = max_abs(&(m - m.transpose()));
    if asym > SYMMETRY_TOL * scale {
        return Err(invalid!("matrix is not symmetric: max|A - A^T| = {asym:e} (scale {scale:e})"));
    }
    Ok(())
}

/// `(A + A^T) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// A symmetric positive definite matrix with its Cholesky factor and extreme
/// eigenvalues computed once at construction.
#[derive(Debug, Clone)]
pub struct SpdMatrix {
    entries: DMatrix<f64>,
    chol_l: DMatrix<f64>,
    diagonal: Option<DVector<f64>>,
    min_eig: f64,
    max_eig: f64,
}

impl SpdMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        check_symmetric(&entries)?;
        let entries = symmetrize(&entries);
        let n = entries.nrows();
        if n == 0 {
            return Err(invalid!("empty matrix"));
        }
        let chol = entries.clone().cholesky().ok_or_else(|| {
            CisError::Factorization(alloc::format!("Cholesky failed on {n}x{n} matrix (not positive definite)"))
        })?;
        let chol_l = chol.l();
        let is_diag = (0..n).all(|i| (0..n).all(|j| i == j || entries[(i, j)] == 0.0));
        let (min_eig, max_eig) = if is_diag {
            let d = entries.diagonal();
            (d.min(), d.max())
        } else {
            let ev = entries.symmetric_eigenvalues();
            (ev.min(), ev.max())
        };
        if min_eig <= 0.0 {
            return Err(CisError::Factorization(alloc::format!("matrix has non-positive eigenvalue {min_eig:e}")));
        }
        Ok(Self { diagonal: is_diag.then(|| entries.diagonal()), entries, chol_l, min_eig, max_eig })
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&DVector::from_element(n, 1.0)).expect("identity is SPD")
    }

    pub fn from_diagonal(d: &DVector<f64>) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(d))
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// Lower-triangular `L` with `L L^T = self`.
    pub fn chol_l(&self) -> &DMatrix<f64> {
        &self.chol_l
    }

    pub fn is_diagonal(&self) -> bool {
        self.diagonal.is_some()
    }

    pub fn condition_number(&self) -> f64 {
        self.max_eig / self.min_eig
    }

    pub fn log_det(&self) -> f64 {
        2.0 * self.chol_l.diagonal().iter().map(|v| log(*v)).sum::<f64>()
    }

    /// `L^{-1} x`.
    pub fn whiten(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.diagonal {
            Some(d) => x.zip_map(d, |a, b| a / sqrt(b)),
            None => self.chol_l.solve_lower_triangular(x).expect("Cholesky factor has a positive diagonal"),
        }
    }

    /// `L z`.
    pub fn color(&self, z: &DVector<f64>) -> DVector<f64> {
        match &self.diagonal {
            Some(d) => z.zip_map(d, |a, b| a * sqrt(b)),
            None => &self.chol_l * z,
        }
    }

    /// `x^T self^{-1} x`.
    pub fn inv_quad_form(&self, x: &DVector<f64>) -> f64 {
        match &self.diagonal {
            Some(d) => x.iter().zip(d.iter()).map(|(a, b)| a * a / b).sum(),
            None => self.whiten(x).norm_squared(),
        }
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let y = self.whiten(b);
        match &self.diagonal {
            Some(d) => y.zip_map(d, |a, b| a / sqrt(b)),
            None => self.chol_l.tr_solve_lower_triangular(&y).expect("Cholesky factor has a positive diagonal"),
        }
    }

    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let y = self.chol_l.solve_lower_triangular(b).expect("Cholesky factor has a positive diagonal");
        self.chol_l.tr_solve_lower_triangular(&y).expect("Cholesky factor has a positive diagonal")
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        symmetrize(&self.solve_matrix(&DMatrix::identity(self.dim(), self.dim())))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigenOrder {
    Ascending,
    Descending,
}

/// Generalized eigenpairs `A u_i = lambda_i B u_i` with `U^T B U = I`.
#[derive(Debug, Clone)]
pub struct PencilEigen {
    pub eigenvalues: DVector<f64>,
    /// Column `i` is the eigenvector of `eigenvalues[i]`.
    pub eigenvectors: DMatrix<f64>,
    pub order: EigenOrder,
}

impl PencilEigen {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// `max_i ||A u_i - lambda_i B u_i||` and `max|U^T B U - I|`.
    pub fn residuals(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> (f64, f64) {
        let u = &self.eigenvectors;
        let lam = DMatrix::from_diagonal(&self.eigenvalues);
        let pair = (a * u - b * u * lam).column_iter().map(|c| c.norm()).fold(0.0, f64::max);
        let n = u.ncols();
        let gram = max_abs(&(u.transpose() * b * u - DMatrix::identity(n, n)));
        (pair, gram)
    }
}

/// Flips every column so its first non-negligible entry is positive.
pub(crate) fn fix_signs(m: &mut DMatrix<f64>) {
    for mut col in m.column_iter_mut() {
        let scale = col.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        if let Some(first) = col.iter().copied().find(|v| v.abs() > 1e-10 * scale) {
            if first < 0.0 {
                col.neg_mut();
            }
        }
    }
}

/// Solves the symmetric-definite pencil `(A, B)` by whitening with the
/// Cholesky factor of `B`: the eigenpairs of `L^{-1} A L^{-T}` are mapped back
/// with `u = L^{-T} q`, which makes the eigenvectors `B`-orthonormal.
///
/// Eigenvectors are signed so that their first non-negligible component is
/// positive, which makes the result reproducible.
pub fn generalized_eig(a: &DMatrix<f64>, b: &SpdMatrix, order: EigenOrder) -> Result<PencilEigen> {
    check_symmetric(a)?;
    let n = b.dim();
    if a.nrows() != n {
        return Err(invalid!("pencil dimensions differ: {} vs {}", a.nrows(), n));
    }
    if b.condition_number() > MAX_PENCIL_CONDITION {
        return Err(CisError::Factorization(alloc::format!(
            "pencil matrix is near-singular (condition number {:e})",
            b.condition_number()
        )));
    }
    let a = symmetrize(a);
    let l = b.chol_l();
    let half = l.solve_lower_triangular(&a).ok_or_else(|| CisError::Factorization("triangular solve failed".into()))?;
    let whitened =
        l.solve_lower_triangular(&half.transpose()).ok_or_else(|| CisError::Factorization("triangular solve failed".into()))?;
    let eig = SymmetricEigen::new(symmetrize(&whitened));
    let back = l
        .tr_solve_lower_triangular(&eig.eigenvectors)
        .ok_or_else(|| CisError::Factorization("triangular solve failed".into()))?;

    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| {
        let ord = eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]);
        match order {
            EigenOrder::Ascending => ord,
            EigenOrder::Descending => ord.reverse(),
        }
    });
    let eigenvalues = DVector::from_iterator(n, idx.iter().map(|&i| eig.eigenvalues[i]));
    let mut eigenvectors = DMatrix::from_columns(&idx.iter().map(|&i| back.column(i).into_owned()).collect::<Vec<_>>());
    fix_signs(&mut eigenvectors);
    Ok(PencilEigen { eigenvalues, eigenvectors, order })
}

/// `sum_i log(lambda_i)^2` over the generalized eigenvalues of `(A, B)`.
pub fn forstner_distance(a: &SpdMatrix, b: &SpdMatrix) -> Result<f64> {
    let eig = generalized_eig(a.matrix(), b, EigenOrder::Ascending)?;
    if eig.eigenvalues.iter().any(|l| *l <= 0.0) {
        return Err(CisError::Factorization("pencil has a non-positive eigenvalue; first argument is not SPD".into()));
    }
    Ok(eig.eigenvalues.iter().map(|l| log(*l) * log(*l)).sum())
}

/// Orthonormal basis of the column space of `m` (rank decided by the singular
/// values relative to the largest one).
pub fn orthonormal_basis(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.ncols() == 0 || m.nrows() == 0 {
        return Err(invalid!("zero-rank basis ({}x{})", m.nrows(), m.ncols()));
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("requested U");
    let smax = svd.singular_values.max();
    if !(smax > 0.0) {
        return Err(invalid!("zero-rank basis (all columns vanish)"));
    }
    let tol = smax * 1e-12 * (m.nrows().max(m.ncols()) as f64);
    let keep: Vec<_> =
        (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] > tol).map(|i| u.column(i).into_owned()).collect();
    Ok(DMatrix::from_columns(&keep))
}

fn sorted_singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Principal angles between `span(u)` and `span(v)`, ascending, in `[0, pi/2]`.
///
/// Cosines come from the singular values of `Q_u^T Q_v`; sines from the
/// singular values of `(I - Q_u Q_u^T) Q_v`. Each angle is taken from
/// whichever of the two is better conditioned.
pub fn principal_angles(u: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<Vec<f64>> {
    if u.nrows() != v.nrows() {
        return Err(invalid!("ambient dimensions differ: {} vs {}", u.nrows(), v.nrows()));
    }
    let qu = orthonormal_basis(u)?;
    let qv = orthonormal_basis(v)?;
    // `big` spans at least as many dimensions as `small`.
    let (big, small) = if qu.ncols() >= qv.ncols() { (qu, qv) } else { (qv, qu) };
    let k = small.ncols();
    let cosines = sorted_singular_values(&(big.transpose() * &small));
    let residual = &small - &big * (big.transpose() * &small);
    let mut sines = sorted_singular_values(&residual);
    sines.reverse();
    let mut angles: Vec<f64> = (0..k)
        .map(|i| {
            let c = cosines[i].clamp(-1.0, 1.0);
            if c * c > 0.5 {
                asin(sines[i].clamp(-1.0, 1.0))
            } else {
                acos(c)
            }
        })
        .collect();
    angles.sort_by(f64::total_cmp);
    Ok(angles)
}

/// Euclidean norm of the principal-angle vector.
pub fn angle_norm(angles: &[f64]) -> f64 {
    sqrt(angles.iter().map(|a| a * a).sum())
}

/// Replaces eigenvalues of a symmetric PSD matrix below `rel * lambda_max` by
/// that floor. The result is symmetric positive definite.
pub fn floor_eigenvalues(m: &DMatrix<f64>, rel: f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let top = eig.eigenvalues.max().max(f64::MIN_POSITIVE);
    let floor = rel * top;
    if eig.eigenvalues.min() >= floor {
        return symmetrize(m);
    }
    let d = eig.eigenvalues.map(|l| l.max(floor));
    symmetrize(&(&eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose()))
}

/// Inner product under which a [`SubspaceBasis`] is orthonormal.
#[derive(Debug, Clone)]
pub enum InnerProduct {
    Euclidean,
    Weighted(DMatrix<f64>),
}

/// Full-column-rank basis with identity Gram matrix under its inner product.
#[derive(Debug, Clone)]
pub struct SubspaceBasis {
    columns: DMatrix<f64>,
    inner: InnerProduct,
}

impl SubspaceBasis {
    /// Orthonormalizes the columns of `m` (Euclidean).
    pub fn euclidean(m: &DMatrix<f64>) -> Result<Self> {
        Ok(Self { columns: orthonormal_basis(m)?, inner: InnerProduct::Euclidean })
    }

    /// Wraps columns that are already orthonormal under `weight`.
    pub fn weighted(columns: DMatrix<f64>, weight: DMatrix<f64>) -> Result<Self> {
        let basis = Self { columns, inner: InnerProduct::Weighted(weight) };
        let res = basis.gram_residual();
        if res > 1e-8 {
            return Err(invalid!("basis is not orthonormal under its weight (residual {res:e})"));
        }
        Ok(basis)
    }

    pub fn columns(&self) -> &DMatrix<f64> {
        &self.columns
    }

    pub fn inner_product(&self) -> &InnerProduct {
        &self.inner
    }

    pub fn rank(&self) -> usize {
        self.columns.ncols()
    }

    pub fn gram_residual(&self) -> f64 {
        let gram = match &self.inner {
            InnerProduct::Euclidean => self.columns.transpose() * &self.columns,
            InnerProduct::Weighted(w) => self.columns.transpose() * w * &self.columns,
        };
        let r = self.rank();
        max_abs(&(gram - DMatrix::identity(r, r)))
    }
}
