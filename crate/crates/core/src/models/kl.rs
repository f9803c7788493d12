//! Truncated Karhunen-Loève expansions of stationary Gaussian fields on a
//! point set, from the eigendecomposition of the kernel matrix.

use alloc::vec::Vec;

use libm::{exp, sqrt};
use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{invalid, Result};
use crate::linalg::fix_signs;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    /// `exp(-|s - s'|_1 / l)`
    ExponentialL1,
    /// `exp(-|s - s'|_2^2 / (2 l^2))`
    SquaredExponential,
}

impl KernelKind {
    pub fn eval(self, a: &[f64], b: &[f64], corr_length: f64) -> f64 {
        match self {
            KernelKind::ExponentialL1 => {
                let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum();
                exp(-d / corr_length)
            }
            KernelKind::SquaredExponential => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                exp(-d2 / (2.0 * corr_length * corr_length))
            }
        }
    }
}

pub fn kernel_matrix(points: &[Vec<f64>], corr_length: f64, kind: KernelKind) -> DMatrix<f64> {
    let n = points.len();
    DMatrix::from_fn(n, n, |i, j| kind.eval(&points[i], &points[j], corr_length))
}

#[derive(Debug, Clone)]
pub struct KlField {
    points: Vec<Vec<f64>>,
    corr_length: f64,
    kernel: KernelKind,
    eigenvalues: DVector<f64>,
    modes: DMatrix<f64>,
}

/// Eigendecomposes the kernel matrix on `points` and keeps the `n_modes`
/// leading modes.
pub fn kl_build(points: Vec<Vec<f64>>, corr_length: f64, kernel: KernelKind, n_modes: usize) -> Result<KlField> {
    if points.is_empty() {
        return Err(invalid!("empty point set"));
    }
    if n_modes == 0 || n_modes > points.len() {
        return Err(invalid!("n_modes = {n_modes} must lie in 1..={}", points.len()));
    }
    if !(corr_length > 0.0) {
        return Err(invalid!("correlation length must be positive, got {corr_length}"));
    }
    let k = kernel_matrix(&points, corr_length, kernel);
    let eig = SymmetricEigen::new(k);
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|a, b| eig.eigenvalues[*b].total_cmp(&eig.eigenvalues[*a]));
    let lambda_max = eig.eigenvalues[order[0]];
    let lambda_min = eig.eigenvalues[order[order.len() - 1]];
    if lambda_min < -1e-10 * lambda_max {
        return Err(invalid!("kernel matrix is not positive semidefinite on this grid (eigenvalue {lambda_min:e})"));
    }
    let eigenvalues = DVector::from_iterator(n_modes, order[..n_modes].iter().map(|i| eig.eigenvalues[*i].max(0.0)));
    let mut modes = DMatrix::from_fn(points.len(), n_modes, |r, c| eig.eigenvectors[(r, order[c])]);
    fix_signs(&mut modes);
    Ok(KlField { points, corr_length, kernel, eigenvalues, modes })
}

impl KlField {
    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn grid_len(&self) -> usize {
        self.points.len()
    }

    pub fn n_modes(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn corr_length(&self) -> f64 {
        self.corr_length
    }

    pub fn kernel(&self) -> KernelKind {
        self.kernel
    }

    /// Descending kernel eigenvalues of the retained modes.
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    /// Orthonormal eigenvectors, one mode per column.
    pub fn modes(&self) -> &DMatrix<f64> {
        &self.modes
    }

    /// `Phi sqrt(Lambda)`: maps KL coefficients to nodal field values.
    pub fn scaled_modes(&self) -> DMatrix<f64> {
        let mut m = self.modes.clone();
        for (j, mut col) in m.column_iter_mut().enumerate() {
            col *= sqrt(self.eigenvalues[j]);
        }
        m
    }

    /// `sum_i sqrt(lambda_i) phi_i x_i`.
    pub fn realize(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.n_modes() {
            return Err(invalid!("coefficient vector has length {}, field has {} modes", x.len(), self.n_modes()));
        }
        let scaled = DVector::from_fn(x.len(), |i, _| sqrt(self.eigenvalues[i]) * x[i]);
        Ok(&self.modes * scaled)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize) -> Vec<Vec<f64>> {
        (0..n).map(|i| alloc::vec![i as f64 / (n - 1) as f64]).collect()
    }

    #[test]
    fn kernel_diagonal_is_one() {
        for kind in [KernelKind::ExponentialL1, KernelKind::SquaredExponential] {
            let k = kernel_matrix(&line(7), 0.2, kind);
            assert!(k.diagonal().iter().all(|v| *v == 1.0));
        }
    }

    #[test]
    fn zero_coefficients_give_zero_field() {
        let f = kl_build(line(20), 0.1, KernelKind::ExponentialL1, 5).unwrap();
        assert_eq!(f.realize(&DVector::zeros(5)).unwrap().norm(), 0.0);
        assert!(f.realize(&DVector::zeros(4)).is_err());
    }

    #[test]
    fn full_expansion_reconstructs_kernel() {
        let pts = line(30);
        let k = kernel_matrix(&pts, 0.3, KernelKind::ExponentialL1);
        let f = kl_build(pts, 0.3, KernelKind::ExponentialL1, 30).unwrap();
        let recon = f.modes() * DMatrix::from_diagonal(f.eigenvalues()) * f.modes().transpose();
        assert!((recon - k).abs().max() < 1e-8);
        assert!(f.eigenvalues().as_slice().windows(2).all(|w| w[0] >= w[1]));
        assert!(f.eigenvalues().iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn two_dimensional_points_supported() {
        let pts: Vec<Vec<f64>> = (0..5).flat_map(|i| (0..5).map(move |j| alloc::vec![i as f64 / 4.0, j as f64 / 4.0])).collect();
        let f = kl_build(pts, 0.5, KernelKind::ExponentialL1, 10).unwrap();
        assert_eq!(f.modes().nrows(), 25);
    }

    #[test]
    fn invalid_arguments() {
        assert!(kl_build(line(5), 0.1, KernelKind::ExponentialL1, 6).is_err());
        assert!(kl_build(line(5), 0.0, KernelKind::ExponentialL1, 2).is_err());
        assert!(kl_build(Vec::new(), 0.1, KernelKind::ExponentialL1, 1).is_err());
    }
}
