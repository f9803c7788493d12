//! Beer's-law limb transmission with several absorbing gases.
//!
//! The transmission at wavelength `l` for the line of sight tangent at
//! altitude `j` is `exp(-sum_{i,g} A[j,i] L[l,g] B[i,g])`, i.e.
//! `T = exp(-L B^T A^T)`. The Kronecker form `(A ⊗ L) vec(B^T)` is never
//! materialized.

use alloc::vec::Vec;

use libm::exp;
use nalgebra::{DMatrix, DVector};

use super::ForwardModel;
use crate::error::{invalid, Result};

/// `T = exp(-L B^T A^T)`, an `N_lambda x N_alt` matrix.
///
/// `a` is the `N_alt x N_alt` path-length matrix, `l` the `N_lambda x N_g`
/// cross sections and `b` the `N_alt x N_g` concentrations.
pub fn gomos_forward(a: &DMatrix<f64>, l: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_dims(a, l, b.nrows(), b.ncols())?;
    let tau = l * b.transpose() * a.transpose();
    Ok(tau.map(|t| exp(-t)))
}

fn check_dims(a: &DMatrix<f64>, l: &DMatrix<f64>, n_alt: usize, n_g: usize) -> Result<()> {
    if !a.is_square() || a.nrows() != n_alt {
        return Err(invalid!("path-length matrix is {}x{}, expected {n_alt}x{n_alt}", a.nrows(), a.ncols()));
    }
    if l.ncols() != n_g {
        return Err(invalid!("cross-section matrix has {} gases, concentrations have {n_g}", l.ncols()));
    }
    Ok(())
}

/// The transmission model as a map from log-concentrations.
///
/// Input layout is gas-major: `x[g * N_alt + i] = log B[i, g]`. Output is
/// `vec(T)` in column-major order, so entry `j * N_lambda + l` is wavelength
/// `l` at tangent altitude `j`.
#[derive(Debug, Clone)]
pub struct GomosModel {
    a: DMatrix<f64>,
    l: DMatrix<f64>,
}

impl GomosModel {
    pub fn new(a: DMatrix<f64>, l: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() {
            return Err(invalid!("path-length matrix must be square, got {}x{}", a.nrows(), a.ncols()));
        }
        if a.iter().chain(l.iter()).any(|v| !v.is_finite() || *v < 0.0) {
            return Err(invalid!("path lengths and cross sections must be finite and nonnegative"));
        }
        Ok(Self { a, l })
    }

    pub fn n_alt(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_gas(&self) -> usize {
        self.l.ncols()
    }

    pub fn n_wavelength(&self) -> usize {
        self.l.nrows()
    }

    pub fn path_lengths(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn cross_sections(&self) -> &DMatrix<f64> {
        &self.l
    }

    /// Concentration matrix from a log-concentration vector.
    pub fn concentrations(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let n_alt = self.n_alt();
        DMatrix::from_fn(n_alt, self.n_gas(), |i, g| exp(x[g * n_alt + i]))
    }

    /// Index sets of each gas block in the input vector.
    pub fn gas_blocks(&self) -> Vec<Vec<usize>> {
        let n_alt = self.n_alt();
        (0..self.n_gas()).map(|g| (g * n_alt..(g + 1) * n_alt).collect()).collect()
    }
}

impl ForwardModel for GomosModel {
    fn n_in(&self) -> usize {
        self.n_alt() * self.n_gas()
    }

    fn n_out(&self) -> usize {
        self.n_alt() * self.n_wavelength()
    }

    fn evaluate(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.n_in() {
            return Err(invalid!("point has length {}, model expects {}", x.len(), self.n_in()));
        }
        let t = gomos_forward(&self.a, &self.l, &self.concentrations(x))?;
        Ok(DVector::from_column_slice(t.as_slice()))
    }

    /// `dT_{l,j} / dx_{g,i} = -T_{l,j} A[j,i] L[l,g] B[i,g]`.
    fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let t = self.evaluate(x)?;
        let b = self.concentrations(x);
        let (n_alt, n_lam) = (self.n_alt(), self.n_wavelength());
        Ok(DMatrix::from_fn(self.n_out(), self.n_in(), |row, col| {
            let (j, l) = (row / n_lam, row % n_lam);
            let (g, i) = (col / n_alt, col % n_alt);
            -t[row] * self.a[(j, i)] * self.l[(l, g)] * b[(i, g)]
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::fd_jacobian;
    use nalgebra::dmatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Materializes `(A ⊗ L) vec(B^T)`.
    fn kron_oracle(a: &DMatrix<f64>, l: &DMatrix<f64>, b: &DMatrix<f64>) -> DVector<f64> {
        let kron = a.kronecker(l);
        let bt = b.transpose();
        let vec_bt = DVector::from_column_slice(bt.as_slice());
        (kron * vec_bt).map(|t| exp(-t))
    }

    fn random_instance(rng: &mut ChaCha8Rng, n_alt: usize, n_lam: usize, n_g: usize) -> [DMatrix<f64>; 3] {
        [
            DMatrix::from_fn(n_alt, n_alt, |_, _| rng.random_range(0.0..2.0)),
            DMatrix::from_fn(n_lam, n_g, |_, _| rng.random_range(0.0..1.0)),
            DMatrix::from_fn(n_alt, n_g, |_, _| rng.random_range(0.0..1.0)),
        ]
    }

    #[test]
    fn no_absorption_is_full_transmission() {
        let a = DMatrix::from_element(3, 3, 1.0);
        let l = DMatrix::from_element(4, 2, 1.0);
        let t = gomos_forward(&a, &l, &DMatrix::zeros(3, 2)).unwrap();
        assert!(t.iter().all(|v| *v == 1.0));
    }

    #[test]
    fn hand_expanded_two_altitudes() {
        let (ac, b1, b2) = (0.7, 0.3, 1.1);
        let t = gomos_forward(&dmatrix![1.0, 0.0; 1.0, 1.0], &dmatrix![ac], &dmatrix![b1; b2]).unwrap();
        assert!((t[(0, 0)] - exp(-ac * b1)).abs() < 1e-15);
        assert!((t[(0, 1)] - exp(-ac * (b1 + b2))).abs() < 1e-15);
    }

    #[test]
    fn matches_dense_kronecker_on_small_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for n_alt in 1..=5 {
            for n_lam in 1..=5 {
                for n_g in 1..=5 {
                    let [a, l, b] = random_instance(&mut rng, n_alt, n_lam, n_g);
                    let t = gomos_forward(&a, &l, &b).unwrap();
                    let oracle = kron_oracle(&a, &l, &b);
                    let got = DVector::from_column_slice(t.as_slice());
                    assert!((got - oracle).abs().max() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let a = DMatrix::identity(3, 3);
        assert!(gomos_forward(&a, &DMatrix::zeros(2, 2), &DMatrix::zeros(2, 2)).is_err());
        assert!(gomos_forward(&a, &DMatrix::zeros(2, 1), &DMatrix::zeros(3, 2)).is_err());
    }

    #[test]
    fn analytic_jacobian_agrees_with_richardson_extrapolated_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let [a, l, _] = random_instance(&mut rng, 4, 3, 2);
        let model = GomosModel::new(a, l).unwrap();
        let x = DVector::from_fn(8, |_, _| rng.random_range(-1.5..0.0));
        let j1 = fd_jacobian(&model, &x, 1e-3).unwrap();
        let j2 = fd_jacobian(&model, &x, 5e-4).unwrap();
        let richardson = (&j2 * 4.0 - &j1) / 3.0;
        let exact = model.jacobian(&x).unwrap();
        assert!((richardson - &exact).abs().max() < 1e-9);
        assert!((fd_jacobian(&model, &x, 1e-5).unwrap() - exact).abs().max() < 1e-8);
    }

    #[test]
    fn model_output_layout() {
        let a = dmatrix![1.0, 0.0; 1.0, 1.0];
        let l = dmatrix![1.0, 0.0; 0.0, 2.0; 1.0, 1.0];
        let model = GomosModel::new(a.clone(), l.clone()).unwrap();
        let x = DVector::from_vec(alloc::vec![-1.0, -0.5, -2.0, 0.1]);
        let t = gomos_forward(&a, &l, &model.concentrations(&x)).unwrap();
        let out = model.evaluate(&x).unwrap();
        for j in 0..2 {
            for w in 0..3 {
                assert_eq!(out[j * 3 + w], t[(w, j)]);
            }
        }
        assert_eq!(model.gas_blocks()[1], alloc::vec![2, 3]);
    }
}
