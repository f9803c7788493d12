//! Ready-made inverse problems: random linear-Gaussian instances, scalar
//! counter-examples, a 1D groundwater analog and a small limb-occultation
//! instance.

use alloc::vec;
use alloc::vec::Vec;

use libm::{exp, log, sin, sqrt};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{invalid, Result};
use crate::gaussian::{standard_normal, GaussianDist};
use crate::linalg::{generalized_eig, EigenOrder, PencilEigen, SpdMatrix};
use crate::models::{
    kl_build, Elliptic1d, EllipticKlModel, GaussianLikelihood, GomosModel, KernelKind, LinearModel, Polynomial1d,
};
use crate::reduction::{blg_posterior, cis_projector, Projector, RankRule};

/// Linear forward map, Gaussian prior and Gaussian noise.
#[derive(Debug, Clone)]
pub struct BlgProblem {
    pub forward: DMatrix<f64>,
    pub noise: SpdMatrix,
    pub prior: GaussianDist,
    pub data: DVector<f64>,
}

impl BlgProblem {
    pub fn new(forward: DMatrix<f64>, noise: SpdMatrix, prior: GaussianDist, data: DVector<f64>) -> Result<Self> {
        if forward.ncols() != prior.dim() || forward.nrows() != noise.dim() || data.len() != noise.dim() {
            return Err(invalid!(
                "inconsistent shapes: forward {}x{}, prior {}, noise {}, data {}",
                forward.nrows(),
                forward.ncols(),
                prior.dim(),
                noise.dim(),
                data.len()
            ));
        }
        Ok(Self { forward, noise, prior, data })
    }

    pub fn dim(&self) -> usize {
        self.prior.dim()
    }

    pub fn posterior(&self) -> Result<GaussianDist> {
        blg_posterior(&self.forward, &self.noise, &self.prior, &self.data)
    }

    /// `F^T C_eps^{-1} F`.
    pub fn hessian(&self) -> DMatrix<f64> {
        let s = self.noise.solve_matrix(&self.forward);
        let h = self.forward.transpose() * s;
        (&h + h.transpose()) * 0.5
    }

    pub fn likelihood(&self) -> Result<GaussianLikelihood<LinearModel>> {
        GaussianLikelihood::new(LinearModel::new(self.forward.clone()), self.data.clone(), self.noise.clone())
    }

    /// Ascending eigenpairs of the exact `(C_post, C_prior)` pencil.
    pub fn analytic_pencil(&self) -> Result<PencilEigen> {
        generalized_eig(self.posterior()?.cov().matrix(), self.prior.cov(), EigenOrder::Ascending)
    }

    pub fn analytic_cis(&self, rule: &RankRule) -> Result<Projector> {
        Ok(cis_projector(self.posterior()?.cov().matrix(), self.prior.cov(), rule)?.0)
    }
}

fn random_spd<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<SpdMatrix> {
    let a = DMatrix::from_fn(n, n, |_, _| standard_normal(rng, 1)[0]);
    let m = &a * a.transpose() / n as f64 + DMatrix::identity(n, n) * 0.5;
    SpdMatrix::new((&m + m.transpose()) * 0.5)
}

/// Random instance with a correlated prior, diagonal noise of varying size and
/// data generated from a prior draw.
pub fn random_blg<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> Result<BlgProblem> {
    if n == 0 || m == 0 {
        return Err(invalid!("dimensions must be positive, got n = {n}, m = {m}"));
    }
    let mean = standard_normal(rng, n) * 0.5;
    let prior = GaussianDist::new(mean, random_spd(n, rng)?)?;
    let forward = DMatrix::from_fn(m, n, |_, _| standard_normal(rng, 1)[0]);
    let noise_var = DVector::from_fn(m, |_, _| exp(rng.random_range(log(0.05)..log(2.0))));
    let noise = SpdMatrix::from_diagonal(&noise_var)?;
    let truth = prior.sample_one(rng);
    let eps = DVector::from_fn(m, |i, _| sqrt(noise_var[i]) * standard_normal(rng, 1)[0]);
    let data = &forward * truth + eps;
    BlgProblem::new(forward, noise, prior, data)
}

/// Standard-normal prior in 2D observed along `(cos theta, sin theta)` with
/// unit noise, scaled so that the posterior variance along that direction is
/// `variance_ratio` times the prior variance.
pub fn concentrated_blg_2d(variance_ratio: f64, theta: f64, y: f64) -> Result<BlgProblem> {
    if !(variance_ratio > 0.0 && variance_ratio < 1.0) {
        return Err(invalid!("variance ratio must lie in (0, 1), got {variance_ratio}"));
    }
    let a = sqrt(1.0 / variance_ratio - 1.0);
    let forward = DMatrix::from_row_slice(1, 2, &[a * libm::cos(theta), a * sin(theta)]);
    BlgProblem::new(forward, SpdMatrix::identity(1), GaussianDist::standard(2), DVector::from_element(1, y))
}

/// Scalar examples where the posterior is not a shrunk copy of the prior.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Toy1d {
    /// `F(x) = 0.05 x`, `y = 30`, unit noise: almost no variance reduction.
    Linear,
    /// `F(x) = x^2`, `y = 10`, noise variance 10: bimodal posterior.
    Quadratic,
    /// `F(x) = x^3`, `y = 200`, noise variance 2000: posterior wider than prior.
    Cubic,
}

impl Toy1d {
    pub fn model(self) -> Polynomial1d {
        match self {
            Toy1d::Linear => Polynomial1d::monomial(0.05, 1),
            Toy1d::Quadratic => Polynomial1d::monomial(1.0, 2),
            Toy1d::Cubic => Polynomial1d::monomial(1.0, 3),
        }
    }

    pub fn data(self) -> f64 {
        match self {
            Toy1d::Linear => 30.0,
            Toy1d::Quadratic => 10.0,
            Toy1d::Cubic => 200.0,
        }
    }

    pub fn noise_var(self) -> f64 {
        match self {
            Toy1d::Linear => 1.0,
            Toy1d::Quadratic => 10.0,
            Toy1d::Cubic => 2000.0,
        }
    }

    pub fn likelihood(self) -> Result<GaussianLikelihood<Polynomial1d>> {
        GaussianLikelihood::new(
            self.model(),
            DVector::from_element(1, self.data()),
            SpdMatrix::from_diagonal(&DVector::from_element(1, self.noise_var()))?,
        )
    }

    /// Unnormalized log posterior under the standard-normal prior.
    pub fn log_posterior(self, x: f64) -> f64 {
        let r = self.data() - self.model().value(x);
        -0.5 * r * r / self.noise_var() - 0.5 * x * x
    }
}

/// Density tabulated on a uniform grid and normalized by the midpoint rule.
#[derive(Debug, Clone)]
pub struct GridDensity {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub step: f64,
}

impl GridDensity {
    pub fn from_log<F: Fn(f64) -> f64>(log_density: F, lo: f64, hi: f64, cells: usize) -> Result<Self> {
        if !(hi > lo) || cells < 3 {
            return Err(invalid!("need hi > lo and at least 3 cells"));
        }
        let step = (hi - lo) / cells as f64;
        let grid: Vec<f64> = (0..cells).map(|i| lo + (i as f64 + 0.5) * step).collect();
        let logs: Vec<f64> = grid.iter().map(|x| log_density(*x)).collect();
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(invalid!("log density is not finite anywhere on the grid"));
        }
        let raw: Vec<f64> = logs.iter().map(|l| exp(l - max)).collect();
        let z: f64 = raw.iter().sum::<f64>() * step;
        Ok(Self { grid, density: raw.iter().map(|v| v / z).collect(), step })
    }

    pub fn mean(&self) -> f64 {
        self.grid.iter().zip(&self.density).map(|(x, p)| x * p).sum::<f64>() * self.step
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.grid.iter().zip(&self.density).map(|(x, p)| (x - m) * (x - m) * p).sum::<f64>() * self.step
    }

    /// Strict interior local maxima whose height exceeds `rel` times the
    /// global maximum.
    pub fn modes(&self, rel: f64) -> Vec<f64> {
        let top = self.density.iter().copied().fold(0.0, f64::max);
        let d = &self.density;
        (1..d.len() - 1).filter(|&i| d[i] > d[i - 1] && d[i] >= d[i + 1] && d[i] > rel * top).map(|i| self.grid[i]).collect()
    }
}

/// Settings of the 1D groundwater analog.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundwaterConfig {
    /// KL modes used for inference, i.e. the parameter dimension.
    pub n_modes: usize,
    pub nodes: usize,
    pub corr_length: f64,
    /// Marginal standard deviation of the log-permeability.
    pub std_dev: f64,
    /// Sensor coordinates in `[0, 1]`; each is snapped to the nearest node.
    pub sensors: Vec<f64>,
    /// Noise standard deviation relative to the mean absolute true head.
    pub noise_level: f64,
    /// KL modes of the synthetic truth.
    pub truth_modes: usize,
    /// The truth is solved on a grid `truth_refinement` times finer.
    pub truth_refinement: usize,
}

impl Default for GroundwaterConfig {
    fn default() -> Self {
        Self {
            n_modes: 50,
            nodes: 101,
            corr_length: 0.02,
            std_dev: 0.03,
            sensors: (1..=7).map(|k| 0.02 * k as f64).collect(),
            noise_level: 0.01,
            truth_modes: 100,
            truth_refinement: 4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GroundwaterProblem {
    pub likelihood: GaussianLikelihood<EllipticKlModel>,
    pub prior: GaussianDist,
    /// Log-permeability of the truth on the fine grid.
    pub truth_log_f: DVector<f64>,
    pub noise_std: f64,
}

impl GroundwaterProblem {
    pub fn model(&self) -> &EllipticKlModel {
        self.likelihood.model()
    }

    /// Log-permeability perturbation of each column of `v` (KL coordinates),
    /// one field per column on the inference grid.
    pub fn fields(&self, v: &DMatrix<f64>) -> DMatrix<f64> {
        self.model().field().scaled_modes() * v
    }

    /// Share of the squared field norm of the columns of `v` that lies on
    /// nodes with coordinate at most `s_max`.
    pub fn mass_fraction_below(&self, v: &DMatrix<f64>, s_max: f64) -> f64 {
        let f = self.fields(v);
        let grid = self.model().solver().grid();
        let total = f.norm_squared();
        let near: f64 = grid.iter().enumerate().filter(|(_, s)| **s <= s_max).map(|(i, _)| f.row(i).norm_squared()).sum();
        if total > 0.0 {
            near / total
        } else {
            0.0
        }
    }
}

fn line(nodes: usize) -> Vec<Vec<f64>> {
    (0..nodes).map(|i| vec![i as f64 / (nodes - 1) as f64]).collect()
}

fn snap(sensors: &[f64], nodes: usize) -> Result<Vec<usize>> {
    sensors
        .iter()
        .map(|s| {
            if !(0.0..=1.0).contains(s) {
                return Err(invalid!("sensor coordinate {s} outside [0, 1]"));
            }
            Ok(libm::round(s * (nodes - 1) as f64) as usize)
        })
        .collect()
}

/// Synthetic groundwater analog: exponential-kernel log-permeability with a
/// KL prior, Dirichlet condition at `s = 0` and sensors close to it.
pub fn groundwater<R: Rng + ?Sized>(config: &GroundwaterConfig, rng: &mut R) -> Result<GroundwaterProblem> {
    if config.truth_refinement == 0 {
        return Err(invalid!("truth refinement must be at least 1"));
    }
    if !(config.noise_level > 0.0) {
        return Err(invalid!("noise level must be positive"));
    }
    if !(config.std_dev > 0.0 && config.std_dev.is_finite()) {
        return Err(invalid!("log-permeability standard deviation must be positive"));
    }
    let fine_nodes = (config.nodes - 1) * config.truth_refinement + 1;
    let truth_field = kl_build(line(fine_nodes), config.corr_length, KernelKind::ExponentialL1, config.truth_modes)?;
    let truth_log_f = truth_field.realize(&(standard_normal(rng, config.truth_modes) * config.std_dev))?;
    let fine = Elliptic1d::new(fine_nodes, snap(&config.sensors, fine_nodes)?)?;
    let clean = fine.heads_at_sensors(truth_log_f.as_slice())?;
    let noise_std = config.noise_level * clean.iter().map(|h| h.abs()).sum::<f64>() / clean.len() as f64;
    let data = &clean + standard_normal(rng, clean.len()) * noise_std;

    let field = kl_build(line(config.nodes), config.corr_length, KernelKind::ExponentialL1, config.n_modes)?;
    let solver = Elliptic1d::new(config.nodes, snap(&config.sensors, config.nodes)?)?;
    let model = EllipticKlModel::new(solver, field, 0.0)?;
    let noise = SpdMatrix::from_diagonal(&DVector::from_element(data.len(), noise_std * noise_std))?;
    Ok(GroundwaterProblem {
        likelihood: GaussianLikelihood::new(model, data, noise)?,
        prior: GaussianDist::new(
            DVector::zeros(config.n_modes),
            SpdMatrix::from_diagonal(&DVector::from_element(config.n_modes, config.std_dev * config.std_dev))?,
        )?,
        truth_log_f,
        noise_std,
    })
}

/// Settings of the small limb-occultation instance.
#[derive(Debug, Clone, PartialEq)]
pub struct GomosConfig {
    pub n_alt: usize,
    pub n_wavelength: usize,
    /// Optical depth of each gas along the lowest line of sight at its
    /// absorption peak; also fixes the number of gases.
    pub peak_optical_depth: Vec<f64>,
    /// Top of the atmosphere in km.
    pub top_km: f64,
    /// Scale height of the true profiles in km.
    pub scale_height_km: f64,
    /// Correlation length of the prior kernel in km.
    pub corr_length_km: f64,
    pub noise_std: f64,
}

impl Default for GomosConfig {
    fn default() -> Self {
        Self {
            n_alt: 10,
            n_wavelength: 30,
            peak_optical_depth: vec![2.0, 0.5, 0.1, 2e-3],
            top_km: 100.0,
            scale_height_km: 30.0,
            corr_length_km: 10.0,
            noise_std: 0.01,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GomosProblem {
    pub likelihood: GaussianLikelihood<GomosModel>,
    pub prior: GaussianDist,
    pub truth: DVector<f64>,
    /// Centre altitude of each layer in km.
    pub altitudes: Vec<f64>,
}

const EARTH_RADIUS_KM: f64 = 6371.0;

/// Path length of the line of sight tangent at the bottom of layer `j`
/// through each spherical shell.
fn limb_geometry(n_alt: usize, top_km: f64) -> DMatrix<f64> {
    let dz = top_km / n_alt as f64;
    let radius = |k: usize| EARTH_RADIUS_KM + k as f64 * dz;
    DMatrix::from_fn(n_alt, n_alt, |j, i| {
        if i < j {
            return 0.0;
        }
        let rj = radius(j);
        let outer = sqrt(radius(i + 1).powi(2) - rj * rj);
        let inner = sqrt((radius(i).powi(2) - rj * rj).max(0.0));
        2.0 * (outer - inner)
    })
}

/// Synthetic occultation problem with one Gaussian absorption band per gas,
/// exponentially decaying true profiles with a small random wiggle, and a
/// squared-exponential prior on each log-profile whose mean and amplitude
/// are those of the true log-profile.
pub fn gomos_desk<R: Rng + ?Sized>(config: &GomosConfig, rng: &mut R) -> Result<GomosProblem> {
    let n_alt = config.n_alt;
    let n_g = config.peak_optical_depth.len();
    let n_l = config.n_wavelength;
    if n_alt < 2 || n_g == 0 || n_l == 0 {
        return Err(invalid!("need at least 2 layers, one gas and one wavelength"));
    }
    let a = limb_geometry(n_alt, config.top_km);
    let altitudes = layer_altitudes(n_alt, config.top_km);
    let truth = synthetic_profiles(&altitudes, n_g, config.scale_height_km, rng);

    let mut l = DMatrix::zeros(n_l, n_g);
    for g in 0..n_g {
        let centre = (g as f64 + 1.0) / (n_g as f64 + 1.0);
        let column: f64 = (0..n_alt).map(|i| a[(0, i)] * exp(truth[g * n_alt + i])).sum();
        for w in 0..n_l {
            let t = w as f64 / (n_l.max(2) - 1) as f64;
            let shape = 0.1 + 0.9 * exp(-0.5 * ((t - centre) / 0.12).powi(2));
            l[(w, g)] = config.peak_optical_depth[g] * shape / column;
        }
    }
    finish_gomos(GomosModel::new(a, l)?, truth, altitudes, config, rng)
}

/// Occultation problem on given path lengths `a` and cross sections `l`,
/// with the synthetic truth, prior and noise of [`gomos_desk`]. Only
/// `top_km`, `scale_height_km`, `corr_length_km` and `noise_std` are read
/// from `config`.
pub fn gomos_with_operators<R: Rng + ?Sized>(
    a: DMatrix<f64>,
    l: DMatrix<f64>,
    config: &GomosConfig,
    rng: &mut R,
) -> Result<GomosProblem> {
    let model = GomosModel::new(a, l)?;
    if model.n_alt() < 2 || model.n_gas() == 0 || model.n_wavelength() == 0 {
        return Err(invalid!("need at least 2 layers, one gas and one wavelength"));
    }
    let altitudes = layer_altitudes(model.n_alt(), config.top_km);
    let truth = synthetic_profiles(&altitudes, model.n_gas(), config.scale_height_km, rng);
    finish_gomos(model, truth, altitudes, config, rng)
}

fn layer_altitudes(n_alt: usize, top_km: f64) -> Vec<f64> {
    let dz = top_km / n_alt as f64;
    (0..n_alt).map(|i| (i as f64 + 0.5) * dz).collect()
}

fn synthetic_profiles<R: Rng + ?Sized>(altitudes: &[f64], n_g: usize, scale_height_km: f64, rng: &mut R) -> DVector<f64> {
    let n_alt = altitudes.len();
    let mut truth = DVector::zeros(n_alt * n_g);
    for g in 0..n_g {
        let phase = rng.random_range(0.0..core::f64::consts::TAU);
        for (i, z) in altitudes.iter().enumerate() {
            truth[g * n_alt + i] = -z / scale_height_km + 0.2 * sin(phase + z / 15.0);
        }
    }
    truth
}

fn finish_gomos<R: Rng + ?Sized>(
    model: GomosModel,
    truth: DVector<f64>,
    altitudes: Vec<f64>,
    config: &GomosConfig,
    rng: &mut R,
) -> Result<GomosProblem> {
    let n_alt = model.n_alt();
    let n_g = model.n_gas();
    let mut mean = DVector::zeros(n_alt * n_g);
    let mut cov = DMatrix::zeros(n_alt * n_g, n_alt * n_g);
    for g in 0..n_g {
        let block: Vec<f64> = (0..n_alt).map(|i| truth[g * n_alt + i]).collect();
        let m = crate::stats::mean(&block);
        let var = block.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n_alt as f64;
        for i in 0..n_alt {
            mean[g * n_alt + i] = m;
            for j in 0..n_alt {
                let d = (altitudes[i] - altitudes[j]) / config.corr_length_km;
                cov[(g * n_alt + i, g * n_alt + j)] = var * exp(-0.5 * d * d) + if i == j { 1e-8 * var } else { 0.0 };
            }
        }
    }
    let prior = GaussianDist::new(mean, SpdMatrix::new(cov)?)?;

    use crate::models::ForwardModel;
    let clean = model.evaluate(&truth)?;
    let data = &clean + standard_normal(rng, clean.len()) * config.noise_std;
    let noise = SpdMatrix::from_diagonal(&DVector::from_element(clean.len(), config.noise_std * config.noise_std))?;
    Ok(GomosProblem { likelihood: GaussianLikelihood::new(model, data, noise)?, prior, truth, altitudes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ForwardModel, LogLikelihood};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_blg_shapes_and_reproducibility() {
        let a = random_blg(7, 3, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = random_blg(7, 3, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a.forward, b.forward);
        assert_eq!(a.data, b.data);
        assert_eq!(a.hessian().shape(), (7, 7));
        assert!(random_blg(0, 3, &mut ChaCha8Rng::seed_from_u64(1)).is_err());
    }

    #[test]
    fn concentrated_problem_hits_the_requested_ratio() {
        let p = concentrated_blg_2d(1e-4, 0.3, 1.0).unwrap();
        let post = p.posterior().unwrap();
        let d = DVector::from_vec(vec![libm::cos(0.3), sin(0.3)]);
        let along = (d.transpose() * post.cov().matrix() * &d)[0];
        assert!((along - 1e-4).abs() < 1e-12);
        let eig = p.analytic_pencil().unwrap();
        assert!((eig.eigenvalues[0] - 1e-4).abs() < 1e-12);
        assert!((eig.eigenvalues[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn toy_likelihoods_match_their_log_posteriors() {
        for toy in [Toy1d::Linear, Toy1d::Quadratic, Toy1d::Cubic] {
            let lik = toy.likelihood().unwrap();
            let x = DVector::from_element(1, 1.3);
            let a = lik.log_likelihood(&x).unwrap() - 0.5 * 1.3 * 1.3;
            let b = toy.log_posterior(1.3);
            let x0 = DVector::from_element(1, 0.0);
            let c = lik.log_likelihood(&x0).unwrap();
            assert!(((a - c) - (b - toy.log_posterior(0.0))).abs() < 1e-9);
        }
    }

    #[test]
    fn grid_density_recovers_a_gaussian() {
        let g = GridDensity::from_log(|x| -0.5 * (x - 1.0) * (x - 1.0) / 4.0, -20.0, 20.0, 40_000).unwrap();
        assert!((g.mean() - 1.0).abs() < 1e-9);
        assert!((g.variance() - 4.0).abs() < 1e-6);
        assert_eq!(g.modes(0.01).len(), 1);
    }

    #[test]
    fn groundwater_instance() {
        let cfg = GroundwaterConfig { n_modes: 20, nodes: 41, truth_modes: 30, truth_refinement: 2, ..Default::default() };
        let p = groundwater(&cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(p.likelihood.dim(), 20);
        assert_eq!(p.likelihood.data().len(), 7);
        assert!(p.noise_std > 0.0);
        let h = p.model().evaluate(&DVector::zeros(20)).unwrap();
        // unit permeability: h(s) = s - s^2 / 2
        let s = p.model().solver().grid()[p.model().solver().sensors()[0]];
        assert!((h[0] - (s - s * s / 2.0)).abs() < 1e-12);
        assert!(h.iter().zip(h.iter().skip(1)).all(|(a, b)| a <= b));
        let e = DMatrix::identity(20, 1);
        let f = p.mass_fraction_below(&e, 1.0);
        assert!((f - 1.0).abs() < 1e-12);
    }

    #[test]
    fn limb_geometry_is_upper_triangular_and_positive() {
        let a = limb_geometry(5, 50.0);
        for j in 0..5 {
            for i in 0..5 {
                if i < j {
                    assert_eq!(a[(j, i)], 0.0);
                } else {
                    assert!(a[(j, i)] > 0.0);
                }
            }
        }
        // the tangent layer is crossed over twice sqrt(2 R dz + dz^2)
        let dz = 10.0;
        assert!((a[(0, 0)] - 2.0 * sqrt(2.0 * EARTH_RADIUS_KM * dz + dz * dz)).abs() < 1e-9);
    }

    #[test]
    fn gomos_instance_optical_depths() {
        let cfg = GomosConfig::default();
        let p = gomos_desk(&cfg, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(p.prior.dim(), 40);
        let m = p.likelihood.model();
        assert_eq!((m.n_alt(), m.n_gas(), m.n_wavelength()), (10, 4, 30));
        let b = m.concentrations(&p.truth);
        for g in 0..4 {
            let tau_max = (0..30)
                .map(|w| (0..10).map(|i| m.path_lengths()[(0, i)] * b[(i, g)]).sum::<f64>() * m.cross_sections()[(w, g)])
                .fold(0.0, f64::max);
            assert!(tau_max <= cfg.peak_optical_depth[g] * (1.0 + 1e-12));
            assert!(tau_max >= 0.9 * cfg.peak_optical_depth[g]);
        }
    }

    #[test]
    fn given_operators_reproduce_the_desk_instance() {
        let cfg = GomosConfig::default();
        let p = gomos_desk(&cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let m = p.likelihood.model();
        let q =
            gomos_with_operators(m.path_lengths().clone(), m.cross_sections().clone(), &cfg, &mut ChaCha8Rng::seed_from_u64(9))
                .unwrap();
        assert_eq!(p.truth, q.truth);
        assert_eq!(p.likelihood.data(), q.likelihood.data());
        assert_eq!(p.prior.cov().matrix(), q.prior.cov().matrix());
        assert!(
            gomos_with_operators(DMatrix::zeros(2, 3), DMatrix::zeros(4, 1), &cfg, &mut ChaCha8Rng::seed_from_u64(9)).is_err()
        );
    }
}
