//! The subcommands. Each takes a resolved [`Context`], writes its files
//! under `context.out` and returns a summary the binary prints.

mod blg_check;
mod compare;
mod diagnose;
mod reduce;
mod sample;

use std::path::PathBuf;

use cis_core::{SpdMatrix, Vector};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use blg_check::{blg_check, BlgCheckReport, BlgCheckRow};
pub use compare::{compare, CompareSummary};
pub use diagnose::{diagnose, DiagnoseReport};
pub use reduce::{reduce, ReduceSummary};
pub use sample::{sample, SampleSummary};

use crate::config::ExperimentConfig;

/// Configuration with the command-line overrides applied.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub out: PathBuf,
    pub emit_plot_data: bool,
}

impl Context {
    pub fn new(config: ExperimentConfig, seed: Option<u64>, out: Option<PathBuf>, emit_plot_data: bool) -> Self {
        let seed = seed.unwrap_or(config.seed);
        let out = out.unwrap_or_else(|| config.output_dir.clone());
        Self { config, seed, out, emit_plot_data }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }

    /// Generator independent of [`Context::rng`], for optional outputs that
    /// must not shift the main stream.
    pub fn side_rng(&self) -> ChaCha8Rng {
        let mut rng = self.rng();
        rng.set_stream(1);
        rng
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

/// Random `C`-orthonormal basis `L^{-T} Q` with `Q` orthogonal.
pub(crate) fn random_prior_basis<R: rand::Rng + ?Sized>(c: &SpdMatrix, rng: &mut R) -> DMatrix<f64> {
    let n = c.dim();
    let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let q = g.qr().q();
    c.chol_l().transpose().solve_upper_triangular(&q).expect("Cholesky factor is invertible")
}

pub(crate) fn opt(x: Option<f64>) -> f64 {
    x.unwrap_or(f64::NAN)
}

pub(crate) fn max_of(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(0.0, f64::max)
}

pub(crate) fn to_vec(v: &Vector) -> Vec<f64> {
    v.iter().copied().collect()
}
