//! Experiment configuration.
//!
//! A run is described by one TOML file. Every table rejects unknown keys and
//! every field not listed in a file takes the default shown by
//! `ExperimentConfig::default()`.

use std::path::{Path, PathBuf};

use cis_core::pipelines::{ChainConfig, IterativeConfig, SmcConfig, StopThresholds};
use cis_core::problems::{GomosConfig, GroundwaterConfig};
use cis_core::reduction::{RankMode, RankRule, RankSchedule};
use cis_core::samplers::{AdaptiveConfig, ResampleScheme};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    /// Seed of every sampler; `--seed` overrides it.
    pub seed: u64,
    /// `--out` overrides it.
    pub output_dir: PathBuf,
    pub problem: ProblemSpec,
    pub method: MethodSpec,
    pub rank: RankSpec,
    pub sampler: SamplerSpec,
    pub blg_check: BlgCheckSpec,
    pub compare: CompareSpec,
    pub diagnose: DiagnoseSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            output_dir: PathBuf::from("cis-out"),
            problem: ProblemSpec::default(),
            method: MethodSpec::default(),
            rank: RankSpec::default(),
            sampler: SamplerSpec::default(),
            blg_check: BlgCheckSpec::default(),
            compare: CompareSpec::default(),
            diagnose: DiagnoseSpec::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let config: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.problem.validate()?;
        self.rank.rule().validate(usize::MAX).map_err(|e| CliError::Config(e.to_string()))?;
        self.method.validate()?;
        self.sampler.validate()?;
        self.blg_check.validate()?;
        if self.compare.n_samples < 2 {
            return Err(CliError::Config("compare.n_samples must be at least 2".into()));
        }
        if !self.compare.fd_step.is_finite() || self.compare.fd_step <= 0.0 {
            return Err(CliError::Config("compare.fd_step must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProblemSpec {
    /// Random linear-Gaussian instance.
    Linear {
        #[serde(default)]
        seed: u64,
        n: usize,
        m: usize,
    },
    /// 2D standard-normal prior observed along one direction.
    #[serde(rename = "concentrated-2d")]
    Concentrated2d {
        #[serde(default = "default_variance_ratio")]
        variance_ratio: f64,
        #[serde(default = "default_theta")]
        theta: f64,
        #[serde(default = "default_y")]
        y: f64,
    },
    Groundwater(GroundwaterSpec),
    Gomos(GomosSpec),
}

fn default_variance_ratio() -> f64 {
    1e-4
}

fn default_theta() -> f64 {
    0.7
}

fn default_y() -> f64 {
    1.0
}

impl Default for ProblemSpec {
    fn default() -> Self {
        ProblemSpec::Linear { seed: 0, n: 6, m: 3 }
    }
}

impl ProblemSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            ProblemSpec::Linear { .. } => "linear",
            ProblemSpec::Concentrated2d { .. } => "concentrated-2d",
            ProblemSpec::Groundwater(_) => "groundwater",
            ProblemSpec::Gomos(_) => "gomos",
        }
    }

    fn validate(&self) -> CliResult<()> {
        match self {
            ProblemSpec::Linear { n, m, .. } if *n == 0 || *m == 0 => {
                Err(CliError::Config("problem.n and problem.m must be positive".into()))
            }
            ProblemSpec::Concentrated2d { variance_ratio, .. } if !(*variance_ratio > 0.0 && *variance_ratio < 1.0) => {
                Err(CliError::Config("problem.variance_ratio must lie in (0, 1)".into()))
            }
            ProblemSpec::Gomos(g) if g.path_lengths_csv.is_some() != g.cross_sections_csv.is_some() => {
                Err(CliError::Config("problem.path_lengths_csv and problem.cross_sections_csv go together".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroundwaterSpec {
    /// Seed of the synthetic truth and the noise.
    pub seed: u64,
    pub n_modes: usize,
    pub nodes: usize,
    pub corr_length: f64,
    pub std_dev: f64,
    pub sensors: Vec<f64>,
    pub noise_level: f64,
    pub truth_modes: usize,
    pub truth_refinement: usize,
}

impl Default for GroundwaterSpec {
    fn default() -> Self {
        let d = GroundwaterConfig::default();
        Self {
            seed: 0,
            n_modes: d.n_modes,
            nodes: d.nodes,
            corr_length: d.corr_length,
            std_dev: d.std_dev,
            sensors: d.sensors,
            noise_level: d.noise_level,
            truth_modes: d.truth_modes,
            truth_refinement: d.truth_refinement,
        }
    }
}

impl GroundwaterSpec {
    pub fn core(&self) -> GroundwaterConfig {
        GroundwaterConfig {
            n_modes: self.n_modes,
            nodes: self.nodes,
            corr_length: self.corr_length,
            std_dev: self.std_dev,
            sensors: self.sensors.clone(),
            noise_level: self.noise_level,
            truth_modes: self.truth_modes,
            truth_refinement: self.truth_refinement,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GomosSpec {
    pub seed: u64,
    pub n_alt: usize,
    pub n_wavelength: usize,
    pub peak_optical_depth: Vec<f64>,
    pub top_km: f64,
    pub scale_height_km: f64,
    pub corr_length_km: f64,
    pub noise_std: f64,
    /// Path-length matrix `A` (dims header, then rows). Replaces the
    /// built-in limb geometry together with `cross_sections_csv`.
    pub path_lengths_csv: Option<PathBuf>,
    /// Cross-section matrix `L`, one row per wavelength.
    pub cross_sections_csv: Option<PathBuf>,
}

impl Default for GomosSpec {
    fn default() -> Self {
        let d = GomosConfig::default();
        Self {
            seed: 0,
            n_alt: d.n_alt,
            n_wavelength: d.n_wavelength,
            peak_optical_depth: d.peak_optical_depth,
            top_km: d.top_km,
            scale_height_km: d.scale_height_km,
            corr_length_km: d.corr_length_km,
            noise_std: d.noise_std,
            path_lengths_csv: None,
            cross_sections_csv: None,
        }
    }
}

impl GomosSpec {
    pub fn core(&self) -> GomosConfig {
        GomosConfig {
            n_alt: self.n_alt,
            n_wavelength: self.n_wavelength,
            peak_optical_depth: self.peak_optical_depth.clone(),
            top_km: self.top_km,
            scale_height_km: self.scale_height_km,
            corr_length_km: self.corr_length_km,
            noise_std: self.noise_std,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MethodSpec {
    /// Iterative construction from prior samples and reduced chains.
    Cis(IterativeSpec),
    /// Tempered construction for degenerate prior weights.
    CisSmc(SmcSpec),
}

impl Default for MethodSpec {
    fn default() -> Self {
        MethodSpec::Cis(IterativeSpec::default())
    }
}

impl MethodSpec {
    fn validate(&self) -> CliResult<()> {
        match self {
            MethodSpec::Cis(s) if s.n_init < 2 || s.chain_steps == 0 || s.max_kept == 0 || s.n_perp == 0 => {
                Err(CliError::Config("method needs n_init >= 2 and positive chain_steps, max_kept, n_perp".into()))
            }
            MethodSpec::CisSmc(s) if s.n_samp < 2 || s.n_perp == 0 || !(s.ess_fraction > 0.0 && s.ess_fraction < 1.0) => {
                Err(CliError::Config("method needs n_samp >= 2, n_perp >= 1 and ess_fraction in (0, 1)".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IterativeSpec {
    pub n_init: usize,
    pub n_ite: usize,
    pub chain_steps: usize,
    pub max_kept: usize,
    pub n_perp: usize,
    pub adapt_start: usize,
    /// Grow the rank cap over the iterations instead of using `rank.r_max`
    /// from the start.
    pub rank_schedule: bool,
    pub bound_n_mc: usize,
}

impl Default for IterativeSpec {
    fn default() -> Self {
        let d = IterativeConfig::default();
        Self {
            n_init: d.n_init,
            n_ite: d.n_ite,
            chain_steps: d.chain.n_steps,
            max_kept: d.chain.max_kept,
            n_perp: d.chain.n_perp,
            adapt_start: d.chain.adaptive.start,
            rank_schedule: d.schedule.is_some(),
            bound_n_mc: d.bound_n_mc,
        }
    }
}

impl IterativeSpec {
    pub fn core(&self, rank: RankRule) -> IterativeConfig {
        IterativeConfig {
            n_init: self.n_init,
            n_ite: self.n_ite,
            rank,
            schedule: self.rank_schedule.then(RankSchedule::default),
            chain: ChainConfig {
                n_steps: self.chain_steps,
                max_kept: self.max_kept,
                n_perp: self.n_perp,
                adaptive: AdaptiveConfig { start: self.adapt_start, ..AdaptiveConfig::default() },
            },
            bound_n_mc: self.bound_n_mc,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Multinomial,
    Systematic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmcSpec {
    pub n_samp: usize,
    pub n_moves: usize,
    pub n_perp: usize,
    pub ess_fraction: f64,
    pub degenerate_ess_fraction: f64,
    pub degenerate_max_weight: f64,
    /// Resampling clip constant; `0` disables clipping.
    pub clip: f64,
    pub scheme: Scheme,
    pub max_stages: usize,
    pub pcn_step: f64,
    pub target_accept: f64,
}

impl Default for SmcSpec {
    fn default() -> Self {
        let d = SmcConfig::default();
        Self {
            n_samp: d.n_samp,
            n_moves: d.n_moves,
            n_perp: d.n_perp,
            ess_fraction: d.ess_fraction,
            degenerate_ess_fraction: d.degenerate_ess_fraction,
            degenerate_max_weight: d.degenerate_max_weight,
            clip: d.clip.unwrap_or(0.0),
            scheme: Scheme::Systematic,
            max_stages: d.max_stages,
            pcn_step: d.pcn_step,
            target_accept: d.target_accept,
        }
    }
}

impl SmcSpec {
    pub fn core(&self, rank: RankRule) -> SmcConfig {
        SmcConfig {
            n_samp: self.n_samp,
            n_moves: self.n_moves,
            n_perp: self.n_perp,
            rank,
            ess_fraction: self.ess_fraction,
            degenerate_ess_fraction: self.degenerate_ess_fraction,
            degenerate_max_weight: self.degenerate_max_weight,
            clip: (self.clip > 0.0).then_some(self.clip),
            scheme: match self.scheme {
                Scheme::Multinomial => ResampleScheme::Multinomial,
                Scheme::Systematic => ResampleScheme::Systematic,
            },
            max_stages: self.max_stages,
            pcn_step: self.pcn_step,
            target_accept: self.target_accept,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RankKind {
    /// Largest relative eigenvalue gap, extended while the spectrum still varies.
    Plateau,
    /// Every eigenvalue at or below `threshold`.
    Threshold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankSpec {
    pub rule: RankKind,
    pub variation: f64,
    pub threshold: f64,
    pub r_min: usize,
    pub r_max: usize,
}

impl Default for RankSpec {
    fn default() -> Self {
        Self { rule: RankKind::Plateau, variation: 0.10, threshold: 0.6, r_min: 1, r_max: 10 }
    }
}

impl RankSpec {
    pub fn rule(&self) -> RankRule {
        let mode = match self.rule {
            RankKind::Plateau => RankMode::Plateau { variation: self.variation },
            RankKind::Threshold => RankMode::Threshold(self.threshold),
        };
        RankRule { mode, r_min: self.r_min, r_max: self.r_max }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleMode {
    /// Two-stage chain targeting the exact posterior.
    Delayed,
    /// Chain on the informed coordinates, completed from the conditional prior.
    Approximate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSpec {
    pub mode: SampleMode,
    pub n_steps: usize,
    pub burn_in: usize,
    /// Conditional-prior draws per reduced state in approximate mode; `0`
    /// pins the non-informed coordinates at their prior mean.
    pub completions: usize,
    pub adapt_start: usize,
    pub max_lag: usize,
}

impl Default for SamplerSpec {
    fn default() -> Self {
        Self { mode: SampleMode::Delayed, n_steps: 20_000, burn_in: 1_000, completions: 1, adapt_start: 500, max_lag: 50 }
    }
}

impl SamplerSpec {
    fn validate(&self) -> CliResult<()> {
        if self.n_steps == 0 || self.burn_in >= self.n_steps {
            return Err(CliError::Config("sampler needs n_steps > burn_in".into()));
        }
        if self.max_lag == 0 {
            return Err(CliError::Config("sampler.max_lag must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckBasis {
    /// Eigenvectors with the smallest eigenvalues, the informed ones.
    Minor,
    /// Eigenvectors with the largest eigenvalues; a negative control.
    Leading,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlgCheckSpec {
    pub instances: usize,
    pub n_max: usize,
    pub m_max: usize,
    /// Fixed rank; `None` draws one per instance in `1..=min(n, m)`.
    pub rank: Option<usize>,
    /// Use `rank = n` on every instance.
    pub full_rank: bool,
    pub basis: CheckBasis,
    /// Random prior-orthonormal projectors the optimal one is compared with.
    pub alternatives: usize,
    pub tolerance: f64,
}

impl Default for BlgCheckSpec {
    fn default() -> Self {
        Self {
            instances: 50,
            n_max: 20,
            m_max: 10,
            rank: None,
            full_rank: false,
            basis: CheckBasis::Minor,
            alternatives: 20,
            tolerance: 1e-8,
        }
    }
}

impl BlgCheckSpec {
    fn validate(&self) -> CliResult<()> {
        if self.instances == 0 || self.n_max < 2 || self.m_max == 0 {
            return Err(CliError::Config("blg_check needs instances >= 1, n_max >= 2, m_max >= 1".into()));
        }
        if self.rank == Some(0) {
            return Err(CliError::Config("blg_check.rank must be positive".into()));
        }
        if !self.tolerance.is_finite() || self.tolerance <= 0.0 {
            return Err(CliError::Config("blg_check.tolerance must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareSpec {
    /// Prior samples shared by both constructions.
    pub n_samples: usize,
    /// Relative finite-difference step of the gradient-based construction.
    pub fd_step: f64,
}

impl Default for CompareSpec {
    fn default() -> Self {
        Self { n_samples: 1_000, fd_step: cis_core::models::DEFAULT_FD_STEP }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnoseSpec {
    pub max_variance: f64,
    pub min_expectation: f64,
}

impl Default for DiagnoseSpec {
    fn default() -> Self {
        let d = StopThresholds::default();
        Self { max_variance: d.max_variance, min_expectation: d.min_expectation }
    }
}

impl DiagnoseSpec {
    pub fn thresholds(&self) -> StopThresholds {
        StopThresholds { max_variance: self.max_variance, min_expectation: self.min_expectation }
    }
}
