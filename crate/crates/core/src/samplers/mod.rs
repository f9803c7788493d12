//! Markov chain and sequential Monte Carlo building blocks.

mod kernels;
mod reduced;
mod smc;

pub use kernels::{mh_chain, AdaptiveConfig, Chain, ProposalKernel};
pub use reduced::{delayed_acceptance, pseudo_marginal_mh, ChainState, DelayedChain, ReducedChain};
pub(crate) use smc::weights_from_log;
pub use smc::{clip_weights, resample, update_beta, update_beta_grouped, ResampleScheme, MIN_BETA_INCREMENT};
