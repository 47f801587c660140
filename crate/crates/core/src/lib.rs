//! Inference over execution traces of probabilistic programs.
//!
//! Models are deterministic programs that draw randomness through a
//! [`trace::Ctx`], condition with `observe` and report with `predict`.
//! Three engines run over them: adaptive sequential Monte Carlo ([`smc`]),
//! particle independent Metropolis–Hastings ([`pimh`]) and particle Gibbs
//! ([`pg`]). The [`benchmarks`] module carries the reference models and their
//! exact posteriors.
//!
//! Numerical kernels (densities, weights, oracles, divergences) are generic
//! over [`num::Real`]; the aliases below fix them to `f64`.

// Negated comparisons like `!(x > 0.0)` reject NaN along with the bad values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod benchmarks;
pub mod distributions;
pub mod error;
pub mod num;
pub mod pg;
pub mod pimh;
pub mod posterior;
pub mod resampling;
pub mod smc;
pub mod trace;

pub use benchmarks::{Benchmark, BenchmarkId, KlTracker, Marginal};
pub use error::{Error, Result};
pub use resampling::{OffspringCounts, Scheme};
pub use pg::{pg_chain, PgChain, RetainedTrajectory};
pub use pimh::{pimh_chain, ChainOutput, PimhChain};
pub use posterior::{evidence_weighted_estimate, posterior_estimate, EmpiricalPosterior, PredictPool};
pub use smc::{run_sweep, SmcConfig, SmcRunner, SweepResult};
pub use trace::{Ctx, ExecutionTrace, Model, Particle, PredictFormat, Step};

pub type Weights = resampling::WeightVector<f64>;
pub type Weights32 = resampling::WeightVector<f32>;
pub type ExactPosterior = benchmarks::ExactPosterior<f64>;
pub type ExactPosterior32 = benchmarks::ExactPosterior<f32>;
