//! Reference models with known posteriors.
//!
//! Each benchmark pairs a model program with an exact answer for its
//! predicts: a conjugate Gaussian update, forward–backward smoothing for the
//! hidden Markov models, and set-partition enumeration for the mixture model.
//! The [`kl`] submodule scores empirical estimates against those answers.

mod crp;
mod gaussian;
mod hmm;
pub mod kl;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

pub use crp::{
    crp_exact, crp_partition_log_prior, normal_gamma_log_marginal, BlockLikelihood, CrpModel,
    NormalGammaPrior, MAX_ENUMERATED,
};
pub use gaussian::{gaussian_exact, GaussianModel, GaussianPosterior};
pub use hmm::{
    hmm_exact, large_observations, simulate_observations, HmmModel, HmmParams, HmmPosterior,
    HMM_LARGE_SEED,
};
pub use kl::{kl_divergence, BinGrid, KlTracker};

use crate::error::{Error, Result};
use crate::num::Real;
use crate::trace::Model;

/// Exact posterior of a single predict name.
#[derive(Clone, Debug, PartialEq)]
pub enum Marginal<F> {
    Normal { mean: F, variance: F },
    Categorical { support: Vec<i64>, probs: Vec<F> },
}

impl<F: Real> Marginal<F> {
    pub fn categorical(support: Vec<i64>, probs: Vec<F>) -> Result<Self> {
        if support.len() != probs.len() {
            return Err(Error::Oracle("support and probabilities differ in length".into()));
        }
        let s: F = probs.iter().copied().sum();
        if (s - F::one()).abs().as_f64() > 1e-9 || probs.iter().any(|p| *p < F::zero()) {
            return Err(Error::Oracle(format!("categorical probabilities sum to {s}")));
        }
        Ok(Marginal::Categorical { support, probs })
    }
}

/// Exact marginals keyed by predict name.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExactPosterior<F> {
    marginals: BTreeMap<String, Marginal<F>>,
}

impl<F: Real> ExactPosterior<F> {
    pub fn new() -> Self {
        ExactPosterior { marginals: BTreeMap::new() }
    }

    pub fn insert(&mut self, name: impl Into<String>, m: Marginal<F>) {
        self.marginals.insert(name.into(), m);
    }

    pub fn get(&self, name: &str) -> Result<&Marginal<F>> {
        self.marginals.get(name).ok_or_else(|| Error::UnknownPredict(name.to_owned()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Marginal<F>)> {
        self.marginals.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.marginals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.marginals.is_empty()
    }
}

/// The four benchmark configurations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BenchmarkId {
    Gaussian,
    HmmSmall,
    HmmLarge,
    Crp,
}

impl BenchmarkId {
    pub const ALL: [BenchmarkId; 4] =
        [BenchmarkId::Gaussian, BenchmarkId::HmmSmall, BenchmarkId::HmmLarge, BenchmarkId::Crp];

    pub fn name(self) -> &'static str {
        match self {
            BenchmarkId::Gaussian => "gaussian",
            BenchmarkId::HmmSmall => "hmm-small",
            BenchmarkId::HmmLarge => "hmm-large",
            BenchmarkId::Crp => "crp",
        }
    }
}

impl fmt::Display for BenchmarkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BenchmarkId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BenchmarkId::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown model `{s}`")))
    }
}

/// A model program together with its exact posterior.
pub struct Benchmark {
    pub id: BenchmarkId,
    pub model: Box<dyn Model + Send>,
    pub exact: ExactPosterior<f64>,
}

impl Benchmark {
    pub fn load(id: BenchmarkId) -> Result<Self> {
        let (model, exact): (Box<dyn Model + Send>, _) = match id {
            BenchmarkId::Gaussian => {
                let m = GaussianModel::default();
                let exact = m.exact()?.to_exact("mu");
                (Box::new(m), exact)
            }
            BenchmarkId::HmmSmall => {
                let m = HmmModel::new(HmmParams::small());
                let exact = m.exact()?;
                (Box::new(m), exact)
            }
            BenchmarkId::HmmLarge => {
                let m = HmmModel::new(HmmParams::large()?);
                let exact = m.exact()?;
                (Box::new(m), exact)
            }
            BenchmarkId::Crp => {
                let m = CrpModel::default();
                let exact = m.exact()?;
                (Box::new(m), exact)
            }
        };
        Ok(Benchmark { id, model, exact })
    }

    pub fn model(&self) -> &(dyn Model + Send) {
        &*self.model
    }
}
