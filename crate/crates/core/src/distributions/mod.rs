//! Random streams, samplers and log-densities used by the benchmark programs.
//!
//! Normal distributions take a *variance* as their second parameter. Gamma
//! distributions are shape/rate.

mod memo;
mod stream;
mod urn;

pub use memo::MemoTable;
pub use stream::{mix_seed, RngStream};
pub use urn::PolyaUrnState;

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};
use crate::num::Real;

/// Tolerance on `Σ probs = 1` for discrete draws.
pub const PROB_SUM_TOLERANCE: f64 = 1e-9;

/// Distribution family of a recorded random choice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DistId {
    Normal,
    Gamma,
    Discrete,
    PolyaUrn,
}

fn check_variance<F: Real>(var: F) -> Result<()> {
    if var > F::zero() && var.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("normal variance must be positive, got {var}")))
    }
}

/// `ln N(x; mu, var)`.
pub fn normal_lnp<F: Real>(x: F, mu: F, var: F) -> Result<F> {
    check_variance(var)?;
    let d = x - mu;
    let two = F::lit(2.0);
    Ok(-(two * F::PI() * var).ln() / two - d * d / (two * var))
}

pub fn normal_rng<R: Rng + ?Sized>(rng: &mut R, mu: f64, var: f64) -> Result<f64> {
    check_variance(var)?;
    let z: f64 = StandardNormal.sample(rng);
    Ok(mu + var.sqrt() * z)
}

pub fn gamma_rng<R: Rng + ?Sized>(rng: &mut R, shape: f64, rate: f64) -> Result<f64> {
    if !(shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite()) {
        return Err(Error::Domain(format!(
            "gamma parameters must be positive, got shape={shape} rate={rate}"
        )));
    }
    let g = Gamma::new(shape, 1.0 / rate).map_err(|e| Error::Domain(e.to_string()))?;
    Ok(g.sample(rng))
}

/// Validates a probability vector, returning its sum.
pub fn check_probs(probs: &[f64]) -> Result<f64> {
    if probs.is_empty() {
        return Err(Error::Domain("empty probability vector".into()));
    }
    if let Some(p) = probs.iter().find(|p| !(**p >= 0.0) || !p.is_finite()) {
        return Err(Error::Domain(format!("invalid probability entry {p}")));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
        return Err(Error::Domain(format!("probabilities sum to {sum}, expected 1")));
    }
    Ok(sum)
}

/// Draws an index in `0..probs.len()` with probability `probs[i]`.
pub fn discrete_rng<R: Rng + ?Sized>(rng: &mut R, probs: &[f64]) -> Result<usize> {
    let sum = check_probs(probs)?;
    let u = rng.random::<f64>() * sum;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_positive = i;
            if u < acc {
                return Ok(i);
            }
        }
    }
    Ok(last_positive)
}
