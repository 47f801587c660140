//! Weight normalization, effective sample size and offspring sampling.
//!
//! Offspring counts are unbiased: `E[counts[l]] = L * w[l]` under every scheme.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::num::{log_sum_exp, Real};

/// Normalized particle weights together with their log-domain source.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightVector<F> {
    log_unnorm: Vec<F>,
    norm: Vec<F>,
}

impl<F: Real> WeightVector<F> {
    /// Normalizes log-weights with a max shift.
    ///
    /// Fails with [`Error::DegenerateSweep`] when every entry is `-inf`.
    pub fn normalize(log_unnorm: Vec<F>) -> Result<Self> {
        if log_unnorm.iter().any(|w| w.is_nan() || *w == F::infinity()) {
            return Err(Error::Contract("log-weights must be finite or -inf".into()));
        }
        let lse = log_sum_exp(&log_unnorm);
        if lse == F::neg_infinity() {
            return Err(Error::DegenerateSweep { observe: 0 });
        }
        let norm = log_unnorm.iter().map(|&w| (w - lse).exp()).collect();
        Ok(Self { log_unnorm, norm })
    }

    /// Builds from probabilities that already sum to one (within 1e-9).
    pub fn from_probs(probs: Vec<F>) -> Result<Self> {
        let sum: F = probs.iter().copied().sum();
        if probs.is_empty() || probs.iter().any(|p| !(*p >= F::zero())) {
            return Err(Error::Domain("weights must be nonnegative".into()));
        }
        if (sum - F::one()).abs() > F::lit(1e-9) {
            return Err(Error::Domain(format!("weights sum to {sum}")));
        }
        let log_unnorm = probs.iter().map(|p| p.ln()).collect();
        Ok(Self { log_unnorm, norm: probs })
    }

    pub fn norm(&self) -> &[F] {
        &self.norm
    }

    pub fn log_unnorm(&self) -> &[F] {
        &self.log_unnorm
    }

    pub fn len(&self) -> usize {
        self.norm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.norm.is_empty()
    }

    /// `1 / Σ w²`.
    pub fn ess(&self) -> F {
        F::one() / self.norm.iter().map(|&w| w * w).sum::<F>()
    }
}

/// `1 / Σ w²` of a normalized weight vector.
pub fn ess<F: Real>(w: &WeightVector<F>) -> F {
    w.ess()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Scheme {
    Multinomial,
    Residual,
    #[default]
    Systematic,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Multinomial, Scheme::Residual, Scheme::Systematic];
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Multinomial => "multinomial",
            Scheme::Residual => "residual",
            Scheme::Systematic => "systematic",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multinomial" => Ok(Scheme::Multinomial),
            "residual" => Ok(Scheme::Residual),
            "systematic" => Ok(Scheme::Systematic),
            _ => Err(Error::Config(format!("unknown resampling scheme `{s}`"))),
        }
    }
}

/// Number of offspring per particle.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OffspringCounts(Vec<usize>);

impl OffspringCounts {
    pub fn new(counts: Vec<usize>) -> Self {
        Self(counts)
    }

    /// One offspring per particle.
    pub fn identity(len: usize) -> Self {
        Self(vec![1; len])
    }

    pub fn counts(&self) -> &[usize] {
        &self.0
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    /// Ancestor index list: `l` repeated `counts[l]` times, nondecreasing.
    pub fn to_ancestors(&self) -> Vec<usize> {
        offspring_to_ancestors(self)
    }
}

pub fn offspring_to_ancestors(o: &OffspringCounts) -> Vec<usize> {
    o.0.iter()
        .enumerate()
        .flat_map(|(l, &c)| std::iter::repeat_n(l, c))
        .collect()
}

/// Samples `L = w.len()` offspring.
pub fn sample_offspring<F: Real, R: Rng + ?Sized>(
    w: &WeightVector<F>,
    particles: usize,
    scheme: Scheme,
    rng: &mut R,
) -> Result<OffspringCounts> {
    if particles != w.len() {
        return Err(Error::Contract(format!(
            "offspring count {particles} differs from weight vector length {}",
            w.len()
        )));
    }
    Ok(sample_counts(w.norm(), particles, scheme, rng))
}

/// Draws `draws` offspring over the slots of `w` (which need not have `draws` entries).
pub fn sample_counts<F: Real, R: Rng + ?Sized>(
    w: &[F],
    draws: usize,
    scheme: Scheme,
    rng: &mut R,
) -> OffspringCounts {
    let w: Vec<f64> = w.iter().map(|x| x.as_f64()).collect();
    let counts = match scheme {
        Scheme::Multinomial => multinomial(&w, draws, rng),
        Scheme::Residual => residual(&w, draws, rng),
        Scheme::Systematic => systematic(&w, draws, rng),
    };
    debug_assert_eq!(counts.iter().sum::<usize>(), draws);
    OffspringCounts(counts)
}

fn cumulative(w: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut cum: Vec<f64> = w
        .iter()
        .map(|&x| {
            acc += x;
            acc
        })
        .collect();
    // Positions beyond the rounded total land on the last positive slot.
    if let Some(last) = w.iter().rposition(|&x| x > 0.0) {
        for c in &mut cum[last..] {
            *c = f64::INFINITY;
        }
    }
    cum
}

fn locate(cum: &[f64], u: f64) -> usize {
    cum.partition_point(|&c| c <= u)
}

fn multinomial<R: Rng + ?Sized>(w: &[f64], draws: usize, rng: &mut R) -> Vec<usize> {
    let total: f64 = w.iter().sum();
    let cum = cumulative(w);
    let mut counts = vec![0; w.len()];
    for _ in 0..draws {
        counts[locate(&cum, rng.random::<f64>() * total)] += 1;
    }
    counts
}

fn systematic<R: Rng + ?Sized>(w: &[f64], draws: usize, rng: &mut R) -> Vec<usize> {
    let mut counts = vec![0; w.len()];
    if draws == 0 {
        return counts;
    }
    let total: f64 = w.iter().sum();
    let cum = cumulative(w);
    let step = total / draws as f64;
    let u0 = rng.random::<f64>() * step;
    let mut slot = 0;
    for k in 0..draws {
        let u = u0 + k as f64 * step;
        while cum[slot] <= u {
            slot += 1;
        }
        counts[slot] += 1;
    }
    counts
}

fn residual<R: Rng + ?Sized>(w: &[f64], draws: usize, rng: &mut R) -> Vec<usize> {
    let total: f64 = w.iter().sum();
    let n = draws as f64;
    // Absorb last-ulp rounding in L*w so that exact multiples stay deterministic.
    let eps = 1e-12 * n.max(1.0);
    let mut counts: Vec<usize> = w.iter().map(|&x| (n * x / total + eps).floor() as usize).collect();
    let mut assigned: usize = counts.iter().sum();
    while assigned > draws {
        let i = counts.iter().rposition(|&c| c > 0).expect("positive count");
        counts[i] -= 1;
        assigned -= 1;
    }
    let rest = draws - assigned;
    if rest > 0 {
        let resid: Vec<f64> = w
            .iter()
            .zip(&counts)
            .map(|(&x, &c)| (n * x / total - c as f64).max(0.0))
            .collect();
        let extra = if resid.iter().any(|&r| r > 0.0) {
            multinomial(&resid, rest, rng)
        } else {
            multinomial(w, rest, rng)
        };
        for (c, e) in counts.iter_mut().zip(extra) {
            *c += e;
        }
    }
    counts
}
