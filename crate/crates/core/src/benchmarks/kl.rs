//! `KL(p̂ || p)` between pooled samples and an exact posterior.
//!
//! Real-valued predicts are scored on a fixed grid of 200 bins spanning six
//! standard deviations either side of the exact posterior mean. Samples
//! outside the grid fall into the edge bins, and the edge bins of the exact
//! distribution carry the corresponding tails.

use std::collections::HashMap;

use statrs::function::erf::erfc;

use crate::benchmarks::{ExactPosterior, Marginal};
use crate::error::{Error, Result};
use crate::num::Real;

pub const GRID_BINS: usize = 200;
pub const GRID_HALF_WIDTH_SDS: f64 = 6.0;

/// `Σ p̂ ln(p̂ / p)` with `0 ln 0 = 0`. Infinite when `p̂ > 0` where `p = 0`.
pub fn kl_divergence<F: Real>(p_hat: &[F], p: &[F]) -> Result<F> {
    if p_hat.len() != p.len() {
        return Err(Error::Domain(format!(
            "distributions have different supports ({} vs {})",
            p_hat.len(),
            p.len()
        )));
    }
    let mut total = F::zero();
    for (&a, &b) in p_hat.iter().zip(p) {
        if a <= F::zero() {
            continue;
        }
        if b <= F::zero() {
            log::warn!("estimate puts mass {a} where the reference has none");
            return Ok(F::infinity());
        }
        total = total + a * (a / b).ln();
    }
    Ok(total)
}

/// Equal-width bins over `mean ± 6 sd`.
#[derive(Clone, Debug, PartialEq)]
pub struct BinGrid {
    lo: f64,
    width: f64,
    bins: usize,
}

impl BinGrid {
    pub fn around(mean: f64, variance: f64) -> Result<Self> {
        Self::new(mean, variance, GRID_BINS, GRID_HALF_WIDTH_SDS)
    }

    pub fn new(mean: f64, variance: f64, bins: usize, half_width_sds: f64) -> Result<Self> {
        if !(variance > 0.0 && variance.is_finite()) || bins < 2 || !(half_width_sds > 0.0) {
            return Err(Error::Domain("bin grid needs positive variance, width and ≥ 2 bins".into()));
        }
        let sd = variance.sqrt();
        let lo = mean - half_width_sds * sd;
        Ok(BinGrid { lo, width: 2.0 * half_width_sds * sd / bins as f64, bins })
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    /// Bin of `x`, clamped to the edge bins.
    pub fn index(&self, x: f64) -> usize {
        let i = ((x - self.lo) / self.width).floor();
        if i.is_nan() || i < 0.0 {
            0
        } else {
            (i as usize).min(self.bins - 1)
        }
    }

    /// Inner bin edges, `bins - 1` of them.
    fn edges(&self) -> impl Iterator<Item = f64> + '_ {
        (1..self.bins).map(|i| self.lo + i as f64 * self.width)
    }

    /// Normal probabilities of each bin, tails folded into the edge bins.
    pub fn normal_probs(&self, mean: f64, variance: f64) -> Vec<f64> {
        let sd = variance.sqrt();
        let cdf = |x: f64| 0.5 * erfc(-(x - mean) / (sd * std::f64::consts::SQRT_2));
        let mut prev = 0.0;
        let mut out = Vec::with_capacity(self.bins);
        for e in self.edges() {
            let c = cdf(e);
            out.push(c - prev);
            prev = c;
        }
        out.push(1.0 - prev);
        out
    }
}

#[derive(Clone, Debug)]
enum Target {
    Binned { grid: BinGrid, truth: Vec<f64>, mass: Vec<f64> },
    Categorical { support: Vec<i64>, truth: Vec<f64>, mass: Vec<f64>, outside: f64 },
}

impl Target {
    fn add(&mut self, name: &str, value: &str, weight: f64) -> Result<()> {
        let bad = || Error::Domain(format!("predict {name} has unparsable value `{value}`"));
        match self {
            Target::Binned { grid, mass, .. } => {
                let x: f64 = value.parse().map_err(|_| bad())?;
                mass[grid.index(x)] += weight;
            }
            Target::Categorical { support, mass, outside, .. } => {
                let k: i64 = value.parse().map_err(|_| bad())?;
                match support.iter().position(|&s| s == k) {
                    Some(i) => mass[i] += weight,
                    None => *outside += weight,
                }
            }
        }
        Ok(())
    }

    fn kl(&self) -> f64 {
        let (truth, mass, outside) = match self {
            Target::Binned { truth, mass, .. } => (truth, mass, 0.0),
            Target::Categorical { truth, mass, outside, .. } => (truth, mass, *outside),
        };
        let total: f64 = mass.iter().sum::<f64>() + outside;
        if !(total > 0.0) {
            return f64::INFINITY;
        }
        if outside > 0.0 {
            return f64::INFINITY;
        }
        let p_hat: Vec<f64> = mass.iter().map(|m| m / total).collect();
        kl_divergence(&p_hat, truth).expect("equal lengths")
    }
}

/// Accumulates weighted predict samples and scores them against an exact
/// posterior. Names without an exact marginal are ignored.
#[derive(Clone, Debug)]
pub struct KlTracker {
    names: Vec<String>,
    targets: Vec<Target>,
    index: HashMap<String, usize>,
}

impl KlTracker {
    pub fn new(exact: &ExactPosterior<f64>) -> Result<Self> {
        let mut t = KlTracker { names: Vec::new(), targets: Vec::new(), index: HashMap::new() };
        for (name, m) in exact.iter() {
            let target = match m {
                Marginal::Normal { mean, variance } => {
                    let grid = BinGrid::around(*mean, *variance)?;
                    let truth = grid.normal_probs(*mean, *variance);
                    let mass = vec![0.0; grid.bins()];
                    Target::Binned { grid, truth, mass }
                }
                Marginal::Categorical { support, probs } => Target::Categorical {
                    support: support.clone(),
                    truth: probs.clone(),
                    mass: vec![0.0; probs.len()],
                    outside: 0.0,
                },
            };
            t.index.insert(name.to_owned(), t.targets.len());
            t.names.push(name.to_owned());
            t.targets.push(target);
        }
        Ok(t)
    }

    pub fn add(&mut self, name: &str, value: &str, weight: f64) -> Result<()> {
        match self.index.get(name) {
            Some(&i) => self.targets[i].add(name, value, weight),
            None => Ok(()),
        }
    }

    /// Multiplies all accumulated mass by `factor`.
    pub fn rescale(&mut self, factor: f64) {
        for t in &mut self.targets {
            match t {
                Target::Binned { mass, .. } => mass.iter_mut().for_each(|m| *m *= factor),
                Target::Categorical { mass, outside, .. } => {
                    mass.iter_mut().for_each(|m| *m *= factor);
                    *outside *= factor;
                }
            }
        }
    }

    /// KL of each tracked name, in name order.
    pub fn per_name(&self) -> Vec<(&str, f64)> {
        self.names.iter().map(String::as_str).zip(self.targets.iter().map(Target::kl)).collect()
    }

    /// `(mean, sum)` of the per-name divergences.
    pub fn kl(&self) -> (f64, f64) {
        let per: Vec<f64> = self.targets.iter().map(Target::kl).collect();
        let sum: f64 = per.iter().sum();
        (sum / per.len().max(1) as f64, sum)
    }
}
