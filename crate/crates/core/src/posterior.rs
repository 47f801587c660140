//! Pooling weighted predict outputs into empirical posteriors.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::smc::SweepResult;

/// Weighted empirical distribution over rendered predict values.
///
/// Each sweep contributes its normalized weights, so pooling `S` sweeps gives
/// every sweep equal mass.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EmpiricalPosterior {
    mass: BTreeMap<String, f64>,
    total: f64,
    samples: usize,
}

impl EmpiricalPosterior {
    pub fn add(&mut self, value: &str, weight: f64) {
        match self.mass.get_mut(value) {
            Some(m) => *m += weight,
            None => {
                self.mass.insert(value.to_owned(), weight);
            }
        }
        self.total += weight;
        self.samples += 1;
    }

    pub fn merge(&mut self, other: &EmpiricalPosterior) {
        for (v, &m) in &other.mass {
            *self.mass.entry(v.clone()).or_insert(0.0) += m;
        }
        self.total += other.total;
        self.samples += other.samples;
    }

    /// Unnormalized accumulated mass per value.
    pub fn mass(&self) -> &BTreeMap<String, f64> {
        &self.mass
    }

    pub fn total_mass(&self) -> f64 {
        self.total
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn probability(&self, value: &str) -> f64 {
        self.mass.get(value).map_or(0.0, |m| m / self.total)
    }

    /// Probabilities of the integer values in `support`, in order.
    pub fn categorical(&self, support: &[i64]) -> Vec<f64> {
        let mut p = vec![0.0; support.len()];
        for (v, &m) in &self.mass {
            if let Ok(k) = v.parse::<i64>() {
                if let Some(i) = support.iter().position(|&s| s == k) {
                    p[i] += m / self.total;
                }
            }
        }
        p
    }

    /// `(value, normalized weight)` pairs with values parsed as reals.
    pub fn real_values(&self) -> Result<Vec<(f64, f64)>> {
        self.mass
            .iter()
            .map(|(v, &m)| {
                v.parse::<f64>()
                    .map(|x| (x, m / self.total))
                    .map_err(|_| Error::Domain(format!("predict value `{v}` is not real")))
            })
            .collect()
    }

    pub fn mean(&self) -> Result<f64> {
        Ok(self.real_values()?.iter().map(|(x, w)| x * w).sum())
    }

    pub fn variance(&self) -> Result<f64> {
        let vals = self.real_values()?;
        let m: f64 = vals.iter().map(|(x, w)| x * w).sum();
        Ok(vals.iter().map(|(x, w)| w * (x - m).powi(2)).sum())
    }
}

/// Empirical posteriors of every predict name seen so far.
#[derive(Clone, Debug, Default)]
pub struct PredictPool {
    by_name: BTreeMap<String, EmpiricalPosterior>,
}

impl PredictPool {
    pub fn add(&mut self, name: &str, value: &str, weight: f64) {
        if let Some(p) = self.by_name.get_mut(name) {
            p.add(value, weight);
        } else {
            let mut p = EmpiricalPosterior::default();
            p.add(value, weight);
            self.by_name.insert(name.to_owned(), p);
        }
    }

    pub fn add_sweep(&mut self, sweep: &SweepResult) {
        for (trace, w) in sweep.weighted() {
            for p in &trace.predicts {
                self.add(&p.name, &p.value, w);
            }
        }
    }

    pub fn get(&self, name: &str) -> Result<&EmpiricalPosterior> {
        self.by_name
            .get(name)
            .ok_or_else(|| Error::UnknownPredict(name.to_owned()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.by_name.keys().map(String::as_str)
    }
}

/// Pools the predict `name` across sweeps using each sweep's final weights.
pub fn posterior_estimate(results: &[SweepResult], name: &str) -> Result<EmpiricalPosterior> {
    let mut post = EmpiricalPosterior::default();
    for r in results {
        for (trace, w) in r.weighted() {
            for p in trace.predicts.iter().filter(|p| p.name == name) {
                post.add(&p.value, w);
            }
        }
    }
    if post.samples() == 0 {
        return Err(Error::UnknownPredict(name.to_owned()));
    }
    Ok(post)
}

/// Pools sweeps with each sweep weighted by its evidence estimate.
///
/// Every particle then carries its unnormalized importance weight relative to
/// all particles of all sweeps, which keeps the pooled estimate consistent
/// when single sweeps are too small to be accurate on their own.
pub fn evidence_weighted_estimate(results: &[SweepResult], name: &str) -> Result<EmpiricalPosterior> {
    let top = results.iter().map(|r| r.log_evidence).fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return Err(Error::DegenerateSweep { observe: 0 });
    }
    let mut post = EmpiricalPosterior::default();
    for r in results {
        let scale = (r.log_evidence - top).exp();
        for (trace, w) in r.weighted() {
            for p in trace.predicts.iter().filter(|p| p.name == name) {
                post.add(&p.value, w * scale);
            }
        }
    }
    if post.samples() == 0 {
        return Err(Error::UnknownPredict(name.to_owned()));
    }
    Ok(post)
}
