use crate::benchmarks::{ExactPosterior, Marginal};
use crate::distributions::normal_lnp;
use crate::error::{Error, Result};
use crate::num::Real;
use crate::trace::{Ctx, Model, Step};

/// Unknown mean of a Gaussian with known noise variance.
///
/// `mu ~ N(prior_mean, prior_var)`, then one observe per datum with
/// `normal_lnp(y, mu, like_var)`, then `predict("mu")`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianModel {
    pub prior_mean: f64,
    pub prior_var: f64,
    pub like_var: f64,
    pub data: Vec<f64>,
    /// Replace every observe increment by 0 (samples the prior).
    pub flatten: bool,
}

impl Default for GaussianModel {
    fn default() -> Self {
        GaussianModel {
            prior_mean: 1.0,
            prior_var: 5.0,
            like_var: 2.0,
            data: vec![9.0, 8.0],
            flatten: false,
        }
    }
}

impl GaussianModel {
    pub fn flattened(mut self) -> Self {
        self.flatten = true;
        self
    }

    pub fn exact(&self) -> Result<GaussianPosterior<f64>> {
        if self.flatten {
            return gaussian_exact(self.prior_mean, self.prior_var, self.like_var, &[]);
        }
        gaussian_exact(self.prior_mean, self.prior_var, self.like_var, &self.data)
    }
}

impl Model for GaussianModel {
    fn run(&self, ctx: &mut Ctx<'_>) -> Step {
        let mu = ctx.normal(self.prior_mean, self.prior_var)?;
        for &y in &self.data {
            let lw = if self.flatten { 0.0 } else { normal_lnp(y, mu, self.like_var)? };
            ctx.observe(lw)?;
        }
        ctx.predict_real("mu", mu)
    }

    fn observe_count(&self) -> Option<usize> {
        Some(self.data.len())
    }
}

/// Posterior of the mean and the marginal likelihood of the data.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianPosterior<F> {
    pub mean: F,
    pub variance: F,
    pub log_evidence: F,
}

impl<F: Real> GaussianPosterior<F> {
    pub fn to_exact(self, name: &str) -> ExactPosterior<F> {
        let mut e = ExactPosterior::new();
        e.insert(name, Marginal::Normal { mean: self.mean, variance: self.variance });
        e
    }
}

/// Conjugate normal update for the mean, with the evidence taken from the
/// joint normal marginal of the data, `N(prior_mean·1, like_var·I + prior_var·11ᵀ)`.
pub fn gaussian_exact<F: Real>(
    prior_mean: F,
    prior_var: F,
    like_var: F,
    data: &[F],
) -> Result<GaussianPosterior<F>> {
    if !(prior_var > F::zero() && like_var > F::zero()) {
        return Err(Error::Domain("variances must be positive".into()));
    }
    let n = F::from_usize_lossy(data.len());
    let sum: F = data.iter().copied().sum();
    let precision = prior_var.recip() + n / like_var;
    let variance = precision.recip();
    let mean = variance * (prior_mean / prior_var + sum / like_var);

    // The covariance is a rank-one update of a scaled identity, so both the
    // determinant and the inverse have closed forms.
    let half = F::lit(0.5);
    let dev: Vec<F> = data.iter().map(|&y| y - prior_mean).collect();
    let sq: F = dev.iter().map(|&d| d * d).sum();
    let lin: F = dev.iter().copied().sum();
    let shrink = prior_var / (like_var + n * prior_var);
    let quad = (sq - shrink * lin * lin) / like_var;
    let log_det = n * like_var.ln() + (F::one() + n * prior_var / like_var).ln();
    let log_evidence = -half * n * (F::lit(2.0) * F::PI()).ln() - half * log_det - half * quad;
    Ok(GaussianPosterior { mean, variance, log_evidence })
}
