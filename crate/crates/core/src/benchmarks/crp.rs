use statrs::function::gamma::ln_gamma;

use crate::benchmarks::{ExactPosterior, Marginal};
use crate::distributions::{normal_lnp, MemoTable, PolyaUrnState};
use crate::error::{Error, Result};
use crate::num::{log_sum_exp, Real};
use crate::trace::{Ctx, Model, Step};

/// Largest data set the partition enumeration accepts.
pub const MAX_ENUMERATED: usize = 12;

/// Infinite mixture of Gaussians with class assignments from a Pólya urn.
///
/// Each datum's class is drawn through a memoized urn lookup. A class draws
/// `variance = 1 / Gamma(1, 1)` and `mean ~ N(0, variance)` the first time it
/// is used. The program ends with `predict("num_classes")`.
#[derive(Clone, Debug, PartialEq)]
pub struct CrpModel {
    pub alpha: f64,
    pub data: Vec<f64>,
    pub flatten: bool,
}

impl Default for CrpModel {
    fn default() -> Self {
        CrpModel {
            alpha: 1.0,
            data: vec![1.0, 1.1, 1.2, -1.0, -1.5, -2.0, 0.001, 0.01, 0.005, 0.0],
            flatten: false,
        }
    }
}

impl CrpModel {
    pub fn flattened(mut self) -> Self {
        self.flatten = true;
        self
    }

    pub fn exact(&self) -> Result<ExactPosterior<f64>> {
        let lik = if self.flatten {
            BlockLikelihood::Flat
        } else {
            BlockLikelihood::NormalGamma(NormalGammaPrior::default())
        };
        let probs = crp_exact(self.alpha, &self.data, &lik)?;
        let support = (1..=self.data.len() as i64).collect();
        let mut e = ExactPosterior::new();
        e.insert("num_classes", Marginal::categorical(support, probs)?);
        Ok(e)
    }
}

impl Model for CrpModel {
    fn run(&self, ctx: &mut Ctx<'_>) -> Step {
        let mut urn = PolyaUrnState::new(self.alpha)?;
        let mut class_of: MemoTable<usize, usize> = MemoTable::new();
        let mut params: Vec<Option<(f64, f64)>> = vec![None; self.data.len()];
        for (n, &y) in self.data.iter().enumerate() {
            let class = class_of.invoke(n, || ctx.urn_draw(&mut urn))?;
            let (mean, var) = match params[class] {
                Some(p) => p,
                None => {
                    let var = 1.0 / ctx.gamma(1.0, 1.0)?;
                    let p = (ctx.normal(0.0, var)?, var);
                    params[class] = Some(p);
                    p
                }
            };
            let lw = if self.flatten { 0.0 } else { normal_lnp(y, mean, var)? };
            ctx.observe(lw)?;
        }
        ctx.predict_int("num_classes", urn.num_classes() as i64)
    }

    fn observe_count(&self) -> Option<usize> {
        Some(self.data.len())
    }
}

/// Normal–gamma prior on a class's mean and precision:
/// `precision ~ Gamma(shape, rate)`, `mean | precision ~ N(mean, 1 / (kappa · precision))`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalGammaPrior<F> {
    pub mean: F,
    pub kappa: F,
    pub shape: F,
    pub rate: F,
}

impl<F: Real> Default for NormalGammaPrior<F> {
    fn default() -> Self {
        NormalGammaPrior { mean: F::zero(), kappa: F::one(), shape: F::one(), rate: F::one() }
    }
}

/// How the data in one class contribute to a partition's mass.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BlockLikelihood<F> {
    NormalGamma(NormalGammaPrior<F>),
    /// Every block has likelihood 1, leaving the urn prior.
    Flat,
}

fn lgamma<F: Real>(x: F) -> F {
    F::lit(ln_gamma(x.as_f64()))
}

/// Log marginal likelihood of `xs` under one class with its parameters
/// integrated out.
pub fn normal_gamma_log_marginal<F: Real>(xs: &[F], prior: &NormalGammaPrior<F>) -> F {
    if xs.is_empty() {
        return F::zero();
    }
    let half = F::lit(0.5);
    let n = F::from_usize_lossy(xs.len());
    let mean = xs.iter().copied().sum::<F>() / n;
    let ss: F = xs.iter().map(|&x| (x - mean) * (x - mean)).sum();
    let kappa_n = prior.kappa + n;
    let shape_n = prior.shape + half * n;
    let d = mean - prior.mean;
    let rate_n = prior.rate + half * ss + prior.kappa * n * d * d / (F::lit(2.0) * kappa_n);
    lgamma(shape_n) - lgamma(prior.shape) + prior.shape * prior.rate.ln() - shape_n * rate_n.ln()
        + half * (prior.kappa / kappa_n).ln()
        - half * n * (F::lit(2.0) * F::PI()).ln()
}

/// Log probability of a partition with the given block sizes under the urn
/// with concentration `alpha`.
pub fn crp_partition_log_prior<F: Real>(alpha: F, sizes: &[usize]) -> F {
    let total: usize = sizes.iter().sum();
    let k = F::from_usize_lossy(sizes.len());
    let blocks: F = sizes.iter().map(|&s| lgamma(F::from_usize_lossy(s))).sum();
    k * alpha.ln() + lgamma(alpha) - lgamma(alpha + F::from_usize_lossy(total)) + blocks
}

/// Visits every set partition of `n` items as a list of block bitmasks.
fn for_each_partition(n: usize, mut visit: impl FnMut(&[u32])) {
    fn rec(i: usize, n: usize, blocks: &mut Vec<u32>, visit: &mut dyn FnMut(&[u32])) {
        if i == n {
            visit(blocks);
            return;
        }
        for b in 0..blocks.len() {
            blocks[b] |= 1 << i;
            rec(i + 1, n, blocks, visit);
            blocks[b] &= !(1 << i);
        }
        blocks.push(1 << i);
        rec(i + 1, n, blocks, visit);
        blocks.pop();
    }
    let mut blocks = Vec::with_capacity(n);
    rec(0, n, &mut blocks, &mut visit);
}

/// Posterior over the number of classes, `P(K = k)` for `k = 1..=N`, by
/// enumerating all set partitions of the data.
pub fn crp_exact<F: Real>(alpha: F, data: &[F], lik: &BlockLikelihood<F>) -> Result<Vec<F>> {
    let n = data.len();
    if n == 0 {
        return Err(Error::Oracle("need at least one datum".into()));
    }
    if n > MAX_ENUMERATED {
        return Err(Error::Oracle(format!(
            "partition enumeration refused for {n} items (limit {MAX_ENUMERATED})"
        )));
    }
    if !(alpha > F::zero()) {
        return Err(Error::Domain(format!("urn concentration must be positive, got {alpha}")));
    }
    let block_lm: Vec<F> = (0u32..1 << n)
        .map(|mask| match lik {
            BlockLikelihood::Flat => F::zero(),
            BlockLikelihood::NormalGamma(prior) => {
                let xs: Vec<F> = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| data[i]).collect();
                normal_gamma_log_marginal(&xs, prior)
            }
        })
        .collect();
    let mut by_count: Vec<Vec<F>> = vec![Vec::new(); n];
    let mut sizes = Vec::with_capacity(n);
    for_each_partition(n, |blocks| {
        sizes.clear();
        sizes.extend(blocks.iter().map(|b| b.count_ones() as usize));
        let lm = crp_partition_log_prior(alpha, &sizes)
            + blocks.iter().map(|&b| block_lm[b as usize]).sum::<F>();
        by_count[blocks.len() - 1].push(lm);
    });
    let per_k: Vec<F> = by_count.iter().map(|v| log_sum_exp(v)).collect();
    let z = log_sum_exp(&per_k);
    Ok(per_k.into_iter().map(|x| (x - z).exp()).collect())
}
