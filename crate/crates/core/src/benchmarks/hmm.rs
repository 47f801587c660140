use crate::benchmarks::{ExactPosterior, Marginal};
use crate::distributions::{discrete_rng, normal_lnp, normal_rng, RngStream, PROB_SUM_TOLERANCE};
use crate::error::{Error, Result};
use crate::num::{log_sum_exp, Real};
use crate::trace::{Ctx, Model, Step};

/// Seed that generated the bundled large-model observation file.
pub const HMM_LARGE_SEED: u64 = 271_828;

const LARGE_STATES: usize = 10;
const LARGE_OBSERVES: usize = 50;
const LARGE_DATA: &str = include_str!("../../data/hmm_large_observations.txt");

/// Discrete-state chain with Gaussian emissions. Timestep `n` is observed when
/// `observations[n]` is `Some`.
#[derive(Clone, Debug, PartialEq)]
pub struct HmmParams<F> {
    pub transition: Vec<Vec<F>>,
    pub initial: Vec<F>,
    pub means: Vec<F>,
    pub variance: F,
    pub observations: Vec<Option<F>>,
}

impl HmmParams<f64> {
    /// Three states, eleven timesteps, the first one unobserved.
    pub fn small() -> Self {
        let data = [0.9, 0.8, 0.7, 0.0, -0.025, -5.0, -2.0, -0.1, 0.0, 0.13];
        HmmParams {
            transition: vec![
                vec![0.1, 0.5, 0.4],
                vec![0.2, 0.2, 0.6],
                vec![0.15, 0.15, 0.7],
            ],
            initial: vec![1.0 / 3.0; 3],
            means: vec![-1.0, 1.0, 0.0],
            variance: 1.0,
            observations: std::iter::once(None).chain(data.into_iter().map(Some)).collect(),
        }
    }

    /// Ten sticky states with means `0..=9` and emission variance 4, observed
    /// at the 50 timesteps after an unobserved initial one. The observations
    /// come from the bundled data file.
    pub fn large() -> Result<Self> {
        let mut p = Self::large_shape();
        let data = large_observations()?;
        if data.len() != LARGE_OBSERVES {
            return Err(Error::Oracle(format!(
                "large HMM data file has {} values, expected {LARGE_OBSERVES}",
                data.len()
            )));
        }
        p.observations = std::iter::once(None).chain(data.into_iter().map(Some)).collect();
        Ok(p)
    }

    /// Large-model constants with every timestep unobserved.
    pub fn large_shape() -> Self {
        let k = LARGE_STATES;
        let off = 0.5 / (k - 1) as f64;
        let transition = (0..k)
            .map(|i| (0..k).map(|j| if i == j { 0.5 } else { off }).collect())
            .collect();
        HmmParams {
            transition,
            initial: vec![1.0 / k as f64; k],
            means: (0..k).map(|i| i as f64).collect(),
            variance: 4.0,
            observations: vec![None; LARGE_OBSERVES + 1],
        }
    }
}

impl<F: Real> HmmParams<F> {
    pub fn states(&self) -> usize {
        self.initial.len()
    }

    pub fn timesteps(&self) -> usize {
        self.observations.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.states();
        check_row(&self.initial)?;
        if self.transition.len() != k || self.means.len() != k {
            return Err(Error::Domain(format!("HMM dimensions disagree with {k} states")));
        }
        for row in &self.transition {
            if row.len() != k {
                return Err(Error::Domain("transition matrix is not square".into()));
            }
            check_row(row)?;
        }
        if !(self.variance > F::zero()) {
            return Err(Error::Domain("emission variance must be positive".into()));
        }
        if self.observations.is_empty() {
            return Err(Error::Domain("HMM needs at least one timestep".into()));
        }
        Ok(())
    }

    fn emission(&self, n: usize, k: usize) -> Result<F> {
        match self.observations[n] {
            Some(y) => normal_lnp(y, self.means[k], self.variance),
            None => Ok(F::zero()),
        }
    }
}

/// Probability vector check with a tolerance that scales with the precision of `F`.
fn check_row<F: Real>(row: &[F]) -> Result<()> {
    let tol = PROB_SUM_TOLERANCE.max(F::epsilon().as_f64() * 4.0 * row.len() as f64);
    let sum: F = row.iter().copied().sum();
    if row.iter().any(|p| !(*p >= F::zero())) || (sum.as_f64() - 1.0).abs() > tol {
        return Err(Error::Domain(format!("probabilities sum to {sum}, expected 1")));
    }
    Ok(())
}

/// Parses the bundled large-model observation file.
pub fn large_observations() -> Result<Vec<f64>> {
    parse_observations(LARGE_DATA)
}

fn parse_observations(text: &str) -> Result<Vec<f64>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l.parse::<f64>().map_err(|e| Error::Oracle(format!("bad observation `{l}`: {e}"))))
        .collect()
}

/// Draws a state path from the prior and returns the emissions at timesteps
/// `1..timesteps`.
pub fn simulate_observations(params: &HmmParams<f64>, timesteps: usize, seed: u64) -> Result<Vec<f64>> {
    params.validate()?;
    let mut rng = RngStream::new(seed);
    let mut z = discrete_rng(&mut rng, &params.initial)?;
    let mut ys = Vec::with_capacity(timesteps.saturating_sub(1));
    for _ in 1..timesteps {
        z = discrete_rng(&mut rng, &params.transition[z])?;
        ys.push(normal_rng(&mut rng, params.means[z], params.variance)?);
    }
    Ok(ys)
}

/// Smoothed state marginals and the log marginal likelihood.
#[derive(Clone, Debug, PartialEq)]
pub struct HmmPosterior<F> {
    pub marginals: Vec<Vec<F>>,
    pub log_evidence: F,
}

/// Forward–backward smoothing in log space.
pub fn hmm_exact<F: Real>(params: &HmmParams<F>) -> Result<HmmPosterior<F>> {
    params.validate()?;
    let k = params.states();
    let t = params.timesteps();
    let log_t: Vec<Vec<F>> =
        params.transition.iter().map(|r| r.iter().map(|p| p.ln()).collect()).collect();
    let emit: Vec<Vec<F>> = (0..t)
        .map(|n| (0..k).map(|s| params.emission(n, s)).collect::<Result<_>>())
        .collect::<Result<_>>()?;

    let mut fwd = vec![vec![F::zero(); k]; t];
    for s in 0..k {
        fwd[0][s] = params.initial[s].ln() + emit[0][s];
    }
    let mut buf = vec![F::zero(); k];
    for n in 1..t {
        for s in 0..k {
            for (j, b) in buf.iter_mut().enumerate() {
                *b = fwd[n - 1][j] + log_t[j][s];
            }
            fwd[n][s] = log_sum_exp(&buf) + emit[n][s];
        }
    }
    let mut bwd = vec![vec![F::zero(); k]; t];
    for n in (0..t - 1).rev() {
        for j in 0..k {
            for (s, b) in buf.iter_mut().enumerate() {
                *b = log_t[j][s] + emit[n + 1][s] + bwd[n + 1][s];
            }
            bwd[n][j] = log_sum_exp(&buf);
        }
    }
    let log_evidence = log_sum_exp(&fwd[t - 1]);
    let marginals = (0..t)
        .map(|n| {
            let joint: Vec<F> = (0..k).map(|s| fwd[n][s] + bwd[n][s]).collect();
            let norm = log_sum_exp(&joint);
            joint.into_iter().map(|x| (x - norm).exp()).collect()
        })
        .collect();
    Ok(HmmPosterior { marginals, log_evidence })
}

/// The chain as a model program: one discrete draw per timestep, an observe
/// at each observed timestep, and `predict("state[n]")` after every timestep.
#[derive(Clone, Debug, PartialEq)]
pub struct HmmModel {
    pub params: HmmParams<f64>,
    pub flatten: bool,
}

impl HmmModel {
    pub fn new(params: HmmParams<f64>) -> Self {
        HmmModel { params, flatten: false }
    }

    pub fn flattened(mut self) -> Self {
        self.flatten = true;
        self
    }

    pub fn exact(&self) -> Result<ExactPosterior<f64>> {
        let mut p = self.params.clone();
        if self.flatten {
            p.observations.iter_mut().for_each(|o| *o = None);
        }
        let smoothed = hmm_exact(&p)?;
        let support: Vec<i64> = (0..p.states() as i64).collect();
        let mut e = ExactPosterior::new();
        for (n, probs) in smoothed.marginals.into_iter().enumerate() {
            e.insert(format!("state[{n}]"), Marginal::categorical(support.clone(), probs)?);
        }
        Ok(e)
    }
}

impl Model for HmmModel {
    fn run(&self, ctx: &mut Ctx<'_>) -> Step {
        let p = &self.params;
        let mut state = 0;
        for n in 0..p.timesteps() {
            state = if n == 0 {
                ctx.discrete(&p.initial)?
            } else {
                ctx.discrete(&p.transition[state])?
            };
            if let Some(y) = p.observations[n] {
                let lw = if self.flatten { 0.0 } else { normal_lnp(y, p.means[state], p.variance)? };
                ctx.observe(lw)?;
            }
            ctx.predict_int(&format!("state[{n}]"), state as i64)?;
        }
        Ok(())
    }

    fn observe_count(&self) -> Option<usize> {
        Some(self.params.observations.iter().filter(|o| o.is_some()).count())
    }
}
