//! Particle independent Metropolis–Hastings.
//!
//! Every iteration runs a fresh SMC sweep as an independent proposal and
//! accepts it with probability `min(1, Z'/Z)` using the sweeps' evidence
//! estimates. A rejected proposal re-emits the current particle set.

use std::sync::Arc;

use crate::distributions::{mix_seed, RngStream};
use crate::error::Result;
use crate::smc::{sweep, sweep_seed, Executor, ResamplePolicy, SmcConfig, SweepResult};
use crate::trace::Model;

const CHAIN_STREAM: u64 = 0x5049_4d48;

/// `min(1, exp(log_z_new - log_z_old))`.
pub fn accept_probability(log_z_new: f64, log_z_old: f64) -> f64 {
    if log_z_new >= log_z_old {
        1.0
    } else {
        (log_z_new - log_z_old).exp()
    }
}

#[derive(Clone, Debug)]
pub struct PimhState {
    pub current: Arc<SweepResult>,
    pub log_z: f64,
    /// Iterations run, including the initial sweep.
    pub iteration: usize,
    /// Accepted sweeps, including the initial sweep.
    pub accept_count: usize,
}

impl PimhState {
    /// Fraction of proposals accepted (1 before any proposal).
    pub fn acceptance_rate(&self) -> f64 {
        if self.iteration <= 1 {
            1.0
        } else {
            (self.accept_count - 1) as f64 / (self.iteration - 1) as f64
        }
    }
}

pub struct PimhChain<'m, M: ?Sized> {
    model: &'m M,
    cfg: SmcConfig,
    exec: Executor,
    state: PimhState,
    chain_rng: RngStream,
}

impl<'m, M: Model + ?Sized> PimhChain<'m, M> {
    /// Runs the initial sweep, which is always accepted.
    pub fn start(model: &'m M, cfg: SmcConfig) -> Result<Self> {
        cfg.validate()?;
        let exec = Executor::new(cfg.workers)?;
        let first = sweep(model, &cfg, &exec, ResamplePolicy::Adaptive(cfg.tau()), sweep_seed(cfg.root_seed, 1))?;
        let state = PimhState {
            log_z: first.log_evidence,
            current: Arc::new(first),
            iteration: 1,
            accept_count: 1,
        };
        let chain_rng = RngStream::new(mix_seed(&[cfg.root_seed, CHAIN_STREAM]));
        Ok(PimhChain { model, cfg, exec, state, chain_rng })
    }

    pub fn state(&self) -> &PimhState {
        &self.state
    }

    /// The particle set emitted at the latest iteration.
    pub fn current(&self) -> &Arc<SweepResult> {
        &self.state.current
    }

    /// Runs the proposal sweep for the next iteration without deciding on it.
    pub fn propose(&self) -> Result<SweepResult> {
        sweep(
            self.model,
            &self.cfg,
            &self.exec,
            ResamplePolicy::Adaptive(self.cfg.tau()),
            sweep_seed(self.cfg.root_seed, self.state.iteration + 1),
        )
    }

    /// Completes an iteration with an explicit decision.
    pub fn resolve(&mut self, proposal: SweepResult, accept: bool) {
        self.state.iteration += 1;
        if accept {
            self.state.log_z = proposal.log_evidence;
            self.state.current = Arc::new(proposal);
            self.state.accept_count += 1;
        }
    }

    /// One Metropolis–Hastings iteration. Returns whether the proposal was accepted.
    pub fn step(&mut self) -> Result<bool> {
        let proposal = self.propose()?;
        let u = self.chain_rng.uniform();
        let accept = u < accept_probability(proposal.log_evidence, self.state.log_z);
        self.resolve(proposal, accept);
        Ok(accept)
    }
}

/// Emitted particle sets of a chain, one per iteration.
#[derive(Clone, Debug)]
pub struct ChainOutput {
    pub blocks: Vec<Arc<SweepResult>>,
    pub acceptance_rate: Option<f64>,
}

pub fn pimh_chain<M: Model + ?Sized>(model: &M, cfg: SmcConfig, iterations: usize) -> Result<ChainOutput> {
    let mut chain = PimhChain::start(model, cfg)?;
    let mut blocks = vec![chain.current().clone()];
    for _ in 1..iterations {
        chain.step()?;
        blocks.push(chain.current().clone());
    }
    Ok(ChainOutput { blocks, acceptance_rate: Some(chain.state().acceptance_rate()) })
}
