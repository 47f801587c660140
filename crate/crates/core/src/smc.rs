//! Parallel sequential importance resampling over program executions.
//!
//! Each sweep launches `L` particles and advances them barrier by barrier.
//! Particle advancement runs on the worker pool; weighting, the ESS test,
//! offspring sampling and evidence accumulation run serially between barriers.

use std::time::Instant;

use crate::distributions::{mix_seed, RngStream};
use crate::error::{Error, Result};
use crate::num::log_mean_exp;
use crate::resampling::{sample_offspring, OffspringCounts, Scheme, WeightVector};
use crate::trace::{BarrierEvent, ExecutionTrace, Model, Particle, PredictFormat};

const RESAMPLE_STREAM: u64 = 0x5245_5341_4d50_4c45;

#[derive(Clone, Debug, PartialEq)]
pub struct SmcConfig {
    pub particles: usize,
    /// ESS threshold; `None` means `particles / 2`.
    pub tau: Option<f64>,
    pub scheme: Scheme,
    pub root_seed: u64,
    pub workers: usize,
    pub format: PredictFormat,
    /// Keep the pre-resampling log-weights of every step in the event log.
    pub record_weights: bool,
}

impl SmcConfig {
    pub fn new(particles: usize) -> Self {
        SmcConfig {
            particles,
            tau: None,
            scheme: Scheme::default(),
            root_seed: 0,
            workers: 1,
            format: PredictFormat::default(),
            record_weights: false,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.root_seed = seed;
        self
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = Some(tau);
        self
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }

    pub fn with_format(mut self, format: PredictFormat) -> Self {
        self.format = format;
        self
    }

    pub fn tau(&self) -> f64 {
        self.tau.unwrap_or(self.particles as f64 / 2.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.particles == 0 {
            return Err(Error::Config("need at least one particle".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("need at least one worker".into()));
        }
        let tau = self.tau();
        if !(0.0..=self.particles as f64).contains(&tau) {
            return Err(Error::Config(format!(
                "tau must lie in [0, {}], got {tau}",
                self.particles
            )));
        }
        Ok(())
    }
}

/// When a sweep resamples.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ResamplePolicy {
    /// Resample iff `ESS < tau`.
    Adaptive(f64),
    /// Resample at every observe.
    Always,
}

/// One record per observe step of a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct StepEvent {
    pub observe: usize,
    pub ess: f64,
    pub resampled: bool,
    /// Log mean accumulated weight folded into the evidence at this step.
    pub log_mean_weight: Option<f64>,
    /// Offspring given to the retained trajectory (conditional sweeps only).
    pub retained_offspring: Option<usize>,
    pub log_weights: Option<Vec<f64>>,
}

/// Output of one sweep: `L` completed traces with their final weights.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub traces: Vec<ExecutionTrace>,
    pub weights: WeightVector<f64>,
    pub log_evidence: f64,
    pub events: Vec<StepEvent>,
    pub wallclock: f64,
}

impl SweepResult {
    pub fn particles(&self) -> usize {
        self.traces.len()
    }

    /// `(trace, normalized weight)` pairs.
    pub fn weighted(&self) -> impl Iterator<Item = (&ExecutionTrace, f64)> {
        self.traces.iter().zip(self.weights.norm().iter().copied())
    }

    pub fn resample_count(&self) -> usize {
        self.events.iter().filter(|e| e.resampled).count()
    }
}

/// Runs particle advancement on a fixed-size worker pool.
pub struct Executor {
    pool: Option<rayon::ThreadPool>,
}

impl Executor {
    pub fn new(workers: usize) -> Result<Self> {
        if workers == 0 {
            return Err(Error::Config("need at least one worker".into()));
        }
        let pool = if workers == 1 {
            None
        } else {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(workers)
                    .build()
                    .map_err(|e| Error::Config(e.to_string()))?,
            )
        };
        Ok(Executor { pool })
    }

    pub fn advance<M: Model + ?Sized>(
        &self,
        particles: &mut [Particle],
        model: &M,
    ) -> Result<Vec<BarrierEvent>> {
        match &self.pool {
            None => particles.iter_mut().map(|p| p.run_to_barrier(model)).collect(),
            Some(pool) => {
                use rayon::prelude::*;
                pool.install(|| particles.par_iter_mut().map(|p| p.run_to_barrier(model)).collect())
            }
        }
    }
}

/// Checks barrier alignment. Returns `Some(n)` when every particle reached
/// observe `n`, `None` when every particle completed.
pub(crate) fn aligned(events: &[BarrierEvent], expected: usize) -> Result<Option<usize>> {
    let completed = events.iter().filter(|e| **e == BarrierEvent::Completed).count();
    if completed == events.len() {
        return Ok(None);
    }
    if completed > 0 {
        return Err(Error::ObserveMismatch {
            observe: expected,
            detail: format!("{completed} of {} particles completed early", events.len()),
        });
    }
    for e in events {
        if let BarrierEvent::Observe { observe, .. } = e {
            if *observe != expected {
                return Err(Error::ObserveMismatch {
                    observe: expected,
                    detail: format!("particle reported observe {observe}"),
                });
            }
        }
    }
    Ok(Some(expected))
}

/// Key of the stream of the particle occupying `slot` after resampling at observe `n`.
pub(crate) fn child_key(n: usize, slot: usize) -> u64 {
    mix_seed(&[n as u64, slot as u64])
}

/// Branches and kills particles according to `counts`; survivors' weights reset.
pub(crate) fn reproduce(
    particles: Vec<Particle>,
    counts: &OffspringCounts,
    observe: usize,
    first_slot: usize,
) -> Result<Vec<Particle>> {
    let mut next = Vec::with_capacity(counts.total());
    for (mut p, &c) in particles.into_iter().zip(counts.counts()) {
        if c == 0 {
            p.kill();
            continue;
        }
        let keys: Vec<u64> = (0..c)
            .map(|j| child_key(observe, first_slot + next.len() + j))
            .collect();
        for mut child in p.branch(&keys)? {
            child.reset_weight();
            next.push(child);
        }
    }
    Ok(next)
}

pub(crate) fn degenerate_at(observe: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::DegenerateSweep { .. } => Error::DegenerateSweep { observe },
        e => e,
    }
}

pub(crate) fn launch(cfg: &SmcConfig, seed: u64, count: usize) -> Vec<Particle> {
    (0..count)
        .map(|i| Particle::start(mix_seed(&[seed, i as u64])).with_format(cfg.format))
        .collect()
}

pub(crate) fn resample_stream(seed: u64) -> RngStream {
    RngStream::new(mix_seed(&[seed, RESAMPLE_STREAM]))
}

/// One sweep with an explicit policy and sweep seed.
pub fn sweep<M: Model + ?Sized>(
    model: &M,
    cfg: &SmcConfig,
    exec: &Executor,
    policy: ResamplePolicy,
    seed: u64,
) -> Result<SweepResult> {
    cfg.validate()?;
    let start = Instant::now();
    let l = cfg.particles;
    let mut particles = launch(cfg, seed, l);
    let mut rng = resample_stream(seed);
    let mut log_evidence = 0.0;
    let mut events = Vec::new();
    let mut n = 0;
    loop {
        let reached = exec.advance(&mut particles, model)?;
        if aligned(&reached, n + 1)?.is_none() {
            break;
        }
        n += 1;
        let logs: Vec<f64> = particles.iter().map(Particle::cum_logw).collect();
        let w = WeightVector::normalize(logs.clone()).map_err(degenerate_at(n))?;
        let ess = w.ess();
        let resample = match policy {
            ResamplePolicy::Always => true,
            ResamplePolicy::Adaptive(tau) => ess < tau,
        };
        let mut event = StepEvent {
            observe: n,
            ess,
            resampled: resample,
            log_mean_weight: None,
            retained_offspring: None,
            log_weights: cfg.record_weights.then(|| logs.clone()),
        };
        if resample {
            let lm = log_mean_exp(&logs);
            log_evidence += lm;
            event.log_mean_weight = Some(lm);
            let counts = sample_offspring(&w, l, cfg.scheme, &mut rng)?;
            particles = reproduce(particles, &counts, n, 0)?;
        }
        events.push(event);
    }
    let logs: Vec<f64> = particles.iter().map(Particle::cum_logw).collect();
    log_evidence += log_mean_exp(&logs);
    let weights = WeightVector::normalize(logs).map_err(degenerate_at(n))?;
    Ok(SweepResult {
        traces: particles.into_iter().map(Particle::into_trace).collect(),
        weights,
        log_evidence,
        events,
        wallclock: start.elapsed().as_secs_f64(),
    })
}

/// One adaptive SMC sweep seeded by `cfg.root_seed`.
pub fn run_sweep<M: Model + ?Sized>(model: &M, cfg: &SmcConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let exec = Executor::new(cfg.workers)?;
    sweep(model, cfg, &exec, ResamplePolicy::Adaptive(cfg.tau()), cfg.root_seed)
}

/// Seed of the `iteration`-th sweep under `root`.
pub fn sweep_seed(root: u64, iteration: usize) -> u64 {
    mix_seed(&[root, iteration as u64])
}

/// Repeated independent sweeps sharing one worker pool.
pub struct SmcRunner<'m, M: ?Sized> {
    model: &'m M,
    cfg: SmcConfig,
    exec: Executor,
    iteration: usize,
}

impl<'m, M: Model + ?Sized> SmcRunner<'m, M> {
    pub fn new(model: &'m M, cfg: SmcConfig) -> Result<Self> {
        cfg.validate()?;
        let exec = Executor::new(cfg.workers)?;
        Ok(SmcRunner { model, cfg, exec, iteration: 0 })
    }

    pub fn next_sweep(&mut self) -> Result<SweepResult> {
        self.iteration += 1;
        sweep(
            self.model,
            &self.cfg,
            &self.exec,
            ResamplePolicy::Adaptive(self.cfg.tau()),
            sweep_seed(self.cfg.root_seed, self.iteration),
        )
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }
}
