//! Particle Gibbs with conditional SMC.
//!
//! A [`RetainedTrajectory`] is one completed trace that can be resumed from
//! any of its observe checkpoints. A conditional sweep runs `L - 1` fresh
//! particles alongside it. At each observe the retained trajectory gets its
//! own continuation plus any of the `L - 1` free offspring drawn on it, which
//! are branched from its checkpoint. Resampling happens at every observe.

use std::sync::Arc;

use crate::distributions::{mix_seed, RngStream};
use crate::error::{Error, Result};
use crate::num::log_mean_exp;
use crate::pimh::ChainOutput;
use crate::resampling::{sample_counts, OffspringCounts, Scheme, WeightVector};
use crate::smc::{
    aligned, degenerate_at, launch, reproduce, resample_stream, sweep, sweep_seed, Executor,
    ResamplePolicy, SmcConfig, StepEvent, SweepResult,
};
use crate::trace::{self, ChoiceValue, ExecutionTrace, Model, Particle, PredictFormat};

const RETAINED_STREAM: u64 = 0x5245_5441_494e;
const SELECT_STREAM: u64 = 0x5345_4c45_4354;

/// A completed trace kept between particle Gibbs iterations.
#[derive(Clone, Debug, PartialEq)]
pub struct RetainedTrajectory {
    trace: ExecutionTrace,
}

impl RetainedTrajectory {
    pub fn new(trace: ExecutionTrace) -> Result<Self> {
        trace.check_invariants()?;
        Ok(RetainedTrajectory { trace })
    }

    /// Builds the trajectory a model produces when fed `values` as its choices.
    pub fn from_choices<M: Model + ?Sized>(
        model: &M,
        values: &[ChoiceValue],
        format: PredictFormat,
    ) -> Result<Self> {
        Self::new(trace::replay(model, values, format)?)
    }

    pub fn final_trace(&self) -> &ExecutionTrace {
        &self.trace
    }

    pub fn observe_count(&self) -> usize {
        self.trace.observe_count()
    }

    /// Per-observe log-likelihood increments.
    pub fn increments(&self) -> &[f64] {
        &self.trace.observe_logw
    }

    /// The trajectory's state paused at observe `n` (1-based).
    pub fn checkpoint(&self, n: usize) -> Result<ExecutionTrace> {
        self.trace.prefix_at(n)
    }

    pub fn checkpoints(&self) -> impl Iterator<Item = ExecutionTrace> + '_ {
        (1..=self.observe_count()).map(|n| self.checkpoint(n).expect("n in range"))
    }
}

/// Picks one trace with probability proportional to its final weight.
pub fn select_retained(sweep: &SweepResult, rng: &mut RngStream) -> Result<RetainedTrajectory> {
    let pick = sample_counts(sweep.weights.norm(), 1, Scheme::Multinomial, rng);
    let idx = pick.to_ancestors()[0];
    RetainedTrajectory::new(sweep.traces[idx].clone())
}

/// Unconditional first sweep, resampling at every observe so that the
/// selected trajectory has a checkpoint at each one.
pub fn pg_init<M: Model + ?Sized>(
    model: &M,
    cfg: &SmcConfig,
    exec: &Executor,
    seed: u64,
    select_rng: &mut RngStream,
) -> Result<(RetainedTrajectory, SweepResult)> {
    let result = sweep(model, cfg, exec, ResamplePolicy::Always, seed)?;
    let retained = select_retained(&result, select_rng)?;
    Ok((retained, result))
}

/// Conditional SMC sweep given a retained trajectory. The retained trace is
/// slot 0 of the result.
pub fn conditional_sweep<M: Model + ?Sized>(
    model: &M,
    cfg: &SmcConfig,
    exec: &Executor,
    retained: &RetainedTrajectory,
    seed: u64,
) -> Result<SweepResult> {
    cfg.validate()?;
    let start = std::time::Instant::now();
    let l = cfg.particles;
    let total_observes = retained.observe_count();
    let mut live = launch(cfg, seed, l - 1);
    let mut rng = resample_stream(seed);
    let mut log_evidence = 0.0;
    let mut events = Vec::with_capacity(total_observes);
    let mut n = 0;
    loop {
        if l > 1 {
            let reached = exec.advance(&mut live, model)?;
            let at = aligned(&reached, n + 1)?;
            let live_done = at.is_none();
            let retained_done = n == total_observes;
            if live_done != retained_done {
                return Err(Error::ObserveMismatch {
                    observe: n + 1,
                    detail: format!(
                        "retained trajectory has {total_observes} observes, fresh particles {}",
                        if live_done { "completed" } else { "continued" }
                    ),
                });
            }
            if live_done {
                break;
            }
        } else if n == total_observes {
            break;
        }
        n += 1;
        let mut logs = Vec::with_capacity(l);
        logs.push(retained.increments()[n - 1]);
        logs.extend(live.iter().map(Particle::cum_logw));
        let w = WeightVector::normalize(logs.clone()).map_err(degenerate_at(n))?;
        let lm = log_mean_exp(&logs);
        log_evidence += lm;
        let free = sample_counts(w.norm(), l - 1, Scheme::Multinomial, &mut rng);
        let extra = free.counts()[0];
        let mut next = Vec::with_capacity(l - 1);
        if extra > 0 {
            let stream = RngStream::new(mix_seed(&[seed, n as u64, RETAINED_STREAM]));
            let from = Particle::resume_from(retained.checkpoint(n)?, stream).with_format(cfg.format);
            next = reproduce(vec![from], &OffspringCounts::new(vec![extra]), n, 0)?;
        }
        let rest = OffspringCounts::new(free.counts()[1..].to_vec());
        next.extend(reproduce(live, &rest, n, extra)?);
        live = next;
        events.push(StepEvent {
            observe: n,
            ess: w.ess(),
            resampled: true,
            log_mean_weight: Some(lm),
            retained_offspring: Some(1 + extra),
            log_weights: cfg.record_weights.then_some(logs),
        });
    }
    let mut traces = Vec::with_capacity(l);
    traces.push(retained.final_trace().clone());
    traces.extend(live.into_iter().map(Particle::into_trace));
    Ok(SweepResult {
        traces,
        weights: WeightVector::normalize(vec![0.0; l])?,
        log_evidence,
        events,
        wallclock: start.elapsed().as_secs_f64(),
    })
}

pub struct PgChain<'m, M: ?Sized> {
    model: &'m M,
    cfg: SmcConfig,
    exec: Executor,
    retained: RetainedTrajectory,
    current: Arc<SweepResult>,
    iteration: usize,
    select_rng: RngStream,
}

impl<'m, M: Model + ?Sized> PgChain<'m, M> {
    pub fn start(model: &'m M, cfg: SmcConfig) -> Result<Self> {
        cfg.validate()?;
        if cfg.tau.is_some() {
            log::warn!("particle Gibbs resamples at every observe; tau is ignored");
        }
        let exec = Executor::new(cfg.workers)?;
        let mut select_rng = RngStream::new(mix_seed(&[cfg.root_seed, SELECT_STREAM]));
        let (retained, first) = pg_init(model, &cfg, &exec, sweep_seed(cfg.root_seed, 1), &mut select_rng)?;
        Ok(PgChain {
            model,
            cfg,
            exec,
            retained,
            current: Arc::new(first),
            iteration: 1,
            select_rng,
        })
    }

    pub fn retained(&self) -> &RetainedTrajectory {
        &self.retained
    }

    pub fn current(&self) -> &Arc<SweepResult> {
        &self.current
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// One conditional sweep followed by selection of the next retained trace.
    pub fn step(&mut self) -> Result<()> {
        self.iteration += 1;
        let seed = sweep_seed(self.cfg.root_seed, self.iteration);
        let result = conditional_sweep(self.model, &self.cfg, &self.exec, &self.retained, seed)?;
        self.retained = select_retained(&result, &mut self.select_rng)?;
        self.current = Arc::new(result);
        Ok(())
    }
}

pub fn pg_chain<M: Model + ?Sized>(model: &M, cfg: SmcConfig, iterations: usize) -> Result<ChainOutput> {
    let mut chain = PgChain::start(model, cfg)?;
    let mut blocks = vec![chain.current().clone()];
    for _ in 1..iterations {
        chain.step()?;
        blocks.push(chain.current().clone());
    }
    Ok(ChainOutput { blocks, acceptance_rate: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::normal_lnp;
    use crate::trace::model_fn;

    fn walk() -> impl Model {
        model_fn(|ctx| {
            let mut x = 0.0;
            for n in 0..4 {
                x += ctx.normal(0.0, 1.0)?;
                ctx.observe(normal_lnp(n as f64 * 0.5, x, 1.0)?)?;
                ctx.predict_real(&format!("x[{n}]"), x)?;
            }
            Ok(())
        })
    }

    #[test]
    fn single_particle_init_retains_the_only_trace() {
        let m = walk();
        let exec = Executor::new(1).unwrap();
        let mut r = RngStream::new(0);
        let (ret, sw) = pg_init(&m, &SmcConfig::new(1), &exec, 3, &mut r).unwrap();
        assert_eq!(ret.final_trace(), &sw.traces[0]);
    }

    #[test]
    fn checkpoints_are_nested_and_replay_to_final() {
        let m = walk();
        let exec = Executor::new(1).unwrap();
        let mut r = RngStream::new(0);
        let (ret, _) = pg_init(&m, &SmcConfig::new(20), &exec, 8, &mut r).unwrap();
        let cps: Vec<_> = ret.checkpoints().collect();
        assert_eq!(cps.len(), 4);
        for w in cps.windows(2) {
            assert!(w[1].choices.starts_with(&w[0].choices));
        }
        assert!(ret.final_trace().choices.starts_with(&cps[3].choices));
        let replayed = trace::replay(&m, &ret.final_trace().values(), PredictFormat::default()).unwrap();
        assert_eq!(&replayed, ret.final_trace());
    }

    #[test]
    fn single_particle_chain_repeats_initial_trajectory() {
        let m = walk();
        let out = pg_chain(&m, SmcConfig::new(1).with_seed(2), 20).unwrap();
        for b in &out.blocks {
            assert_eq!(b.traces, out.blocks[0].traces);
        }
    }

    #[test]
    fn retained_trace_survives_every_step() {
        let m = walk();
        let mut chain = PgChain::start(&m, SmcConfig::new(16).with_seed(9)).unwrap();
        for _ in 0..30 {
            let before = chain.retained().clone();
            chain.step().unwrap();
            let sw = chain.current();
            assert_eq!(&sw.traces[0], before.final_trace());
            assert_eq!(sw.events.len(), 4);
            assert!(sw.events.iter().all(|e| e.retained_offspring.unwrap() >= 1));
            // Every branch of the retained trajectory shares its prefix.
            for t in &sw.traces {
                for n in 1..=4 {
                    let k = before.final_trace().choices_before(n).unwrap();
                    if t.choices[..k] == before.final_trace().choices[..k] {
                        assert_eq!(t.observe_logw[..n], before.increments()[..n]);
                    }
                }
            }
        }
    }

    #[test]
    fn zero_weight_retained_gets_only_its_continuation() {
        // The retained trajectory has zero likelihood from observe 2 on.
        let m = model_fn(|ctx| {
            let k = ctx.discrete(&[0.95, 0.05])?;
            ctx.observe(0.0)?;
            ctx.normal(0.0, 1.0)?;
            let zero = if k == 1 { f64::NEG_INFINITY } else { 0.0 };
            ctx.observe(zero)?;
            ctx.observe(zero)
        });
        let ret = RetainedTrajectory::from_choices(
            &m,
            &[ChoiceValue::Index(1), ChoiceValue::Real(0.3)],
            PredictFormat::default(),
        )
        .unwrap();
        let exec = Executor::new(1).unwrap();
        for seed in 0..50 {
            let sw = conditional_sweep(&m, &SmcConfig::new(20), &exec, &ret, seed).unwrap();
            assert_eq!(sw.events[1].retained_offspring, Some(1));
            assert_eq!(sw.events[2].retained_offspring, Some(1));
            assert!(sw.traces[1..].iter().all(|t| t.choices[0].value == ChoiceValue::Index(0)));
        }
    }

    #[test]
    fn mismatched_retained_length_is_rejected() {
        let short = model_fn(|ctx| ctx.observe(0.0));
        let long = model_fn(|ctx| {
            ctx.observe(0.0)?;
            ctx.observe(0.0)
        });
        let ret = RetainedTrajectory::from_choices(&short, &[], PredictFormat::default()).unwrap();
        let exec = Executor::new(1).unwrap();
        let r = conditional_sweep(&long, &SmcConfig::new(3), &exec, &ret, 0);
        assert!(matches!(r, Err(Error::ObserveMismatch { .. })));
    }
}
