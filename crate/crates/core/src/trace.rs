//! Model programs, execution traces and resumable particles.
//!
//! A model is an ordinary deterministic Rust function that draws its randomness
//! through a [`Ctx`]. Every draw is recorded in an [`ExecutionTrace`]. A
//! [`Particle`] pauses the model at each `observe` by unwinding with
//! [`Interrupt::Barrier`]; resuming re-executes the model from the top while
//! feeding back the recorded choices, then continues live past the last
//! recorded observe. Branching is therefore a copy of the recorded prefix plus
//! fresh child streams.

use std::fmt::Display;

use crate::distributions::{self, DistId, PolyaUrnState, RngStream};
use crate::error::{Error, Result};

/// Realized value of a random choice.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ChoiceValue {
    Real(f64),
    Index(usize),
}

impl ChoiceValue {
    pub fn as_real(self) -> Option<f64> {
        match self {
            ChoiceValue::Real(x) => Some(x),
            ChoiceValue::Index(_) => None,
        }
    }

    pub fn as_index(self) -> Option<usize> {
        match self {
            ChoiceValue::Index(i) => Some(i),
            ChoiceValue::Real(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChoiceRecord {
    /// Position among the trace's random choices, from 0.
    pub index: usize,
    pub dist: DistId,
    pub params: Vec<f64>,
    pub value: ChoiceValue,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PredictRecord {
    pub name: String,
    /// Fully rendered value text.
    pub value: String,
    /// Number of observes passed when the predict was emitted.
    pub observe_index: usize,
}

/// Rendering of real-valued predicts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PredictFormat {
    /// `%f`-style six-decimal fixed point.
    #[default]
    Fixed6,
    /// Shortest text that round-trips the `f64`.
    Full,
}

impl PredictFormat {
    pub fn render(self, x: f64) -> String {
        match self {
            PredictFormat::Fixed6 => format!("{x:.6}"),
            PredictFormat::Full => format!("{x}"),
        }
    }
}

/// Ordered record of one program run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExecutionTrace {
    pub choices: Vec<ChoiceRecord>,
    /// `ln g(y_n | x_{1:n})` for each observe passed.
    pub observe_logw: Vec<f64>,
    pub predicts: Vec<PredictRecord>,
    /// Number of choices made before observe `n` (one entry per observe).
    choice_marks: Vec<usize>,
    /// Number of predicts emitted before observe `n`.
    predict_marks: Vec<usize>,
}

impl ExecutionTrace {
    pub fn observe_count(&self) -> usize {
        self.observe_logw.len()
    }

    pub fn log_joint_likelihood(&self) -> f64 {
        self.observe_logw.iter().sum()
    }

    pub fn values(&self) -> Vec<ChoiceValue> {
        self.choices.iter().map(|c| c.value).collect()
    }

    pub fn predict(&self, name: &str) -> Option<&str> {
        self.predicts.iter().find(|p| p.name == name).map(|p| p.value.as_str())
    }

    /// The state of this trace paused at observe `n` (`1 ≤ n ≤ observe_count`).
    pub fn prefix_at(&self, n: usize) -> Result<ExecutionTrace> {
        if n == 0 || n > self.observe_count() {
            return Err(Error::Contract(format!(
                "no checkpoint at observe {n}; trace has {} observes",
                self.observe_count()
            )));
        }
        let c = self.choice_marks[n - 1];
        let p = self.predict_marks[n - 1];
        Ok(ExecutionTrace {
            choices: self.choices[..c].to_vec(),
            observe_logw: self.observe_logw[..n].to_vec(),
            predicts: self.predicts[..p].to_vec(),
            choice_marks: self.choice_marks[..n].to_vec(),
            predict_marks: self.predict_marks[..n].to_vec(),
        })
    }

    /// Number of choices recorded before observe `n` was reached.
    pub fn choices_before(&self, n: usize) -> Option<usize> {
        n.checked_sub(1).and_then(|i| self.choice_marks.get(i).copied())
    }

    pub fn check_invariants(&self) -> Result<()> {
        for (i, c) in self.choices.iter().enumerate() {
            if c.index != i {
                return Err(Error::Contract(format!("choice {i} carries index {}", c.index)));
            }
        }
        if let Some(w) = self.observe_logw.iter().find(|w| w.is_nan() || **w == f64::INFINITY) {
            return Err(Error::Contract(format!("invalid observe log-weight {w}")));
        }
        if self.choice_marks.len() != self.observe_count()
            || self.predict_marks.len() != self.observe_count()
        {
            return Err(Error::Contract("observe marks out of sync".into()));
        }
        Ok(())
    }
}

/// Non-local exit from a model run.
///
/// Models propagate this with `?` from every [`Ctx`] call.
#[derive(Debug)]
pub enum Interrupt {
    /// The run reached the next observe barrier and yields control.
    Barrier,
    Fault(Error),
}

impl Interrupt {
    pub fn fault(msg: impl Into<String>) -> Self {
        Interrupt::Fault(Error::ModelFault(msg.into()))
    }
}

impl From<Error> for Interrupt {
    fn from(e: Error) -> Self {
        Interrupt::Fault(e)
    }
}

pub type Step<T = ()> = std::result::Result<T, Interrupt>;

/// A probabilistic model program.
///
/// `run` must be deterministic given the values returned by the context, and
/// every complete run must pass the same number of observes.
pub trait Model: Sync {
    fn run(&self, ctx: &mut Ctx<'_>) -> Step;

    /// Declared number of observes, enforced when present.
    fn observe_count(&self) -> Option<usize> {
        None
    }
}

impl<M: Model + ?Sized> Model for &M {
    fn run(&self, ctx: &mut Ctx<'_>) -> Step {
        (**self).run(ctx)
    }

    fn observe_count(&self) -> Option<usize> {
        (**self).observe_count()
    }
}

/// Adapts a closure into a [`Model`].
pub struct FnModel<F> {
    f: F,
    observes: Option<usize>,
}

pub fn model_fn<F>(f: F) -> FnModel<F>
where
    F: Fn(&mut Ctx<'_>) -> Step + Sync,
{
    FnModel { f, observes: None }
}

impl<F> FnModel<F> {
    pub fn with_observes(mut self, n: usize) -> Self {
        self.observes = Some(n);
        self
    }
}

impl<F> Model for FnModel<F>
where
    F: Fn(&mut Ctx<'_>) -> Step + Sync,
{
    fn run(&self, ctx: &mut Ctx<'_>) -> Step {
        (self.f)(ctx)
    }

    fn observe_count(&self) -> Option<usize> {
        self.observes
    }
}

/// Execution context handed to a model run.
pub struct Ctx<'a> {
    trace: &'a mut ExecutionTrace,
    rng: &'a mut RngStream,
    forced: &'a [ChoiceValue],
    recorded_choices: usize,
    recorded_observes: usize,
    recorded_predicts: usize,
    choice_cursor: usize,
    observe_cursor: usize,
    predict_cursor: usize,
    pause: bool,
    format: PredictFormat,
    increment: Option<f64>,
}

impl<'a> Ctx<'a> {
    fn new(
        trace: &'a mut ExecutionTrace,
        rng: &'a mut RngStream,
        forced: &'a [ChoiceValue],
        pause: bool,
        format: PredictFormat,
    ) -> Self {
        Ctx {
            recorded_choices: trace.choices.len(),
            recorded_observes: trace.observe_count(),
            recorded_predicts: trace.predicts.len(),
            trace,
            rng,
            forced,
            choice_cursor: 0,
            observe_cursor: 0,
            predict_cursor: 0,
            pause,
            format,
            increment: None,
        }
    }

    /// True while the run is re-executing a recorded prefix.
    pub fn replaying(&self) -> bool {
        self.observe_cursor < self.recorded_observes || self.choice_cursor < self.recorded_choices
    }

    /// Observes passed so far in this run.
    pub fn observes_passed(&self) -> usize {
        self.observe_cursor
    }

    pub fn predict_format(&self) -> PredictFormat {
        self.format
    }

    fn choice(
        &mut self,
        dist: DistId,
        params: &[f64],
        valid: impl Fn(ChoiceValue) -> bool,
        draw: impl FnOnce(&mut RngStream) -> Result<ChoiceValue>,
    ) -> Step<ChoiceValue> {
        if self.choice_cursor < self.recorded_choices {
            let rec = &self.trace.choices[self.choice_cursor];
            if rec.dist != dist {
                return Err(Error::Nondeterministic(format!(
                    "choice {} was {:?} when recorded, {:?} on replay",
                    self.choice_cursor, rec.dist, dist
                ))
                .into());
            }
            self.choice_cursor += 1;
            return Ok(rec.value);
        }
        if self.observe_cursor < self.recorded_observes {
            return Err(Error::Nondeterministic(format!(
                "unrecorded random choice before recorded observe {}",
                self.observe_cursor + 1
            ))
            .into());
        }
        let index = self.trace.choices.len();
        let value = match self.forced.get(index) {
            Some(&v) if valid(v) => v,
            Some(v) => {
                return Err(Error::Domain(format!("forced value {v:?} invalid for {dist:?}")).into())
            }
            None => draw(self.rng)?,
        };
        self.trace.choices.push(ChoiceRecord { index, dist, params: params.to_vec(), value });
        self.choice_cursor += 1;
        Ok(value)
    }

    pub fn normal(&mut self, mu: f64, var: f64) -> Step<f64> {
        if !(var > 0.0 && var.is_finite()) {
            return Err(Error::Domain(format!("normal variance must be positive, got {var}")).into());
        }
        let v = self.choice(
            DistId::Normal,
            &[mu, var],
            |v| matches!(v, ChoiceValue::Real(x) if x.is_finite()),
            |r| distributions::normal_rng(r, mu, var).map(ChoiceValue::Real),
        )?;
        Ok(v.as_real().expect("normal choices are real"))
    }

    pub fn gamma(&mut self, shape: f64, rate: f64) -> Step<f64> {
        if !(shape > 0.0 && rate > 0.0) {
            return Err(Error::Domain(format!(
                "gamma parameters must be positive, got shape={shape} rate={rate}"
            ))
            .into());
        }
        let v = self.choice(
            DistId::Gamma,
            &[shape, rate],
            |v| matches!(v, ChoiceValue::Real(x) if x > 0.0 && x.is_finite()),
            |r| distributions::gamma_rng(r, shape, rate).map(ChoiceValue::Real),
        )?;
        Ok(v.as_real().expect("gamma choices are real"))
    }

    pub fn discrete(&mut self, probs: &[f64]) -> Step<usize> {
        distributions::check_probs(probs)?;
        let v = self.choice(
            DistId::Discrete,
            probs,
            |v| matches!(v, ChoiceValue::Index(i) if i < probs.len() && probs[i] > 0.0),
            |r| distributions::discrete_rng(r, probs).map(ChoiceValue::Index),
        )?;
        Ok(v.as_index().expect("discrete choices are indices"))
    }

    /// Draws a class from `urn`, updating it.
    pub fn urn_draw(&mut self, urn: &mut PolyaUrnState) -> Step<usize> {
        let mut params = Vec::with_capacity(urn.num_classes() + 1);
        params.push(urn.alpha());
        params.extend(urn.counts().iter().map(|&c| c as f64));
        let fresh = urn.num_classes();
        let mut drawn = None;
        let v = self.choice(
            DistId::PolyaUrn,
            &params,
            |v| matches!(v, ChoiceValue::Index(i) if i <= fresh),
            |r| {
                let mut u = urn.clone();
                let c = u.draw(r);
                drawn = Some(u);
                Ok(ChoiceValue::Index(c))
            },
        )?;
        let class = v.as_index().expect("urn choices are indices");
        match drawn {
            Some(u) => *urn = u,
            None => urn.record(class)?,
        }
        Ok(class)
    }

    /// Conditions the run on `ln g`. Pauses the run when driven by a particle.
    pub fn observe(&mut self, log_weight: f64) -> Step {
        if log_weight.is_nan() || log_weight == f64::INFINITY {
            return Err(Error::Contract(format!(
                "observe log-weight must be finite or -inf, got {log_weight}"
            ))
            .into());
        }
        if self.observe_cursor < self.recorded_observes {
            let n = self.observe_cursor;
            let recorded = self.trace.observe_logw[n];
            if recorded.to_bits() != log_weight.to_bits()
                || self.trace.choice_marks[n] != self.choice_cursor
            {
                return Err(Error::Nondeterministic(format!(
                    "observe {} replayed as {log_weight}, recorded {recorded}",
                    n + 1
                ))
                .into());
            }
            self.observe_cursor += 1;
            return Ok(());
        }
        self.trace.choice_marks.push(self.trace.choices.len());
        self.trace.predict_marks.push(self.trace.predicts.len());
        self.trace.observe_logw.push(log_weight);
        self.observe_cursor += 1;
        if self.pause {
            self.increment = Some(log_weight);
            Err(Interrupt::Barrier)
        } else {
            Ok(())
        }
    }

    /// Emits an already rendered predict value.
    pub fn predict(&mut self, name: &str, value: impl Display) -> Step {
        if name.is_empty() || name.contains([',', '\n', '\r']) {
            return Err(Error::Contract(format!("invalid predict name {name:?}")).into());
        }
        let value = value.to_string();
        if self.predict_cursor < self.recorded_predicts {
            let rec = &self.trace.predicts[self.predict_cursor];
            if rec.name != name || rec.value != value {
                return Err(Error::Nondeterministic(format!(
                    "predict {} replayed as {name}={value}, recorded {}={}",
                    self.predict_cursor, rec.name, rec.value
                ))
                .into());
            }
            self.predict_cursor += 1;
            return Ok(());
        }
        if self.observe_cursor < self.recorded_observes {
            return Err(Error::Nondeterministic("unrecorded predict inside replayed prefix".into()).into());
        }
        self.trace.predicts.push(PredictRecord {
            name: name.to_owned(),
            value,
            observe_index: self.observe_cursor,
        });
        self.predict_cursor += 1;
        Ok(())
    }

    pub fn predict_real(&mut self, name: &str, value: f64) -> Step {
        let text = self.format.render(value);
        self.predict(name, text)
    }

    pub fn predict_int(&mut self, name: &str, value: i64) -> Step {
        self.predict(name, value)
    }
}

enum Outcome {
    Barrier(f64),
    Completed,
}

fn execute<M: Model + ?Sized>(
    model: &M,
    trace: &mut ExecutionTrace,
    rng: &mut RngStream,
    forced: &[ChoiceValue],
    pause: bool,
    format: PredictFormat,
) -> Result<Outcome> {
    let mut ctx = Ctx::new(trace, rng, forced, pause, format);
    let result = model.run(&mut ctx);
    let unreplayed = ctx.choice_cursor < ctx.recorded_choices
        || ctx.observe_cursor < ctx.recorded_observes
        || ctx.predict_cursor < ctx.recorded_predicts;
    let increment = ctx.increment;
    match result {
        Err(Interrupt::Fault(e)) => Err(e),
        Err(Interrupt::Barrier) => {
            let n = trace.observe_count();
            match model.observe_count() {
                Some(declared) if n > declared => Err(Error::ObserveMismatch {
                    observe: n,
                    detail: format!("model declares {declared} observes"),
                }),
                _ => Ok(Outcome::Barrier(increment.expect("barrier carries an increment"))),
            }
        }
        Ok(()) if unreplayed => Err(Error::Nondeterministic(
            "run completed before replaying its recorded prefix".into(),
        )),
        Ok(()) => match model.observe_count() {
            Some(declared) if trace.observe_count() != declared => Err(Error::ObserveMismatch {
                observe: trace.observe_count(),
                detail: format!("model declares {declared} observes"),
            }),
            _ => Ok(Outcome::Completed),
        },
    }
}

/// Runs `model` to completion without pausing. Choices whose index has an entry
/// in `forced` take that value; the rest are drawn from `rng`.
pub fn run_forced<M: Model + ?Sized>(
    model: &M,
    forced: &[ChoiceValue],
    rng: &mut RngStream,
    format: PredictFormat,
) -> Result<ExecutionTrace> {
    let mut trace = ExecutionTrace::default();
    execute(model, &mut trace, rng, forced, false, format)?;
    Ok(trace)
}

/// Re-executes `model` feeding `values` as its choices. Fails if the run needs
/// more choices than supplied.
pub fn replay<M: Model + ?Sized>(
    model: &M,
    values: &[ChoiceValue],
    format: PredictFormat,
) -> Result<ExecutionTrace> {
    let mut rng = RngStream::new(0);
    let trace = run_forced(model, values, &mut rng, format)?;
    if trace.choices.len() != values.len() {
        return Err(Error::Nondeterministic(format!(
            "replay made {} choices, {} supplied",
            trace.choices.len(),
            values.len()
        )));
    }
    Ok(trace)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParticleStatus {
    /// Paused having passed `n` observes (0 for a fresh particle).
    AtBarrier(usize),
    Completed,
    Killed,
    Failed,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BarrierEvent {
    /// Reached observe `observe` (1-based) with the given log-likelihood increment.
    Observe { observe: usize, increment: f64 },
    Completed,
}

/// A resumable program execution.
#[derive(Clone, Debug)]
pub struct Particle {
    trace: ExecutionTrace,
    status: ParticleStatus,
    rng: RngStream,
    cum_logw: f64,
    format: PredictFormat,
}

impl Particle {
    /// A fresh particle that has executed nothing, with a stream seeded from `seed`.
    pub fn start(seed: u64) -> Self {
        Self::from_stream(RngStream::new(seed))
    }

    pub fn from_stream(rng: RngStream) -> Self {
        Particle {
            trace: ExecutionTrace::default(),
            status: ParticleStatus::AtBarrier(0),
            rng,
            cum_logw: 0.0,
            format: PredictFormat::default(),
        }
    }

    /// A particle paused at the last observe recorded in `trace`.
    pub fn resume_from(trace: ExecutionTrace, rng: RngStream) -> Self {
        let n = trace.observe_count();
        Particle {
            trace,
            status: ParticleStatus::AtBarrier(n),
            rng,
            cum_logw: 0.0,
            format: PredictFormat::default(),
        }
    }

    pub fn with_format(mut self, format: PredictFormat) -> Self {
        self.format = format;
        self
    }

    pub fn trace(&self) -> &ExecutionTrace {
        &self.trace
    }

    pub fn into_trace(self) -> ExecutionTrace {
        self.trace
    }

    pub fn status(&self) -> ParticleStatus {
        self.status
    }

    pub fn rng(&self) -> &RngStream {
        &self.rng
    }

    /// Log-weight accumulated since the last resampling event.
    pub fn cum_logw(&self) -> f64 {
        self.cum_logw
    }

    pub fn reset_weight(&mut self) {
        self.cum_logw = 0.0;
    }

    /// Advances the model to its next observe, or to completion.
    pub fn run_to_barrier<M: Model + ?Sized>(&mut self, model: &M) -> Result<BarrierEvent> {
        match self.status {
            ParticleStatus::AtBarrier(_) => {}
            s => return Err(Error::Contract(format!("cannot advance a particle in state {s:?}"))),
        }
        match execute(model, &mut self.trace, &mut self.rng, &[], true, self.format) {
            Ok(Outcome::Barrier(increment)) => {
                let n = self.trace.observe_count();
                self.status = ParticleStatus::AtBarrier(n);
                self.cum_logw += increment;
                Ok(BarrierEvent::Observe { observe: n, increment })
            }
            Ok(Outcome::Completed) => {
                self.status = ParticleStatus::Completed;
                Ok(BarrierEvent::Completed)
            }
            Err(e) => {
                self.status = ParticleStatus::Failed;
                Err(e)
            }
        }
    }

    /// Consumes the particle, returning one child per seed. Children share the
    /// parent's trace and weight and draw from streams keyed by their seed.
    pub fn branch(self, child_seeds: &[u64]) -> Result<Vec<Particle>> {
        if !matches!(self.status, ParticleStatus::AtBarrier(_)) {
            return Err(Error::Contract(format!("cannot branch a particle in state {:?}", self.status)));
        }
        if child_seeds.is_empty() {
            return Err(Error::Contract("branch needs at least one child".into()));
        }
        let mut out = Vec::with_capacity(child_seeds.len());
        let (last, rest) = child_seeds.split_last().expect("nonempty");
        for &s in rest {
            out.push(Particle {
                trace: self.trace.clone(),
                status: self.status,
                rng: self.rng.derive(s),
                cum_logw: self.cum_logw,
                format: self.format,
            });
        }
        let rng = self.rng.derive(*last);
        out.push(Particle { rng, ..self });
        Ok(out)
    }

    /// Terminates the particle and releases its trace. Idempotent.
    pub fn kill(&mut self) {
        self.status = ParticleStatus::Killed;
        self.trace = ExecutionTrace::default();
    }
}
