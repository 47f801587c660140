//! Runs a benchmark model under one engine and writes the sample, diagnostic
//! and KL-curve CSV files.
//!
//! Output files, all comma separated with a header row:
//!
//! * `samples.csv`: `iteration,particle,predict_name,value,weight`. One row per
//!   predict per particle. `weight` is the particle's normalized weight within
//!   its iteration, so every iteration carries total mass 1.
//! * `diagnostics.csv`: `iteration,wallclock_seconds,log_evidence,ess_trace,
//!   resampled,acceptance_rate,retained_offspring`. List-valued fields are
//!   `;`-joined; fields that do not apply to the engine are empty.
//! * `kl_curve.csv` (with `--eval`): `cumulative_samples,wallclock_seconds,kl,kl_sum`.
//!   `kl` is the divergence of all samples so far from the exact posterior,
//!   averaged over predict names; `kl_sum` is the sum over names.
//!
//! Iterations are numbered from 1 and particles from 0.
//!
//! With `--pool evidence` (SMC only) the KL curve weights each sweep by its
//! evidence estimate instead of giving every sweep equal mass. The samples
//! file is the same either way; the weights are recovered from the
//! `log_evidence` column of the diagnostics.

use std::fmt;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, Context};
use tracemc::trace::PredictRecord;
use tracemc::{
    Benchmark, BenchmarkId, KlTracker, Model, PgChain, PimhChain, PredictFormat, Scheme, SmcConfig,
    SmcRunner, SweepResult,
};

pub const SAMPLES_FILE: &str = "samples.csv";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
pub const KL_FILE: &str = "kl_curve.csv";

pub const SAMPLES_HEADER: [&str; 5] = ["iteration", "particle", "predict_name", "value", "weight"];
pub const DIAGNOSTICS_HEADER: [&str; 7] = [
    "iteration",
    "wallclock_seconds",
    "log_evidence",
    "ess_trace",
    "resampled",
    "acceptance_rate",
    "retained_offspring",
];
pub const KL_HEADER: [&str; 4] = ["cumulative_samples", "wallclock_seconds", "kl", "kl_sum"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Engine {
    Smc,
    Pimh,
    Pg,
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Engine::Smc => "smc",
            Engine::Pimh => "pimh",
            Engine::Pg => "pg",
        })
    }
}

impl FromStr for Engine {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> anyhow::Result<Self> {
        Ok(match s {
            "smc" => Engine::Smc,
            "pimh" => Engine::Pimh,
            "pg" => Engine::Pg,
            _ => bail!("unknown engine `{s}`"),
        })
    }
}

/// How iterations are combined into one empirical posterior.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Pooling {
    /// Every iteration carries total mass 1.
    #[default]
    Sweep,
    /// Iterations are weighted by their evidence estimates.
    Evidence,
}

impl fmt::Display for Pooling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pooling::Sweep => "sweep",
            Pooling::Evidence => "evidence",
        })
    }
}

impl FromStr for Pooling {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> anyhow::Result<Self> {
        Ok(match s {
            "sweep" => Pooling::Sweep,
            "evidence" => Pooling::Evidence,
            _ => bail!("unknown pooling `{s}`"),
        })
    }
}

/// Turns per-iteration evidence into the scale applied to that iteration's
/// weights, rescaling earlier mass whenever a new maximum appears.
struct Pooler {
    mode: Pooling,
    top: f64,
}

impl Pooler {
    fn new(mode: Pooling) -> Self {
        Pooler { mode, top: f64::NEG_INFINITY }
    }

    fn block_scale(&mut self, tracker: &mut KlTracker, log_evidence: f64) -> f64 {
        match self.mode {
            Pooling::Sweep => 1.0,
            Pooling::Evidence => {
                if log_evidence > self.top {
                    if self.top.is_finite() {
                        tracker.rescale((self.top - log_evidence).exp());
                    }
                    self.top = log_evidence;
                }
                (log_evidence - self.top).exp()
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub model: BenchmarkId,
    pub engine: Engine,
    pub particles: usize,
    pub iterations: usize,
    pub tau: Option<f64>,
    pub scheme: Scheme,
    pub seed: u64,
    pub workers: usize,
    pub out: PathBuf,
    pub eval: bool,
    pub pool: Pooling,
    pub full_precision: bool,
    /// When false, timing columns are written as 0 so repeated runs produce
    /// identical files.
    pub wallclock: bool,
}

impl RunConfig {
    pub fn new(model: BenchmarkId, engine: Engine, out: impl Into<PathBuf>) -> Self {
        RunConfig {
            model,
            engine,
            particles: 100,
            iterations: 1,
            tau: None,
            scheme: Scheme::default(),
            seed: 0,
            workers: 1,
            out: out.into(),
            eval: false,
            pool: Pooling::Sweep,
            full_precision: false,
            wallclock: true,
        }
    }

    fn smc_config(&self) -> SmcConfig {
        let mut cfg = SmcConfig::new(self.particles)
            .with_seed(self.seed)
            .with_scheme(self.scheme)
            .with_workers(self.workers)
            .with_format(if self.full_precision { PredictFormat::Full } else { PredictFormat::Fixed6 });
        if let Some(t) = self.tau {
            cfg = cfg.with_tau(t);
        }
        cfg
    }

    /// Rejects combinations no engine can run.
    pub fn validate(&self) -> anyhow::Result<()> {
        if self.iterations == 0 {
            bail!("--iterations must be at least 1");
        }
        if self.pool == Pooling::Evidence && self.engine != Engine::Smc {
            bail!("--pool evidence applies to the smc engine only");
        }
        self.smc_config().validate()?;
        Ok(())
    }
}

/// `name,value` exactly as rendered by the model.
pub fn emit_predict_line(record: &PredictRecord) -> String {
    format!("{},{}", record.name, record.value)
}

/// Per-iteration summary kept after a run.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationSummary {
    pub iteration: usize,
    pub log_evidence: f64,
    pub kl: Option<(f64, f64)>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunSummary {
    pub iterations: Vec<IterationSummary>,
    pub acceptance_rate: Option<f64>,
    /// Steps where the retained particle had no offspring (always 0 for a
    /// correct conditional sweep).
    pub retained_violations: usize,
}

enum Driver<'m> {
    Smc(SmcRunner<'m, dyn Model + Send + 'm>),
    Pimh(PimhChain<'m, dyn Model + Send + 'm>),
    Pg(PgChain<'m, dyn Model + Send + 'm>),
}

impl<'m> Driver<'m> {
    fn start(model: &'m (dyn Model + Send + 'm), engine: Engine, cfg: SmcConfig) -> anyhow::Result<Self> {
        Ok(match engine {
            Engine::Smc => Driver::Smc(SmcRunner::new(model, cfg)?),
            Engine::Pimh => Driver::Pimh(PimhChain::start(model, cfg)?),
            Engine::Pg => Driver::Pg(PgChain::start(model, cfg)?),
        })
    }

    /// The block emitted at the next iteration. The first call returns the
    /// initial sweep of the chains.
    fn next(&mut self, first: bool) -> anyhow::Result<Arc<SweepResult>> {
        Ok(match self {
            Driver::Smc(r) => Arc::new(r.next_sweep()?),
            Driver::Pimh(c) => {
                if !first {
                    c.step()?;
                }
                c.current().clone()
            }
            Driver::Pg(c) => {
                if !first {
                    c.step()?;
                }
                c.current().clone()
            }
        })
    }

    fn acceptance_rate(&self) -> Option<f64> {
        match self {
            Driver::Pimh(c) => Some(c.state().acceptance_rate()),
            _ => None,
        }
    }
}

fn csv_writer(path: &Path) -> anyhow::Result<csv::Writer<BufWriter<File>>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(BufWriter::new(f)))
}

fn join<T: fmt::Display>(xs: impl Iterator<Item = T>) -> String {
    xs.map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

/// Runs the configured engine and writes the output files into `cfg.out`.
pub fn run(cfg: &RunConfig) -> anyhow::Result<RunSummary> {
    cfg.validate()?;
    if cfg.engine == Engine::Pg && cfg.tau.is_some() {
        eprintln!("warning: pg resamples at every observe; --tau is ignored");
    }
    std::fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    let bench = Benchmark::load(cfg.model)?;
    let mut tracker = if cfg.eval { Some(KlTracker::new(&bench.exact)?) } else { None };

    let mut samples = csv_writer(&cfg.out.join(SAMPLES_FILE))?;
    let mut diagnostics = csv_writer(&cfg.out.join(DIAGNOSTICS_FILE))?;
    let mut kl_curve = match tracker {
        Some(_) => Some(csv_writer(&cfg.out.join(KL_FILE))?),
        None => None,
    };
    samples.write_record(SAMPLES_HEADER)?;
    diagnostics.write_record(DIAGNOSTICS_HEADER)?;
    if let Some(w) = kl_curve.as_mut() {
        w.write_record(KL_HEADER)?;
    }

    let start = Instant::now();
    let mut driver = Driver::start(bench.model(), cfg.engine, cfg.smc_config())?;
    let mut summary = RunSummary::default();
    let mut pooler = Pooler::new(cfg.pool);
    let mut emitted = 0usize;
    for iteration in 1..=cfg.iterations {
        let block = driver.next(iteration == 1)?;
        let elapsed = if cfg.wallclock { start.elapsed().as_secs_f64() } else { 0.0 };
        let it = iteration.to_string();
        let scale = match tracker.as_mut() {
            Some(t) => pooler.block_scale(t, block.log_evidence),
            None => 1.0,
        };
        for (particle, (trace, w)) in block.weighted().enumerate() {
            let ptext = particle.to_string();
            let wtext = w.to_string();
            for p in &trace.predicts {
                samples.write_record([&it, &ptext, &p.name, &p.value, &wtext])?;
                if let Some(t) = tracker.as_mut() {
                    t.add(&p.name, &p.value, w * scale)?;
                }
            }
        }
        emitted += block.particles();

        let retained: Vec<usize> = block.events.iter().filter_map(|e| e.retained_offspring).collect();
        summary.retained_violations += retained.iter().filter(|&&c| c == 0).count();
        let acceptance = driver.acceptance_rate();
        diagnostics.write_record([
            it.clone(),
            elapsed.to_string(),
            block.log_evidence.to_string(),
            join(block.events.iter().map(|e| e.ess)),
            block.resample_count().to_string(),
            acceptance.map(|a| a.to_string()).unwrap_or_default(),
            join(retained.iter()),
        ])?;

        let kl = tracker.as_ref().map(KlTracker::kl);
        if let (Some(w), Some((avg, sum))) = (kl_curve.as_mut(), kl) {
            w.write_record([emitted.to_string(), elapsed.to_string(), avg.to_string(), sum.to_string()])?;
        }
        summary.iterations.push(IterationSummary { iteration, log_evidence: block.log_evidence, kl });
    }
    summary.acceptance_rate = driver.acceptance_rate();
    samples.flush()?;
    diagnostics.flush()?;
    if let Some(w) = kl_curve.as_mut() {
        w.flush()?;
    }
    Ok(summary)
}

/// One row of a KL curve.
#[derive(Clone, Debug, PartialEq)]
pub struct KlRow {
    pub cumulative_samples: usize,
    pub wallclock_seconds: String,
    pub kl: f64,
    pub kl_sum: f64,
}

fn csv_reader(path: &Path) -> anyhow::Result<csv::Reader<File>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(f))
}

fn check_header(r: &mut csv::Reader<File>, expected: &[&str], path: &Path) -> anyhow::Result<()> {
    let h = r.headers()?;
    if h.iter().ne(expected.iter().copied()) {
        bail!("{} has header {:?}, expected {:?}", path.display(), h, expected);
    }
    Ok(())
}

/// Recomputes the KL curve of a finished run from its `samples.csv`, taking
/// the timing column from `diagnostics.csv`.
pub fn recompute_kl_curve(model: BenchmarkId, pool: Pooling, dir: &Path) -> anyhow::Result<Vec<KlRow>> {
    let bench = Benchmark::load(model)?;
    let mut tracker = KlTracker::new(&bench.exact)?;
    let mut pooler = Pooler::new(pool);

    let dpath = dir.join(DIAGNOSTICS_FILE);
    let mut diag = csv_reader(&dpath)?;
    check_header(&mut diag, &DIAGNOSTICS_HEADER, &dpath)?;
    let mut clock = Vec::new();
    for rec in diag.records() {
        let rec = rec?;
        clock.push((rec[0].parse::<usize>()?, rec[1].to_owned(), rec[2].parse::<f64>()?));
    }

    let spath = dir.join(SAMPLES_FILE);
    let mut samples = csv_reader(&spath)?;
    check_header(&mut samples, &SAMPLES_HEADER, &spath)?;
    let mut rows = Vec::new();
    let mut emitted = 0usize;
    let mut current: Option<(usize, usize)> = None;
    let lookup = |iteration: usize| {
        clock
            .iter()
            .find(|(i, ..)| *i == iteration)
            .with_context(|| format!("no diagnostics row for iteration {iteration}"))
    };
    let mut scale = 1.0;
    let close = |iteration: usize, tracker: &KlTracker, emitted: usize| -> anyhow::Result<KlRow> {
        let (kl, kl_sum) = tracker.kl();
        Ok(KlRow { cumulative_samples: emitted, wallclock_seconds: lookup(iteration)?.1.clone(), kl, kl_sum })
    };
    for rec in samples.records() {
        let rec = rec?;
        let iteration: usize = rec[0].parse()?;
        let particle: usize = rec[1].parse()?;
        let weight: f64 = rec[4].parse()?;
        let new_block = match current {
            Some((i, _)) if i != iteration => {
                rows.push(close(i, &tracker, emitted)?);
                true
            }
            None => true,
            _ => false,
        };
        if new_block {
            scale = pooler.block_scale(&mut tracker, lookup(iteration)?.2);
        }
        if current != Some((iteration, particle)) {
            emitted += 1;
        }
        current = Some((iteration, particle));
        tracker.add(&rec[2], &rec[3], weight * scale)?;
    }
    if let Some((i, _)) = current {
        rows.push(close(i, &tracker, emitted)?);
    }
    Ok(rows)
}

/// Writes KL rows in the `kl_curve.csv` format.
pub fn write_kl_curve(rows: &[KlRow], path: &Path) -> anyhow::Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(KL_HEADER)?;
    for r in rows {
        w.write_record([
            r.cumulative_samples.to_string(),
            r.wallclock_seconds.clone(),
            r.kl.to_string(),
            r.kl_sum.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
