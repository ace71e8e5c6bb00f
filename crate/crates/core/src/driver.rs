//! The outer fictitious-play loop over sub-spaces.

use std::time::{Duration, Instant};

use log::{debug, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::belief::{sample_complement, BeliefVector, ComplementSampleSet};
use crate::bo_engine::{run_bo, BoOutcome, BoSettings, BoStep, EvalObserver, SubProblem};
use crate::domain::{Domain, GridScheme, Interval, SubspacePartition};
use crate::error::{BofipError, Result};
use crate::objectives::Objective;
use crate::surrogate::GpConfig;

/// Per-sweep parameter schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Schedule {
    Constant(usize),
    /// `start + step * t` at sweep `t`.
    Linear { start: usize, step: usize },
}

impl Schedule {
    pub fn at(&self, sweep: usize) -> usize {
        match *self {
            Schedule::Constant(v) => v,
            Schedule::Linear { start, step } => start + step * sweep,
        }
    }

    fn min(&self) -> usize {
        self.at(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepMode {
    /// Each sub-space samples complements from beliefs already updated
    /// earlier in the same sweep.
    #[default]
    Sequential,
    /// All sub-spaces read start-of-sweep beliefs and run concurrently.
    Snapshot,
}

impl std::str::FromStr for SweepMode {
    type Err = BofipError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sequential" => Ok(SweepMode::Sequential),
            "snapshot" => Ok(SweepMode::Snapshot),
            other => Err(BofipError::config(format!("unknown sweep mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BofipConfig {
    /// Sub-space count `p`.
    pub subspaces: usize,
    /// Grid rows per sub-space.
    pub grid_size: usize,
    pub grid_scheme: GridScheme,
    /// Complement draws `k_t`.
    pub complement_samples: Schedule,
    /// Black-box evaluations per sub-problem `b_t`.
    pub bo_budget: Schedule,
    /// Sweep count `T`.
    pub sweeps: usize,
    pub wall_clock_limit: Option<Duration>,
    /// Initial design size; defaults to `min(2 d_i + 2, n_g)` per sub-space.
    pub initial_design: Option<usize>,
    pub warm_start_cap: usize,
    pub sweep_mode: SweepMode,
    pub seed: u64,
    pub gp: GpConfig,
    /// Keep a copy of every belief vector after each update.
    pub record_beliefs: bool,
}

impl Default for BofipConfig {
    fn default() -> Self {
        BofipConfig {
            subspaces: 1,
            grid_size: 64,
            grid_scheme: GridScheme::Auto,
            complement_samples: Schedule::Constant(1),
            bo_budget: Schedule::Constant(40),
            sweeps: 10,
            wall_clock_limit: None,
            initial_design: None,
            warm_start_cap: 25,
            sweep_mode: SweepMode::Sequential,
            seed: 0,
            gp: GpConfig::default(),
            record_beliefs: false,
        }
    }
}

impl BofipConfig {
    /// Checks the configuration against a problem of dimension `d`.
    pub fn validate(&self, d: usize) -> Result<()> {
        if self.subspaces == 0 || self.subspaces > d {
            return Err(BofipError::config(format!(
                "sub-space count {} must lie in 1..={d}",
                self.subspaces
            )));
        }
        if self.grid_size < 2 {
            return Err(BofipError::config(format!("grid size {} must be at least 2", self.grid_size)));
        }
        if self.sweeps == 0 {
            return Err(BofipError::config("sweep count must be at least 1"));
        }
        if self.complement_samples.min() == 0 {
            return Err(BofipError::config("complement sample count must be at least 1"));
        }
        if let Some(r0) = self.initial_design {
            if r0 < 2 {
                return Err(BofipError::config(format!("initial design size {r0} must be at least 2")));
            }
        }
        if self.warm_start_cap == 0 {
            return Err(BofipError::config("warm-start cap must be at least 1"));
        }
        self.gp.validate()?;
        let widest = d.div_ceil(self.subspaces);
        let r0 = self.initial_design_for(widest);
        let (k, b) = (self.complement_samples.min(), self.bo_budget.min());
        if b < k * r0 {
            warn!(
                "budget {b} is below k * r0 = {}; sub-problems will only evaluate their initial design, \
                 and warm starts beyond {} rows are trimmed",
                k * r0,
                self.warm_start_cap
            );
        }
        Ok(())
    }

    /// Initial design size for a sub-space of `dims` dimensions.
    pub fn initial_design_for(&self, dims: usize) -> usize {
        self.initial_design
            .unwrap_or(2 * dims + 2)
            .min(self.grid_size)
    }
}

const STREAM_PARTITION: u64 = 1;
const STREAM_GRIDS: u64 = 2;
const STREAM_COMPLEMENT: u64 = 3;
const STREAM_BO: u64 = 4;

/// Random streams used by the driver, all derived from the run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RngPurpose {
    Partition,
    Grids,
    Complement { sweep: usize, subspace: usize },
    Bo { sweep: usize, subspace: usize },
}

/// Independent generator for one purpose, so that changing how much one
/// phase draws never perturbs another.
pub fn purpose_rng(seed: u64, purpose: RngPurpose) -> ChaCha8Rng {
    let stream = match purpose {
        RngPurpose::Partition => STREAM_PARTITION << 60,
        RngPurpose::Grids => STREAM_GRIDS << 60,
        RngPurpose::Complement { sweep, subspace } => {
            STREAM_COMPLEMENT << 60 | (sweep as u64) << 30 | subspace as u64
        }
        RngPurpose::Bo { sweep, subspace } => STREAM_BO << 60 | (sweep as u64) << 30 | subspace as u64,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Partition and grids exactly as a run with this configuration builds them.
pub fn build_domain(bounds: &[Interval], config: &BofipConfig) -> Result<Domain> {
    let partition = SubspacePartition::random(
        bounds.to_vec(),
        config.subspaces,
        &mut purpose_rng(config.seed, RngPurpose::Partition),
    )?;
    Domain::build(
        partition,
        config.grid_size,
        config.grid_scheme,
        &mut purpose_rng(config.seed, RngPurpose::Grids),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub wall_clock_s: f64,
    pub total_evals: usize,
    pub record_best_f: f64,
}

/// One sub-problem solved inside a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseEvent {
    pub sweep: usize,
    pub subspace: usize,
    pub k: usize,
    pub budget: usize,
    pub best_row: usize,
    pub best_value: f64,
    pub evaluations: usize,
    pub initial_design: usize,
    pub max_training_size: usize,
    pub fallback_steps: usize,
    pub grid_exhausted: bool,
    pub steps: Vec<BoStep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefSnapshot {
    pub sweep: usize,
    pub belief: BeliefVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub best_point: Option<Vec<f64>>,
    pub best_value: f64,
    pub total_evaluations: usize,
    pub series: Vec<TracePoint>,
    pub phases: Vec<PhaseEvent>,
    pub beliefs: Vec<BeliefSnapshot>,
    pub sweeps_completed: usize,
    /// Stopped by the wall-clock limit before `T` sweeps.
    pub truncated: bool,
}

impl Default for RunRecord {
    fn default() -> Self {
        RunRecord {
            best_point: None,
            best_value: f64::INFINITY,
            total_evaluations: 0,
            series: Vec::new(),
            phases: Vec::new(),
            beliefs: Vec::new(),
            sweeps_completed: 0,
            truncated: false,
        }
    }
}

impl RunRecord {
    /// Counts one paid evaluation and keeps it if it beats the record.
    /// Series timestamps are forced strictly increasing.
    pub fn record_best(&mut self, point: &[f64], value: f64, wall_clock_s: f64) {
        self.total_evaluations += 1;
        if value >= self.best_value {
            return;
        }
        self.best_value = value;
        match &mut self.best_point {
            Some(p) if p.len() == point.len() => p.copy_from_slice(point),
            slot => *slot = Some(point.to_vec()),
        }
        let t = match self.series.last() {
            Some(last) if wall_clock_s <= last.wall_clock_s => last.wall_clock_s.next_up(),
            _ => wall_clock_s,
        };
        self.series.push(TracePoint {
            wall_clock_s: t,
            total_evals: self.total_evaluations,
            record_best_f: value,
        });
    }

    /// Record value after the first `evals` evaluations.
    pub fn best_after(&self, evals: usize) -> Option<f64> {
        self.series
            .iter()
            .take_while(|p| p.total_evals <= evals)
            .last()
            .map(|p| p.record_best_f)
    }
}

struct Recorder<'r> {
    record: &'r mut RunRecord,
    start: Instant,
}

impl EvalObserver for Recorder<'_> {
    fn observe(&mut self, point: &[f64], value: f64) {
        let t = self.start.elapsed().as_secs_f64();
        self.record.record_best(point, value, t);
    }
}

/// Collects one thread's evaluations for merging after the sweep.
#[derive(Default)]
struct LocalLog {
    count: usize,
    best: f64,
    improvements: Vec<(usize, Vec<f64>, f64)>,
}

impl EvalObserver for LocalLog {
    fn observe(&mut self, point: &[f64], value: f64) {
        self.count += 1;
        if self.improvements.is_empty() || value < self.best {
            self.best = value;
            self.improvements.push((self.count, point.to_vec(), value));
        }
    }
}

/// Minimizes `objective` over the box `bounds`.
pub fn run_bofip<O: Objective + ?Sized>(
    objective: &O,
    bounds: &[Interval],
    config: &BofipConfig,
) -> Result<RunRecord> {
    config.validate(bounds.len())?;
    let start = Instant::now();
    let deadline = config.wall_clock_limit.map(|l| start + l);
    let domain = build_domain(bounds, config)?;
    let p = domain.subspaces();
    let mut beliefs: Vec<BeliefVector> = domain
        .grids()
        .iter()
        .enumerate()
        .map(|(i, g)| BeliefVector::uniform(i, g.len()))
        .collect();
    let mut warm: Vec<Vec<usize>> = vec![Vec::new(); p];
    let mut record = RunRecord::default();
    let past = |d: Option<Instant>| d.is_some_and(|d| Instant::now() >= d);

    'sweeps: for t in 0..config.sweeps {
        let k = config.complement_samples.at(t);
        let budget = config.bo_budget.at(t);
        let settings_for = |i: usize| BoSettings {
            budget,
            initial_design: config.initial_design_for(domain.grid(i).dims()),
            warm_start_cap: config.warm_start_cap,
            gp: config.gp.clone(),
        };

        let outcomes: Vec<(usize, BoOutcome)> = match config.sweep_mode {
            SweepMode::Sequential => {
                let mut done = Vec::with_capacity(p);
                for i in 0..p {
                    if (t > 0 || i > 0) && past(deadline) {
                        record.truncated = true;
                        break 'sweeps;
                    }
                    let comp = sample_complement(
                        &beliefs,
                        i,
                        k,
                        &mut purpose_rng(config.seed, RngPurpose::Complement { sweep: t, subspace: i }),
                    )?;
                    let mut sub = SubProblem::new(&domain, t, comp, objective)?;
                    let mut obs = Recorder {
                        record: &mut record,
                        start,
                    };
                    let out = run_bo(
                        &mut sub,
                        &warm[i],
                        &settings_for(i),
                        &mut purpose_rng(config.seed, RngPurpose::Bo { sweep: t, subspace: i }),
                        deadline,
                        &mut obs,
                    )?;
                    let truncated = out.truncated;
                    finish_phase(&mut record, &mut beliefs, &mut warm, t, i, k, budget, &out, config)?;
                    done.push((i, out));
                    if truncated {
                        record.truncated = true;
                        break 'sweeps;
                    }
                }
                done
            }
            SweepMode::Snapshot => {
                if t > 0 && past(deadline) {
                    record.truncated = true;
                    break 'sweeps;
                }
                let comps: Vec<ComplementSampleSet> = (0..p)
                    .map(|i| {
                        sample_complement(
                            &beliefs,
                            i,
                            k,
                            &mut purpose_rng(config.seed, RngPurpose::Complement { sweep: t, subspace: i }),
                        )
                    })
                    .collect::<Result<_>>()?;
                let results: Vec<Result<(BoOutcome, LocalLog)>> = std::thread::scope(|s| {
                    let handles: Vec<_> = comps
                        .into_iter()
                        .enumerate()
                        .map(|(i, comp)| {
                            let (domain, warm_i, settings) = (&domain, &warm[i], settings_for(i));
                            s.spawn(move || {
                                let mut sub = SubProblem::new(domain, t, comp, objective)?;
                                let mut log = LocalLog::default();
                                let out = run_bo(
                                    &mut sub,
                                    warm_i,
                                    &settings,
                                    &mut purpose_rng(config.seed, RngPurpose::Bo { sweep: t, subspace: i }),
                                    deadline,
                                    &mut log,
                                )?;
                                Ok((out, log))
                            })
                        })
                        .collect();
                    handles
                        .into_iter()
                        .map(|h| h.join().expect("sub-space worker panicked"))
                        .collect()
                });
                let mut done = Vec::with_capacity(p);
                let mut truncated = false;
                for (i, res) in results.into_iter().enumerate() {
                    let (out, log) = res?;
                    let now = start.elapsed().as_secs_f64();
                    let base = record.total_evaluations;
                    for (n, point, value) in &log.improvements {
                        record.total_evaluations = base + n - 1;
                        record.record_best(point, *value, now);
                    }
                    record.total_evaluations = base + log.count;
                    truncated |= out.truncated;
                    finish_phase(&mut record, &mut beliefs, &mut warm, t, i, k, budget, &out, config)?;
                    done.push((i, out));
                }
                if truncated {
                    record.truncated = true;
                    break 'sweeps;
                }
                done
            }
        };
        debug!("sweep {t}: {} phases, record {}", outcomes.len(), record.best_value);
        record.sweeps_completed = t + 1;
    }
    Ok(record)
}

#[allow(clippy::too_many_arguments)]
fn finish_phase(
    record: &mut RunRecord,
    beliefs: &mut [BeliefVector],
    warm: &mut [Vec<usize>],
    t: usize,
    i: usize,
    k: usize,
    budget: usize,
    out: &BoOutcome,
    config: &BofipConfig,
) -> Result<()> {
    warm[i].retain(|&r| r != out.best_row);
    warm[i].push(out.best_row);
    beliefs[i].update(out.best_row)?;
    if config.record_beliefs {
        record.beliefs.push(BeliefSnapshot {
            sweep: t,
            belief: beliefs[i].clone(),
        });
    }
    record.phases.push(PhaseEvent {
        sweep: t,
        subspace: i,
        k,
        budget,
        best_row: out.best_row,
        best_value: out.best_value,
        evaluations: out.evaluations_spent,
        initial_design: out.initial_design,
        max_training_size: out.max_training_size,
        fallback_steps: out.fallback_steps,
        grid_exhausted: out.grid_exhausted,
        steps: out.steps.clone(),
    });
    Ok(())
}
