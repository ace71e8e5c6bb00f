//! Grid-restricted Bayesian optimization of one frozen sub-problem.
//!
//! A sub-problem fixes `k` complement draws for sub-space `i`; its objective
//! at a grid row is the mean of the black box over the `k` full points that
//! row completes. The complements never change while the sub-problem lives,
//! so the objective is deterministic and every row is evaluated at most once.

use std::collections::BTreeMap;
use std::time::Instant;

use log::warn;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::acquisition::argmax_ei_on_grid;
use crate::belief::ComplementSampleSet;
use crate::domain::Domain;
use crate::error::{BofipError, Result};
use crate::objectives::Objective;
use crate::surrogate::{GpConfig, GpModel};

/// Receives every full-dimensional evaluation of the black box.
pub trait EvalObserver {
    fn observe(&mut self, point: &[f64], value: f64);
}

impl EvalObserver for () {
    fn observe(&mut self, _: &[f64], _: f64) {}
}

/// One sub-space's averaged objective under frozen complement draws.
pub struct SubProblem<'a, O: ?Sized> {
    domain: &'a Domain,
    subspace: usize,
    iteration: usize,
    complements: ComplementSampleSet,
    objective: &'a O,
    ledger: BTreeMap<usize, f64>,
    evaluations: usize,
    coords: Vec<f64>,
}

impl<'a, O: Objective + ?Sized> SubProblem<'a, O> {
    pub fn new(
        domain: &'a Domain,
        iteration: usize,
        complements: ComplementSampleSet,
        objective: &'a O,
    ) -> Result<Self> {
        let subspace = complements.target();
        if complements.subspaces() != domain.subspaces() {
            return Err(BofipError::InvalidParameter(format!(
                "complements cover {} sub-spaces, domain has {}",
                complements.subspaces(),
                domain.subspaces()
            )));
        }
        for h in 0..complements.len() {
            // validates every complement row against its grid
            domain.compose_into(&complements.with_target(h, 0), &mut vec![0.0; domain.dim()])?;
        }
        Ok(SubProblem {
            domain,
            subspace,
            iteration,
            complements,
            objective,
            ledger: BTreeMap::new(),
            evaluations: 0,
            coords: vec![0.0; domain.dim()],
        })
    }

    pub fn subspace(&self) -> usize {
        self.subspace
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// Complement sample size `k_t`.
    pub fn k(&self) -> usize {
        self.complements.len()
    }

    pub fn grid_len(&self) -> usize {
        self.domain.grid(self.subspace).len()
    }

    pub fn domain(&self) -> &'a Domain {
        self.domain
    }

    pub fn complements(&self) -> &ComplementSampleSet {
        &self.complements
    }

    /// Averaged objective at `row`. The first call costs `k` black-box
    /// evaluations; later calls return the cached value.
    pub fn evaluate<Obs: EvalObserver + ?Sized>(&mut self, row: usize, observer: &mut Obs) -> Result<f64> {
        if let Some(&v) = self.ledger.get(&row) {
            return Ok(v);
        }
        let grid_len = self.grid_len();
        if row >= grid_len {
            return Err(BofipError::OutOfBounds {
                what: "grid row",
                index: row,
                len: grid_len,
            });
        }
        let mut sum = 0.0;
        for h in 0..self.k() {
            let idx = self.complements.with_target(h, row);
            self.domain.compose_into(&idx, &mut self.coords)?;
            let v = self
                .objective
                .evaluate(&self.coords)
                .map_err(|e| BofipError::Evaluation {
                    subspace: self.subspace,
                    row,
                    message: e.to_string(),
                })?;
            if !v.is_finite() {
                return Err(BofipError::Evaluation {
                    subspace: self.subspace,
                    row,
                    message: format!("objective returned {v}"),
                });
            }
            self.evaluations += 1;
            observer.observe(&self.coords, v);
            sum += v;
        }
        let mean = sum / self.k() as f64;
        self.ledger.insert(row, mean);
        Ok(mean)
    }

    /// Evaluated rows and their averaged values, by row index.
    pub fn ledger(&self) -> &BTreeMap<usize, f64> {
        &self.ledger
    }

    /// Black-box calls made so far.
    pub fn evaluations(&self) -> usize {
        self.evaluations
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoSettings {
    /// Black-box evaluations available to this run (`b_t`).
    pub budget: usize,
    /// Random rows in the initial design (`r_0`).
    pub initial_design: usize,
    /// Most recent warm-start rows kept once the warm start would cost more
    /// than half the budget.
    pub warm_start_cap: usize,
    pub gp: GpConfig,
}

/// One acquisition step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoStep {
    pub row: usize,
    pub value: f64,
    pub remaining_budget: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoOutcome {
    pub best_row: usize,
    pub best_value: f64,
    pub evaluations_spent: usize,
    /// Rows in evaluation order; the first `initial_design` are `S_0`.
    pub sampled_rows: Vec<usize>,
    pub initial_design: usize,
    pub steps: Vec<BoStep>,
    /// Largest surrogate training set used.
    pub max_training_size: usize,
    /// Steps that fell back to a random row because the surrogate failed.
    pub fallback_steps: usize,
    pub grid_exhausted: bool,
    /// Stopped early by the deadline.
    pub truncated: bool,
}

/// Builds the initial design: the warm start (deduplicated, most recent
/// entries kept when capped) topped up with random distinct rows.
pub fn initial_design<R: Rng + ?Sized>(
    grid_len: usize,
    warm_start: &[usize],
    k: usize,
    settings: &BoSettings,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if let Some(&r) = warm_start.iter().find(|&&r| r >= grid_len) {
        return Err(BofipError::OutOfBounds {
            what: "warm-start row",
            index: r,
            len: grid_len,
        });
    }
    // keep the latest occurrence of each row, oldest first
    let mut warm: Vec<usize> = Vec::with_capacity(warm_start.len());
    for (pos, &r) in warm_start.iter().enumerate() {
        if !warm_start[pos + 1..].contains(&r) {
            warm.push(r);
        }
    }
    if k * warm.len() > settings.budget / 2 && warm.len() > settings.warm_start_cap {
        warm.drain(..warm.len() - settings.warm_start_cap);
    }

    let target = settings.initial_design.min(grid_len);
    if warm.len() < target {
        let mut taken = vec![false; grid_len];
        warm.iter().for_each(|&r| taken[r] = true);
        let mut free: Vec<usize> = (0..grid_len).filter(|&r| !taken[r]).collect();
        let need = target - warm.len();
        let (picked, _) = free.partial_shuffle(rng, need);
        warm.extend_from_slice(picked);
    }
    Ok(warm)
}

/// Runs expected-improvement search on the sub-problem's grid until the
/// budget is spent, the grid is exhausted, or the deadline passes.
///
/// The initial design is always evaluated in full, even when it costs more
/// than the budget; the deadline is only checked between acquisition steps.
pub fn run_bo<O, R, Obs>(
    sub: &mut SubProblem<'_, O>,
    warm_start: &[usize],
    settings: &BoSettings,
    rng: &mut R,
    deadline: Option<Instant>,
    observer: &mut Obs,
) -> Result<BoOutcome>
where
    O: Objective + ?Sized,
    R: Rng + ?Sized,
    Obs: EvalObserver + ?Sized,
{
    if settings.initial_design < 2 {
        return Err(BofipError::config(format!(
            "initial design size {} must be at least 2",
            settings.initial_design
        )));
    }
    let k = sub.k();
    let grid = sub.domain().grid(sub.subspace());
    let grid_len = grid.len();
    let s0 = initial_design(grid_len, warm_start, k, settings, rng)?;
    let spent_before = sub.evaluations();

    let mut sampled = vec![false; grid_len];
    let mut order: Vec<usize> = Vec::with_capacity(s0.len());
    let mut values: Vec<f64> = Vec::with_capacity(s0.len());
    for &row in &s0 {
        values.push(sub.evaluate(row, observer)?);
        sampled[row] = true;
        order.push(row);
    }

    let mut remaining = settings.budget as i64 - (k * s0.len()) as i64;
    let mut steps = Vec::new();
    let mut fallback_steps = 0;
    let mut max_training_size = 0;
    let mut grid_exhausted = order.len() == grid_len;
    let mut truncated = false;

    while remaining > 0 && !grid_exhausted {
        if deadline.is_some_and(|d| Instant::now() >= d) {
            truncated = true;
            break;
        }
        let xs: Vec<&[f64]> = order.iter().map(|&r| grid.row(r)).collect();
        max_training_size = max_training_size.max(xs.len());
        let next = match GpModel::fit(&xs, &values, &settings.gp, rng)
            .and_then(|m| argmax_ei_on_grid(&m, grid, &sampled))
        {
            Ok(acq) => acq.best_row,
            Err(err) => {
                warn!(
                    "sub-space {} surrogate step failed ({err}); sampling a random row",
                    sub.subspace()
                );
                fallback_steps += 1;
                let free: Vec<usize> = (0..grid_len).filter(|&r| !sampled[r]).collect();
                free[rng.random_range(0..free.len())]
            }
        };
        let value = sub.evaluate(next, observer)?;
        sampled[next] = true;
        order.push(next);
        values.push(value);
        remaining -= k as i64;
        steps.push(BoStep {
            row: next,
            value,
            remaining_budget: remaining,
        });
        grid_exhausted = order.len() == grid_len;
    }

    let (best_idx, best_value) = values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });

    Ok(BoOutcome {
        best_row: order[best_idx],
        best_value,
        evaluations_spent: sub.evaluations() - spent_before,
        sampled_rows: order,
        initial_design: s0.len(),
        steps,
        max_training_size,
        fallback_steps,
        grid_exhausted,
        truncated,
    })
}
