//! Fictitious-play beliefs over sub-space grid rows.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::Domain;
use crate::error::{BofipError, Result};

/// Mixed strategy of one sub-space: a probability per grid row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefVector {
    subspace_id: usize,
    weights: Vec<f64>,
    iteration: usize,
}

impl BeliefVector {
    /// Discrete uniform belief over `rows` grid rows, iteration 0.
    pub fn uniform(subspace_id: usize, rows: usize) -> Self {
        assert!(rows > 0, "belief needs at least one grid row");
        BeliefVector {
            subspace_id,
            weights: vec![1.0 / rows as f64; rows],
            iteration: 0,
        }
    }

    /// Belief with explicit weights, validated against the simplex.
    pub fn from_weights(subspace_id: usize, weights: Vec<f64>, iteration: usize) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|w| !(0.0..=1.0).contains(w)) {
            return Err(BofipError::InvalidParameter(
                "belief weights must lie in [0, 1]".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(BofipError::InvalidParameter(format!(
                "belief weights sum to {total}, not 1"
            )));
        }
        Ok(BeliefVector {
            subspace_id,
            weights,
            iteration,
        })
    }

    pub fn subspace_id(&self) -> usize {
        self.subspace_id
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Mixes the pure strategy `chosen_row` into the belief with weight
    /// `1/(t+1)`, `t` being the number of updates so far. At `t = 0` the
    /// prior is replaced outright.
    ///
    /// Evaluated as `(t*w + e)/(t+1)`, which keeps weights equal to the
    /// exact empirical play frequencies for short histories.
    pub fn update(&mut self, chosen_row: usize) -> Result<()> {
        if chosen_row >= self.weights.len() {
            return Err(BofipError::OutOfBounds {
                what: "belief row",
                index: chosen_row,
                len: self.weights.len(),
            });
        }
        let t = self.iteration as f64;
        let denom = t + 1.0;
        for (j, w) in self.weights.iter_mut().enumerate() {
            let e = if j == chosen_row { 1.0 } else { 0.0 };
            *w = (t * *w + e) / denom;
        }
        self.iteration += 1;
        Ok(())
    }

    /// Inverse-CDF draw of one row.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        CumulativeWeights::new(&self.weights).sample(rng)
    }
}

/// Cumulative weights for repeated inverse-CDF draws.
#[derive(Debug, Clone)]
pub struct CumulativeWeights {
    cdf: Vec<f64>,
    last_positive: usize,
}

impl CumulativeWeights {
    pub fn new(weights: &[f64]) -> Self {
        let mut acc = 0.0;
        let cdf = weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        let last_positive = weights.iter().rposition(|&w| w > 0.0).unwrap_or(0);
        CumulativeWeights { cdf, last_positive }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cdf.last().expect("non-empty weights");
        let u = rng.random::<f64>() * total;
        // first row whose cumulative mass exceeds u; zero-mass rows are never chosen
        self.cdf
            .partition_point(|&c| c <= u)
            .min(self.last_positive)
    }
}

/// `k_t` draws of the rows of every sub-space other than `target`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplementSampleSet {
    target: usize,
    subspaces: usize,
    // each draw stores a row per sub-space; the target slot is unused
    draws: Vec<Vec<usize>>,
}

impl ComplementSampleSet {
    /// Explicit draws; each holds one row per sub-space (the target slot is ignored).
    pub fn from_draws(target: usize, subspaces: usize, draws: Vec<Vec<usize>>) -> Result<Self> {
        if target >= subspaces {
            return Err(BofipError::OutOfBounds {
                what: "sub-space",
                index: target,
                len: subspaces,
            });
        }
        if draws.is_empty() {
            return Err(BofipError::InvalidParameter(
                "complement sample needs at least one draw".into(),
            ));
        }
        if draws.iter().any(|d| d.len() != subspaces) {
            return Err(BofipError::InvalidParameter(
                "complement draws must list one row per sub-space".into(),
            ));
        }
        Ok(ComplementSampleSet {
            target,
            subspaces,
            draws,
        })
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// Rows of the sub-spaces `j != target` in draw `h`, in sub-space order.
    pub fn complement(&self, h: usize) -> Vec<usize> {
        self.draws[h]
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != self.target)
            .map(|(_, &r)| r)
            .collect()
    }

    /// Full row tuple of draw `h` with the target sub-space set to `row`.
    pub fn with_target(&self, h: usize, row: usize) -> Vec<usize> {
        let mut idx = self.draws[h].clone();
        idx[self.target] = row;
        idx
    }

    pub fn subspaces(&self) -> usize {
        self.subspaces
    }
}

/// Draws `k` i.i.d. samples from the product of the beliefs of every
/// sub-space except `target`.
pub fn sample_complement<R: Rng + ?Sized>(
    beliefs: &[BeliefVector],
    target: usize,
    k: usize,
    rng: &mut R,
) -> Result<ComplementSampleSet> {
    if k == 0 {
        return Err(BofipError::InvalidParameter(
            "complement sample size must be at least 1".into(),
        ));
    }
    let p = beliefs.len();
    if target >= p {
        return Err(BofipError::OutOfBounds {
            what: "sub-space",
            index: target,
            len: p,
        });
    }
    let cdfs: Vec<Option<CumulativeWeights>> = beliefs
        .iter()
        .enumerate()
        .map(|(j, b)| (j != target).then(|| CumulativeWeights::new(b.weights())))
        .collect();
    let draws = (0..k)
        .map(|_| {
            cdfs.iter()
                .map(|c| c.as_ref().map_or(0, |c| c.sample(rng)))
                .collect()
        })
        .collect();
    ComplementSampleSet::from_draws(target, p, draws)
}

/// Probability of a full-grid point under the product of all beliefs.
/// Points that are not on the grid have probability zero.
pub fn joint_density(beliefs: &[BeliefVector], domain: &Domain, coords: &[f64]) -> f64 {
    match domain.decompose(coords) {
        Some(rows) if rows.len() == beliefs.len() => beliefs
            .iter()
            .zip(rows)
            .map(|(b, r)| b.weights()[r])
            .product(),
        _ => 0.0,
    }
}
