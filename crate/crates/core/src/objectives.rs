//! Benchmark objectives, the neural-network weight-fitting objective and
//! dataset ingestion.

use std::path::Path;
use std::sync::Arc;

use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::Interval;
use crate::error::{BofipError, Result};

/// Failure reported by a black box for one point.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{0}")]
pub struct EvalError(pub String);

/// A black-box function to minimize. Must be pure and callable from
/// several threads at once.
pub trait Objective: Sync {
    fn evaluate(&self, x: &[f64]) -> std::result::Result<f64, EvalError>;
}

impl<F> Objective for F
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    fn evaluate(&self, x: &[f64]) -> std::result::Result<f64, EvalError> {
        Ok(self(x))
    }
}

/// Branin's global minimum value.
pub const BRANIN_MIN: f64 = 0.397_887_357_729_738_3;
/// Hartmann-6's global minimum value.
pub const HARTMANN6_MIN: f64 = -3.322_368_011_415_515;

const BRANIN_ARGMIN: [f64; 2] = [std::f64::consts::PI, 2.275];
const HARTMANN6_ARGMIN: [f64; 6] = [
    0.201_689_511_723_222_4,
    0.150_010_695_118_280_14,
    0.476_873_977_912_342_3,
    0.275_332_428_370_307_3,
    0.311_651_617_387_624_9,
    0.657_300_534_594_367_4,
];

fn branin(x1: f64, x2: f64) -> f64 {
    use std::f64::consts::PI;
    let b = 5.1 / (4.0 * PI * PI);
    let c = 5.0 / PI;
    let t = 1.0 / (8.0 * PI);
    (x2 - b * x1 * x1 + c * x1 - 6.0).powi(2) + 10.0 * (1.0 - t) * x1.cos() + 10.0
}

/// Sum of Branin over consecutive coordinate pairs, each pair mapped from
/// `[-1,1]^2` onto `[-5,10] x [0,15]`.
pub fn repeated_branin(x: &[f64]) -> Result<f64> {
    if x.is_empty() || !x.len().is_multiple_of(2) {
        return Err(BofipError::config(format!(
            "repeated Branin needs a positive even dimension, got {}",
            x.len()
        )));
    }
    Ok(x.chunks_exact(2)
        .map(|b| branin(2.5 + 7.5 * b[0], 7.5 + 7.5 * b[1]))
        .sum())
}

const HARTMANN_ALPHA: [f64; 4] = [1.0, 1.2, 3.0, 3.2];
const HARTMANN_A: [[f64; 6]; 4] = [
    [10.0, 3.0, 17.0, 3.5, 1.7, 8.0],
    [0.05, 10.0, 17.0, 0.1, 8.0, 14.0],
    [3.0, 3.5, 1.7, 10.0, 17.0, 8.0],
    [17.0, 8.0, 0.05, 10.0, 0.1, 14.0],
];
const HARTMANN_P: [[f64; 6]; 4] = [
    [0.1312, 0.1696, 0.5569, 0.0124, 0.8283, 0.5886],
    [0.2329, 0.4135, 0.8307, 0.3736, 0.1004, 0.9991],
    [0.2348, 0.1451, 0.3522, 0.2883, 0.3047, 0.6650],
    [0.4047, 0.8828, 0.8732, 0.5743, 0.1091, 0.0381],
];

fn hartmann6(u: &[f64]) -> f64 {
    -(0..4)
        .map(|i| {
            let s: f64 = (0..6)
                .map(|j| HARTMANN_A[i][j] * (u[j] - HARTMANN_P[i][j]).powi(2))
                .sum();
            HARTMANN_ALPHA[i] * (-s).exp()
        })
        .sum::<f64>()
}

/// Sum of Hartmann-6 over consecutive blocks of six coordinates, each block
/// mapped from `[-1,1]^6` onto the unit cube.
pub fn repeated_hartmann(x: &[f64]) -> Result<f64> {
    if x.is_empty() || !x.len().is_multiple_of(6) {
        return Err(BofipError::config(format!(
            "repeated Hartmann needs a positive multiple of 6 dimensions, got {}",
            x.len()
        )));
    }
    let mut u = [0.0; 6];
    Ok(x.chunks_exact(6)
        .map(|b| {
            for (uj, bj) in u.iter_mut().zip(b) {
                *uj = 0.5 * (bj + 1.0);
            }
            hartmann6(&u)
        })
        .sum())
}

/// Ackley (a = 20, b = 0.2, c = 2 pi) evaluated at `x - shift`.
pub fn shifted_ackley(x: &[f64], shift: &[f64]) -> Result<f64> {
    if x.len() != shift.len() || x.is_empty() {
        return Err(BofipError::InvalidParameter(format!(
            "point has {} coordinates, shift has {}",
            x.len(),
            shift.len()
        )));
    }
    let d = x.len() as f64;
    let (mut sq, mut cs) = (0.0, 0.0);
    for (xi, si) in x.iter().zip(shift) {
        let z = xi - si;
        sq += z * z;
        cs += (std::f64::consts::TAU * z).cos();
    }
    Ok(-20.0 * (-0.2 * (sq / d).sqrt()).exp() - (cs / d).exp() + 20.0 + std::f64::consts::E)
}

pub fn sphere(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnownOptimum {
    pub x: Vec<f64>,
    pub f: f64,
}

#[derive(Debug, Clone)]
pub enum ProblemKind {
    RepeatedBranin,
    RepeatedHartmann,
    ShiftedAckley { shift: Vec<f64> },
    Sphere,
    NeuralNetwork(NnObjective),
}

/// A named objective with its box and, when known, its minimizer.
#[derive(Debug, Clone)]
pub struct BenchmarkProblem {
    pub name: String,
    pub bounds: Vec<Interval>,
    pub kind: ProblemKind,
    pub optimum: Option<KnownOptimum>,
}

/// Names accepted by [`BenchmarkProblem::by_name`].
pub const PROBLEM_NAMES: [&str; 5] = ["repeated-branin", "repeated-hartmann", "shifted-ackley", "sphere", "nn"];

impl BenchmarkProblem {
    pub fn repeated_branin(d: usize) -> Result<Self> {
        if d == 0 || !d.is_multiple_of(2) {
            return Err(BofipError::config(format!("repeated Branin needs an even dimension, got {d}")));
        }
        let block = [
            (BRANIN_ARGMIN[0] - 2.5) / 7.5,
            (BRANIN_ARGMIN[1] - 7.5) / 7.5,
        ];
        Ok(BenchmarkProblem {
            name: "repeated-branin".into(),
            bounds: vec![Interval::new(-1.0, 1.0); d],
            kind: ProblemKind::RepeatedBranin,
            optimum: Some(KnownOptimum {
                x: block.iter().copied().cycle().take(d).collect(),
                f: (d / 2) as f64 * BRANIN_MIN,
            }),
        })
    }

    pub fn repeated_hartmann(d: usize) -> Result<Self> {
        if d == 0 || !d.is_multiple_of(6) {
            return Err(BofipError::config(format!(
                "repeated Hartmann needs a multiple of 6 dimensions, got {d}"
            )));
        }
        Ok(BenchmarkProblem {
            name: "repeated-hartmann".into(),
            bounds: vec![Interval::new(-1.0, 1.0); d],
            kind: ProblemKind::RepeatedHartmann,
            optimum: Some(KnownOptimum {
                x: HARTMANN6_ARGMIN.iter().map(|u| 2.0 * u - 1.0).cycle().take(d).collect(),
                f: (d / 6) as f64 * HARTMANN6_MIN,
            }),
        })
    }

    pub fn shifted_ackley(shift: Vec<f64>) -> Result<Self> {
        if shift.is_empty() || shift.iter().any(|s| !(-16.0..=16.0).contains(s)) {
            return Err(BofipError::config("Ackley shift must be a non-empty vector in [-16, 16]"));
        }
        Ok(BenchmarkProblem {
            name: "shifted-ackley".into(),
            bounds: vec![Interval::new(-32.0, 32.0); shift.len()],
            optimum: Some(KnownOptimum {
                x: shift.clone(),
                f: 0.0,
            }),
            kind: ProblemKind::ShiftedAckley { shift },
        })
    }

    /// Ackley with a shift drawn uniformly from `[-16,16]^d`.
    pub fn random_shifted_ackley(d: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::shifted_ackley((0..d).map(|_| rng.random_range(-16.0..=16.0)).collect())
    }

    pub fn sphere(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(BofipError::config("sphere needs at least one dimension"));
        }
        Ok(BenchmarkProblem {
            name: "sphere".into(),
            bounds: vec![Interval::new(-1.0, 1.0); d],
            kind: ProblemKind::Sphere,
            optimum: Some(KnownOptimum { x: vec![0.0; d], f: 0.0 }),
        })
    }

    /// Weight fitting for one of the preset networks, with weights in `[-1,1]`.
    pub fn neural_network(d: usize, dataset: Arc<Dataset>) -> Result<Self> {
        let arch = NnArchitecture::preset(d)?;
        if arch.input() != dataset.n_features() {
            return Err(BofipError::config(format!(
                "network expects {} features, dataset has {}",
                arch.input(),
                dataset.n_features()
            )));
        }
        Ok(BenchmarkProblem {
            name: "nn".into(),
            bounds: vec![Interval::new(-1.0, 1.0); d],
            kind: ProblemKind::NeuralNetwork(NnObjective::new(arch, dataset)),
            optimum: None,
        })
    }

    /// Registry lookup. `seed` only affects the Ackley shift; `dataset`
    /// defaults to the bundled breast-cancer data.
    pub fn by_name(name: &str, d: usize, seed: u64, dataset: Option<Arc<Dataset>>) -> Result<Self> {
        match name {
            "repeated-branin" => Self::repeated_branin(d),
            "repeated-hartmann" => Self::repeated_hartmann(d),
            "shifted-ackley" => Self::random_shifted_ackley(d, seed),
            "sphere" => Self::sphere(d),
            "nn" => {
                let data = match dataset {
                    Some(ds) => ds,
                    None => Arc::new(Dataset::breast_cancer()?),
                };
                Self::neural_network(d, data)
            }
            other => Err(BofipError::config(format!(
                "unknown problem `{other}`; expected one of {}",
                PROBLEM_NAMES.join(", ")
            ))),
        }
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn f_star(&self) -> Option<f64> {
        self.optimum.as_ref().map(|o| o.f)
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(BofipError::InvalidParameter(format!(
                "{} expects {} coordinates, got {}",
                self.name,
                self.dim(),
                x.len()
            )));
        }
        match &self.kind {
            ProblemKind::RepeatedBranin => repeated_branin(x),
            ProblemKind::RepeatedHartmann => repeated_hartmann(x),
            ProblemKind::ShiftedAckley { shift } => shifted_ackley(x, shift),
            ProblemKind::Sphere => Ok(sphere(x)),
            ProblemKind::NeuralNetwork(nn) => nn.mse(x),
        }
    }

    /// Euclidean distance from `x` to the known minimizer.
    pub fn distance_to_optimum(&self, x: &[f64]) -> Option<f64> {
        let opt = self.optimum.as_ref()?;
        Some(
            x.iter()
                .zip(&opt.x)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt(),
        )
    }
}

impl Objective for BenchmarkProblem {
    fn evaluate(&self, x: &[f64]) -> std::result::Result<f64, EvalError> {
        self.value(x).map_err(|e| EvalError(e.to_string()))
    }
}

/// Fully connected network: `input` features, tanh hidden layers, one
/// identity output. Parameters are laid out layer by layer, each layer as a
/// row-major `fan_out x fan_in` weight matrix followed by `fan_out` biases.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NnArchitecture {
    layers: Vec<usize>,
}

/// Widest hidden layer allowed by the presets.
pub const NN_MAX_WIDTH: usize = 10;

impl NnArchitecture {
    pub fn new(input: usize, hidden: &[usize]) -> Result<Self> {
        if input == 0 || hidden.contains(&0) {
            return Err(BofipError::config("layer widths must be positive"));
        }
        let mut layers = vec![input];
        layers.extend_from_slice(hidden);
        layers.push(1);
        Ok(NnArchitecture { layers })
    }

    /// Finds hidden widths in `1..=max_width` giving exactly `weights`
    /// parameters, preferring wider layers nearer the input.
    pub fn solve(input: usize, hidden_layers: usize, max_width: usize, weights: usize) -> Result<Self> {
        // reach[l][w]: parameter totals achievable by layers after hidden
        // layer l when hidden layer l has width w (the output layer included)
        let h = hidden_layers;
        if h == 0 || max_width == 0 {
            return Err(BofipError::config("need at least one hidden layer of positive width"));
        }
        let mut reach = vec![vec![vec![false; weights + 1]; max_width + 1]; h];
        for (w, row) in reach[h - 1].iter_mut().enumerate().skip(1) {
            if w < weights {
                row[w + 1] = true;
            }
        }
        for l in (0..h - 1).rev() {
            let (head, tail) = reach.split_at_mut(l + 1);
            let next = &tail[0];
            for prev in 1..=max_width {
                for w in 1..=max_width {
                    let cost = (prev + 1) * w;
                    for s in 0..=weights.saturating_sub(cost) {
                        if next[w][s] {
                            head[l][prev][s + cost] = true;
                        }
                    }
                }
            }
        }
        let mut hidden = Vec::with_capacity(h);
        let mut prev = input;
        let mut remaining = weights;
        for (l, table) in reach.iter().enumerate() {
            let pick = (1..=max_width).rev().find(|&w| {
                let cost = (prev + 1) * w;
                cost <= remaining && table[w][remaining - cost]
            });
            let w = pick.ok_or_else(|| {
                BofipError::config(format!(
                    "no network with {h} hidden layers of width <= {max_width} has {weights} parameters (layer {l})"
                ))
            })?;
            remaining -= (prev + 1) * w;
            hidden.push(w);
            prev = w;
        }
        let arch = Self::new(input, &hidden)?;
        debug_assert_eq!(arch.parameter_count(), weights);
        Ok(arch)
    }

    /// The 8-input presets with 502, 1012 or 10002 parameters.
    pub fn preset(weights: usize) -> Result<Self> {
        let hidden = match weights {
            502 => 6,
            1012 => 11,
            10002 => 92,
            other => {
                return Err(BofipError::config(format!(
                    "no network preset has {other} parameters; use 502, 1012 or 10002"
                )))
            }
        };
        let arch = Self::solve(8, hidden, NN_MAX_WIDTH, weights)?;
        info!("network preset {weights}: layers {:?}", arch.layers);
        Ok(arch)
    }

    /// Widths from input to output.
    pub fn layers(&self) -> &[usize] {
        &self.layers
    }

    pub fn input(&self) -> usize {
        self.layers[0]
    }

    pub fn hidden_layers(&self) -> usize {
        self.layers.len() - 2
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
    }

    /// Network output for one feature row.
    pub fn forward(&self, weights: &[f64], features: &[f64], buf: &mut (Vec<f64>, Vec<f64>)) -> f64 {
        let (cur, next) = buf;
        cur.clear();
        cur.extend_from_slice(features);
        let mut offset = 0;
        let last = self.layers.len() - 2;
        for (l, w) in self.layers.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let matrix = &weights[offset..offset + fan_in * fan_out];
            let bias = &weights[offset + fan_in * fan_out..offset + (fan_in + 1) * fan_out];
            offset += (fan_in + 1) * fan_out;
            next.clear();
            for j in 0..fan_out {
                let row = &matrix[j * fan_in..(j + 1) * fan_in];
                let z = bias[j] + row.iter().zip(cur.iter()).map(|(a, b)| a * b).sum::<f64>();
                next.push(if l == last { z } else { z.tanh() });
            }
            std::mem::swap(cur, next);
        }
        cur[0]
    }
}

/// Mean squared error of a network on a dataset, as a function of the
/// flattened parameter vector.
#[derive(Debug, Clone)]
pub struct NnObjective {
    arch: NnArchitecture,
    dataset: Arc<Dataset>,
}

impl NnObjective {
    pub fn new(arch: NnArchitecture, dataset: Arc<Dataset>) -> Self {
        NnObjective { arch, dataset }
    }

    pub fn architecture(&self) -> &NnArchitecture {
        &self.arch
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn mse(&self, weights: &[f64]) -> Result<f64> {
        if weights.len() != self.arch.parameter_count() {
            return Err(BofipError::config(format!(
                "network has {} parameters, got {}",
                self.arch.parameter_count(),
                weights.len()
            )));
        }
        let mut buf = (Vec::with_capacity(16), Vec::with_capacity(16));
        let ds = &*self.dataset;
        let sum: f64 = (0..ds.len())
            .map(|w| {
                let e = ds.target(w) - self.arch.forward(weights, ds.features(w), &mut buf);
                e * e
            })
            .sum();
        Ok(sum / ds.len() as f64)
    }
}

impl Objective for NnObjective {
    fn evaluate(&self, x: &[f64]) -> std::result::Result<f64, EvalError> {
        self.mse(x).map_err(|e| EvalError(e.to_string()))
    }
}

/// How to read a delimited observation file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetFormat {
    pub delimiter: u8,
    pub missing_marker: String,
    pub target_column: usize,
    /// Columns that are neither features nor the target.
    pub skip_columns: Vec<usize>,
    /// Target value mapped to 1; every other value maps to 0.
    pub positive_label: String,
}

impl DatasetFormat {
    /// The breast-cancer file: id, nine cell features, class (2 benign, 4
    /// malignant). The id and the mitoses column are dropped.
    pub fn breast_cancer() -> Self {
        DatasetFormat {
            delimiter: b',',
            missing_marker: "?".into(),
            target_column: 10,
            skip_columns: vec![0, 9],
            positive_label: "4".into(),
        }
    }
}

impl Default for DatasetFormat {
    fn default() -> Self {
        Self::breast_cancer()
    }
}

/// Observations with features rescaled to `[0,1]` and a binary target.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    targets: Vec<f64>,
    n_features: usize,
    imputed: usize,
}

const BREAST_CANCER: &str = include_str!("../data/breast-cancer-wisconsin.data");

impl Dataset {
    /// The bundled 699-row breast-cancer data.
    pub fn breast_cancer() -> Result<Self> {
        Self::parse(BREAST_CANCER, &DatasetFormat::breast_cancer())
    }

    /// Builds a dataset from already-clean rows, without rescaling.
    pub fn from_rows(features: &[Vec<f64>], targets: &[f64]) -> Result<Self> {
        let n_features = features.first().map_or(0, Vec::len);
        if features.len() != targets.len() || features.is_empty() || n_features == 0 {
            return Err(BofipError::Input("dataset needs matching, non-empty features and targets".into()));
        }
        if features.iter().any(|r| r.len() != n_features) {
            return Err(BofipError::Input("ragged feature rows".into()));
        }
        Ok(Dataset {
            features: features.concat(),
            targets: targets.to_vec(),
            n_features,
            imputed: 0,
        })
    }

    pub fn parse(text: &str, format: &DatasetFormat) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .delimiter(format.delimiter)
            .from_reader(text.as_bytes());
        let mut columns = None;
        let mut raw: Vec<Option<f64>> = Vec::new();
        let mut targets = Vec::new();
        for record in reader.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            if record.iter().all(|c| c.trim().is_empty()) {
                continue;
            }
            let expected = *columns.get_or_insert(record.len());
            if record.len() != expected {
                return Err(BofipError::Schema {
                    line,
                    expected,
                    found: record.len(),
                });
            }
            if format.target_column >= expected {
                return Err(BofipError::Schema {
                    line,
                    expected: format.target_column + 1,
                    found: expected,
                });
            }
            for (c, cell) in record.iter().enumerate() {
                let cell = cell.trim();
                if c == format.target_column {
                    if cell.is_empty() || cell == format.missing_marker {
                        return Err(BofipError::Parse {
                            line,
                            message: "missing target".into(),
                        });
                    }
                    targets.push(if cell == format.positive_label { 1.0 } else { 0.0 });
                } else if !format.skip_columns.contains(&c) {
                    if cell == format.missing_marker {
                        raw.push(None);
                    } else {
                        let v: f64 = cell.parse().map_err(|_| BofipError::Parse {
                            line,
                            message: format!("column {}: `{cell}` is not a number", c + 1),
                        })?;
                        if !v.is_finite() {
                            return Err(BofipError::Parse {
                                line,
                                message: format!("column {}: non-finite value", c + 1),
                            });
                        }
                        raw.push(Some(v));
                    }
                }
            }
        }
        let rows = targets.len();
        if rows == 0 {
            return Err(BofipError::Input("dataset has no rows".into()));
        }
        let n_features = raw.len() / rows;
        if n_features == 0 {
            return Err(BofipError::Input("dataset has no feature columns".into()));
        }

        let mut features = vec![0.0; raw.len()];
        let mut imputed = 0;
        for j in 0..n_features {
            let present: Vec<f64> = (0..rows).filter_map(|r| raw[r * n_features + j]).collect();
            if present.is_empty() {
                return Err(BofipError::Input(format!("feature {} has no values", j + 1)));
            }
            let mean = present.iter().sum::<f64>() / present.len() as f64;
            for r in 0..rows {
                features[r * n_features + j] = raw[r * n_features + j].unwrap_or_else(|| {
                    imputed += 1;
                    mean
                });
            }
            let (lo, hi) = (0..rows)
                .map(|r| features[r * n_features + j])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
            for r in 0..rows {
                let v = &mut features[r * n_features + j];
                *v = if hi > lo { (*v - lo) / (hi - lo) } else { 0.0 };
            }
        }
        info!("dataset: {rows} rows, {n_features} features, {imputed} imputed cells");
        Ok(Dataset {
            features,
            targets,
            n_features,
            imputed,
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// Cells filled with their column mean.
    pub fn imputed(&self) -> usize {
        self.imputed
    }

    pub fn features(&self, row: usize) -> &[f64] {
        &self.features[row * self.n_features..(row + 1) * self.n_features]
    }

    pub fn target(&self, row: usize) -> f64 {
        self.targets[row]
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    /// Share of rows with target 1.
    pub fn positive_fraction(&self) -> f64 {
        self.targets.iter().sum::<f64>() / self.len() as f64
    }
}

pub fn load_dataset(path: impl AsRef<Path>, format: &DatasetFormat) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| BofipError::io(path, e))?;
    Dataset::parse(&text, format)
}
