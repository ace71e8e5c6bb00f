//! Macro-replicated experiments, metrics and trace files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use log::info;
use serde::{Deserialize, Serialize};

use crate::domain::GridScheme;
use crate::driver::{run_bofip, BofipConfig, RunRecord, Schedule, SweepMode};
use crate::error::{BofipError, Result};
use crate::objectives::{load_dataset, BenchmarkProblem, Dataset, DatasetFormat};
use crate::surrogate::GpConfig;

/// One experiment as read from a flat TOML file. Every key is optional
/// except `problem` and `dimension`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub problem: String,
    pub dimension: usize,
    pub replications: usize,
    /// Replication `i` runs with seed `base_seed + i`.
    pub base_seed: u64,
    pub output_dir: PathBuf,
    /// Per-replication limit in seconds; absent means sweeps alone stop a run.
    pub wall_clock_limit_s: Option<f64>,
    pub subspaces: usize,
    pub grid_size: usize,
    pub grid_scheme: GridScheme,
    pub complement_samples: usize,
    /// Added to `complement_samples` after every sweep.
    pub complement_samples_step: usize,
    pub bo_budget: usize,
    /// Added to `bo_budget` after every sweep.
    pub bo_budget_step: usize,
    pub sweeps: usize,
    pub initial_design: Option<usize>,
    pub warm_start_cap: usize,
    pub sweep_mode: SweepMode,
    pub gp_restarts: usize,
    pub gp_nugget: f64,
    pub gp_theta_min: f64,
    pub gp_theta_max: f64,
    pub gp_max_evals: Option<usize>,
    /// Alternative data file for the `nn` problem, in the bundled format.
    pub dataset_path: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let gp = GpConfig::default();
        ExperimentConfig {
            problem: String::new(),
            dimension: 0,
            replications: 5,
            base_seed: 0,
            output_dir: PathBuf::from("bofip-out"),
            wall_clock_limit_s: None,
            subspaces: 1,
            grid_size: 64,
            grid_scheme: GridScheme::Auto,
            complement_samples: 1,
            complement_samples_step: 0,
            bo_budget: 40,
            bo_budget_step: 0,
            sweeps: 10,
            initial_design: None,
            warm_start_cap: 25,
            sweep_mode: SweepMode::Sequential,
            gp_restarts: gp.restarts,
            gp_nugget: gp.nugget,
            gp_theta_min: gp.theta_bounds.0,
            gp_theta_max: gp.theta_bounds.1,
            gp_max_evals: gp.max_evals,
            dataset_path: None,
        }
    }
}

fn schedule(start: usize, step: usize) -> Schedule {
    if step == 0 {
        Schedule::Constant(start)
    } else {
        Schedule::Linear { start, step }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map_or(0, |s| text[..s.start.min(text.len())].matches('\n').count() + 1);
            BofipError::Parse {
                line,
                message: e.message().to_string(),
            }
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| BofipError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment config always serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.problem.is_empty() {
            return Err(BofipError::config("`problem` is required"));
        }
        if self.dimension == 0 {
            return Err(BofipError::config("`dimension` must be positive"));
        }
        if self.replications == 0 {
            return Err(BofipError::config("`replications` must be at least 1"));
        }
        if let Some(s) = self.wall_clock_limit_s {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(BofipError::config(format!("wall clock limit {s} must be a non-negative number")));
            }
        }
        if self.base_seed.checked_add(self.replications as u64).is_none() {
            return Err(BofipError::config("base seed overflows across replications"));
        }
        self.bofip_config(self.base_seed).validate(self.dimension)
    }

    pub fn seed(&self, replication: usize) -> u64 {
        self.base_seed + replication as u64
    }

    pub fn bofip_config(&self, seed: u64) -> BofipConfig {
        BofipConfig {
            subspaces: self.subspaces,
            grid_size: self.grid_size,
            grid_scheme: self.grid_scheme,
            complement_samples: schedule(self.complement_samples, self.complement_samples_step),
            bo_budget: schedule(self.bo_budget, self.bo_budget_step),
            sweeps: self.sweeps,
            wall_clock_limit: self.wall_clock_limit_s.map(Duration::from_secs_f64),
            initial_design: self.initial_design,
            warm_start_cap: self.warm_start_cap,
            sweep_mode: self.sweep_mode,
            seed,
            gp: GpConfig {
                theta_bounds: (self.gp_theta_min, self.gp_theta_max),
                nugget: self.gp_nugget,
                restarts: self.gp_restarts,
                max_evals: self.gp_max_evals,
            },
            record_beliefs: false,
        }
    }

    fn dataset(&self) -> Result<Option<Arc<Dataset>>> {
        if self.problem != "nn" {
            return Ok(None);
        }
        let ds = match &self.dataset_path {
            Some(p) => load_dataset(p, &DatasetFormat::breast_cancer())?,
            None => Dataset::breast_cancer()?,
        };
        Ok(Some(Arc::new(ds)))
    }
}

/// Mean with two standard errors of the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub two_se: f64,
}

impl Estimate {
    /// Uses the sample standard deviation; a single sample has zero error.
    pub fn from_samples(xs: &[f64]) -> Option<Self> {
        if xs.is_empty() {
            return None;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let two_se = if xs.len() < 2 {
            0.0
        } else {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            2.0 * (var / n).sqrt()
        };
        Some(Estimate { mean, two_se })
    }
}

/// Final state of one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationResult {
    pub replication: usize,
    pub seed: u64,
    pub best_f: f64,
    pub gap: Option<f64>,
    pub distance: Option<f64>,
    /// Record value after the first evaluation.
    pub first_f: f64,
    pub evaluations: usize,
    pub sweeps: usize,
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub replications: usize,
    pub best_f: Estimate,
    pub gap: Option<Estimate>,
    pub distance: Option<Estimate>,
}

impl MetricsSummary {
    pub fn from_results(results: &[ReplicationResult]) -> Option<Self> {
        let collect = |f: &dyn Fn(&ReplicationResult) -> Option<f64>| -> Option<Estimate> {
            let xs: Option<Vec<f64>> = results.iter().map(f).collect();
            Estimate::from_samples(&xs?)
        };
        Some(MetricsSummary {
            replications: results.len(),
            best_f: collect(&|r| Some(r.best_f))?,
            gap: collect(&|r| r.gap),
            distance: collect(&|r| r.distance),
        })
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub summary: MetricsSummary,
    pub results: Vec<ReplicationResult>,
    pub records: Vec<RunRecord>,
    pub trace_files: Vec<PathBuf>,
    pub summary_file: PathBuf,
}

fn ensure_writable(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| BofipError::io(dir, e))?;
    let probe = dir.join(".bofip-write-probe");
    fs::write(&probe, b"").map_err(|e| BofipError::io(&probe, e))?;
    fs::remove_file(&probe).map_err(|e| BofipError::io(&probe, e))
}

pub fn trace_file_name(replication: usize) -> String {
    format!("trace_rep{replication:03}.csv")
}

pub const SUMMARY_FILE: &str = "summary.csv";

/// Runs every replication, writing one trace per replication and a summary.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    config.validate()?;
    ensure_writable(&config.output_dir)?;
    let dataset = config.dataset()?;

    let mut results = Vec::with_capacity(config.replications);
    let mut records = Vec::with_capacity(config.replications);
    let mut trace_files = Vec::with_capacity(config.replications);
    for rep in 0..config.replications {
        let seed = config.seed(rep);
        let problem = BenchmarkProblem::by_name(&config.problem, config.dimension, seed, dataset.clone())?;
        let record = run_bofip(&problem, &problem.bounds, &config.bofip_config(seed))?;
        let f_star = problem.f_star();
        let path = config.output_dir.join(trace_file_name(rep));
        emit_trace(&record, f_star, &path)?;
        let result = ReplicationResult {
            replication: rep,
            seed,
            best_f: record.best_value,
            gap: f_star.map(|f| (record.best_value - f).abs()),
            distance: record.best_point.as_deref().and_then(|x| problem.distance_to_optimum(x)),
            first_f: record.series.first().map_or(f64::INFINITY, |p| p.record_best_f),
            evaluations: record.total_evaluations,
            sweeps: record.sweeps_completed,
            truncated: record.truncated,
        };
        info!(
            "replication {rep} (seed {seed}): best {} after {} evaluations",
            result.best_f, result.evaluations
        );
        results.push(result);
        records.push(record);
        trace_files.push(path);
    }
    let summary = MetricsSummary::from_results(&results).expect("at least one replication");
    let summary_file = config.output_dir.join(SUMMARY_FILE);
    fs::write(&summary_file, format_summary(&results, &summary)).map_err(|e| BofipError::io(&summary_file, e))?;
    Ok(ExperimentOutcome {
        summary,
        results,
        records,
        trace_files,
        summary_file,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Summary table: one row per replication, then `mean` and `two_se` rows.
/// Holds no timings so that sequential runs reproduce it byte for byte.
pub fn format_summary(results: &[ReplicationResult], summary: &MetricsSummary) -> String {
    let mut out = String::from("replication,seed,best_f,gap,distance,evaluations,sweeps,truncated\n");
    for r in results {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.replication,
            r.seed,
            r.best_f,
            opt(r.gap),
            opt(r.distance),
            r.evaluations,
            r.sweeps,
            r.truncated
        );
    }
    let _ = writeln!(
        out,
        "mean,,{},{},{},,,",
        summary.best_f.mean,
        opt(summary.gap.map(|e| e.mean)),
        opt(summary.distance.map(|e| e.mean))
    );
    let _ = writeln!(
        out,
        "two_se,,{},{},{},,,",
        summary.best_f.two_se,
        opt(summary.gap.map(|e| e.two_se)),
        opt(summary.distance.map(|e| e.two_se))
    );
    out
}

pub const TRACE_HEADER: [&str; 4] = ["wall_clock_s", "total_evals", "record_best_f", "record_best_gap"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub wall_clock_s: f64,
    pub total_evals: usize,
    pub record_best_f: f64,
    pub record_best_gap: Option<f64>,
}

pub fn trace_rows(record: &RunRecord, f_star: Option<f64>) -> Vec<TraceRow> {
    record
        .series
        .iter()
        .map(|p| TraceRow {
            wall_clock_s: p.wall_clock_s,
            total_evals: p.total_evals,
            record_best_f: p.record_best_f,
            record_best_gap: f_star.map(|f| (p.record_best_f - f).abs()),
        })
        .collect()
}

/// Writes the record series as CSV; the gap column is blank without `f_star`.
pub fn emit_trace(record: &RunRecord, f_star: Option<f64>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = TRACE_HEADER.join(",");
    out.push('\n');
    for row in trace_rows(record, f_star) {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            row.wall_clock_s,
            row.total_evals,
            row.record_best_f,
            opt(row.record_best_gap)
        );
    }
    fs::write(path, out).map_err(|e| BofipError::io(path, e))
}

pub fn parse_trace_str(text: &str) -> Result<Vec<TraceRow>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = reader.headers()?.clone();
    if header.iter().ne(TRACE_HEADER) {
        return Err(BofipError::Parse {
            line: 1,
            message: format!("expected header `{}`", TRACE_HEADER.join(",")),
        });
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| match e.kind() {
            csv::ErrorKind::UnequalLengths { pos, expected_len, len } => BofipError::Schema {
                line: pos.as_ref().map_or(0, |p| p.line() as usize),
                expected: *expected_len as usize,
                found: *len as usize,
            },
            _ => BofipError::Csv(e),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let bad = |what: &str| BofipError::Parse {
            line,
            message: format!("invalid {what}"),
        };
        let gap = match record[3].trim() {
            "" => None,
            s => Some(s.parse().map_err(|_| bad("record_best_gap"))?),
        };
        rows.push(TraceRow {
            wall_clock_s: record[0].trim().parse().map_err(|_| bad("wall_clock_s"))?,
            total_evals: record[1].trim().parse().map_err(|_| bad("total_evals"))?,
            record_best_f: record[2].trim().parse().map_err(|_| bad("record_best_f"))?,
            record_best_gap: gap,
        });
    }
    Ok(rows)
}

pub fn parse_trace(path: impl AsRef<Path>) -> Result<Vec<TraceRow>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| BofipError::io(path, e))?;
    parse_trace_str(&text)
}

/// Digest of one trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub rows: usize,
    pub last: Option<TraceRow>,
    /// Time strictly increasing and record never increasing.
    pub monotone: bool,
}

pub fn summarize_trace(rows: &[TraceRow]) -> TraceSummary {
    TraceSummary {
        rows: rows.len(),
        last: rows.last().copied(),
        monotone: rows
            .windows(2)
            .all(|w| w[1].wall_clock_s > w[0].wall_clock_s && w[1].record_best_f <= w[0].record_best_f),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SuiteScale {
    /// Minutes per replication, five replications.
    Desk,
    /// Hour-scale limits and one hundred replications; takes days.
    Full,
}

impl std::str::FromStr for SuiteScale {
    type Err = BofipError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(SuiteScale::Desk),
            "full" => Ok(SuiteScale::Full),
            other => Err(BofipError::config(format!("unknown suite scale `{other}`"))),
        }
    }
}

fn suite_entry(problem: &str, d: usize, p: usize, limit_s: f64, reps: usize, root: &Path) -> ExperimentConfig {
    ExperimentConfig {
        problem: problem.into(),
        dimension: d,
        replications: reps,
        output_dir: root.join(format!("{problem}-{d}")),
        wall_clock_limit_s: Some(limit_s),
        subspaces: p,
        grid_size: 64,
        bo_budget: 30,
        sweeps: 100_000,
        ..ExperimentConfig::default()
    }
}

/// The benchmark grid. Hartmann dimensions are rounded down to multiples
/// of six.
pub fn suite(scale: SuiteScale, root: &Path) -> Vec<ExperimentConfig> {
    match scale {
        SuiteScale::Desk => vec![
            suite_entry("repeated-branin", 20, 10, 120.0, 5, root),
            suite_entry("repeated-hartmann", 18, 6, 120.0, 5, root),
            suite_entry("shifted-ackley", 20, 20, 120.0, 5, root),
            ExperimentConfig {
                grid_size: 32,
                bo_budget: 12,
                initial_design: Some(4),
                gp_restarts: 1,
                ..suite_entry("nn", 502, 251, 300.0, 3, root)
            },
        ],
        SuiteScale::Full => {
            let hours = |h: f64| h * 3600.0;
            let mut out = Vec::new();
            for (d, h) in [(20, 0.5), (50, 1.0), (100, 2.5), (1000, 24.0)] {
                out.push(suite_entry("repeated-branin", d, d / 2, hours(h), 100, root));
                let dh = d - d % 6;
                out.push(suite_entry("repeated-hartmann", dh, dh / 6, hours(h), 100, root));
                out.push(suite_entry("shifted-ackley", d, d, hours(h), 100, root));
            }
            for (w, h) in [(502, 12.0), (1012, 24.0), (10002, 24.0)] {
                out.push(suite_entry("nn", w, w / 2, hours(h), 100, root));
            }
            out
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::driver::TracePoint;

    #[test]
    fn estimate_of_one_two_three() {
        let e = Estimate::from_samples(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(e.mean, 2.0);
        assert!((e.two_se - 2.0 / 3f64.sqrt()).abs() < 1e-12);
        assert_eq!(Estimate::from_samples(&[4.0, 4.0, 4.0]).unwrap().two_se, 0.0);
        assert_eq!(Estimate::from_samples(&[7.0]).unwrap().two_se, 0.0);
        assert!(Estimate::from_samples(&[]).is_none());
    }

    #[test]
    fn config_round_trips_and_rejects_unknown_keys() {
        let cfg = ExperimentConfig {
            problem: "sphere".into(),
            dimension: 4,
            wall_clock_limit_s: Some(2.5),
            ..ExperimentConfig::default()
        };
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        let err = ExperimentConfig::from_toml("problem = \"sphere\"\ndimension = 2\nbudget = 3\n").unwrap_err();
        assert!(matches!(err, BofipError::Parse { line: 3, .. }), "{err:?}");
        let minimal = ExperimentConfig::from_toml("problem = \"sphere\"\ndimension = 2\n").unwrap();
        assert_eq!(minimal.replications, 5);
        assert!(minimal.validate().is_ok());
        assert!(ExperimentConfig { replications: 0, ..minimal }.validate().is_err());
    }

    #[test]
    fn empty_trace_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        emit_trace(&RunRecord::default(), None, &path).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "wall_clock_s,total_evals,record_best_f,record_best_gap\n");
        assert!(parse_trace(&path).unwrap().is_empty());
    }

    #[test]
    fn trace_round_trip() {
        let mut rec = RunRecord::default();
        rec.series = vec![
            TracePoint { wall_clock_s: 0.001234, total_evals: 1, record_best_f: 3.25 },
            TracePoint { wall_clock_s: 0.1 + 0.2, total_evals: 9, record_best_f: 1.0 / 3.0 },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        emit_trace(&rec, Some(0.125), &path).unwrap();
        let rows = parse_trace(&path).unwrap();
        assert_eq!(rows, trace_rows(&rec, Some(0.125)));
        emit_trace(&rec, None, &path).unwrap();
        assert!(parse_trace(&path).unwrap().iter().all(|r| r.record_best_gap.is_none()));
    }

    #[test]
    fn malformed_traces_are_rejected() {
        assert!(matches!(parse_trace_str("a,b,c,d\n"), Err(BofipError::Parse { line: 1, .. })));
        let bad = "wall_clock_s,total_evals,record_best_f,record_best_gap\n0.1,1,2.0,\n0.2,x,1.0,\n";
        assert!(matches!(parse_trace_str(bad), Err(BofipError::Parse { line: 3, .. })));
        let short = "wall_clock_s,total_evals,record_best_f,record_best_gap\n0.1,1\n";
        assert!(matches!(parse_trace_str(short), Err(BofipError::Schema { line: 2, .. })));
    }

    #[test]
    fn unwritable_output_fails_before_running() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("plain-file");
        fs::write(&file, b"x").unwrap();
        let cfg = ExperimentConfig {
            problem: "sphere".into(),
            dimension: 2,
            output_dir: file.join("sub"),
            ..ExperimentConfig::default()
        };
        assert!(matches!(run_experiment(&cfg), Err(BofipError::Io { .. })));
    }

    #[test]
    fn suites_validate() {
        for scale in [SuiteScale::Desk, SuiteScale::Full] {
            for cfg in suite(scale, Path::new("out")) {
                cfg.validate().unwrap_or_else(|e| panic!("{} {}: {e}", cfg.problem, cfg.dimension));
            }
        }
    }
}
