//! High-dimensional black-box minimization by sampled fictitious play over
//! disjoint sub-spaces, each optimized with grid-restricted Bayesian
//! optimization.
//!
//! ```
//! use bofip::{run_bofip, BofipConfig, Interval, Schedule};
//!
//! let f = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>();
//! let bounds = vec![Interval::new(-1.0, 1.0); 4];
//! let config = BofipConfig {
//!     subspaces: 2,
//!     grid_size: 16,
//!     bo_budget: Schedule::Constant(12),
//!     sweeps: 2,
//!     ..BofipConfig::default()
//! };
//! let record = run_bofip(&f, &bounds, &config).unwrap();
//! assert!(record.best_value < 1.0);
//! ```

pub mod acquisition;
pub mod belief;
pub mod bo_engine;
pub mod domain;
pub mod driver;
pub mod error;
pub mod harness;
pub mod objectives;
pub mod surrogate;

pub use acquisition::{argmax_ei_on_grid, expected_improvement, AcquisitionResult};
pub use belief::{joint_density, sample_complement, BeliefVector, ComplementSampleSet};
pub use bo_engine::{run_bo, BoOutcome, BoSettings, EvalObserver, SubProblem};
pub use domain::{CompositePoint, Domain, GridScheme, Interval, SubspaceGrid, SubspacePartition};
pub use driver::{run_bofip, BofipConfig, RunRecord, Schedule, SweepMode, TracePoint};
pub use error::{BofipError, ErrorCategory, Result};
pub use harness::{run_experiment, ExperimentConfig, MetricsSummary};
pub use objectives::{BenchmarkProblem, Dataset, DatasetFormat, NnArchitecture, Objective};
pub use surrogate::{GpConfig, GpModel, Prediction};
