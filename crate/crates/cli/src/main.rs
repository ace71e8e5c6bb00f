use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bofip::harness::{self, parse_trace, summarize_trace, suite, Estimate, SuiteScale};
use bofip::{BofipError, ExperimentConfig, GridScheme, SweepMode};

const OUTPUT_ENV: &str = "BOFIP_OUTPUT_DIR";

#[derive(Parser)]
#[command(name = "bofip", version, about = "Sampled fictitious play Bayesian optimization benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a config file, with flag overrides.
    Run(RunArgs),
    /// Run the benchmark grid at desk or full scale.
    Suite(SuiteArgs),
    /// Summarize trace files or directories of traces.
    Inspect {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Flat TOML experiment file.
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    dimension: Option<usize>,
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(short, long)]
    output_dir: Option<PathBuf>,
    /// Per-replication limit in seconds.
    #[arg(long)]
    wall_clock: Option<f64>,
    #[arg(long)]
    subspaces: Option<usize>,
    #[arg(long)]
    grid_size: Option<usize>,
    #[arg(long)]
    grid_scheme: Option<GridScheme>,
    /// Complement draws per sub-problem.
    #[arg(long)]
    k: Option<usize>,
    /// Evaluations per sub-problem.
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    sweeps: Option<usize>,
    #[arg(long)]
    initial_design: Option<usize>,
    #[arg(long)]
    sweep_mode: Option<SweepMode>,
    /// Print the resolved config and exit.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Args)]
struct SuiteArgs {
    #[arg(long, default_value = "desk")]
    scale: SuiteScale,
    #[arg(short, long, default_value = "bofip-suite")]
    output_dir: PathBuf,
    /// Only run entries for this problem.
    #[arg(long)]
    only: Option<String>,
    /// Override the replication count of every entry.
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long)]
    dry_run: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.category().exit_code() as u8)
        }
    }
}

fn dispatch(cli: Cli) -> bofip::Result<()> {
    match cli.command {
        Command::Run(args) => run(args),
        Command::Suite(args) => run_suite(args),
        Command::Inspect { paths } => inspect(&paths),
    }
}

fn env_output_dir() -> Option<PathBuf> {
    std::env::var_os(OUTPUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
}

fn resolve(args: RunArgs) -> bofip::Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    macro_rules! set {
        ($($flag:ident => $field:ident),* $(,)?) => {
            $(if let Some(v) = args.$flag { cfg.$field = v; })*
        };
    }
    set!(
        problem => problem,
        dimension => dimension,
        replications => replications,
        seed => base_seed,
        subspaces => subspaces,
        grid_size => grid_size,
        grid_scheme => grid_scheme,
        k => complement_samples,
        budget => bo_budget,
        sweeps => sweeps,
        sweep_mode => sweep_mode,
    );
    if let Some(v) = args.wall_clock {
        cfg.wall_clock_limit_s = Some(v);
    }
    if let Some(v) = args.initial_design {
        cfg.initial_design = Some(v);
    }
    if let Some(dir) = args.output_dir.or_else(env_output_dir) {
        cfg.output_dir = dir;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(args: RunArgs) -> bofip::Result<()> {
    let dry_run = args.dry_run;
    let cfg = resolve(args)?;
    if dry_run {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    execute(&cfg)
}

fn fmt_estimate(e: Option<Estimate>) -> String {
    e.map_or_else(|| "n/a".to_string(), |e| format!("{:.6} ± {:.6}", e.mean, e.two_se))
}

fn execute(cfg: &ExperimentConfig) -> bofip::Result<()> {
    let out = harness::run_experiment(cfg)?;
    println!(
        "{} d={} over {} replications",
        cfg.problem, cfg.dimension, out.summary.replications
    );
    println!("  best f    {}", fmt_estimate(Some(out.summary.best_f)));
    println!("  gap       {}", fmt_estimate(out.summary.gap));
    println!("  distance  {}", fmt_estimate(out.summary.distance));
    println!("  summary   {}", out.summary_file.display());
    Ok(())
}

fn run_suite(args: SuiteArgs) -> bofip::Result<()> {
    let root = env_output_dir().unwrap_or(args.output_dir);
    let mut entries = suite(args.scale, &root);
    if let Some(only) = &args.only {
        entries.retain(|c| &c.problem == only);
        if entries.is_empty() {
            return Err(BofipError::InvalidConfig(format!("suite has no `{only}` entries")));
        }
    }
    for cfg in &mut entries {
        if let Some(r) = args.replications {
            cfg.replications = r;
        }
        cfg.validate()?;
    }
    for cfg in &entries {
        if args.dry_run {
            println!("# {}", cfg.output_dir.display());
            print!("{}", cfg.to_toml());
            println!();
        } else {
            execute(cfg)?;
        }
    }
    Ok(())
}

fn trace_files(path: &Path) -> bofip::Result<Vec<PathBuf>> {
    if !path.is_dir() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(path)
        .map_err(|e| BofipError::Io {
            path: path.to_path_buf(),
            source: e,
        })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("trace_") && n.ends_with(".csv"))
        })
        .collect();
    files.sort();
    Ok(files)
}

fn inspect(paths: &[PathBuf]) -> bofip::Result<()> {
    println!("file,rows,wall_clock_s,total_evals,record_best_f,record_best_gap,monotone");
    for path in paths {
        for file in trace_files(path)? {
            let s = summarize_trace(&parse_trace(&file)?);
            let last = s.last.map_or_else(
                || ",,,".to_string(),
                |r| {
                    format!(
                        "{},{},{},{}",
                        r.wall_clock_s,
                        r.total_evals,
                        r.record_best_f,
                        r.record_best_gap.map(|g| g.to_string()).unwrap_or_default()
                    )
                },
            );
            println!("{},{},{},{}", file.display(), s.rows, last, s.monotone);
        }
    }
    Ok(())
}
