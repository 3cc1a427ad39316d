//! Benchmark runner for the scbo library.
//!
//! Configures one experiment (a problem, a list of methods, a shared budget
//! and seed ladder), runs it, and writes per-run CSVs, per-method aggregate
//! curves, projection spectra, and a summary table into the output
//! directory. Defaults can also come from a JSON object passed with
//! `--overrides`; explicit flags win over it.

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::Parser;
use scbo::harness::{self, ExperimentSpec};
use scbo::optimizer::{LatentBudget, Method, OptimizerConfig, ProjectionRefit};
use scbo::problems;
use scbo::Error;

#[derive(Parser, Debug)]
#[command(
    name = "scbo",
    version,
    about = "Constrained Bayesian optimization benchmark runner"
)]
struct Cli {
    /// Problem registry name (see --list-problems)
    #[arg(long)]
    problem: Option<String>,

    /// Comma-separated methods: full, pca, kpca, ks, random
    #[arg(long, value_delimiter = ',')]
    method: Vec<String>,

    /// Latent width for the projection methods (fixed component count)
    #[arg(long, conflicts_with = "ev_tol")]
    g: Option<usize>,

    /// Keep components above this fraction of the leading eigenvalue
    #[arg(long = "ev-tol")]
    ev_tol: Option<f64>,

    /// Initial design size (default: the problem dimension, at least 2)
    #[arg(long)]
    doe: Option<usize>,

    /// Evaluations per iteration (default 1)
    #[arg(long)]
    batch: Option<usize>,

    /// Total evaluation budget including the initial design (default 200)
    #[arg(long)]
    budget: Option<usize>,

    /// Independent repeats per method (default 1)
    #[arg(long)]
    repeats: Option<usize>,

    /// Base seed for the repeat ladder (default 0)
    #[arg(long)]
    seed: Option<u64>,

    /// Output directory (default results/)
    #[arg(long)]
    out: Option<PathBuf>,

    /// Projection refit policy: every or fixed
    /// (default: fixed for speed_reducer, every otherwise)
    #[arg(long = "refit-projection")]
    refit_projection: Option<String>,

    /// Aggregation sharpness for the ks method (default 100)
    #[arg(long = "ks-rho")]
    ks_rho: Option<f64>,

    /// Candidate pool size per iteration (default scales with dimension)
    #[arg(long)]
    candidates: Option<usize>,

    /// Worker pool size for repeats (default: logical cores)
    #[arg(long)]
    workers: Option<usize>,

    /// List the problem registry and exit
    #[arg(long = "list-problems")]
    list_problems: bool,

    /// JSON object of defaults, inline or a file path; flags win.
    /// Problem parameters go under its "problem_overrides" key.
    #[arg(long)]
    overrides: Option<String>,
}

fn main() -> ExitCode {
    scbo::init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::UnknownProblem { .. } => {
                    eprintln!("run with --help for usage");
                    ExitCode::from(2)
                }
                _ => ExitCode::from(3),
            }
        }
    }
}

fn execute(cli: Cli) -> scbo::Result<ExitCode> {
    if cli.list_problems {
        for name in problems::available() {
            let p = problems::build(name, None)?;
            println!(
                "{name}  d={} constraints={}",
                p.dim(),
                p.constraint_count()
            );
        }
        return Ok(ExitCode::SUCCESS);
    }

    let defaults = load_overrides(cli.overrides.as_deref())?;
    let problem_overrides = defaults.get("problem_overrides").cloned();

    let problem_name = cli
        .problem
        .or_else(|| string_key(&defaults, "problem"))
        .ok_or_else(|| Error::Config("--problem is required".into()))?;
    let problem = problems::build(&problem_name, problem_overrides.as_ref())?;

    let method_names: Vec<String> = if cli.method.is_empty() {
        method_key(&defaults)?
            .ok_or_else(|| Error::Config("--method is required".into()))?
    } else {
        cli.method
    };
    let methods = method_names
        .iter()
        .map(|s| Method::from_str(s))
        .collect::<scbo::Result<Vec<Method>>>()?;

    let doe = cli
        .doe
        .or_else(|| usize_key(&defaults, "doe"))
        .unwrap_or_else(|| problem.dim().max(2));
    let batch = cli.batch.or_else(|| usize_key(&defaults, "batch")).unwrap_or(1);
    let budget = cli
        .budget
        .or_else(|| usize_key(&defaults, "budget"))
        .unwrap_or(200);
    let repeats = cli
        .repeats
        .or_else(|| usize_key(&defaults, "repeats"))
        .unwrap_or(1);
    let seed = cli
        .seed
        .or_else(|| defaults.get("seed").and_then(|v| v.as_u64()))
        .unwrap_or(0);
    let out = cli
        .out
        .or_else(|| string_key(&defaults, "out").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("results"));

    let mut config = OptimizerConfig::new(Method::Full, doe, batch, budget);
    config.seed = seed;
    config.latent_budget = match (cli.g, cli.ev_tol) {
        (Some(g), _) => LatentBudget::Count(g),
        (None, Some(t)) => LatentBudget::Tolerance(t),
        (None, None) => match (usize_key(&defaults, "g"), float_key(&defaults, "ev_tol")) {
            (Some(g), _) => LatentBudget::Count(g),
            (None, Some(t)) => LatentBudget::Tolerance(t),
            (None, None) => LatentBudget::default(),
        },
    };
    config.projection_refit = match cli
        .refit_projection
        .or_else(|| string_key(&defaults, "refit_projection"))
    {
        Some(s) => ProjectionRefit::from_str(&s)?,
        None if problem_name == "speed_reducer" => ProjectionRefit::FixedAtDoe,
        None => ProjectionRefit::EveryIteration,
    };
    if let Some(rho) = cli.ks_rho.or_else(|| float_key(&defaults, "ks_rho")) {
        config.ks_rho = rho;
    }
    config.candidate_count = cli.candidates.or_else(|| usize_key(&defaults, "candidates"));
    config.max_fit_points = usize_key(&defaults, "max_fit_points");
    if let Some(scale) = float_key(&defaults, "kpca_width_scale") {
        config.kpca_width_scale = scale;
    }

    if let Some(workers) = cli.workers.or_else(|| usize_key(&defaults, "workers")) {
        harness::configure_workers(workers)?;
    }

    let spec = ExperimentSpec {
        problem: problem_name,
        overrides: problem_overrides,
        methods,
        config,
        repeats,
        output_dir: out,
    };
    let report = harness::run_experiment_on(problem.as_ref(), &spec)?;

    print!("{}", harness::format_summary_table(&report.summaries));
    println!(
        "results in {}",
        spec.output_dir.join(harness::SUMMARY_FILE).display()
    );

    if report.failed_runs.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        for failure in &report.failed_runs {
            eprintln!("run failed: {failure}");
        }
        Ok(ExitCode::from(3))
    }
}

/// Parses `--overrides`: inline JSON if the argument starts with `{`,
/// otherwise the path of a JSON file. Must be a JSON object.
fn load_overrides(arg: Option<&str>) -> scbo::Result<serde_json::Value> {
    let Some(arg) = arg else {
        return Ok(serde_json::json!({}));
    };
    let text = if arg.trim_start().starts_with('{') {
        arg.to_string()
    } else {
        std::fs::read_to_string(arg)?
    };
    let value: serde_json::Value = serde_json::from_str(&text)?;
    if !value.is_object() {
        return Err(Error::Config("--overrides must be a JSON object".into()));
    }
    Ok(value)
}

fn string_key(v: &serde_json::Value, key: &str) -> Option<String> {
    v.get(key).and_then(|x| x.as_str()).map(str::to_string)
}

fn usize_key(v: &serde_json::Value, key: &str) -> Option<usize> {
    v.get(key).and_then(|x| x.as_u64()).map(|x| x as usize)
}

fn float_key(v: &serde_json::Value, key: &str) -> Option<f64> {
    v.get(key).and_then(|x| x.as_f64())
}

/// The "method" key accepts either a JSON array of names or one
/// comma-separated string.
fn method_key(v: &serde_json::Value) -> scbo::Result<Option<Vec<String>>> {
    match v.get("method") {
        None => Ok(None),
        Some(serde_json::Value::String(s)) => {
            Ok(Some(s.split(',').map(|p| p.trim().to_string()).collect()))
        }
        Some(serde_json::Value::Array(items)) => items
            .iter()
            .map(|m| {
                m.as_str()
                    .map(str::to_string)
                    .ok_or_else(|| Error::Config("method list entries must be strings".into()))
            })
            .collect::<scbo::Result<Vec<String>>>()
            .map(Some),
        Some(_) => Err(Error::Config(
            "method override must be a string or an array".into(),
        )),
    }
}
