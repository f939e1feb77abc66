use std::fs;
use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ddzo_harness::config::{parse_methods, Seeds};
use ddzo_harness::plotdata::{collect_trace_files, plot_rows, write_plot_csv};
use ddzo_harness::verify::{run_suite, Effort, Suite};
use ddzo_harness::{run_experiment, ExperimentSpec, HarnessError};

#[derive(Parser)]
#[command(name = "ddzo", version, about = "Zeroth-order optimization under decision-dependent distributions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment grid and write traces and summaries.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Run a single seed instead of the configured ones.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        budget: Option<u64>,
        /// Comma-separated, e.g. `alg1-mini,czo1-mini`.
        #[arg(long)]
        methods: Option<String>,
        #[arg(long)]
        metric_every: Option<usize>,
    },
    /// Run a verification suite: estimators, weights, schedules, pricing or all.
    Verify {
        suite: String,
        #[arg(long, default_value_t = 20_000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Emit objective probes from traces as CSV.
    Plotdata {
        /// Trace files or directories of them.
        #[arg(required = true)]
        traces: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_spec(config: Option<PathBuf>) -> Result<ExperimentSpec, HarnessError> {
    match config {
        None => Ok(ExperimentSpec::default()),
        Some(path) => {
            let text = fs::read_to_string(&path).map_err(|source| HarnessError::Io { path, source })?;
            ExperimentSpec::parse(&text)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            seed,
            out,
            budget,
            methods,
            metric_every,
        } => cmd_run(config, seed, out, budget, methods, metric_every),
        Command::Verify { suite, trials, seed } => cmd_verify(&suite, trials, seed),
        Command::Plotdata { traces, out } => cmd_plotdata(&traces, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn cmd_run(
    config: Option<PathBuf>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    budget: Option<u64>,
    methods: Option<String>,
    metric_every: Option<usize>,
) -> Result<ExitCode, HarnessError> {
    let mut spec = load_spec(config)?;
    if let Some(seed) = seed {
        spec.seeds = Seeds::List(vec![seed]);
    }
    if let Some(out) = out {
        spec.output_dir = out;
    }
    if let Some(budget) = budget {
        spec.budget = budget;
    }
    if let Some(list) = methods {
        spec.methods = parse_methods(&list)?;
    }
    if let Some(every) = metric_every {
        spec.metric_every = every;
    }
    spec.validate()?;
    let outcome = run_experiment(&spec)?;
    println!("method,mean_obj,sd_obj,n,baseline,p_value");
    for row in &outcome.summary {
        println!(
            "{},{:.6},{:.6},{},{},{}",
            row.method,
            row.mean_obj,
            row.sd_obj,
            row.n,
            row.baseline.as_deref().unwrap_or(""),
            row.p_value.map(|p| format!("{p:.3e}")).unwrap_or_default()
        );
    }
    println!("outputs in {}", spec.output_dir.display());
    let diverged = outcome.diverged();
    if diverged > 0 {
        eprintln!("{diverged} run(s) diverged; see runs.jsonl");
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(suite: &str, trials: usize, seed: u64) -> Result<ExitCode, HarnessError> {
    let suite: Suite = suite.parse()?;
    if trials < 2 {
        return Err(HarnessError::Config("--trials must be at least 2".into()));
    }
    let effort = Effort {
        trials,
        seed,
        ..Effort::default()
    };
    let checks = run_suite(suite, effort)?;
    let failed = checks.iter().filter(|c| !c.passed()).count();
    for check in &checks {
        println!("{check}");
    }
    println!("{} passed, {failed} failed", checks.len() - failed);
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn cmd_plotdata(traces: &[PathBuf], out: Option<PathBuf>) -> Result<ExitCode, HarnessError> {
    let rows = plot_rows(&collect_trace_files(traces)?)?;
    match out {
        Some(path) => {
            let file = fs::File::create(&path).map_err(|source| HarnessError::Io { path, source })?;
            write_plot_csv(file, &rows)?;
        }
        None => write_plot_csv(io::stdout().lock(), &rows)?,
    }
    Ok(ExitCode::SUCCESS)
}
