use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sandbox_core::cost::{cost_report, CostParams, HoeffdingParams};
use sandbox_core::model::validate_file;
use sandbox_core::orchestrator::{
    ledger_statuses, load_workflow, run_workflow, write_reports, Registry, RunOptions, WorkflowPlan,
};
use sandbox_core::Error;

const EXIT_JOBS_FAILED: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_CONFIG: u8 = 3;

#[derive(Parser)]
#[command(name = "sandbox", version, about = "Run data-recipe experiment workflows")]
struct Cli {
    /// Log job progress.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a workflow.
    Run(RunArgs),
    /// Rebuild the report bundle of a finished run.
    Report(WorkflowArgs),
    /// Compare sandbox and full-scale experiment costs.
    Cost(CostArgs),
    /// Check a workflow config or a JSONL dataset without running anything.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct WorkflowArgs {
    /// Workflow YAML file.
    config: PathBuf,
    /// Run directory; defaults to the config's `workdir`, then SANDBOX_WORKDIR.
    #[arg(long)]
    workdir: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    workflow: WorkflowArgs,
    /// Override the run seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the number of concurrent jobs.
    #[arg(long)]
    max_parallel: Option<usize>,
    /// Keep finished jobs whose inputs and outputs are unchanged.
    #[arg(long)]
    resume: bool,
}

#[derive(Args)]
struct CostArgs {
    /// Cost of one full-scale experiment.
    #[arg(long, default_value_t = 1.0)]
    t_full: f64,
    /// Iterations of the development loop.
    #[arg(long)]
    iterations: u32,
    /// Sandbox experiments per iteration.
    #[arg(long)]
    experiments: u32,
    /// Sandbox-to-full cost ratio.
    #[arg(long)]
    ratio: f64,
    /// Tolerance for a Hoeffding bound on the sandbox estimate.
    #[arg(long, requires_all = ["lower", "upper"])]
    epsilon: Option<f64>,
    /// Lower end of the metric range.
    #[arg(long, allow_negative_numbers = true)]
    lower: Option<f64>,
    /// Upper end of the metric range.
    #[arg(long, allow_negative_numbers = true)]
    upper: Option<f64>,
}

#[derive(Args)]
struct ValidateArgs {
    /// Workflow YAML file.
    #[arg(required_unless_present = "dataset")]
    config: Option<PathBuf>,
    /// Check a JSONL dataset instead.
    #[arg(long, conflicts_with = "config")]
    dataset: Option<PathBuf>,
}

fn exit_for(err: &Error) -> u8 {
    match err {
        Error::Config(_)
        | Error::UnknownHook(_)
        | Error::UnknownFactory(_)
        | Error::DuplicateJob(_)
        | Error::EmptyGrid
        | Error::Chain(_) => EXIT_CONFIG,
        _ => EXIT_JOBS_FAILED,
    }
}

fn fail(err: &Error) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(exit_for(err))
}

fn load(args: &WorkflowArgs) -> Result<WorkflowPlan, ExitCode> {
    if !args.config.is_file() {
        eprintln!("error: config file {} does not exist", args.config.display());
        return Err(ExitCode::from(EXIT_USAGE));
    }
    let mut plan = load_workflow(&args.config, &Registry::default()).map_err(|e| {
        // anything wrong with the file itself is a config error
        eprintln!("error: {e}");
        ExitCode::from(EXIT_CONFIG)
    })?;
    if let Some(w) = &args.workdir {
        plan.workdir = Some(w.clone());
    } else if plan.workdir.is_none() {
        plan.workdir = std::env::var_os("SANDBOX_WORKDIR").map(PathBuf::from);
    }
    if plan.workdir.is_none() {
        eprintln!("error: no workdir: pass --workdir, set it in the config or set SANDBOX_WORKDIR");
        return Err(ExitCode::from(EXIT_USAGE));
    }
    for w in &plan.warnings {
        eprintln!("warning: {w}");
    }
    Ok(plan)
}

fn run(args: RunArgs) -> ExitCode {
    let mut plan = match load(&args.workflow) {
        Ok(p) => p,
        Err(code) => return code,
    };
    if let Some(seed) = args.seed {
        plan.seed = seed;
    }
    if let Some(n) = args.max_parallel {
        if n == 0 {
            eprintln!("error: --max-parallel must be at least 1");
            return ExitCode::from(EXIT_USAGE);
        }
        plan.max_parallel = n;
    }
    let outcome = match run_workflow(&plan, RunOptions { resume: args.resume }) {
        Ok(o) => o,
        Err(e) => return fail(&e),
    };
    println!(
        "{} jobs: {} executed, {} skipped, {} failed, {} blocked",
        plan.jobs.len(),
        outcome.executed.len(),
        outcome.skipped.len(),
        outcome.failed.len(),
        outcome.blocked.len()
    );
    for (id, msg) in &outcome.failed {
        println!("failed {id}: {msg}");
    }
    for id in &outcome.blocked {
        println!("blocked {id}");
    }
    println!("reports: {}", outcome.workdir.join("reports").display());
    if outcome.is_success() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_JOBS_FAILED)
    }
}

fn report(args: WorkflowArgs) -> ExitCode {
    let plan = match load(&args) {
        Ok(p) => p,
        Err(code) => return code,
    };
    let workdir = plan.workdir.clone().expect("load sets a workdir");
    let result = ledger_statuses(&plan, &workdir).and_then(|s| write_reports(&plan, &workdir, &s));
    match result {
        Ok(index) => {
            for f in &index.files {
                println!("{}  {}", f.sha256, f.path);
            }
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e),
    }
}

fn cost(args: CostArgs) -> ExitCode {
    let hoeffding = args.epsilon.map(|eps| {
        HoeffdingParams::new(eps, args.lower.expect("required by clap"), args.upper.expect("required by clap"))
    });
    let result = CostParams::new(args.t_full, args.iterations, args.experiments, args.ratio)
        .and_then(|p| cost_report(&p, hoeffding.as_ref()));
    match result {
        Ok(r) => {
            println!("{}", serde_json::to_string_pretty(&r).expect("report serializes"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

fn validate_dataset(path: &Path) -> ExitCode {
    match validate_file(path) {
        Ok(report) => {
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            if report.is_valid() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_CONFIG)
            }
        }
        Err(e) => fail(&e),
    }
}

fn validate(args: ValidateArgs) -> ExitCode {
    if let Some(d) = &args.dataset {
        return validate_dataset(d);
    }
    let config = args.config.expect("required by clap");
    if !config.is_file() {
        eprintln!("error: config file {} does not exist", config.display());
        return ExitCode::from(EXIT_USAGE);
    }
    match load_workflow(&config, &Registry::default()) {
        Ok(plan) => {
            for w in &plan.warnings {
                eprintln!("warning: {w}");
            }
            for job in &plan.jobs {
                println!("{:<8} {:<16} {}", job.phase, job.kind(), job.id);
            }
            println!("ok: {} jobs", plan.jobs.len());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let default = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(default)).init();
    match cli.command {
        Command::Run(a) => run(a),
        Command::Report(a) => report(a),
        Command::Cost(a) => cost(a),
        Command::Validate(a) => validate(a),
    }
}
