use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use solver_verifier::evaluation::{agreement, load_benchmark, MetricsReport};
use solver_verifier::model::{read_jsonl, RunConfig, TestSuite};
use solver_verifier::orchestrator::{write_report, Engine, EvalRequest, EvalTask, IterateOptions, RunLock, StageName};
use solver_verifier::Error;

#[derive(Parser)]
#[command(
    name = "solver-verifier",
    version,
    about = "Data engine for code and unit-test generation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON run configuration; every field has a default.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured run directory.
    #[arg(long)]
    run_dir: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct StageArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 1)]
    iteration: u32,
}

#[derive(Clone, Copy, ValueEnum)]
enum Task {
    Code,
    Test,
}

#[derive(Subcommand)]
enum Command {
    /// Generate problem descriptions and signatures (iteration 1).
    GenProblems(Common),
    /// Sample candidate solutions.
    GenSolutions(StageArgs),
    /// Sample test inputs and outputs, vote, and select suites.
    GenTests(StageArgs),
    /// Score every solution against its problem's suite.
    Execute(StageArgs),
    /// Emit SFT and preference datasets.
    BuildPairs(StageArgs),
    /// Run every stage of every iteration, resuming where files exist.
    Iterate(Common),
    /// Benchmark metrics for the solver or verifier role.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        benchmark: PathBuf,
        #[arg(long, value_enum)]
        task: Task,
        #[arg(long)]
        with_cot: bool,
        #[arg(long)]
        with_mv: bool,
        /// Also report pass rates after reranking sampled solutions by predicted tests.
        #[arg(long)]
        rerank: bool,
        /// Frozen negative corpus (JSONL); mined when missing.
        #[arg(long)]
        negatives: Option<PathBuf>,
        /// Report directory; defaults to <run_dir>/eval.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Verdict-level agreement of two suite sets on benchmark gold solutions.
    Agreement {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        benchmark: PathBuf,
        #[arg(long)]
        suites_a: PathBuf,
        #[arg(long)]
        suites_b: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(common: &Common) -> Result<RunConfig, Error> {
    let mut config = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(dir) = &common.run_dir {
        config.run_dir = dir.clone();
    }
    config.validate()?;
    Ok(config)
}

fn stages(engine: &Engine, iteration: u32, stages: &[StageName]) -> Result<(), Error> {
    let _lock = RunLock::acquire(engine.run_dir())?;
    for &stage in stages {
        if !engine.run_stage(iteration, stage)? {
            eprintln!("iter_{iteration}/{} already exists; skipped", stage.file());
        }
    }
    Ok(())
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::GenProblems(c) => stages(&Engine::new(load_config(&c)?)?, 1, &[StageName::Problems]),
        Command::GenSolutions(s) => stages(
            &Engine::new(load_config(&s.common)?)?,
            s.iteration,
            &[StageName::Solutions],
        ),
        Command::GenTests(s) => stages(
            &Engine::new(load_config(&s.common)?)?,
            s.iteration,
            &[StageName::TestCandidates, StageName::Suites],
        ),
        Command::Execute(s) => stages(
            &Engine::new(load_config(&s.common)?)?,
            s.iteration,
            &[StageName::Scores],
        ),
        Command::BuildPairs(s) => stages(&Engine::new(load_config(&s.common)?)?, s.iteration, &[StageName::Pairs]),
        Command::Iterate(c) => {
            let outcome = Engine::new(load_config(&c)?)?.iterate(IterateOptions::default())?;
            if let Some(i) = outcome.paused_after {
                eprintln!("paused after iteration {i}; point the backend at the retrained model and rerun");
            }
            Ok(())
        }
        Command::Evaluate {
            common,
            benchmark,
            task,
            with_cot,
            with_mv,
            rerank,
            negatives,
            out,
        } => {
            let engine = Engine::new(load_config(&common)?)?;
            let req = EvalRequest {
                benchmark,
                task: match task {
                    Task::Code => EvalTask::Code,
                    Task::Test => EvalTask::Test,
                },
                with_cot,
                with_mv,
                rerank,
                negatives,
                out_dir: out.unwrap_or_else(|| engine.run_dir().join("eval")),
            };
            let report = engine.evaluate(&req)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(())
        }
        Command::Agreement {
            common,
            benchmark,
            suites_a,
            suites_b,
            out,
        } => {
            let config = load_config(&common)?;
            let engine = Engine::new(config)?;
            let limits = engine.config.limits;
            let items = load_benchmark(&benchmark, &engine.sandbox, limits)?;
            let a: Vec<TestSuite> = read_jsonl(&suites_a)?;
            let b: Vec<TestSuite> = read_jsonl(&suites_b)?;
            let result = agreement(&engine.sandbox, &items, &a, &b, limits)?;
            println!(
                "verdict-level agreement {:.2}% (accuracy {:.2}% vs {:.2}%)",
                result.agreement_pct, result.acc_a_pct, result.acc_b_pct
            );
            let report = MetricsReport {
                agreement_pct: Some(result.agreement_pct),
                ..MetricsReport::default()
            };
            let dir = out.unwrap_or_else(|| engine.run_dir().join("agreement"));
            write_report(&dir, "agreement", &report)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_infrastructure() { 2 } else { 1 })
        }
    }
}
