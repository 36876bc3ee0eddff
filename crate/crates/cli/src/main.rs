//! `ckmflow`: dataset generation, training, inference, evaluation and
//! benchmarking for channel knowledge map reconstruction.

mod commands;
mod config;
mod error;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use ckmflow::baselines::Method;
use ckmflow::scene_sim::Task;
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::io::Split;

#[derive(Debug, Parser)]
#[command(name = "ckmflow", version, about = "Channel knowledge map reconstruction with guided flow matching")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// JSON run configuration; missing keys take defaults.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Worker threads (1 gives bit-reproducible runs).
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
    /// Output root directory.
    #[arg(long, global = true, value_name = "DIR", env = "CKMFLOW_OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    A,
    B,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::A => Task::A,
            TaskArg::B => Task::B,
        }
    }
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: ckmflow::Error| e.to_string())
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset file.
    Gen {
        #[arg(long, value_enum)]
        task: TaskArg,
        #[arg(long)]
        count: usize,
        /// File name inside the output root (default `dataset_<task>.ckmd`).
        #[arg(long)]
        name: Option<String>,
    },
    /// Train a learned method on the training split of a dataset.
    Train {
        #[arg(long, value_enum)]
        task: TaskArg,
        #[arg(long, value_name = "PATH")]
        data: PathBuf,
        #[arg(long, value_parser = parse_method, default_value = "gfm")]
        method: Method,
        /// Overrides `train.epochs`.
        #[arg(long)]
        epochs: Option<usize>,
        /// Continue from a `last.ckmw` checkpoint.
        #[arg(long, value_name = "PATH")]
        resume: Option<PathBuf>,
        /// Stop after this many completed epochs (the schedule still spans `epochs`).
        #[arg(long)]
        stop_after: Option<usize>,
    },
    /// Reconstruct records and write predictions plus timing.
    Infer {
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        data: PathBuf,
        /// Euler steps (overrides `inference.steps`).
        #[arg(long)]
        steps: Option<usize>,
        /// Defaults to the checkpoint's method.
        #[arg(long, value_parser = parse_method)]
        method: Option<Method>,
        #[arg(long, value_enum, default_value = "test")]
        split: Split,
        /// Only the first N records of the split.
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Score prediction directories against a dataset.
    Eval {
        /// Prediction directories written by `infer`; none scores truth against itself.
        #[arg(long, value_name = "DIR")]
        pred: Vec<PathBuf>,
        #[arg(long, value_name = "PATH")]
        truth: PathBuf,
        #[arg(long, value_enum)]
        task: Option<TaskArg>,
        /// Split used when no predictions are given.
        #[arg(long, value_enum, default_value = "test")]
        split: Split,
    },
    /// SSIM and latency as a function of the number of Euler steps.
    AblateSteps {
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
        #[arg(long, value_name = "PATH")]
        data: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,10,20,50")]
        steps_list: Vec<usize>,
        #[arg(long, value_enum, default_value = "test")]
        split: Split,
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Train or load every requested method, then compare accuracy and latency.
    Bench {
        #[arg(long, value_enum)]
        task: TaskArg,
        /// Dataset to use; generated from the configuration when absent.
        #[arg(long, value_name = "PATH")]
        data: Option<PathBuf>,
        /// Comma-separated methods (overrides `bench.methods`).
        #[arg(long, value_delimiter = ',', value_parser = parse_method)]
        methods: Option<Vec<Method>>,
        /// Directory holding `train_<method>_<task>/best.ckmw` to reuse.
        #[arg(long, value_name = "DIR")]
        from: Option<PathBuf>,
    },
}

/// Settings shared by every subcommand.
pub struct Context {
    pub config: RunConfig,
    pub out_root: PathBuf,
}

fn build_context(g: &GlobalArgs) -> CliResult<Context> {
    let mut config = match &g.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = g.seed {
        config.apply_seed(seed);
    }
    if let Some(jobs) = g.jobs {
        if jobs == 0 {
            return Err(CliError::Usage("--jobs must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    }
    let out_root = g
        .out
        .clone()
        .or_else(|| config.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("ckmflow_out"));
    Ok(Context { config, out_root })
}

fn run(cli: Cli) -> CliResult<()> {
    let mut ctx = build_context(&cli.global)?;
    match cli.command {
        Command::Gen { task, count, name } => commands::gen::run(&ctx, task.into(), count, name),
        Command::Train {
            task,
            data,
            method,
            epochs,
            resume,
            stop_after,
        } => {
            if let Some(e) = epochs {
                ctx.config.train.epochs = e;
            }
            commands::train::run(&ctx, task.into(), &data, method, resume.as_deref(), stop_after)
        }
        Command::Infer {
            checkpoint,
            data,
            steps,
            method,
            split,
            limit,
        } => {
            if let Some(s) = steps {
                if s == 0 {
                    return Err(CliError::Usage("--steps must be >= 1".into()));
                }
                ctx.config.inference.steps = s;
            }
            commands::infer::run(&ctx, checkpoint.as_deref(), &data, method, split, limit)
        }
        Command::Eval {
            pred,
            truth,
            task,
            split,
        } => commands::eval::run(&ctx, &pred, &truth, task.map(Into::into), split),
        Command::AblateSteps {
            checkpoint,
            data,
            steps_list,
            split,
            limit,
        } => commands::ablate::run(&ctx, &checkpoint, &data, &steps_list, split, limit),
        Command::Bench {
            task,
            data,
            methods,
            from,
        } => {
            if let Some(m) = methods {
                ctx.config.bench.methods = m;
            }
            commands::bench::run(&ctx, task.into(), data.as_deref(), from.as_deref())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ckmflow: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
