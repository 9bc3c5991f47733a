use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod config;

/// Ordinal forests, parametric ordinal models and their ensembles.
#[derive(Debug, Parser)]
#[command(name = "ordforest", version)]
struct Cli {
    /// Master seed; every random choice in the invocation derives from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Delimited table with a header row.
    #[arg(long)]
    data: PathBuf,
    /// TOML schema describing the response and feature columns.
    #[arg(long)]
    schema: PathBuf,
}

#[derive(Debug, Args)]
struct MethodArgs {
    /// pom | adj | rfsplit | rfadj | ens | uniform
    #[arg(long)]
    method: Option<String>,
    /// TOML method configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set n_trees=300`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ImportanceArg {
    Gini,
    Permutation,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a method on a dataset and write the model document.
    Fit {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        method: MethodArgs,
        /// Model document to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict category distributions with a fitted model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        /// Output table (stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Repeated learning/validation benchmark of a method roster.
    Evaluate {
        #[command(flatten)]
        data: DataArgs,
        /// Roster file with [[methods]] entries.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Method tags with default settings (repeatable); used without --config.
        #[arg(long = "method")]
        methods: Vec<String>,
        #[arg(long)]
        n_repeats: Option<usize>,
        #[arg(long)]
        n_learn: Option<usize>,
        /// Directory receiving report.json, cells.csv and summary.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-split and averaged variable importance of an ordinal forest.
    Importance {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        method: MethodArgs,
        #[arg(long, value_enum, default_value = "permutation")]
        kind: ImportanceArg,
        /// Permutations per feature and tree.
        #[arg(long, default_value_t = 1)]
        repeats: usize,
        /// Output table (stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic dataset with a schema and a truth record.
    Synth {
        /// TOML generator specification.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
        /// Monte-Carlo draws for the Bayes RPS estimate.
        #[arg(long, default_value_t = 20_000)]
        n_mc: usize,
        /// Directory receiving data.csv, schema.toml and truth.json.
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(commands::Kind::Config.code());
        }
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global().expect("global pool is configured once");
    }
    let seed = cli.seed;
    let outcome = match cli.command {
        Command::Fit { data, method, out } => commands::fit(&data, &method, &out, seed),
        Command::Predict { model, data, out } => commands::predict(&model, &data, out.as_deref()),
        Command::Evaluate { data, config, methods, n_repeats, n_learn, out } => {
            commands::evaluate(&data, config.as_deref(), &methods, n_repeats, n_learn, &out, seed)
        }
        Command::Importance { data, method, kind, repeats, out } => {
            commands::importance(&data, &method, kind, repeats, out.as_deref(), seed)
        }
        Command::Synth { config, sets, n_mc, out } => commands::synth(config.as_deref(), &sets, n_mc, &out, seed),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e.source);
            ExitCode::from(e.kind.code())
        }
    }
}
