mod commands;
mod error;
mod manifest;

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use error::CliError;
use manifest::{sha256_hex, RunManifest};

#[derive(Debug, Parser)]
#[command(name = "msgcomp", version, about = "One-shot two-sender message compression toolkit")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Global {
    /// Seed for every random choice of the run.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Write the result here instead of stdout; a manifest goes to `<out>.manifest.json`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for trials and suites (defaults to all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Rescale distribution files that do not sum to one.
    #[arg(long, global = true)]
    pub normalize: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RegionKindArg {
    Oneshot,
    Cmi,
    Comparison,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    /// Two senders, law over X, Y, Z, M, N.
    Full,
    /// Distributed source coding, law over two variables.
    Dsc,
    /// One sender, law over X, M, Z.
    Taskb,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate a rate pair against one of the rate regions.
    Region {
        #[arg(long)]
        dist: PathBuf,
        #[arg(long, value_enum, default_value_t = RegionKindArg::Oneshot)]
        kind: RegionKindArg,
        #[arg(long)]
        r1: String,
        #[arg(long)]
        r2: String,
        #[arg(long, default_value = "1/4")]
        delta: String,
        /// Target error of the one-shot region.
        #[arg(long, default_value = "0")]
        eps: String,
        /// Auxiliary law of the first message (comparison region).
        #[arg(long)]
        s: Option<PathBuf>,
        /// Auxiliary law of the second message (comparison region).
        #[arg(long)]
        t: Option<PathBuf>,
        #[arg(long, default_value = "0")]
        eps1: String,
        #[arg(long, default_value = "0")]
        eps2: String,
        #[arg(long, default_value = "0")]
        eps3: String,
    },
    /// Run the protocol by Monte Carlo and estimate its error.
    Simulate {
        #[arg(long)]
        dist: PathBuf,
        #[arg(long, value_enum, default_value_t = TaskArg::Full)]
        task: TaskArg,
        /// Rate of the first sender; chosen as the smallest grid rate reaching `1 - eps` when absent.
        #[arg(long)]
        r1: Option<String>,
        #[arg(long)]
        r2: Option<String>,
        #[arg(long, default_value = "1/20")]
        eps: String,
        #[arg(long, default_value = "1/4")]
        delta: String,
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
        /// Stream one JSON line per trial to this file.
        #[arg(long)]
        transcript: Option<PathBuf>,
        /// Also write the empirical joint counts as CSV to this file.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Build or verify the receiver's acceptance set.
    Testset {
        #[command(subcommand)]
        action: TestsetAction,
    },
    /// Run the randomized property batteries.
    Lemmas {
        /// One suite; all suites when absent.
        #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(msgcomp::lemmas::SUITES))]
        suite: Option<String>,
        #[arg(long, default_value_t = 100)]
        count: u64,
        /// Write each failing case to `<DIR>/<suite>-<seed>-<index>.json`.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// Re-run a recorded run manifest or a dumped lemma case.
    Replay {
        /// A `*.manifest.json` file.
        #[arg(long, conflicts_with_all = ["case", "suite"])]
        manifest: Option<PathBuf>,
        /// A case dumped by `lemmas --dump`.
        #[arg(long, conflicts_with = "suite")]
        case: Option<PathBuf>,
        #[arg(long, requires = "index", value_parser = clap::builder::PossibleValuesParser::new(msgcomp::lemmas::SUITES))]
        suite: Option<String>,
        #[arg(long, requires = "suite")]
        index: Option<u64>,
    },
    /// Hard side-information instance and the one-way protocol reduction.
    Hardsw {
        #[arg(long, default_value_t = 64)]
        n: usize,
        #[arg(long, default_value = "1/64")]
        eps: String,
    },
    /// Full-support counterexample family.
    Counterexample {
        #[arg(long, default_value = "1/64")]
        eps: String,
        #[arg(long, default_value_t = 4096)]
        size: usize,
        /// Heavy-symbol mass; solved from `eps` when absent.
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Search for a short list of shared random strings for a one-sender protocol.
    ReduceRand {
        /// Law over X, M, Z.
        #[arg(long)]
        dist: PathBuf,
        #[arg(long)]
        rate: Option<String>,
        #[arg(long, default_value = "1/20")]
        eps: String,
        #[arg(long, default_value = "1/4")]
        delta: String,
        /// Extra error allowed by the reduction.
        #[arg(long, default_value = "1/4")]
        reduce_delta: String,
        /// Candidate lists to try.
        #[arg(long, default_value_t = 8)]
        budget: u32,
        #[arg(long)]
        list_size: Option<u64>,
    },
    /// Lossy distributed source coding through the protocol.
    Lossy {
        /// Task file with the source law, kernels, decoding map and threshold.
        #[arg(long)]
        task: PathBuf,
        #[arg(long)]
        r1: String,
        #[arg(long)]
        r2: String,
        #[arg(long, default_value = "1/4")]
        delta: String,
        #[arg(long, default_value = "1/4")]
        delta_prime: String,
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
    },
    /// Expected cost of the interactive corner-point scheme.
    Interactive {
        /// Law over X, Y, Z, M, N.
        #[arg(long)]
        dist: PathBuf,
        /// Probability of serving the second message first.
        #[arg(long, default_value = "1/2")]
        p: String,
        #[arg(long, default_value = "1/4")]
        delta: String,
        #[arg(long, default_value = "1/20")]
        eps: String,
        #[arg(long, default_value_t = 0.5)]
        step: f64,
        #[arg(long, default_value_t = 20.0)]
        max_rate: f64,
    },
}

#[derive(Debug, Subcommand)]
pub enum TestsetAction {
    /// Build the set and write it as JSON.
    Build {
        #[arg(long)]
        dist: PathBuf,
        #[arg(long)]
        r1: String,
        #[arg(long)]
        r2: String,
        #[arg(long, default_value = "1/4")]
        delta: String,
    },
    /// Load a stored set and check its probabilities exactly.
    Verify {
        #[arg(long)]
        dist: PathBuf,
        #[arg(long)]
        testset: PathBuf,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Region { .. } => "region",
            Command::Simulate { .. } => "simulate",
            Command::Testset { .. } => "testset",
            Command::Lemmas { .. } => "lemmas",
            Command::Replay { .. } => "replay",
            Command::Hardsw { .. } => "hardsw",
            Command::Counterexample { .. } => "counterexample",
            Command::ReduceRand { .. } => "reduce-rand",
            Command::Lossy { .. } => "lossy",
            Command::Interactive { .. } => "interactive",
        }
    }
}

fn run(args: Vec<String>) -> Result<(), CliError> {
    let cli = Cli::try_parse_from(std::iter::once("msgcomp".to_string()).chain(args.iter().cloned()))
        .unwrap_or_else(|e| e.exit());
    if let Some(n) = cli.global.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let started = Instant::now();
    let mut ctx = commands::Context::new(cli.global.clone(), false);
    let result = commands::dispatch(&cli.command, &mut ctx)?;
    let bytes = result.render();
    match &cli.global.out {
        Some(path) => {
            std::fs::write(path, &bytes).map_err(|e| CliError::io(path, e))?;
            let mut outputs = vec![manifest::FileHash {
                path: path.clone(),
                sha256: sha256_hex(&bytes),
            }];
            outputs.extend(ctx.outputs.clone());
            let m = RunManifest {
                command: cli.command.name().to_string(),
                arguments: args,
                seed: cli.global.seed,
                threads: rayon::current_num_threads(),
                versions: manifest::versions(),
                inputs: ctx.inputs.clone(),
                outputs,
                wall_time_secs: started.elapsed().as_secs_f64(),
            };
            let mpath = RunManifest::path_for(path);
            let text = serde_json::to_string_pretty(&m)? + "\n";
            std::fs::write(&mpath, text).map_err(|e| CliError::io(&mpath, e))?;
            eprintln!("msgcomp: wrote {} and {}", path.display(), mpath.display());
        }
        None => {
            use std::io::Write;
            std::io::stdout()
                .write_all(&bytes)
                .map_err(|e| CliError::io(std::path::Path::new("<stdout>"), e))?;
        }
    }
    if !result.ok {
        return Err(CliError::Verification(result.summary));
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(std::env::args().skip(1).collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("msgcomp: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
