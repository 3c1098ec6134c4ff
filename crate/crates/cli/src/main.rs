use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::error;
use metacog_cli::commands::{cmd_ingest, cmd_report, cmd_run, cmd_synth, CORPUS_FILE, RESULTS_FILE};
use metacog_cli::{CliError, CliResult, ExperimentConfig};

#[derive(Parser)]
#[command(name = "metacog", version, about = "Learn a detector's error rates and denoise its outputs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a corpus of visual systems and their observations.
    Synth {
        #[command(flatten)]
        exp: ExperimentArgs,
    },
    /// Run every configured model on a corpus.
    Run {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Corpus file [default: <out>/corpus.jsonl]
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Aggregate a results file into tables.
    Report {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Results file [default: <out>/results.jsonl]
        #[arg(long)]
        results: Option<PathBuf>,
        /// Also export the per-cell error map of this run.
        #[arg(long)]
        run_id: Option<u64>,
    },
    /// Infer rates and world states from an external percept log.
    Ingest {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Percept log, one JSON record per frame.
        percepts: PathBuf,
        /// Category labels, one per line.
        #[arg(long)]
        vocabulary: PathBuf,
        /// Seed stream index; matches `run` for the same run id.
        #[arg(long, default_value_t = 0)]
        run_id: u64,
    },
}

#[derive(Args)]
struct ExperimentArgs {
    /// Flat key = value file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    systems: Option<String>,
    #[arg(long)]
    world_states: Option<String>,
    #[arg(long)]
    particles: Option<String>,
    #[arg(long)]
    frames_min: Option<String>,
    #[arg(long)]
    frames_max: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Comma-separated: online, retrospective, threshold, lesioned.
    #[arg(long)]
    models: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv or jsonl.
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    jobs: Option<String>,
    /// Any other config key, as key=value. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ExperimentArgs {
    fn resolve(&self) -> CliResult<ExperimentConfig> {
        let config = self.build()?;
        config.validate()?;
        Ok(config)
    }

    fn build(&self) -> CliResult<ExperimentConfig> {
        let mut config = ExperimentConfig::default();
        if let Some(path) = &self.config {
            config.apply_file(path)?;
        }
        for pair in &self.set {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("--set expects key=value, got {pair:?}")))?;
            config.set(k, v)?;
        }
        let flags = [
            ("systems", &self.systems),
            ("world_states", &self.world_states),
            ("particles", &self.particles),
            ("frames_min", &self.frames_min),
            ("frames_max", &self.frames_max),
            ("seed", &self.seed),
            ("models", &self.models),
            ("format", &self.format),
            ("jobs", &self.jobs),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                config.set(key, v)?;
            }
        }
        if let Some(out) = &self.out {
            config.out = out.clone();
        }
        Ok(config)
    }
}

fn execute(command: Command) -> CliResult<()> {
    match command {
        Command::Synth { exp } => {
            let out = cmd_synth(&exp.resolve()?)?;
            println!("{}\t{}", out.corpus.display(), out.sha256);
        }
        Command::Run { exp, corpus } => {
            let config = exp.resolve()?;
            let corpus = corpus.unwrap_or_else(|| config.out.join(CORPUS_FILE));
            let summary = cmd_run(&config, &corpus)?;
            println!("{}\t{} runs", summary.results.display(), summary.runs);
        }
        Command::Report { exp, results, run_id } => {
            let config = exp.resolve()?;
            let results = results.unwrap_or_else(|| config.out.join(RESULTS_FILE));
            for path in cmd_report(&config, &results, run_id)?.tables {
                println!("{}", path.display());
            }
        }
        Command::Ingest { exp, percepts, vocabulary, run_id } => {
            // The vocabulary fixes the category count; cmd_ingest validates.
            let config = exp.build()?;
            let (path, _) = cmd_ingest(&config, &percepts, &vocabulary, run_id)?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
