//! Command-line entry point: one subcommand per pipeline stage, driven by a
//! shared TOML config. Flags override file values. Exit codes: 0 success,
//! 1 user error, 2 internal self-check failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use credscope_core::config::PipelineConfig;
use credscope_core::pipeline::{
    cmd_featurize, cmd_gradcheck, cmd_ingest, cmd_lda, cmd_rank, cmd_synth, cmd_train,
    cmd_verify, WorkdirLock,
};

#[derive(Parser)]
#[command(
    name = "credscope",
    version,
    about = "Scores listed-company credibility from news text and verifies the ranking against regulator investigations"
)]
struct Cli {
    /// TOML config file; missing file means built-in defaults.
    #[arg(long, global = true, default_value = "credscope.toml")]
    config: PathBuf,

    /// Working directory for stage artifacts (overrides config and the
    /// CREDSCOPE_WORKDIR environment variable).
    #[arg(long, global = true)]
    workdir: Option<PathBuf>,

    /// Replaces every stage seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Accept upstream artifacts whose config hash does not match.
    #[arg(long, global = true)]
    force: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic world into the configured input paths.
    Synth,
    /// Load raw inputs, extract bags and build the mention index.
    Ingest,
    /// Fit the topic model over the ingested bags.
    Lda,
    /// Aggregate per-company features and images.
    Featurize {
        /// Also render one PGM image per company into this directory.
        #[arg(long)]
        export_images: Option<PathBuf>,
    },
    /// Train the scoring network on the analyst ratings.
    Train,
    /// Score and rank every featurized company.
    Rank,
    /// Build the negative rating and cross-validate rank agreement.
    Verify,
    /// Check hand-derived gradients against finite differences.
    Gradcheck {
        /// Number of random (params, image, data1, target) draws.
        #[arg(long, default_value_t = 100)]
        triples: usize,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    let mut config = if cli.config.exists() {
        match PipelineConfig::load(&cli.config) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(1);
            }
        }
    } else {
        PipelineConfig::default()
    };
    if let Some(dir) = &cli.workdir {
        config.paths.workdir = Some(dir.clone());
    }
    if let Some(seed) = cli.seed {
        config.override_seed(seed);
    }

    let needs_lock = !matches!(cli.command, Command::Gradcheck { .. });
    let _lock = if needs_lock {
        match WorkdirLock::acquire(&config.workdir()) {
            Ok(lock) => Some(lock),
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(1);
            }
        }
    } else {
        None
    };

    let outcome = match &cli.command {
        Command::Synth => cmd_synth(&config),
        Command::Ingest => cmd_ingest(&config),
        Command::Lda => cmd_lda(&config, cli.force),
        Command::Featurize { export_images } => {
            cmd_featurize(&config, cli.force, export_images.as_deref())
        }
        Command::Train => cmd_train(&config, cli.force),
        Command::Rank => cmd_rank(&config, cli.force),
        Command::Verify => cmd_verify(&config, cli.force),
        Command::Gradcheck { triples } => {
            let seed = cli.seed.unwrap_or(20_24);
            cmd_gradcheck(*triples, seed)
        }
    };

    match outcome {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            // A failed gradient self-check is an internal defect, not a
            // usage problem.
            if matches!(cli.command, Command::Gradcheck { .. }) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
