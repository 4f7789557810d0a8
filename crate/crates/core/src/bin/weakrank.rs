use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use weakrank::pipeline::{self, PipelineConfig, Stage, StageError};

#[derive(Parser)]
#[command(
    name = "weakrank",
    version,
    about = "Neural rankers trained from BM25 weak supervision"
)]
struct Cli {
    /// Pipeline config file (flat `key = value`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the architecture: score, rank or rankprob.
    #[arg(long, global = true)]
    arch: Option<String>,
    /// Override the input representation: dense, sparse or embed.
    #[arg(long, global = true)]
    repr: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the inverted index.
    Index,
    /// Filter training queries and write weak labels.
    Generate,
    /// Train a ranker and write its checkpoint and loss curve.
    Train,
    /// Re-rank BM25 candidates of the test queries.
    Rerank {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Evaluate run files; the first one is the significance baseline.
    Evaluate { runs: Vec<PathBuf> },
    /// Correlate learned term weights with idf.
    Analyze {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Write a synthetic collection to the configured input paths.
    Synth,
}

fn run(cli: Cli) -> Result<(), StageError> {
    let config_err = |e| StageError {
        stage: Stage::Config,
        source: e,
    };
    let path = cli
        .config
        .ok_or_else(|| config_err(weakrank::Error::Config("--config is required".into())))?;
    let mut overrides = Vec::new();
    if let Some(s) = cli.seed {
        overrides.push(("seed".to_string(), s.to_string()));
    }
    if let Some(a) = cli.arch {
        overrides.push(("model.arch".to_string(), a));
    }
    if let Some(r) = cli.repr {
        overrides.push(("model.repr".to_string(), r));
    }
    let cfg = PipelineConfig::load(&path, &overrides).map_err(config_err)?;
    match cli.command {
        Command::Index => println!("{}", pipeline::cmd_index(&cfg)?.display()),
        Command::Generate => {
            for p in pipeline::cmd_generate(&cfg)? {
                println!("{}", p.display());
            }
        }
        Command::Train => {
            let out = pipeline::cmd_train(&cfg)?;
            if let Some(v) = out.weak.as_ref().and_then(|r| r.best_val_loss) {
                println!("best validation loss\t{v:.6}");
            }
            println!("{}", out.checkpoint.display());
        }
        Command::Rerank { checkpoint } => {
            let (run, bm25) = pipeline::cmd_rerank(&cfg, checkpoint.as_deref())?;
            println!("{}\n{}", run.display(), bm25.display());
        }
        Command::Evaluate { runs } => {
            let ev = pipeline::cmd_evaluate(&cfg, &runs)?;
            println!("run\tmap\tP_20\tndcg_cut_20");
            for (name, r) in &ev.reports {
                println!("{name}\t{:.4}\t{:.4}\t{:.4}", r.map(), r.p20(), r.ndcg20());
            }
            for c in &ev.comparisons {
                let mark = if c.test.significant { "*" } else { "" };
                println!(
                    "{} vs baseline {}: p={:.4}{mark}",
                    c.run, c.metric, c.test.p_value
                );
            }
        }
        Command::Analyze { checkpoint } => {
            let (csv, r) = pipeline::cmd_analyze(&cfg, checkpoint.as_deref())?;
            println!("pearson_r\t{r:.4}\n{}", csv.display());
        }
        Command::Synth => {
            for p in pipeline::cmd_synth(&cfg)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
