//! Command-line front end. Log verbosity follows `CVIT_LOG` (default `info`).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cvit::config::RunConfig;
use cvit::pipeline::{gen_synth, run_eval, run_predict, run_train, EvalOptions, SplitName};

#[derive(Parser)]
#[command(name = "cvit", version, about = "Next-hour accident risk forecasting")]
struct Cli {
    /// Print the default run configuration as TOML and exit.
    #[arg(long)]
    print_default_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic accidents/context/trips dataset.
    GenSynth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model and write checkpoint, normalization stats and epoch log.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Score a checkpoint on the validation or test split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_parser = parse_split)]
        split: SplitName,
        #[arg(long)]
        rush_hours: bool,
        /// Score the split's targets against themselves.
        #[arg(long)]
        oracle: bool,
        /// Run config to use instead of the one stored in the checkpoint.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Write every predicted map, one line per target hour.
        #[arg(long)]
        dump_predictions: Option<PathBuf>,
    },
    /// Predict the risk map for one hour of the data timeline.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        at: usize,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_split(s: &str) -> Result<SplitName, String> {
    s.parse().map_err(|e: cvit::Error| e.to_string())
}

fn load(path: Option<PathBuf>) -> cvit::Result<Option<RunConfig>> {
    path.map(|p| RunConfig::load(&p)).transpose()
}

fn run(cli: Cli) -> cvit::Result<()> {
    if cli.print_default_config {
        print!("{}", RunConfig::default().to_toml()?);
        return Ok(());
    }
    let Some(command) = cli.command else {
        return Err(cvit::Error::Config(vec!["no command given; see --help".into()]));
    };
    match command {
        Command::GenSynth { config, out } => {
            let config = load(config)?.unwrap_or_default();
            RunConfig::ensure_valid(config.validate())?;
            let s = gen_synth(&config.synth_config(), &out)?;
            println!("accidents = {}\ncontext = {}\ntrips = {}", s.accidents, s.context, s.trips);
        }
        Command::Train { config } => {
            let config = RunConfig::load(&config)?;
            let s = run_train(&config, |_| {})?;
            println!("param_count = {}", s.param_count);
            println!("best_epoch = {}", s.best_epoch);
            println!("best_val_rmse = {}", s.best.val_rmse);
            println!("best_val_recall = {}", s.best.val_recall);
            println!("best_val_map = {}", s.best.val_map);
            println!("checkpoint = {}", s.checkpoint.display());
        }
        Command::Eval {
            checkpoint,
            split,
            rush_hours,
            oracle,
            config,
            out_dir,
            dump_predictions,
        } => {
            let options = EvalOptions {
                rush_hours,
                oracle,
                config: load(config)?,
                out_dir,
                dump_predictions,
                ..EvalOptions::new(split)
            };
            let out = run_eval(&checkpoint, &options)?;
            print!("{}", out.report.to_key_value());
        }
        Command::Predict {
            checkpoint,
            at,
            config,
            out,
        } => {
            let out = run_predict(&checkpoint, at, load(config)?, out)?;
            println!("{}", out.path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("CVIT_LOG", "info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
