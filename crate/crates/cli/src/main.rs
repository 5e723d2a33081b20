mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Arg, ArgAction, ArgMatches, CommandFactory, FromArgMatches, Parser, Subcommand};

use config::{Settings, KEYS};

/// Desk-scale experiments for implicit semantic communication.
///
/// Every configuration key can be set in the `--config` file as
/// `key = value` or given as a `--key value` flag.
#[derive(Parser, Debug)]
#[command(name = "isc", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Flat key = value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed; every random stream is derived from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Write the (loaded or generated) knowledge base as TSV.
    Synth,
    /// Train TransE embeddings.
    Embed,
    /// Sample expert reasoning paths.
    Experts,
    /// Run adversarial imitation training.
    Train,
    /// GAML vs GA path accuracy per sub-knowledge-base.
    Eval,
    /// Packet error rate sweep over SNR and recovery modes.
    Channel,
    /// Training metrics for several expert-path counts.
    SweepExperts,
}

fn command() -> clap::Command {
    KEYS.iter().fold(Cli::command(), |cmd, &(key, default, help)| {
        let help = if default.is_empty() {
            help.to_string()
        } else {
            format!("{help} [default: {default}]")
        };
        cmd.arg(
            Arg::new(key)
                .long(key)
                .global(true)
                .value_name("VALUE")
                .action(ArgAction::Set)
                .overrides_with(key)
                .help(help),
        )
    })
}

fn flags(m: &ArgMatches) -> Vec<(String, String)> {
    let sub = m.subcommand().map(|(_, s)| s).unwrap_or(m);
    KEYS.iter()
        .filter_map(|&(key, _, _)| sub.get_one::<String>(key).map(|v| (key.to_string(), v.clone())))
        .collect()
}

fn run(m: &ArgMatches) -> anyhow::Result<()> {
    let cli = Cli::from_arg_matches(m)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.max(1))
        .build_global()?;
    let s = Settings::new(cli.config.as_deref(), &flags(m), cli.seed, cli.out)?;
    match cli.cmd {
        Cmd::Synth => commands::synth(&s),
        Cmd::Embed => commands::embed(&s),
        Cmd::Experts => commands::experts_cmd(&s),
        Cmd::Train => commands::train_cmd(&s),
        Cmd::Eval => commands::eval(&s),
        Cmd::Channel => commands::channel(&s),
        Cmd::SweepExperts => commands::sweep_experts(&s),
    }
}

fn main() -> ExitCode {
    let m = command().get_matches();
    match run(&m) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
