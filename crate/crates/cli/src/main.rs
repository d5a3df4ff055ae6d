use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use erw::config::Config;
use erw::harness::{run, Command, Experiment, Format, Overrides};

/// Simulation, exact computation and large-deviation analysis for excited
/// random walks on the integers.
///
/// Settings come from the config file, then `ERW_*` environment variables,
/// then flags; later sources win. Exit status: 0 success, 1 invalid input
/// or runtime error, 2 a `verify` criterion failed.
#[derive(Parser, Debug)]
#[command(name = "erw", version)]
struct Cli {
    #[arg(value_enum)]
    command: Cmd,

    /// Experiment file (sectioned `key = value`).
    #[arg(long, env = "ERW_CONFIG")]
    config: Option<PathBuf>,

    /// Master seed.
    #[arg(long, env = "ERW_SEED")]
    seed: Option<u64>,

    /// Worker threads; results do not depend on it.
    #[arg(long, env = "ERW_WORKERS")]
    workers: Option<usize>,

    /// Output directory.
    #[arg(long, env = "ERW_OUT")]
    out: Option<PathBuf>,

    #[arg(long, env = "ERW_FORMAT", value_enum)]
    format: Option<Fmt>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Cmd {
    /// Positions and speeds.
    Walk,
    /// Hitting times.
    Hit,
    /// Sample regeneration cycles into a cache file.
    Regen,
    /// Rate-function curves from a cache.
    Rate,
    /// Hill and slowdown exponents.
    Tails,
    /// Exact laws.
    Oracle,
    /// The acceptance suite.
    Verify,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Fmt {
    Csv,
    Plot,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Walk => Command::Walk,
            Cmd::Hit => Command::Hit,
            Cmd::Regen => Command::Regen,
            Cmd::Rate => Command::Rate,
            Cmd::Tails => Command::Tails,
            Cmd::Oracle => Command::Oracle,
            Cmd::Verify => Command::Verify,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let outcome = (|| {
        let config = cli.config.as_deref().map(Config::load).transpose()?;
        let overrides = Overrides {
            seed: cli.seed,
            workers: cli.workers,
            out: cli.out.clone(),
            format: cli.format.map(|f| match f {
                Fmt::Csv => Format::Csv,
                Fmt::Plot => Format::Plot,
            }),
        };
        run(&Experiment::resolve(cli.command.into(), config, &overrides)?)
    })();
    match outcome {
        Ok(o) => {
            print!("{}", o.summary);
            ExitCode::from(o.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
