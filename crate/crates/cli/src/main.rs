use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};
use echo_cli::commands::{self, ConfigSource, Overrides};
use echo_cli::presets;

#[derive(Parser)]
#[command(name = "echo", version, about = "Delayed entanglement echo simulations")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "ECHO_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Source {
    /// TOML configuration file.
    config: Option<PathBuf>,
    /// Use a bundled configuration instead of a file.
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// Override bath.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override bath.samples.
    #[arg(long)]
    samples: Option<u64>,
    /// Override output.dir.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the configured sweep and write a table.
    Run(Source),
    /// Count addressable spins over generated baths.
    Census(Source),
    /// Compare the engine with the analytic oracles.
    OracleCheck {
        /// Configuration supplying tolerance overrides.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, hide = true)]
        inject_sign_flip: bool,
    },
    /// Print the control schedule of the configured protocol.
    ExportSchedule {
        #[command(flatten)]
        source: Source,
        /// Write to a file instead of standard output.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// List the bundled configurations.
    Presets,
}

impl Source {
    fn load(&self) -> Result<echo_cli::config::RunConfig> {
        let src = match (&self.config, &self.preset) {
            (Some(p), None) => ConfigSource::Path(p.clone()),
            (None, Some(n)) => ConfigSource::Preset(n.clone()),
            _ => bail!("give a configuration file or --preset"),
        };
        let o = Overrides { seed: self.seed, samples: self.samples, out_dir: self.out_dir.clone() };
        commands::load(&src, &o)
    }
}

fn execute(cli: Cli) -> Result<bool> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Run(s) => {
            let cfg = s.load()?;
            let out = commands::run(&cfg)?;
            println!("{}", out.path.display());
            if out.failed_points > 0 {
                eprintln!("error: {} sweep point(s) failed; see the table header", out.failed_points);
                return Ok(false);
            }
            Ok(true)
        }
        Command::Census(s) => {
            let cfg = s.load()?;
            println!("{}", commands::run_census(&cfg)?.display());
            Ok(true)
        }
        Command::OracleCheck { config, inject_sign_flip } => {
            let cfg = match config {
                Some(p) => Some(commands::load(&ConfigSource::Path(p), &Overrides::default())?),
                None => None,
            };
            let (rows, ok) = commands::oracle_check(cfg.as_ref(), inject_sign_flip)?;
            print!("{}", commands::render_contract(&rows));
            Ok(ok)
        }
        Command::ExportSchedule { source, output } => {
            let cfg = source.load()?;
            let text = commands::write_schedule(&cfg, output.as_deref())?;
            if output.is_none() {
                print!("{text}");
            }
            Ok(true)
        }
        Command::Presets => {
            for n in presets::names() {
                println!("{n}");
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
