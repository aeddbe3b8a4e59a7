//! The `ail` command line. Exit status: 0 success, 1 configuration or usage
//! error, 2 runtime error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{CommandFactory, Parser, Subcommand};

use crate::config::{load_config, ConfigError, EnvChoice, ExperimentConfig, Kind, Violation};
use crate::runner::run_experiment;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "ail", version, about = "Selective sampling and interactive imitation learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the configured experiment and write its artifacts.
    Run(Flags),
    /// Compute eluder, star and disagreement measures of the configured class.
    Complexity(Flags),
    /// Paired interactive vs. behaviour-cloning recovery table on the tree MDP.
    Separation(Flags),
    /// Parse and validate the configuration only.
    Validate(Flags),
}

#[derive(Debug, clap::Args)]
struct Flags {
    /// Configuration file.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override the configured seed.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Suppress progress messages.
    #[arg(long)]
    quiet: bool,
}

fn config_error(msg: impl Into<String>) -> ConfigError {
    ConfigError(vec![Violation { line: None, message: msg.into() }])
}

/// Load the config and apply subcommand-specific overrides.
fn prepare(cmd: &Command, flags: &Flags, path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = load_config(path)?;
    if let Some(s) = flags.seed {
        cfg.seed = s;
    }
    if let Some(o) = &flags.out {
        cfg.output_dir = o.clone();
    }
    match cmd {
        Command::Complexity(_) => {
            match &cfg.class {
                Some(c) if c.def.size().is_some() => {}
                _ => return Err(config_error("`complexity` needs a finite [class]")),
            }
            cfg.kind = Kind::Complexity;
        }
        Command::Separation(_) => {
            if !cfg.horizon.is_some_and(|h| (2..=ail_core::classes::MAX_TREE_HORIZON).contains(&h)) || cfg.rounds.is_none() {
                return Err(config_error("`separation` needs `H` in 2..=20 and `T` in [experiment]"));
            }
            if cfg.env.kind != EnvChoice::Tree {
                return Err(config_error("`separation` runs on the tree MDP (env kind = \"tree\")"));
            }
            cfg.kind = Kind::BcVsIl;
        }
        _ => {}
    }
    Ok(cfg)
}

/// Run the CLI on `argv` (including the program name) and return the exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_CONFIG,
            };
        }
    };
    let flags = match &cli.command {
        Command::Run(f) | Command::Complexity(f) | Command::Separation(f) | Command::Validate(f) => f,
    };
    let Some(path) = &flags.config else {
        eprintln!("error: --config PATH is required\n");
        let name = match &cli.command {
            Command::Run(_) => "run",
            Command::Complexity(_) => "complexity",
            Command::Separation(_) => "separation",
            Command::Validate(_) => "validate",
        };
        let mut cmd = Cli::command();
        let usage = cmd.find_subcommand_mut(name).map(|c| c.render_usage().to_string()).unwrap_or_default();
        eprintln!("{}", usage.replace("Usage: ", "Usage: ail "));
        eprintln!("For more information, try '--help'.");
        return EXIT_CONFIG;
    };
    let cfg = match prepare(&cli.command, flags, path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{}: invalid configuration", path.display());
            for v in &e.0 {
                eprintln!("  {v}");
            }
            return EXIT_CONFIG;
        }
    };
    if let Command::Validate(_) = cli.command {
        if !flags.quiet {
            eprintln!("{}: ok (kind {}, seed {})", path.display(), cfg.kind, cfg.seed);
        }
        return EXIT_OK;
    }
    let quiet = flags.quiet;
    let progress = move |msg: &str| {
        if !quiet {
            eprintln!("[ail] {msg}");
        }
    };
    let result = run_experiment(&cfg, &progress).and_then(|bundle| {
        bundle.write_to(&cfg.output_dir)?;
        Ok(bundle)
    });
    match result {
        Ok(bundle) => {
            if !quiet {
                eprintln!("[ail] wrote {} files to {}", bundle.files.len(), cfg.output_dir.display());
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_RUNTIME
        }
    }
}
