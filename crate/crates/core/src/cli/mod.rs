//! Command-line surface: `generate`, `train`, `eval` and `compare`.
//!
//! Exit codes: 0 success, 2 config or path error, 3 missing dependency,
//! 4 numeric or training failure.

mod commands;
pub mod config;
pub mod pipeline;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::{cmd_compare, cmd_eval, cmd_generate, cmd_train, load_dataset, Layout, SPLITS, SUITES};
pub use config::RunConfig;

use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "imagine", version, about = "Imagination embeddings for guessing games on a synthetic world")]
pub struct Cli {
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root seed; overrides the config's `seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Config override `key=value`, applied after the config file.
    #[arg(long = "set", value_name = "K=V", global = true)]
    pub set: Vec<String>,
    /// Output directory (default `run`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the world and write the five scene splits.
    Generate,
    /// Train one component: imagination, oracle:<features>, guesser:<mode> or joint.
    Train { component: String },
    /// Run an evaluation suite: oracle, guesser, gameplay, zeroshot, attributes or all.
    Eval { suite: String },
    /// Per-metric deltas of reports against the first one.
    Compare {
        #[arg(required = true, num_args = 2..)]
        reports: Vec<PathBuf>,
    },
    /// Print the effective config.
    Config,
}

/// Effective config: defaults, then the file, then `--set`, then `--seed`.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        cfg.apply_text(&text)?;
    }
    for pair in &cli.set {
        cfg.set_pair(pair)?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Runs a parsed command and returns its stdout text.
pub fn run(cli: &Cli) -> Result<String> {
    if let Command::Compare { reports } = &cli.command {
        let csv = cmd_compare(reports)?;
        if let Some(out) = &cli.out {
            std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
            let path = out.join("compare.csv");
            std::fs::write(&path, &csv).map_err(|e| Error::io(&path, e))?;
        }
        return Ok(csv);
    }
    let cfg = resolve_config(cli)?;
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("run"));
    let layout = Layout::new(&cfg, &out);
    let (label, result) = match &cli.command {
        Command::Generate => ("generate".to_string(), cmd_generate(&cfg, &layout)),
        Command::Train { component } => (format!("train {component}"), cmd_train(&cfg, &layout, component)),
        Command::Eval { suite } => (
            format!("eval {suite}"),
            cmd_eval(&cfg, &layout, suite).map(|r| r.to_csv()),
        ),
        Command::Config => return Ok(cfg.to_text()),
        Command::Compare { .. } => unreachable!(),
    };
    match &result {
        Ok(_) => commands::log(&layout, &format!("{label} seed={} ok", cfg.seed)),
        Err(e) => commands::log(&layout, &format!("{label} seed={} failed: {e}", cfg.seed)),
    }
    result
}

/// Entry point for the binary: parses `args`, runs, and maps errors to exit codes.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(text) => {
            print!("{text}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
