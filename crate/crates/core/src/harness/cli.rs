//! Argument parsing for the `fpart` binary.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use super::config::{Mode, Options, RunConfig};
use crate::error::Result;

#[derive(Debug, Parser)]
#[command(name = "fpart", version, about = "Search over multi-task channel partitioning strategies")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Map a raw sharing spec onto the feasible set.
    Constrain(Options),
    /// Build a channel mask realizing a feasible spec.
    Synthesize(Options),
    /// Random-sampling search.
    Sample(Options),
    /// Evolutionary-strategies search.
    Es(Options),
    /// Score the fixed baseline partitionings.
    Baseline(Options),
    /// Score a single spec.
    Eval(Options),
    /// Turn record files into plot tables.
    Export(ExportArgs),
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[command(flatten)]
    pub options: Options,
    /// Record files; each becomes one run in the tables.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
}

impl Command {
    /// Resolves flags and any `--config` file into a [`RunConfig`].
    pub fn into_config(self) -> Result<RunConfig> {
        let (mode, opts, inputs) = match self {
            Command::Constrain(o) => (Mode::Constrain, o, vec![]),
            Command::Synthesize(o) => (Mode::Synthesize, o, vec![]),
            Command::Sample(o) => (Mode::Sample, o, vec![]),
            Command::Es(o) => (Mode::Es, o, vec![]),
            Command::Baseline(o) => (Mode::Baseline, o, vec![]),
            Command::Eval(o) => (Mode::Eval, o, vec![]),
            Command::Export(a) => (Mode::Export, a.options, a.inputs),
        };
        RunConfig::resolve(mode, opts.resolve_file()?, inputs)
    }
}

/// Parses `args`, runs, and returns the process exit code.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return e.exit_code();
        }
    };
    let result = cli.command.into_config().and_then(|cfg| super::run(&cfg, out, err));
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}
