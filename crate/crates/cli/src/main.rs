//! `chronos` command-line front end. Every subcommand prints a CSV table.

mod args;
mod commands;
mod error;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::process::ExitCode;

use clap::Parser;

use crate::args::{Cli, Command};
use crate::commands::{Output, Table};
use crate::error::{CliError, CliResult};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is_broken_pipe() => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: &Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n as usize)
            .build_global()
            .map_err(|e| CliError::Usage(format!("--threads: {e}")))?;
    }
    let out = match &cli.command {
        Command::Pocd(a) => Output::Table(commands::pocd(a)?),
        Command::Cost(a) => Output::Table(commands::cost(a)?),
        Command::Utility(a) => Output::Table(commands::utility(a)?),
        Command::Optimize(a) => Output::Table(commands::optimize(a)?),
        Command::Simulate(a) => Output::Table(commands::simulate(a)?),
        Command::Compare(a) => Output::Table(commands::compare(a)?),
        Command::Sweep(a) => Output::Table(commands::sweep(a)?),
        Command::TraceRun(a) => Output::Results(commands::trace_run(a)?),
    };

    let sink: Box<dyn Write> = match &cli.output {
        Some(path) => Box::new(File::create(path).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?),
        None => Box::new(io::stdout().lock()),
    };
    let sink = BufWriter::new(sink);
    match out {
        Output::Table(t) => write_table(&t, sink),
        Output::Results(rows) => Ok(chronos_core::trace::write_results_to(&rows, sink)?),
    }
}

fn write_table(t: &Table, sink: impl Write) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(&t.header)?;
    for row in &t.rows {
        w.write_record(row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
