mod args;
mod commands;
mod error;
mod output;

use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::error::ErrorKind;
use clap::Parser;

use args::Cli;
use error::CliError;
use output::{OutDir, RunSummary, Timing};

fn run(cli: &Cli) -> Result<(), CliError> {
    let started = Instant::now();
    let started_unix_ms = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0);
    let mut out = OutDir::create(cli.command.out_dir())?;
    let outputs = commands::run(&cli.command, &mut out)?;
    let summary = RunSummary {
        tool: "ebinfer",
        version: env!("CARGO_PKG_VERSION"),
        command: cli.command.name(),
        config: serde_json::to_value(&cli.command)?,
        timing: Timing {
            started_unix_ms,
            elapsed_ms: started.elapsed().as_secs_f64() * 1e3,
        },
        outputs,
        files: out.files().to_vec(),
        warnings: output::take_warnings(),
    };
    out.json("summary.json", &summary)?;
    Ok(())
}

fn fail(e: &CliError) -> ExitCode {
    eprintln!("{}", e.to_json());
    ExitCode::from(1)
}

fn main() -> ExitCode {
    output::install_logger();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => e.exit(),
        Err(e) => return fail(&CliError::Usage(e.to_string().trim_end().to_string())),
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}
