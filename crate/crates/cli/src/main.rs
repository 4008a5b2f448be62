use std::process::ExitCode;

use clap::Parser;
use lpgate_cli::{execute, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = cli.command.split();
    match execute(command, args) {
        Ok(report) => {
            let failed: Vec<&str> = report
                .checks
                .iter()
                .filter(|c| !c.pass)
                .map(|c| c.name.as_str())
                .collect();
            println!(
                "{}: wrote {} ({} checks, {} failed)",
                command.name(),
                args.out.join("report.json").display(),
                report.checks.len(),
                failed.len()
            );
            for name in failed {
                eprintln!("warning: check {name} failed");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            if let Some(h) = e.hint() {
                eprintln!("hint: {h}");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
