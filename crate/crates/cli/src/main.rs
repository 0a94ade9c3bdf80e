use clap::Parser;
use std::process::ExitCode;
use vls_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(o) => {
            println!("{}", o.summary);
            println!("wrote {} files to {}", o.manifest.files.len() + 1, o.out_dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("vls {}: {e}", cli.command.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
