use clap::Parser;
use multicurve_cli::commands::{run, Command};

/// Joint discount-curve estimation with kernel ridge regression.
#[derive(Debug, Parser)]
#[command(name = "multicurve", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

fn main() {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
