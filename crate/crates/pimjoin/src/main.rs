use clap::Parser;
use pimjoin::cli::{execute, Cli};

fn main() {
    if let Err(e) = execute(Cli::parse()) {
        eprintln!("pimjoin: {e}");
        std::process::exit(e.exit_code());
    }
}
