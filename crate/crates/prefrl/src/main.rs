use std::io::Write as _;

use clap::Parser;
use prefrl::cli::{execute, Cli};

fn main() {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(summary) => {
            let _ = writeln!(std::io::stdout(), "{summary}");
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(2);
        }
    }
}
