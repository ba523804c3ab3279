use clap::Parser;
use gmdisco::Error;
use gmdisco_cli::{exit_code, run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(&cli) {
        eprintln!("error: {err}");
        if matches!(err, Error::NoKnee) {
            eprintln!("hint: rerun with --delta <value> or set `delta` in the [solver] section");
        }
        std::process::exit(exit_code(&err));
    }
}
