use clap::Parser;
use hiermix::cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("hiermix: {e}");
        std::process::exit(e.exit_code());
    }
}
