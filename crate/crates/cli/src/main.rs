use clap::Parser;
use zifqr_cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("zifqr: {e}");
        std::process::exit(e.exit_code());
    }
}
