use clap::Parser;
use polarsh::cli::{execute, init_threads, Cli};

fn main() {
    let cli = Cli::parse();
    let res = init_threads().and_then(|_| execute(cli.command, &mut std::io::stdout().lock()));
    if let Err(e) = res {
        eprintln!("polarsh: {e}");
        std::process::exit(1);
    }
}
