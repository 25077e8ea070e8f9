use clap::Parser;
use env_logger::Env;
use lprefine_cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    env_logger::Builder::from_env(Env::new().filter_or("LPREFINE_LOG", "error")).format_timestamp(None).init();
    std::process::exit(run(&cli));
}
