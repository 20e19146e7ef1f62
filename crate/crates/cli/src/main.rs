use clap::Parser;

use vinedep_cli::{run, Cli, RunConfig};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("VINEDEP_LOG", "warn")).init();
    let cfg = RunConfig::from(Cli::parse());
    if let Err(e) = run(&cfg) {
        eprintln!("vinedep: {e}");
        std::process::exit(e.exit_code());
    }
}
