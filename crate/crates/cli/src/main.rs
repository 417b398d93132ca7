use std::process::ExitCode;

use chp_cli::{execute, Args, RunConfig};
use clap::Parser;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CHP_LOG", "warn")).init();
    let args = Args::parse();
    let result = RunConfig::from_args(&args).and_then(|cfg| execute(&cfg));
    match result {
        Ok(outcome) => ExitCode::from(outcome.code()),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
