mod args;
mod commands;
mod config;
mod dataset;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use commands::CheckFailed;

fn configure_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("A3_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| anyhow::anyhow!("A3_THREADS={v:?} is not a positive integer"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<CheckFailed>().is_some() {
        return 1;
    }
    match err.downcast_ref::<hsfusion_core::Error>() {
        Some(hsfusion_core::Error::NonFinite { .. }) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match &cli.command {
        Command::Train(c) => commands::cmd_train(c),
        Command::Eval(a) => commands::cmd_eval(a),
        Command::Gradcheck(a) => commands::cmd_gradcheck(a),
        Command::Ablate(c) => commands::cmd_ablate(c),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
