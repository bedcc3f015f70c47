mod args;
mod bench;
mod commands;
mod settings;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();
    let config = cli.config.as_deref();
    let threads = bench::thread_count(cli.jobs);
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
        log::debug!("global thread pool already set: {e}");
    }
    let status = match &cli.command {
        Command::Generate(a) => commands::generate(a, config),
        Command::Solve(a) => commands::solve(a, config),
        Command::Extract(a) => commands::extract_cmd(a, config),
        Command::Eval(a) => commands::eval(a, config),
        Command::Bench(a) => bench::bench(a, config, cli.jobs),
    };
    match status {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
