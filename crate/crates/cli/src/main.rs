mod args;
mod commands;
mod error;
mod output;

use clap::Parser;

use args::{Cli, Command};
use error::CliError;

fn run(cli: &Cli) -> Result<(), CliError> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global().map_err(CliError::internal)?;
    }
    match &cli.command {
        Command::Estimate(a) => commands::estimate(a),
        Command::Bounds(a) => commands::bounds(a),
        Command::Diagnose(a) => commands::diagnose(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Validate(a) => commands::validate(a),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand) {
                e.exit();
            }
            let _ = e.print();
            let err = CliError::usage(e.kind().to_string());
            eprintln!("{}", err.to_json());
            std::process::exit(err.exit_code);
        }
    };
    let level = if cli.quiet {
        log::LevelFilter::Error
    } else if cli.verbose {
        log::LevelFilter::Debug
    } else {
        log::LevelFilter::Warn
    };
    env_logger::Builder::new().filter_level(level).parse_env("ECOINF_LOG").init();
    if let Err(e) = run(&cli) {
        log::error!("{}", e.message);
        eprintln!("{}", e.to_json());
        std::process::exit(e.exit_code);
    }
}
