use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

mod args;
mod commands;

use args::{Cli, Command};

const EXIT_INVALID: u8 = 1;
const EXIT_IO: u8 = 2;

fn is_io(e: &(dyn std::error::Error + 'static)) -> bool {
    use tuckerforge::{ContainerError, Error};
    e.is::<std::io::Error>()
        || matches!(e.downcast_ref::<ContainerError>(), Some(ContainerError::Io(_)))
        || matches!(e.downcast_ref::<Error>(), Some(Error::Io(_) | Error::Container(ContainerError::Io(_))))
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.chain().any(is_io) {
        EXIT_IO
    } else {
        EXIT_INVALID
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(EXIT_INVALID);
        }
    };

    // Timing is single-threaded unless asked otherwise.
    let threads = match (&cli.command, cli.threads) {
        (_, Some(0)) => {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(EXIT_INVALID);
        }
        (_, Some(n)) => n,
        (Command::Bench(_), None) => 1,
        (_, None) => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_INVALID);
    }

    let result = match &cli.command {
        Command::Compress(a) => commands::compress(a),
        Command::Analyze(a) => commands::analyze(a),
        Command::Verify(a) => commands::verify(a),
        Command::EvGrid(a) => commands::ev_grid_cmd(a),
        Command::Prune(a) => commands::prune(a),
        Command::Bench(a) => commands::bench(a, threads),
        Command::Synth(a) => commands::synth(a),
    };
    match result {
        Ok(text) => {
            println!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn io_errors_map_to_two() {
        let missing = tuckerforge::read_container(std::path::Path::new("/no/such/file")).unwrap_err();
        assert_eq!(exit_code(&anyhow::Error::new(missing).context("reading")), EXIT_IO);
        let wrapped = tuckerforge::Error::from(std::io::Error::other("disk"));
        assert_eq!(exit_code(&anyhow::Error::new(wrapped)), EXIT_IO);
    }

    #[test]
    fn everything_else_maps_to_one() {
        let bad = tuckerforge::Container::decode(b"XXXX").unwrap_err();
        assert_eq!(exit_code(&anyhow::Error::new(bad)), EXIT_INVALID);
        assert_eq!(exit_code(&anyhow::anyhow!("df out of range")), EXIT_INVALID);
    }
}
