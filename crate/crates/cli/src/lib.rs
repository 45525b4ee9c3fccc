//! Command-line front end: argument parsing, the four commands and the
//! trajectory chart.

pub mod args;
pub mod commands;
pub mod plot;

pub use args::{parse_args, CliConfig, UsageError};
pub use commands::{execute, CliError};

/// Parses `argv`, runs the command and returns the process exit code.
/// Errors are reported on standard error.
pub fn main_with_args<I, T>(argv: I, out: &mut dyn std::io::Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let outcome = parse_args(argv)
        .map_err(CliError::from)
        .and_then(|cfg| execute(&cfg, out));
    match outcome {
        Ok(()) => commands::EXIT_OK,
        Err(CliError::Usage(UsageError::Clap(e))) => {
            let _ = e.print();
            if e.use_stderr() {
                commands::EXIT_USAGE
            } else {
                commands::EXIT_OK
            }
        }
        Err(e) => {
            eprintln!("gabm: {e}");
            e.exit_code()
        }
    }
}
