use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(vocanim::cli::run(std::env::args_os()).exit_code)
}
