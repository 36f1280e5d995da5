use std::process::ExitCode;

fn main() -> ExitCode {
    invrender::cli::run(std::env::args_os())
}
