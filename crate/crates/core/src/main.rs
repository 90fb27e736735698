use std::process::ExitCode;

fn main() -> ExitCode {
    sparsetext::cli::main_with_args(std::env::args_os())
}
