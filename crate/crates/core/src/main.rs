use std::process::ExitCode;

fn main() -> ExitCode {
    neuropt::cli::main_with_args(std::env::args_os())
}
