use std::process::ExitCode;

fn main() -> ExitCode {
    querytrack_cli::main_with(std::env::args_os())
}
