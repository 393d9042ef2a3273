use std::process::ExitCode;

fn main() -> ExitCode {
    topoact::cli::run(std::env::args_os())
}
