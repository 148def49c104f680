use std::process::ExitCode;

fn main() -> ExitCode {
    pmsm_smo_sim::cli::main_with_args(std::env::args_os())
}
