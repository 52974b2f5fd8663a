use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(gadmm::cli::main_from_env())
}
