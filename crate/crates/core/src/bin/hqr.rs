use std::process::ExitCode;

fn main() -> ExitCode {
    hqr::cli::main_entry()
}
