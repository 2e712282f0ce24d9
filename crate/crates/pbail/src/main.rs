use std::process::ExitCode;

fn main() -> ExitCode {
    pbail::cli::main()
}
