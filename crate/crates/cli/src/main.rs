use std::process::ExitCode;

use kumoforge_cli::{main_with, CliEnv, EXIT_FATAL};

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let code = match CliEnv::process() {
        Ok(mut env) => main_with(&argv, &mut env),
        Err(e) => {
            eprintln!("cannot determine working directory: {e}");
            EXIT_FATAL
        }
    };
    ExitCode::from(code as u8)
}
