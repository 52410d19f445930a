use std::path::PathBuf;
use std::process::ExitCode;

use chronofuse::cli::{run, CONFIG_ENV};

fn main() -> ExitCode {
    let env_config = std::env::var_os(CONFIG_ENV).map(PathBuf::from);
    let code = run(
        std::env::args_os(),
        env_config,
        &mut std::io::stdout(),
        &mut std::io::stderr(),
    );
    ExitCode::from(code as u8)
}
