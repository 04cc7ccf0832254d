use crate::config::{resolve, validate_run_config, FileConfig, ValidateArgs};
use crate::CliError;

pub fn run(args: &ValidateArgs, file: &FileConfig, show_config: bool) -> Result<u8, CliError> {
    let resolved = resolve(&args.schedule, &args.controller, file)?;
    validate_run_config(&resolved.run)?;
    if show_config {
        super::print_resolved(&resolved);
    }
    println!("configuration OK (hash {})", resolved.hash());
    Ok(0)
}
