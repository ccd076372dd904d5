use std::process::ExitCode;

fn main() -> ExitCode {
    dvfs_reclaim::cli::run()
}
