use slasched_cli::{run_args, LOG_ENV};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "info"))
        .format_timestamp_millis()
        .init();
    std::process::exit(run_args(std::env::args_os()));
}
