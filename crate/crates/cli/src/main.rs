use env_logger::{Env, Target};

fn main() {
    env_logger::Builder::from_env(Env::new().filter_or("SEN_LOG", "warn"))
        .target(Target::Stdout)
        .format_timestamp(None)
        .init();
    std::process::exit(sten_cli::dispatch(std::env::args_os()));
}
