use clap::Parser;
use trajsr::cli::{error_line, init_threads, run, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = init_threads().and_then(|()| run(cli)) {
        eprintln!("{}", error_line(&e));
        std::process::exit(1);
    }
}
