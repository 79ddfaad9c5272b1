use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = salab_cli::Cli::parse();
    if let Err(e) = salab_cli::run(&cli) {
        log::error!("{e}");
        std::process::exit(salab_cli::exit_code(&e));
    }
}
