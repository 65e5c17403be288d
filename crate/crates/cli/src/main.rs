fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = aging_cli::run_from(std::env::args_os()) {
        eprintln!("aging: {e}");
        std::process::exit(e.exit_code());
    }
}
