fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("HISTFUN_LOG", "warn")).init();
    std::process::exit(histfun::cli::run(std::env::args_os()));
}
