fn main() {
    env_logger::init();
    std::process::exit(rmtrack::cli::run(std::env::args_os()));
}
