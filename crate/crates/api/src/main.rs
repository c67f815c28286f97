fn main() {
    std::process::exit(labloop_api::cli::run(std::env::args_os()));
}
