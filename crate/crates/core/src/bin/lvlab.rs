fn main() {
    std::process::exit(lvlab::cli::run_from_args(std::env::args_os()));
}
