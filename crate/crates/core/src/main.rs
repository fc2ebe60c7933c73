fn main() {
    std::process::exit(microsense::cli::run(std::env::args_os()));
}
