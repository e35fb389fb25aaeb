fn main() {
    std::process::exit(ghostim::cli::run(std::env::args_os()));
}
