fn main() {
    std::process::exit(floodaid::cli::run(std::env::args_os()));
}
