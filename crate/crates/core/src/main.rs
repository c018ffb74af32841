fn main() {
    std::process::exit(airbarrier::cli::run(std::env::args_os()));
}
