fn main() {
    std::process::exit(compresslaw::cli::run(std::env::args_os()));
}
