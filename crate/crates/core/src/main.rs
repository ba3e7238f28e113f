fn main() {
    std::process::exit(drivedist::cli::run(std::env::args_os()));
}
