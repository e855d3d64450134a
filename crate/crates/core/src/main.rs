fn main() {
    std::process::exit(sglde::cli::run(std::env::args_os()));
}
