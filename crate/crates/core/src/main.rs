fn main() {
    std::process::exit(bearing_diag::cli::run(std::env::args_os()));
}
