fn main() {
    std::process::exit(liekit::cli::run(std::env::args_os()));
}
