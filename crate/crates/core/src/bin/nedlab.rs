fn main() {
    std::process::exit(nedlab::cli::run());
}
