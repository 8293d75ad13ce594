fn main() {
    std::process::exit(mbcr::cli::run());
}
