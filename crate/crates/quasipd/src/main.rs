fn main() {
    std::process::exit(quasipd::cli::run());
}
