fn main() {
    std::process::exit(condot::cli::run());
}
