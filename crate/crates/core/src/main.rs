fn main() {
    std::process::exit(divider::cli::main());
}
