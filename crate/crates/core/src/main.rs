fn main() {
    std::process::exit(memtrack::cli::main_with_env());
}
