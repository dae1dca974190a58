fn main() {
    std::process::exit(tailnet::cli::main_from_env());
}
