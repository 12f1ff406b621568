fn main() {
    std::process::exit(switchdiff::cli::main_with_args(std::env::args_os()));
}
