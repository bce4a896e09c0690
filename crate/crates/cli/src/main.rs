fn main() {
    std::process::exit(pdforest_cli::main_with_args(std::env::args_os()));
}
