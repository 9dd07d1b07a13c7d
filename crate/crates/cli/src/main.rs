fn main() {
    std::process::exit(isl_cli::main_with_args(std::env::args_os()));
}
