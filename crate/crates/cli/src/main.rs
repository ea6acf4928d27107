fn main() {
    std::process::exit(logsp_cli::main_with_args(std::env::args_os()));
}
