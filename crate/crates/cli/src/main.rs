fn main() {
    std::process::exit(resetlab_cli::main_with_args(std::env::args_os()));
}
