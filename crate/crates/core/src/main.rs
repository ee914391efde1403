fn main() {
    std::process::exit(tscopf::cli::main_with_args(std::env::args_os()));
}
