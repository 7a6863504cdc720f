fn main() {
    std::process::exit(gridclear::cli::main_with_args(std::env::args_os()));
}
