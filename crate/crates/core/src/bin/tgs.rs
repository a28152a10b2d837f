fn main() {
    std::process::exit(tgs_core::cli::main_with_args(std::env::args_os()));
}
