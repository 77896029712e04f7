fn main() {
    std::process::exit(jacobi_core::cli::run_from_args(std::env::args_os()));
}
