fn main() {
    std::process::exit(mpm_transient::cli::main_with_args(std::env::args_os()));
}
