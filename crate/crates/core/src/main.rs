fn main() {
    std::process::exit(dcftp::cli::main_with_args(std::env::args_os()));
}
