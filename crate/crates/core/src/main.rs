fn main() {
    std::process::exit(ksmv::cli::main_with_args(std::env::args_os()));
}
