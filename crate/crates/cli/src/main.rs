fn main() {
    std::process::exit(kolsim_cli::main_with_args(std::env::args_os()));
}
