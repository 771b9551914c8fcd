fn main() {
    std::process::exit(phinormal::cli::main_with_args(std::env::args_os()));
}
