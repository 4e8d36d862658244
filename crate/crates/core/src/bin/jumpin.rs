fn main() {
    std::process::exit(jumpin::cli::main_with_args(std::env::args_os()));
}
