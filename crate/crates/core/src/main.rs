fn main() {
    std::process::exit(weakmeas::cli::main_with_args(std::env::args_os()));
}
